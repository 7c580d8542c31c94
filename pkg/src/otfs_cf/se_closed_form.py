"""Closed-form achievable spectral efficiency with maximum-ratio processing.

Shapes used throughout: gamma, beta are (M_a, K_u, L); per-link kernel tables
chi, kappa are (M_a, K_u, L, L, R) where R is the number of lattice rows;
downlink power control eta_dl is (M_a, K_u); uplink quantities are per user.
All SNRs are normalized by the noise power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dd_core import DDDims, kernel_table

K_BOLTZMANN = 1.381e-23
T_NOISE = 290.0
SINR_CAP = 1e20  # +200 dB


def noise_power(M: int, delta_f: float, noise_figure_db: float = 9.0) -> float:
    """Thermal noise power in watts over the M * delta_f band."""
    if M <= 0 or delta_f <= 0:
        raise ValueError("bandwidth must be positive")
    return K_BOLTZMANN * T_NOISE * M * delta_f * 10 ** (noise_figure_db / 10)


def watts_to_dbm(p: float) -> float:
    return 10 * np.log10(p) + 30


@dataclass(frozen=True)
class PowerConfig:
    """Transmit powers and the noise model.  Normalized SNRs follow as
    power / noise."""

    ap_power: float = 1.0  # W
    user_power: float = 0.2  # W
    alpha_che: float | None = None  # pilot share; None -> N_guard / MN
    noise_figure_db: float = 9.0
    noise_override_dbm: float | None = None

    def noise(self, M: int, delta_f: float) -> float:
        if self.noise_override_dbm is not None:
            return 10 ** ((self.noise_override_dbm - 30) / 10)
        return noise_power(M, delta_f, self.noise_figure_db)

    def normalized(self, M: int, delta_f: float, alpha: float):
        """(rho_d, rho_dt, rho_pil) for pilot share alpha."""
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("pilot share must lie in [0, 1]")
        s2 = self.noise(M, delta_f)
        return self.ap_power / s2, (1 - alpha) * self.user_power / s2, alpha * self.user_power / s2


def overhead_factors(dims: DDDims, n_guard: int, scheme: str):
    """(omega_dl, omega_ul) pre-log factors."""
    w_dl = 1 - dims.N_ul / dims.N_T
    if scheme == "ep":
        if n_guard > dims.M * dims.N_ul:
            raise ValueError("guard region larger than the uplink block")
        w_ul = 1 - (dims.M * dims.N_dl + n_guard) / (dims.M * dims.N_T)
    elif scheme == "sp":
        w_ul = 1 - dims.N_dl / dims.N_T
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if w_dl < 0 or w_ul < 0:
        raise ValueError("negative overhead factor")
    return w_dl, w_ul


def dl_power_control_full(gamma: np.ndarray) -> np.ndarray:
    """Equal per-AP coefficients that make every AP transmit at full power."""
    tot = np.asarray(gamma, float).sum(axis=(1, 2))
    if np.any(tot <= 0):
        raise ValueError("an AP has zero total estimate variance")
    return np.broadcast_to((1.0 / tot)[:, None], np.shape(gamma)[:2]).copy()


def _log2_1p(sinr):
    return np.log2(1.0 + np.minimum(sinr, SINR_CAP))


# ---------------------------------------------------------------------------
# kernels


def network_kernels(paths, dims: DDDims, adjoint_first: bool = False):
    """chi, kappa tables (M_a, K_u, L, L, MN) for every link of a drop."""
    Ma, Ku, L = paths.shape
    chi = np.empty((Ma, Ku, L, L, dims.size))
    kap = np.empty_like(chi)
    for p in range(Ma):
        for q in range(Ku):
            chi[p, q], kap[p, q] = kernel_table(paths.operators(p, q, dims), adjoint_first)
    return chi, kap


def distinct_delay_kernels(Ma: int, Ku: int, L: int, rows: int = 1):
    """Kernel tables of the all-delays-distinct case: chi = I, kappa = 1 - I."""
    eye = np.eye(L)[None, None, :, :, None]
    chi = np.broadcast_to(eye, (Ma, Ku, L, L, rows))
    return chi, 1.0 - chi


# ---------------------------------------------------------------------------
# downlink


def downlink_components(gamma, beta, eta, chi, kappa, coherence=None, isi: str = "row-sum"):
    """Per-user, per-row terms of the downlink SINR (without rho_d).

    Returns ds (K_u,), bu (K_u, R), i1 (K_u, R), i2 (K_u,).  `coherence`
    multiplies gamma inside the desired-signal mean (unit for OTFS; channel
    aging phases for the OFDM baseline).  isi="row-sum" uses the kappa kernel;
    isi="row-energy" uses 1 - chi, the sum of squared off-diagonal entries.
    """
    gamma, beta, eta = (np.asarray(v, float) for v in (gamma, beta, eta))
    coh = np.ones_like(gamma) if coherence is None else np.asarray(coherence)
    ds = np.abs(np.einsum("pq,pqi->q", np.sqrt(eta), gamma * coh))
    bu = np.einsum("pq,pqi,pqijr,pqj->qr", eta, beta, chi, gamma)
    if isi == "row-sum":
        i1 = np.einsum("pq,pqi,pqijr,pqj->qr", eta, beta, kappa, gamma)
    elif isi == "row-energy":
        i1 = np.einsum("pq,pqi,pqijr,pqj->qr", eta, beta, 1.0 - np.asarray(chi), gamma)
    else:
        raise ValueError(f"unknown isi form {isi!r}")
    S_beta = beta.sum(axis=2)  # (p, q)
    S_gam = gamma.sum(axis=2)
    cross = np.einsum("pq,pk->qk", S_beta, eta * S_gam)
    i2 = cross.sum(axis=1) - np.diag(cross)
    return ds, bu, i1, i2


def downlink_sinr(gamma, beta, eta, rho_d, chi, kappa, coherence=None, isi="row-sum"):
    ds, bu, i1, i2 = downlink_components(gamma, beta, eta, chi, kappa, coherence, isi)
    den = rho_d * (bu + i1 + i2[:, None]) + 1.0
    return rho_d * ds[:, None] ** 2 / den


def downlink_se(gamma, beta, eta, rho_d, chi, kappa, omega: float = 1.0, isi="row-sum"):
    """Per-user downlink SE: omega times the row-average of log2(1 + SINR_r)."""
    return omega * np.mean(_log2_1p(downlink_sinr(gamma, beta, eta, rho_d, chi, kappa, isi=isi)), axis=1)


def downlink_se_distinct_delays(gamma, beta, eta, rho_d, omega: float = 1.0):
    """Kernel-free downlink SE when all paths of a link have distinct delays."""
    gamma, beta, eta = (np.asarray(v, float) for v in (gamma, beta, eta))
    S_beta, S_gam = beta.sum(axis=2), gamma.sum(axis=2)
    num = rho_d * np.einsum("pq,pq->q", np.sqrt(eta), S_gam) ** 2
    cross = np.einsum("pq,pk->qk", S_beta, eta * S_gam)
    den = rho_d * cross.sum(axis=1) + 1.0
    return omega * _log2_1p(num / den)


def downlink_se_uniform(rho_d, eta, num_aps, num_users, L, gamma, omega: float = 1.0, beta_sum: float = 1.0):
    """Equal-gamma, equal-L, equal-eta downlink SE; beta_sum is the per-link
    total path power (one in the 1/L regime)."""
    num = rho_d * eta * (num_aps * L * gamma) ** 2
    den = num_users * rho_d * num_aps * eta * L * gamma * beta_sum + 1.0
    return omega * _log2_1p(num / den)


# ---------------------------------------------------------------------------
# uplink


def uplink_components(gamma, beta, eta, rho_dt, chi, kappa, coherence=None, isi="row-sum",
                      form: str = "derived"):
    """Per-user, per-row terms of the matched-filter uplink SINR.

    Returns ds (K_u,), bu (K_u, R), i1 (K_u, R), i2 (K_u,), noise (K_u,), all
    including the transmit SNRs.  form="derived" pairs the target user's
    estimates with the interferers' true gains (gamma_q x beta_q') and expects
    kernels of T_i^H T_j; form="printed" pairs beta_q with gamma_q' and
    expects kernels of T_i T_j^H.  Both agree when every link has distinct
    delays and the large-scale gains are user-symmetric.
    """
    gamma, beta = np.asarray(gamma, float), np.asarray(beta, float)
    Ku = gamma.shape[1]
    eta, rho_dt = (np.broadcast_to(np.asarray(v, float), (Ku,)) for v in (eta, rho_dt))
    coh = np.ones_like(gamma) if coherence is None else np.asarray(coherence)
    pw = rho_dt * eta
    ds = np.sqrt(pw) * np.abs(np.einsum("pqi->q", gamma * coh))
    if form == "derived":
        a, b = gamma, beta
    elif form == "printed":
        a, b = beta, gamma
    else:
        raise ValueError(f"unknown form {form!r}")
    bu = pw[:, None] * np.einsum("pqi,pqijr,pqj->qr", a, chi, b)
    k = kappa if isi == "row-sum" else 1.0 - np.asarray(chi)
    i1 = pw[:, None] * np.einsum("pqi,pqijr,pqj->qr", a, k, b)
    Sa, Sb = a.sum(axis=2), b.sum(axis=2)
    cross = np.einsum("pq,pk->qk", Sa, Sb * pw[None, :])
    i2 = cross.sum(axis=1) - np.diag(cross)
    noise = gamma.sum(axis=(0, 2))
    return ds, bu, i1, i2, noise


def uplink_se(gamma, beta, eta, rho_dt, chi, kappa, omega: float = 1.0, isi="row-sum",
                       form="derived"):
    ds, bu, i1, i2, noise = uplink_components(gamma, beta, eta, rho_dt, chi, kappa, isi=isi, form=form)
    sinr = ds[:, None] ** 2 / (bu + i1 + i2[:, None] + noise[:, None])
    return omega * np.mean(_log2_1p(sinr), axis=1)


def uplink_se_distinct_delays(gamma, beta, eta, rho_dt, omega: float = 1.0, form="derived"):
    gamma, beta = np.asarray(gamma, float), np.asarray(beta, float)
    Ku = gamma.shape[1]
    eta, rho_dt = (np.broadcast_to(np.asarray(v, float), (Ku,)) for v in (eta, rho_dt))
    pw = rho_dt * eta
    Sg, Sb = gamma.sum(axis=2), beta.sum(axis=2)
    num = pw * Sg.sum(axis=0) ** 2
    if form == "derived":
        own = np.einsum("pq,pq->q", Sg, Sb)
        cross = np.einsum("pq,pk->qk", Sg, Sb * pw[None, :])
    elif form == "printed":
        own = np.einsum("pq,pq->q", Sb, Sg)
        cross = np.einsum("pq,pk->qk", Sb, Sg * pw[None, :])
    else:
        raise ValueError(f"unknown form {form!r}")
    den = pw * own + cross.sum(axis=1) - np.diag(cross) + Sg.sum(axis=0)
    return omega * _log2_1p(num / den)


def uplink_se_uniform(rho_dt, eta, num_aps, num_users, L, gamma, omega: float = 1.0, beta_sum: float = 1.0):
    """Equal-gamma, equal-power uplink SE; beta_sum as in the downlink."""
    num = rho_dt * eta * (num_aps * L * gamma) ** 2
    den = rho_dt * eta * num_aps * num_users * L * gamma * beta_sum + num_aps * L * gamma
    return omega * _log2_1p(num / den)


def power_scaling_limit(kind: str, E: float, L: int, gamma: float, num_users: int, omega: float = 1.0,
                        eta: float = 1.0):
    """Large-array SE when transmit power shrinks with the AP count:
    rho_d = E / M_a^2 in the downlink, rho_dt = E / M_a in the uplink."""
    if kind == "dl":
        return omega * np.log2(1 + E / num_users * L * gamma)
    if kind == "ul":
        return omega * np.log2(1 + E * eta * L * gamma)
    raise ValueError(f"kind must be 'dl' or 'ul', got {kind!r}")
