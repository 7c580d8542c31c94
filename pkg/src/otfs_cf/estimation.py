"""Embedded-pilot (EP) and superimposed-pilot (SP) MMSE estimation of path
gains, with their closed-form estimate variances.

All powers here are normalized by the receiver noise power (rho = P / sigma^2)
unless a function takes `sigma2` explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import complex_normal
from .dd_core import DDDims, apply, geometric_sum, guard_width


@dataclass(frozen=True)
class EpConfig:
    dims: DDDims
    k_max: int
    l_max: int
    k_hat: int = 0

    def __post_init__(self):
        if min(self.k_max, self.l_max, self.k_hat) < 0:
            raise ValueError("guard parameters must be non-negative")
        if self.doppler_width > self.dims.N:
            raise ValueError(f"Doppler guard {self.doppler_width} exceeds N={self.dims.N}")
        if self.delay_width > self.dims.M:
            raise ValueError(f"delay guard {self.delay_width} exceeds M={self.dims.M}")

    @property
    def doppler_width(self) -> int:
        return guard_width(self.k_max, self.k_hat)

    @property
    def delay_width(self) -> int:
        return 2 * self.l_max + 1

    @property
    def n_guard(self) -> int:
        return self.delay_width * self.doppler_width

    @property
    def max_users(self) -> int:
        return self.dims.size // self.n_guard


def pilot_layout(cfg: EpConfig, num_users: int) -> list[tuple[int, int]]:
    """Pilot positions (k_q, l_q) with disjoint guard rectangles packed
    row-major (Doppler blocks first, then delay blocks).  The pilot sits at the
    centre of its rectangle.  Rectangular packing may hold fewer users than the
    area bound `max_users`."""
    if num_users > cfg.max_users:
        raise ValueError(f"{num_users} users exceed the EP capacity {cfg.max_users}")
    nk = cfg.dims.N // cfg.doppler_width
    nl = cfg.dims.M // cfg.delay_width
    if num_users > nk * nl:
        raise ValueError(f"rectangular guard packing fits {nk * nl} users, asked for {num_users}")
    out = []
    for q in range(num_users):
        bl, bk = divmod(q, nk)
        out.append((bk * cfg.doppler_width + cfg.doppler_width // 2, bl * cfg.delay_width + cfg.l_max))
    return out


@dataclass(frozen=True)
class EstimateQuality:
    c: np.ndarray
    gamma: np.ndarray
    scheme: str


def ep_interference_i1_var(p_dt, eta, N: int, k_max: int, k_hat: int, beta_sum):
    """Own-user data leakage into the pilot region under the flat-sidelobe
    approximation."""
    G = guard_width(k_max, k_hat)
    if G > N:
        raise ValueError("guard wider than N")
    return np.asarray(p_dt) * np.asarray(eta) * (N - G) / N**2 * np.asarray(beta_sum)


def ep_interference_i2_var(N: int, eta_others, p_dt_others, beta_sums_others) -> float:
    """Other users' data leakage into the pilot region."""
    return float(np.sum(np.asarray(eta_others) * np.asarray(p_dt_others) * np.asarray(beta_sums_others)) / N)


def ep_interference_var(beta: np.ndarray, rho_dt, eta, N: int, k_max: int, k_hat: int = 0) -> np.ndarray:
    """(M_a, K_u) data-leakage variance in each user's pilot region: all
    users' 1/N share minus the own-user part that falls inside the guard."""
    beta = np.asarray(beta, float)
    Ku = beta.shape[1]
    rho_dt, eta = (np.broadcast_to(np.asarray(v, float), (Ku,)) for v in (rho_dt, eta))
    G = guard_width(k_max, k_hat)
    S = beta.sum(axis=2)
    all_users = (S * eta * rho_dt).sum(axis=1, keepdims=True) / N
    return all_users - eta * rho_dt * G / N**2 * S


def ep_mmse_coeff(beta: np.ndarray, rho_pil, rho_dt, eta, N: int, k_max: int, k_hat: int = 0) -> EstimateQuality:
    """Per-path EP scaling c and estimate variance gamma for every link.

    beta is (M_a, K_u, L); rho_pil, rho_dt, eta are per user.  The denominator
    is evaluated in the grouped form: pilot term, all-user 1/N data leakage
    minus the own-user share that falls inside the Doppler guard, plus noise.
    """
    beta = np.asarray(beta, float)
    Ku = beta.shape[1]
    rho_pil, eta = (np.broadcast_to(np.asarray(v, float), (Ku,)) for v in (rho_pil, eta))
    amp = np.sqrt(rho_pil * eta)[None, :, None]
    den = amp**2 * beta + ep_interference_var(beta, rho_dt, eta, N, k_max, k_hat)[:, :, None] + 1.0
    c = amp * beta / den
    return EstimateQuality(c, amp * beta * c, "ep")


def ep_exact_leakage(frac_own, beta_own, frac_others, beta_others, eta, rho_dt, eta_others, rho_dt_others,
                     N: int, k_max: int, k_hat: int = 0):
    """Leakage variances (own, other users) with the exact |alpha|^2 sums in
    place of the flat-sidelobe and 1/N approximations.  Other users' data
    occupies every Doppler offset, so each of their paths contributes its
    full window energy."""
    c = np.arange(-(N // 2), N - N // 2)
    outside = c[np.abs(c) > 2 * k_max + 2 * k_hat]
    own = sum(b * np.sum(np.abs(geometric_sum(outside, f, N)) ** 2) / N**2
              for f, b in zip(np.ravel(frac_own), np.ravel(beta_own)))
    other = 0.0
    for fr, bt, e, r in zip(frac_others, beta_others, eta_others, rho_dt_others):
        other += e * r * sum(b * np.sum(np.abs(geometric_sum(c, f, N)) ** 2) / N**2
                             for f, b in zip(np.ravel(fr), np.ravel(bt)))
    return eta * rho_dt * own, other


def simulate_ep_pilot(beta, c, rho_pil, eta, interference_var, trials: int, rng: np.random.Generator):
    """Scalar pilot-echo observations y = sqrt(rho eta) h + I + w and the
    estimates c y.  Interference is Gaussian with the given variance."""
    beta = np.asarray(beta, float)
    shape = (trials,) + beta.shape
    h = complex_normal(rng, np.broadcast_to(beta, shape))
    noise = complex_normal(rng, np.broadcast_to(np.asarray(interference_var, float) + 1.0, shape))
    y = np.sqrt(rho_pil * eta) * h + noise
    return h, y, np.asarray(c) * y


def ep_estimate(y, quality: EstimateQuality, positions=None):
    """Scale pilot-region samples by the MMSE coefficients.  With `positions`
    (a per-path index into a received grid), y is the grid."""
    y = np.asarray(y)
    if positions is not None:
        k, l = np.asarray(positions).T
        if np.any(k >= y.shape[-2]) or np.any(l >= y.shape[-1]) or np.any(k < 0) or np.any(l < 0):
            raise IndexError("pilot location outside the received grid")
        y = y[..., k, l]
    return quality.c * y


# ---------------------------------------------------------------------------
# superimposed pilots


def sp_noise_covariance(p_dt, p_pil, eta, beta_sums, sigma2: float, q: int) -> float:
    """Scalar of the identity-shaped covariance of data, other users' pilots
    and noise seen by user q's pilot at one AP."""
    p_dt, p_pil, eta, S = (np.asarray(v, float) for v in (p_dt, p_pil, eta, beta_sums))
    others = np.arange(len(S)) != q
    return float(np.sum(eta * p_dt * S) + np.sum((eta * p_pil * S)[others]) + sigma2)


def sp_gamma_closed_form(beta: np.ndarray, rho_pil, rho_dt, eta, processing_gain: float = 1.0) -> np.ndarray:
    """SP estimate variance per path for every link.

    processing_gain = 1 gives the scalar-observation closed form.  Passing MN
    gives the variance of the full-frame MMSE estimator when pilot entries
    carry rho_pil each (the pilot energy then grows with the frame size).
    """
    beta = np.asarray(beta, float)
    Ku = beta.shape[1]
    rho_pil, rho_dt, eta = (np.broadcast_to(np.asarray(v, float), (Ku,)) for v in (rho_pil, rho_dt, eta))
    S = beta.sum(axis=2)
    pil = eta * rho_pil * S
    cw = pil.sum(axis=1, keepdims=True) - pil + (eta * rho_dt * S).sum(axis=1, keepdims=True) + 1.0
    g = processing_gain * (rho_pil * eta)[None, :, None]
    return g * beta**2 / (g * beta + cw[:, :, None])


def sp_estimate(y: np.ndarray, xi: np.ndarray, cw: float, beta) -> np.ndarray:
    """MMSE gain estimate from the full frame, batched over leading axes.

    Uses C_h (Xi^H Xi C_h + cw I)^-1 Xi^H y, algebraically the same as
    (Xi^H Xi / cw + C_h^-1)^-1 Xi^H y / cw but valid for zero-power paths.
    The inner system is L x L.
    """
    xi = np.asarray(xi, complex)
    ch = np.asarray(beta, float)
    L = xi.shape[-1]
    gram = np.conj(np.swapaxes(xi, -1, -2)) @ xi
    A = gram * ch[..., None, :] + cw * np.eye(L)
    cond = np.linalg.cond(A)
    if np.any(cond > 1e12):
        raise np.linalg.LinAlgError(f"SP normal equations ill-conditioned (cond={np.max(cond):.2e})")
    rhs = np.einsum("...ml,...m->...l", np.conj(xi), y)
    return ch * np.linalg.solve(A, rhs[..., None])[..., 0]


def simulate_sp_frames(ops, beta, p_pil, p_dt, eta, sigma2: float, q, trials: int,
                       rng: np.random.Generator):
    """Full-frame SP observations at one AP.

    ops[u] lists user u's path operators, beta[u] their powers.  Returns the
    true gains of user q, the MMSE estimates, and the effective noise w~ (data,
    other users' pilots and AWGN) for covariance checks.  With q=None every
    user is estimated from the same frames and each return is a per-user list.
    """
    Ku = len(ops)
    MN = ops[0][0].dims.size
    p_pil, p_dt, eta = (np.broadcast_to(np.asarray(v, float), (Ku,)) for v in (p_pil, p_dt, eta))
    S = np.array([np.sum(b) for b in beta])
    y = complex_normal(rng, sigma2, (trials, MN))
    noise = y.copy()
    pil_part, dat_part, xis, gains = [], [], [], []
    for u in range(Ku):
        psi = complex_normal(rng, p_pil[u], (trials, MN))
        x = complex_normal(rng, p_dt[u], (trials, MN))
        h = complex_normal(rng, np.broadcast_to(np.asarray(beta[u], float), (trials, len(ops[u]))))
        cols_p = np.stack([np.sqrt(eta[u]) * apply(op, psi) for op in ops[u]], axis=-1)
        cols_d = np.stack([np.sqrt(eta[u]) * apply(op, x) for op in ops[u]], axis=-1)
        pil_part.append(np.einsum("tml,tl->tm", cols_p, h))
        dat_part.append(np.einsum("tml,tl->tm", cols_d, h))
        xis.append(cols_p)
        gains.append(h)
    y = noise + sum(pil_part) + sum(dat_part)
    targets = range(Ku) if q is None else [q]
    out_h, out_hat, out_w, out_cw = [], [], [], []
    for u in targets:
        cw = sp_noise_covariance(p_dt, p_pil, eta, S, sigma2, u)
        out_h.append(gains[u])
        out_hat.append(sp_estimate(y, xis[u], cw, np.asarray(beta[u], float)))
        out_w.append(y - pil_part[u])
        out_cw.append(cw)
    if q is None:
        return out_h, out_hat, out_w, out_cw
    return out_h[0], out_hat[0], out_w[0], out_cw[0]


def estimation_mse(truth, estimates) -> float:
    """Mean over trials of the squared error summed over paths (last axis)."""
    err = np.asarray(truth) - np.asarray(estimates)
    if err.ndim == 0:
        return float(np.abs(err) ** 2)
    return float(np.mean(np.sum(np.abs(err) ** 2, axis=-1)))
