"""OFDM comparison system.

Each path acts on one OFDM symbol through Q = S^l diag(exp(j 2 pi n nu / M))
with nu the Doppler normalized to the subcarrier spacing, and on the
subcarriers through Q_bar = F_M Q F_M^H.  Across symbols the path gain
rotates by exp(j 2 pi nu_Hz T) per symbol of duration T = T_cp + T_0.

Block-type pilots occupy a full symbol every D_t symbols; the estimate taken
on the pilot symbol is held for the following data symbols, so a data symbol
d symbols after its pilot sees the path gains rotated by d symbol steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .se_closed_form import SINR_CAP, downlink_sinr, uplink_components


@dataclass(frozen=True)
class OfdmConfig:
    delta_f: float
    t_cp: float
    d_t: float  # pilot symbol spacing (np.inf: no block pilots)
    d_f: int = 1
    pattern: str = "block"

    def __post_init__(self):
        if self.delta_f <= 0 or self.t_cp < 0:
            raise ValueError("invalid OFDM timing")
        if self.pattern not in ("block", "comb"):
            raise ValueError(f"unknown pilot pattern {self.pattern!r}")
        if self.d_t < 1:
            raise ValueError("pilot spacing must be at least one symbol")

    @property
    def t0(self) -> float:
        return 1.0 / self.delta_f

    @property
    def symbol_time(self) -> float:
        return self.t_cp + self.t0


def pilot_interval(nu_max: float, symbol_time: float) -> float:
    """Largest integer D_t with D_t < 1 / (2 nu_max T); infinite for a static
    channel."""
    if nu_max <= 0:
        return np.inf
    bound = 1.0 / (2.0 * nu_max * symbol_time)
    d = int(np.ceil(bound)) - 1
    if d < 1:
        raise ValueError(f"Doppler {nu_max:.1f} Hz too high for block pilots (bound {bound:.3f})")
    return float(d)


def make_config(delta_f: float, tau_max: float, nu_max: float, t_cp: float | None = None) -> OfdmConfig:
    t_cp = tau_max if t_cp is None else t_cp
    d_f = max(1, int(np.ceil(1.0 / (delta_f * tau_max))) - 1) if tau_max > 0 else 1
    return OfdmConfig(delta_f, t_cp, pilot_interval(nu_max, t_cp + 1.0 / delta_f), d_f)


def cp_fraction(cfg: OfdmConfig) -> float:
    return cfg.t_cp / cfg.symbol_time


def ofdm_overhead(cfg: OfdmConfig, block_pilots: bool = True) -> float:
    """Payload fraction after the cyclic prefix and block-pilot symbols."""
    pil = 1.0 / cfg.d_t if block_pilots else 0.0
    return (1.0 - cp_fraction(cfg)) * (1.0 - pil)


def q_operator(delay_tap: int, nu_norm: float, M: int) -> np.ndarray:
    if not 0 <= delay_tap < M:
        raise ValueError(f"delay tap {delay_tap} outside [0, {M - 1}]")
    n = np.arange(M)
    return np.roll(np.diag(np.exp(2j * np.pi * n * nu_norm / M)), delay_tap, axis=0)


def dft(M: int) -> np.ndarray:
    n = np.arange(M)
    return np.exp(-2j * np.pi * np.outer(n, n) / M) / np.sqrt(M)


@lru_cache(maxsize=65536)
def q_bar(delay_tap: int, nu_norm: float, M: int) -> np.ndarray:
    F = dft(M)
    out = F @ q_operator(delay_tap, nu_norm, M) @ F.conj().T
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class OfdmChannel:
    q_ops: tuple
    h_tf: np.ndarray
    h_ofdm: np.ndarray


def build_ofdm_channel(gains, delay_taps, nu_norm, M: int) -> OfdmChannel:
    Qs = tuple(q_operator(int(l), float(v), M) for l, v in zip(delay_taps, nu_norm))
    H = sum(h * Q for h, Q in zip(gains, Qs))
    F = dft(M)
    return OfdmChannel(Qs, H, F @ H @ F.conj().T)


def link_q_bars(delay, nu_norm, M: int) -> np.ndarray:
    """Dense Q_bar stack (M_a, K_u, L, M, M)."""
    Ma, Ku, L = delay.shape
    out = np.empty((Ma, Ku, L, M, M), complex)
    for idx in np.ndindex(Ma, Ku, L):
        out[idx] = q_bar(int(delay[idx]), float(nu_norm[idx]), M)
    return out


@lru_cache(maxsize=65536)
def _pair_kernel(a: tuple, b: tuple, M: int, adjoint_first: bool):
    A, B = q_bar(*a, M), q_bar(*b, M)
    U = A.conj().T @ B if adjoint_first else A @ B.conj().T
    d = np.diag(U)
    chi = np.abs(d) ** 2
    kap = np.abs(U.sum(1) - d) ** 2
    return chi, kap


def ofdm_kernels(delay, nu_norm, M: int, adjoint_first: bool = False):
    Ma, Ku, L = delay.shape
    chi = np.empty((Ma, Ku, L, L, M))
    kap = np.empty_like(chi)
    for p in range(Ma):
        for q in range(Ku):
            keys = [(int(delay[p, q, i]), float(nu_norm[p, q, i])) for i in range(L)]
            for i in range(L):
                for j in range(L):
                    chi[p, q, i, j], kap[p, q, i, j] = _pair_kernel(keys[i], keys[j], M, adjoint_first)
    return chi, kap


def ici_fraction(nu_norm, M: int):
    """Share of a path's power leaked off the diagonal by intra-symbol
    Doppler: 1 - |mean_n exp(j 2 pi n nu / M)|^2."""
    nu = np.asarray(nu_norm, float)
    n = np.arange(M)
    dc = np.exp(2j * np.pi * np.multiply.outer(nu, n) / M).mean(-1)
    return 1.0 - np.abs(dc) ** 2


def bt_gamma(beta, rho_pil, eta, ici):
    """Block-pilot MMSE estimate variance per path.  Users' pilot symbols are
    orthogonal; the only impairments are noise and the Doppler-induced
    inter-carrier leakage of the user's own pilot."""
    beta = np.asarray(beta, float)
    Ku = beta.shape[1]
    rho_pil, eta = (np.broadcast_to(np.asarray(v, float), (Ku,)) for v in (rho_pil, eta))
    pw = (rho_pil * eta)[None, :, None]
    leak = pw[..., 0] * (beta * ici).sum(-1)
    return pw * beta**2 / (pw * beta + leak[:, :, None] + 1.0)


def aging_phases(nu_hz, symbol_time: float, lag: int):
    return np.exp(2j * np.pi * np.asarray(nu_hz) * symbol_time * lag)


def _lags(cfg: OfdmConfig, block_pilots: bool):
    if not block_pilots or not np.isfinite(cfg.d_t):
        return [0]
    return list(range(1, int(cfg.d_t)))


def ofdm_downlink_se(gamma, beta, eta, rho_d, chi, kappa, nu_hz, cfg: OfdmConfig, omega: float = 1.0,
                     block_pilots: bool = True):
    """Per-user downlink SE averaged over the data symbols of one pilot period
    and over subcarriers, times omega and the OFDM overhead."""
    vals = []
    for d in _lags(cfg, block_pilots):
        coh = aging_phases(nu_hz, cfg.symbol_time, d)
        sinr = downlink_sinr(gamma, beta, eta, rho_d, chi, kappa, coherence=coh)
        vals.append(np.mean(np.log2(1 + np.minimum(sinr, SINR_CAP)), axis=1))
    return omega * ofdm_overhead(cfg, block_pilots) * np.mean(vals, axis=0)


def ofdm_uplink_se(gamma, beta, eta, rho_dt, chi, kappa, nu_hz, cfg: OfdmConfig, omega: float = 1.0,
                   block_pilots: bool = True):
    vals = []
    for d in _lags(cfg, block_pilots):
        coh = aging_phases(nu_hz, cfg.symbol_time, d)
        ds, bu, i1, i2, noise = uplink_components(gamma, beta, eta, rho_dt, chi, kappa, coherence=coh)
        sinr = ds[:, None] ** 2 / (bu + i1 + i2[:, None] + noise[:, None])
        vals.append(np.mean(np.log2(1 + np.minimum(sinr, SINR_CAP)), axis=1))
    return omega * ofdm_overhead(cfg, block_pilots) * np.mean(vals, axis=0)
