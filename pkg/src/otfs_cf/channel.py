"""Tapped-delay-line path sets, complex gains, and effective DD channels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dd_core import DDDims, DDOperator, apply, build_dd_operator, materialize

SPEED_OF_LIGHT = 299_792_458.0
_OPEN = 1e-12  # keeps fractional Doppler strictly inside (-0.5, 0.5)


@dataclass(frozen=True)
class ChannelProfile:
    name: str
    tap_delays_ns: tuple
    tap_powers_db: tuple
    doppler_mode: str = "uniform-index"  # or "jakes"
    frac_doppler: bool = False

    def __post_init__(self):
        if len(self.tap_delays_ns) != len(self.tap_powers_db) or not self.tap_delays_ns:
            raise ValueError("tap delays and powers must be non-empty and equal length")
        if self.doppler_mode not in ("uniform-index", "jakes"):
            raise ValueError(f"unknown Doppler mode {self.doppler_mode!r}")

    @property
    def L(self) -> int:
        return len(self.tap_delays_ns)

    @property
    def tau_max(self) -> float:
        """Largest delay in seconds."""
        return max(self.tap_delays_ns) * 1e-9


# extended vehicular A, 9 taps up to 2.51 us
EVA = ChannelProfile(
    "EVA",
    (0, 30, 150, 310, 370, 710, 1090, 1730, 2510),
    (0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9),
)
# 6-tap vehicular set with a 10 us maximum delay: ITU vehicular-B delays and
# powers with the delay axis compressed by one half
EVB = ChannelProfile(
    "EVB",
    (0, 150, 4450, 6450, 8550, 10000),
    (-2.5, 0.0, -12.8, -10.0, -25.2, -16.0),
)
PROFILES = {"EVA": EVA, "EVB": EVB}


@dataclass(frozen=True)
class SystemParams:
    carrier_hz: float = 4e9
    delta_f: float = 15e3
    speed_kmph: float = 300.0


@dataclass(frozen=True)
class PathTap:
    delay_tap: int
    doppler_tap: int
    frac: float
    beta: float

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("path power must be non-negative")


@dataclass(frozen=True)
class ChannelRealization:
    taps: tuple
    gains: np.ndarray


@dataclass(frozen=True)
class NetworkPaths:
    """Array form of all links' taps; every array is (M_a, K_u, L)."""

    delay: np.ndarray
    doppler: np.ndarray
    frac: np.ndarray
    beta: np.ndarray

    @property
    def shape(self):
        return self.beta.shape

    def link(self, p: int, q: int) -> list[PathTap]:
        return [PathTap(int(self.delay[p, q, i]), int(self.doppler[p, q, i]), float(self.frac[p, q, i]),
                        float(self.beta[p, q, i])) for i in range(self.beta.shape[2])]

    def operators(self, p: int, q: int, dims: DDDims) -> list[DDOperator]:
        return [build_dd_operator(t.delay_tap, t.doppler_tap, t.frac, dims) for t in self.link(p, q)]

    def distinct_delays(self) -> bool:
        s = np.sort(self.delay, axis=2)
        return bool(np.all(np.diff(s, axis=2) != 0))


def doppler_from_speed(speed_kmph: float, carrier_hz: float, N: int, delta_f: float):
    """(nu_max in Hz, k_max) with k_max = floor(nu_max N / delta_f)."""
    if speed_kmph < 0 or carrier_hz <= 0 or N < 1 or delta_f <= 0:
        raise ValueError("speed must be >= 0 and the rest positive")
    nu_max = speed_kmph / 3.6 * carrier_hz / SPEED_OF_LIGHT
    return nu_max, doppler_index_max(nu_max, N, delta_f)


def doppler_index_max(nu_max: float, N: int, delta_f: float) -> int:
    return int(np.floor(nu_max * N / delta_f + 1e-9))


def delay_taps(profile: ChannelProfile, M: int, delta_f: float) -> np.ndarray:
    taps = np.rint(np.asarray(profile.tap_delays_ns) * 1e-9 * M * delta_f).astype(int)
    if taps.max() >= M:
        raise ValueError(f"delay spread needs {taps.max() + 1} delay bins but M={M}")
    return taps


def delay_tap_max(tau_max: float, M: int, delta_f: float) -> int:
    return int(np.rint(tau_max * M * delta_f))


def _doppler_draw(shape, nu_max, N, delta_f, mode, frac_enabled, rng):
    if mode == "uniform-index":
        kmax = doppler_index_max(nu_max, N, delta_f)
        k = rng.integers(-kmax, kmax + 1, size=shape)
        if frac_enabled:
            frac = rng.uniform(-0.5, 0.5, size=shape)
        else:
            frac = np.zeros(shape)
    else:
        theta = rng.uniform(-np.pi, np.pi, size=shape)
        x = nu_max * np.cos(theta) * N / delta_f
        k = np.rint(x).astype(int)
        frac = x - k if frac_enabled else np.zeros(shape)
    return k.astype(int), np.clip(frac, -0.5 + _OPEN, 0.5 - _OPEN)


def sample_paths(profile: ChannelProfile, dims: DDDims, delta_f: float, nu_max: float,
                 rng: np.random.Generator, betas=None) -> list[PathTap]:
    """Taps of one link: quantized profile delays with random Doppler."""
    ell = delay_taps(profile, dims.M, delta_f)
    k, frac = _doppler_draw(profile.L, nu_max, dims.N, delta_f, profile.doppler_mode,
                            profile.frac_doppler, rng)
    betas = np.full(profile.L, 1.0 / profile.L) if betas is None else np.asarray(betas, float)
    return [PathTap(int(ell[i]), int(k[i]), float(frac[i]), float(betas[i])) for i in range(profile.L)]


def sample_network_paths(profile: ChannelProfile, dims: DDDims, delta_f: float, nu_max: float,
                         beta: np.ndarray, rng: np.random.Generator) -> NetworkPaths:
    Ma, Ku, L = beta.shape
    if L != profile.L:
        raise ValueError(f"beta has {L} paths but profile {profile.name} has {profile.L}")
    ell = np.broadcast_to(delay_taps(profile, dims.M, delta_f), (Ma, Ku, L)).copy()
    k, frac = _doppler_draw((Ma, Ku, L), nu_max, dims.N, delta_f, profile.doppler_mode,
                            profile.frac_doppler, rng)
    return NetworkPaths(ell, k, frac, np.asarray(beta, float))


def complex_normal(rng: np.random.Generator, var, size=None) -> np.ndarray:
    var = np.asarray(var, float)
    shape = var.shape if size is None else size
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z * np.sqrt(var / 2.0)


def realize_gains(taps, rng: np.random.Generator) -> ChannelRealization:
    if not taps:
        raise ValueError("no taps")
    beta = np.array([t.beta for t in taps])
    return ChannelRealization(tuple(taps), complex_normal(rng, beta))


@dataclass(frozen=True)
class EffectiveChannel:
    """H = sum_i h_i T_i kept as a list of (gain, operator)."""

    gains: np.ndarray
    ops: tuple

    @property
    def dims(self) -> DDDims:
        return self.ops[0].dims


def effective_channel(realization: ChannelRealization, dims: DDDims) -> EffectiveChannel:
    ops = tuple(build_dd_operator(t.delay_tap, t.doppler_tap, t.frac, dims) for t in realization.taps)
    return EffectiveChannel(np.asarray(realization.gains, complex), ops)


def apply_channel(H: EffectiveChannel, x: np.ndarray) -> np.ndarray:
    out = np.zeros(np.shape(x), dtype=complex)
    for h, op in zip(H.gains, H.ops):
        out += h * apply(op, x)
    return out


def materialize_channel(H: EffectiveChannel) -> np.ndarray:
    return sum(h * materialize(op) for h, op in zip(H.gains, H.ops))
