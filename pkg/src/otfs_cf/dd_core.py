"""Delay-Doppler operators and the cross-path kernels built from them.

A frame is an M x N grid (M delay bins, N Doppler bins) vectorized
column-major, so lattice index r = n*M + m with the delay index fastest.
A single propagation path acts on the vectorized frame through the unitary

    T = (F_N kron I_M) Pi^l Delta^(k+kappa) (F_N^H kron I_M)

where Pi is the MN-point cyclic down-shift, Delta = diag(z^u) with
z = exp(j 2 pi / MN) and F_N the unitary N-point DFT.  Operators are stored
as (l, k, kappa) descriptors and applied with FFTs; `materialize` builds the
dense matrix for small frames only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class DDDims:
    """Frame geometry.  `N` is the Doppler length of one OTFS block; the
    downlink/uplink split is carried for overhead bookkeeping."""

    M: int
    N: int
    N_dl: int = -1
    N_ul: int = -1

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ValueError(f"M and N must be positive, got M={self.M}, N={self.N}")
        # default split: one block of N symbols per direction
        if self.N_dl < 0:
            object.__setattr__(self, "N_dl", self.N)
        if self.N_ul < 0:
            object.__setattr__(self, "N_ul", self.N)
        if self.N_dl < 0 or self.N_ul < 0 or self.N_dl + self.N_ul < 1:
            raise ValueError("invalid downlink/uplink split")

    @property
    def N_T(self) -> int:
        return self.N_dl + self.N_ul

    @property
    def size(self) -> int:
        return self.M * self.N


@dataclass(frozen=True)
class DDOperator:
    delay_tap: int
    doppler_tap: int
    frac_doppler: float
    dims: DDDims = field(repr=False)

    @property
    def shift(self) -> float:
        """Doppler exponent (k mod N) + kappa used in the phase ramp."""
        return float(self.doppler_tap % self.dims.N) + self.frac_doppler

    def key(self) -> tuple:
        return (self.delay_tap, self.doppler_tap % self.dims.N, self.frac_doppler,
                self.dims.M, self.dims.N)


def build_dd_operator(delay_tap: int, doppler_tap: int, frac_doppler: float,
                      dims: DDDims) -> DDOperator:
    if not 0 <= delay_tap < dims.M:
        raise ValueError(f"delay tap {delay_tap} outside [0, {dims.M - 1}]")
    if not -0.5 < frac_doppler < 0.5:
        raise ValueError(f"fractional Doppler {frac_doppler} outside (-0.5, 0.5)")
    return DDOperator(int(delay_tap), int(doppler_tap), float(frac_doppler), dims)


def _phase(shift: float, size: int) -> np.ndarray:
    return np.exp(2j * np.pi * shift * np.arange(size) / size)


def apply(op: DDOperator, x: np.ndarray) -> np.ndarray:
    """T x for x of shape (..., MN)."""
    M, N = op.dims.M, op.dims.N
    x = np.asarray(x, dtype=complex)
    lead = x.shape[:-1]
    t = np.fft.ifft(x.reshape(lead + (N, M)), axis=-2, norm="ortho").reshape(lead + (M * N,))
    t = np.roll(t * _phase(op.shift, M * N), op.delay_tap, axis=-1)
    return np.fft.fft(t.reshape(lead + (N, M)), axis=-2, norm="ortho").reshape(lead + (M * N,))


def apply_adjoint(op: DDOperator, x: np.ndarray) -> np.ndarray:
    """T^H x for x of shape (..., MN)."""
    M, N = op.dims.M, op.dims.N
    x = np.asarray(x, dtype=complex)
    lead = x.shape[:-1]
    t = np.fft.ifft(x.reshape(lead + (N, M)), axis=-2, norm="ortho").reshape(lead + (M * N,))
    t = np.roll(t, -op.delay_tap, axis=-1) * np.conj(_phase(op.shift, M * N))
    return np.fft.fft(t.reshape(lead + (N, M)), axis=-2, norm="ortho").reshape(lead + (M * N,))


def materialize(op: DDOperator) -> np.ndarray:
    """Dense MN x MN matrix of the operator (small frames only)."""
    MN = op.dims.size
    return apply(op, np.eye(MN)).T


def dense_factors(op: DDOperator) -> np.ndarray:
    """Dense product of the three explicit factors; a reference independent of
    the FFT path."""
    M, N = op.dims.M, op.dims.N
    MN = M * N
    n = np.arange(N)
    F = np.exp(-2j * np.pi * np.outer(n, n) / N) / np.sqrt(N)
    FI = np.kron(F, np.eye(M))
    Pi = np.roll(np.eye(MN), 1, axis=0)
    Pl = np.linalg.matrix_power(Pi, op.delay_tap)
    D = np.diag(_phase(op.shift, MN))
    return FI @ Pl @ D @ FI.conj().T


# ---------------------------------------------------------------------------
# cross-path kernels


def _check_pair(op_i: DDOperator, op_j: DDOperator):
    if op_i.dims.M != op_j.dims.M or op_i.dims.N != op_j.dims.N:
        raise ValueError("operators act on different lattices")


def pair_diagonal(op_i: DDOperator, op_j: DDOperator) -> np.ndarray:
    """Diagonal of T_i T_j^H, length MN.

    The middle factor Pi^li Delta^d Pi^-lj is a scaled permutation that moves
    delay index m to m + (li - lj); the DFT stage keeps m fixed, so the
    diagonal vanishes unless the delays agree modulo M.  For equal delays it
    is the Doppler-average of the phase ramp seen by each delay bin.
    """
    _check_pair(op_i, op_j)
    M, N = op_i.dims.M, op_i.dims.N
    MN = M * N
    if (op_i.delay_tap - op_j.delay_tap) % M != 0:
        return np.zeros(MN, dtype=complex)
    d = op_i.shift - op_j.shift
    u = np.arange(MN)
    c = np.exp(2j * np.pi * d * ((u - op_i.delay_tap) % MN) / MN)
    per_delay = c.reshape(N, M).mean(axis=0)
    return np.tile(per_delay, N)


def pair_row_sums(op_i: DDOperator, op_j: DDOperator) -> np.ndarray:
    """Row sums of T_i T_j^H, i.e. T_i T_j^H 1."""
    _check_pair(op_i, op_j)
    return apply(op_i, apply_adjoint(op_j, np.ones(op_i.dims.size)))


def chi_kernel(op_i: DDOperator, op_j: DDOperator, r: int | None = None):
    """|[T_i T_j^H]_(r,r)|^2; all rows when r is None."""
    v = np.abs(pair_diagonal(op_i, op_j)) ** 2
    return v if r is None else float(v[r])


def kappa_kernel(op_i: DDOperator, op_j: DDOperator, r: int | None = None):
    """|sum over r' != r of [T_i T_j^H]_(r,r')|^2; all rows when r is None."""
    v = np.abs(pair_row_sums(op_i, op_j) - pair_diagonal(op_i, op_j)) ** 2
    return v if r is None else float(v[r])


@lru_cache(maxsize=65536)
def _kernel_rows(key_i: tuple, key_j: tuple, adjoint_first: bool):
    li, ki, fi, M, N = key_i
    lj, kj, fj, _, _ = key_j
    dims = DDDims(M, N)
    a = DDOperator(li, ki, fi, dims)
    b = DDOperator(lj, kj, fj, dims)
    if adjoint_first:
        diag = _adjoint_pair_diagonal(a, b)
        rows = apply_adjoint(a, apply(b, np.ones(dims.size)))
    else:
        diag = pair_diagonal(a, b)
        rows = pair_row_sums(a, b)
    chi = np.abs(diag) ** 2
    kap = np.abs(rows - diag) ** 2
    chi.setflags(write=False)
    kap.setflags(write=False)
    return chi, kap


def _adjoint_pair_diagonal(op_i: DDOperator, op_j: DDOperator) -> np.ndarray:
    """Diagonal of T_i^H T_j.  The middle factor is
    Delta^-ai Pi^(lj-li) Delta^aj: nonzero diagonal only for equal delays,
    where it reduces to Delta^(aj-ai)."""
    _check_pair(op_i, op_j)
    M, N = op_i.dims.M, op_i.dims.N
    MN = M * N
    if (op_i.delay_tap - op_j.delay_tap) % M != 0:
        return np.zeros(MN, dtype=complex)
    d = op_j.shift - op_i.shift
    c = np.exp(2j * np.pi * d * np.arange(MN) / MN)
    return np.tile(c.reshape(N, M).mean(axis=0), N)


def kernel_table(ops: list[DDOperator], adjoint_first: bool = False):
    """(chi, kappa) arrays of shape (L, L, MN) for every ordered path pair.

    With adjoint_first the kernels are taken on T_i^H T_j, the form that
    appears in matched-filter uplink combining.
    """
    L = len(ops)
    MN = ops[0].dims.size
    chi = np.empty((L, L, MN))
    kap = np.empty((L, L, MN))
    for i in range(L):
        for j in range(L):
            chi[i, j], kap[i, j] = _kernel_rows(ops[i].key(), ops[j].key(), adjoint_first)
    return chi, kap


# ---------------------------------------------------------------------------
# fractional Doppler spreading


def geometric_sum(c, frac: float, N: int):
    """sum_{n<N} exp(j 2 pi (c + frac) n / N), vectorized over c."""
    x = np.asarray(c, dtype=float) + frac
    num = np.exp(2j * np.pi * x) - 1.0
    den = np.exp(2j * np.pi * x / N) - 1.0
    small = np.abs(den) < 1e-12
    out = np.where(small, N + 0j, num / np.where(small, 1.0, den))
    return out


def alpha_coeff(k: int, l: int, k_path: int, l_path: int, frac: float, c,
                dims: DDDims):
    """Leakage weight of a fractional-Doppler path (k_path, l_path, frac) from
    Doppler offset c onto receive bin (k, l).  Magnitude at most one."""
    M, N = dims.M, dims.N
    if not (0 <= l < M and 0 <= l_path < M):
        raise ValueError("delay index outside the lattice")
    c = np.asarray(c)
    if np.any(c < -(N // 2)) or np.any(c > N - N // 2 - 1):
        raise ValueError("offset c outside [-N/2, N/2 - 1]")
    beta = geometric_sum(c, frac, N)
    ramp = np.exp(-2j * np.pi * (l - l_path) * (k_path + frac) / (M * N))
    if l >= l_path:
        return beta / N * ramp
    wrap = np.exp(-2j * np.pi * np.mod(k - k_path + c, N) / N)
    return (beta - 1.0) / N * ramp * wrap


def guard_width(k_max: int, k_hat: int) -> int:
    return 4 * k_max + 4 * k_hat + 1


def sidelobe_energy(k_max: int, k_hat: int, N: int, frac=None) -> float:
    """Leakage energy from offsets outside the Doppler guard.

    Without `frac` this is the flat-sidelobe approximation
    (N - 4 k_max - 4 k_hat - 1) / N^2.  With `frac` (scalar or array) it is the
    exact sum of |alpha|^2 over c outside the guard, averaged over the given
    fractional offsets.
    """
    G = guard_width(k_max, k_hat)
    if G > N:
        raise ValueError(f"guard width {G} exceeds N={N}")
    if frac is None:
        return (N - G) / N**2
    c = np.arange(-(N // 2), N - N // 2)
    c = c[np.abs(c) > 2 * k_max + 2 * k_hat]
    fr = np.atleast_1d(np.asarray(frac, dtype=float))
    vals = [np.sum(np.abs(geometric_sum(c, f, N)) ** 2) / N**2 for f in fr]
    return float(np.mean(vals))
