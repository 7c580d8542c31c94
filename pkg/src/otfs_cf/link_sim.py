"""Monte-Carlo link simulation at small frame sizes.

Channels are formed densely from per-path unitary operators stacked as
T[p, q, i] (shape (M_a, K_u, L, R, R)); the same code therefore serves the
delay-Doppler operators and the OFDM frequency-domain operators.  Expectations
are sample means over channel/estimate draws; standard errors come from the
per-draw spread, and derived SE values use a delete-one-group jackknife.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import complex_normal
from .dd_core import DDDims, materialize
from .se_closed_form import SINR_CAP

DENSE_CAP = 4096


def dense_link_operators(paths, dims: DDDims) -> np.ndarray:
    Ma, Ku, L = paths.shape
    MN = dims.size
    T = np.empty((Ma, Ku, L, MN, MN), dtype=complex)
    for p in range(Ma):
        for q in range(Ku):
            for i, op in enumerate(paths.operators(p, q, dims)):
                T[p, q, i] = materialize(op)
    return T


def draw_estimates(beta, gamma, trials: int, rng: np.random.Generator):
    """Jointly Gaussian (h, h_hat) with E|h|^2 = beta, E|h_hat|^2 = gamma and
    error independent of the estimate: the law of any scalar-observation MMSE
    estimate.  Shapes (trials,) + beta.shape."""
    beta = np.asarray(beta, float)
    gamma = np.asarray(gamma, float)
    shape = (trials,) + beta.shape
    hhat = complex_normal(rng, np.broadcast_to(gamma, shape))
    err = complex_normal(rng, np.broadcast_to(np.maximum(beta - gamma, 0.0), shape))
    return hhat + err, hhat


def _combine(gains, T):
    return np.einsum("tpqi,pqirs->tpqrs", gains, T)


def _check_cap(Ma, R, cap):
    if Ma * R > cap:
        raise ValueError(f"M_a x frame size = {Ma * R} exceeds the dense cap {cap}; "
                         "this processing level is unsupported at this scale")


def _batches(trials, batch):
    done = 0
    while done < trials:
        n = min(batch, trials - done)
        yield n
        done += n


@dataclass
class ComponentStats:
    """Row-averaged SINR terms per user with standard errors."""

    ds: np.ndarray
    bu: np.ndarray
    i1: np.ndarray
    i2: np.ndarray
    noise: np.ndarray
    ds_err: np.ndarray
    bu_err: np.ndarray
    i1_err: np.ndarray
    i2_err: np.ndarray
    se: np.ndarray
    se_err: np.ndarray
    per_row: dict = field(default_factory=dict, repr=False)


class _Moments:
    """Per-group running sums of the scalar statistics used by the SINR."""

    def __init__(self, groups, Ku, R):
        self.n = np.zeros(groups)
        self.s_d = np.zeros((groups, Ku, R), complex)
        self.s_d2 = np.zeros((groups, Ku, R))
        self.s_i1 = np.zeros((groups, Ku, R))
        self.s_i2 = np.zeros((groups, Ku, R))
        self.samples = {k: [] for k in ("d", "i1", "i2")}

    def add(self, g, d, i1, i2):
        self.n[g] += len(d)
        self.s_d[g] += d.sum(0)
        self.s_d2[g] += (np.abs(d) ** 2).sum(0)
        self.s_i1[g] += i1.sum(0)
        self.s_i2[g] += i2.sum(0)
        # row averages are kept per draw for standard errors
        self.samples["d"].append(d.mean(-1))
        self.samples["i1"].append(i1.mean(-1))
        self.samples["i2"].append(i2.mean(-1))

    def terms(self, mask=None):
        m = np.ones(len(self.n), bool) if mask is None else mask
        n = self.n[m].sum()
        mean_d = self.s_d[m].sum(0) / n
        bu = self.s_d2[m].sum(0) / n - np.abs(mean_d) ** 2
        return mean_d, bu, self.s_i1[m].sum(0) / n, self.s_i2[m].sum(0) / n


def _jackknife(fn, groups):
    full = fn(None)
    reps = np.array([fn(np.arange(groups) != g) for g in range(groups)])
    err = np.sqrt((groups - 1) / groups * np.sum((reps - reps.mean(0)) ** 2, axis=0))
    return full, err


def _group_sizes(trials, groups):
    groups = max(1, min(groups, trials))
    base, extra = divmod(trials, groups)
    return [base + (g < extra) for g in range(groups)]


def _stats(mom: _Moments, sinr_fn, noise, groups):
    d = np.concatenate(mom.samples["d"])
    i1 = np.concatenate(mom.samples["i1"])
    i2 = np.concatenate(mom.samples["i2"])
    n = len(d)
    mean_d, bu, m_i1, m_i2 = mom.terms()

    def se_fn(mask):
        sinr = sinr_fn(mask, *mom.terms(mask))
        return np.mean(np.log2(1 + np.minimum(sinr, SINR_CAP)), axis=-1)

    se, se_err = _jackknife(se_fn, groups)
    dm = d.mean(0)
    return ComponentStats(
        ds=np.abs(mean_d).mean(-1), bu=bu.mean(-1), i1=m_i1.mean(-1), i2=m_i2.mean(-1),
        noise=np.asarray(noise, float),
        ds_err=np.std(np.real(d * np.exp(-1j * np.angle(dm))), axis=0, ddof=1) / np.sqrt(n),
        bu_err=np.std(np.abs(d - dm) ** 2, axis=0, ddof=1) / np.sqrt(n),
        i1_err=np.std(i1, axis=0, ddof=1) / np.sqrt(n),
        i2_err=np.std(i2, axis=0, ddof=1) / np.sqrt(n),
        se=se, se_err=se_err,
        per_row={"ds": mean_d, "bu": bu, "i1": m_i1, "i2": m_i2},
    )


def simulate_downlink_mr(T, beta, gamma, eta, rho_d: float, trials: int, rng: np.random.Generator,
                         batch: int = 1000, groups: int = 20) -> ComponentStats:
    """Conjugate-beamforming downlink: per draw the effective coefficients
    D_qk = sum_p sqrt(eta_pk) H_pq H_hat_pk^H give the desired term (diagonal
    of D_qq), own inter-symbol leakage (off-diagonal of D_qq) and inter-user
    leakage (all of D_qk, k != q).  Terms exclude rho_d."""
    Ma, Ku, L, R, _ = T.shape
    sq = np.sqrt(np.asarray(eta, float))
    sizes = _group_sizes(trials, groups)
    mom = _Moments(len(sizes), Ku, R)
    for g, size in enumerate(sizes):
        for n in _batches(size, batch):
            h, hh = draw_estimates(beta, gamma, n, rng)
            H, Hh = _combine(h, T), _combine(hh, T)
            D = np.einsum("pk,tpqrs,tpkus->tqkru", sq, H, np.conj(Hh))
            diag = np.einsum("tqqrr->tqr", D)
            e = np.abs(D) ** 2
            row = e.sum(-1)  # (t, q, k, r)
            own = np.einsum("tqqr->tqr", row)
            i1 = own - np.abs(diag) ** 2
            i2 = row.sum(2) - own
            mom.add(g, diag, i1, i2)

    def sinr(mask, md, b, a1, a2):
        return rho_d * np.abs(md) ** 2 / (rho_d * (b + a1 + a2) + 1.0)

    return _stats(mom, sinr, np.full(Ku, 1.0 / rho_d if rho_d > 0 else np.inf), len(sizes))


def simulate_uplink_mr(T, beta, gamma, eta, rho_dt, trials: int, rng: np.random.Generator,
                       batch: int = 1000, groups: int = 20) -> ComponentStats:
    """Matched-filter uplink: G_qk = sum_p H_hat_pq^H H_pk sqrt(rho_k eta_k).
    The combined noise power of row r is sum_p ||column r of H_hat_pq||^2,
    evaluated exactly per draw."""
    Ma, Ku, L, R, _ = T.shape
    amp = np.sqrt(np.broadcast_to(np.asarray(rho_dt, float) * np.asarray(eta, float), (Ku,)))
    sizes = _group_sizes(trials, groups)
    mom = _Moments(len(sizes), Ku, R)
    s_noise = np.zeros((len(sizes), Ku, R))
    for g, size in enumerate(sizes):
        for n in _batches(size, batch):
            h, hh = draw_estimates(beta, gamma, n, rng)
            H, Hh = _combine(h, T), _combine(hh, T)
            G = np.einsum("tpqsr,tpksu,k->tqkru", np.conj(Hh), H, amp)
            diag = np.einsum("tqqrr->tqr", G)
            row = (np.abs(G) ** 2).sum(-1)
            own = np.einsum("tqqr->tqr", row)
            mom.add(g, diag, own - np.abs(diag) ** 2, row.sum(2) - own)
            s_noise[g] += (np.abs(Hh) ** 2).sum(axis=(1, 3)).sum(0)

    def noise(mask):
        m = np.ones(len(sizes), bool) if mask is None else mask
        return s_noise[m].sum(0) / mom.n[m].sum()

    def sinr(mask, md, b, a1, a2):
        return np.abs(md) ** 2 / (b + a1 + a2 + noise(mask))

    return _stats(mom, sinr, noise(None).mean(-1), len(sizes))


def dl_transmit_power(T, beta, gamma, eta, rho_d: float, trials: int, rng: np.random.Generator,
                      batch: int = 1000):
    """Per-AP average transmit power per DD symbol, ||x_p||^2 / R, with
    x_p = sqrt(rho_d) sum_q sqrt(eta_pq) H_hat_pq^H s_q and unit-power
    symbols.  Returns (mean, standard error) per AP."""
    Ma, Ku, L, R, _ = T.shape
    sq = np.sqrt(np.asarray(eta, float))
    vals = []
    for n in _batches(trials, batch):
        _, hh = draw_estimates(beta, gamma, n, rng)
        Hh = _combine(hh, T)
        s = complex_normal(rng, 1.0, (n, Ku, R))
        x = np.sqrt(rho_d) * np.einsum("pq,tpqsr,tqs->tpr", sq, np.conj(Hh), s)
        vals.append((np.abs(x) ** 2).sum(-1) / R)
    v = np.concatenate(vals)
    return v.mean(0), v.std(0, ddof=1) / np.sqrt(len(v))


# ---------------------------------------------------------------------------
# combining and processing levels


def lmmse_combiner(Hhat, err_var, rho, sigma2: float = 1.0):
    """Local MMSE combiners at one AP.  Hhat is (..., K_u, R, R); err_var the
    per-user scalar error covariance; returns V with the same shape."""
    Hhat = np.asarray(Hhat)
    R = Hhat.shape[-1]
    Ku = Hhat.shape[-3]
    rho = np.broadcast_to(np.asarray(rho, float), (Ku,))
    err = np.broadcast_to(np.asarray(err_var, float), Hhat.shape[:-2])
    Z = np.einsum("k,...krs,...kus->...ru", rho, Hhat, np.conj(Hhat))
    Z = Z + (np.sum(rho * err, axis=-1)[..., None, None] + sigma2) * np.eye(R)
    cond = np.linalg.cond(Z)
    if np.any(cond > 1e12):
        raise np.linalg.LinAlgError(f"L-MMSE system ill-conditioned (cond={np.max(cond):.2e})")
    return np.linalg.solve(Z[..., None, :, :], Hhat)


def _logdet_se(D, Psi, R):
    M = np.eye(D.shape[-1]) + np.conj(D.T) @ np.linalg.solve(Psi, D)
    sign, ld = np.linalg.slogdet(M)
    return max(ld.real, 0.0) / np.log(2) / R


def uplink_levels(T, beta, gamma, rho_dt, eta, trials: int, rng: np.random.Generator,
                  combiners=("mr", "lmmse"), sigma2: float = 1.0, batch: int = 200,
                  dense_cap: int = DENSE_CAP):
    """Level-2 (equal-weight fusion) and level-3 (optimal large-scale fusion)
    uplink SE with MMSE-SIC decoding, for each combiner, from one shared set
    of channel draws.  Returns {combiner: {"level2": (K_u,), "level3": (K_u,)}}
    before overhead."""
    Ma, Ku, L, R, _ = T.shape
    _check_cap(Ma, R, dense_cap)
    beta = np.asarray(beta, float)
    gamma = np.asarray(gamma, float)
    amp = np.sqrt(np.broadcast_to(np.asarray(rho_dt, float) * np.asarray(eta, float), (Ku,)))
    err = (beta - gamma).sum(-1)  # (p, q): error covariance is err * I
    MR_ = Ma * R
    acc = {c: dict(m1=np.zeros((Ku, MR_, R), complex), m2=np.zeros((Ku, MR_, MR_), complex),
                   S=np.zeros((Ku, Ma, R, R), complex)) for c in combiners}
    for n in _batches(trials, batch):
        h, hh = draw_estimates(beta, gamma, n, rng)
        H, Hh = _combine(h, T), _combine(hh, T)
        for c in combiners:
            if c == "mr":
                V = Hh
            elif c == "lmmse":
                V = lmmse_combiner(Hh, err, amp**2, sigma2)
            else:
                raise ValueError(f"unknown combiner {c!r}")
            # B[t, q, k] stacked over APs: (MaR x R) blocks V_pq^H H_pk
            Vh = np.conj(np.swapaxes(V, -1, -2))
            B = (Vh[:, :, :, None] @ (H * amp[None, None, :, None, None])[:, :, None])
            B = B.transpose(0, 2, 3, 1, 4, 5).reshape(n, Ku, Ku, MR_, R)
            a = acc[c]
            a["m1"] += np.einsum("tqqab->qab", B)
            Bq = B.transpose(1, 3, 0, 2, 4).reshape(Ku, MR_, n * Ku * R)
            a["m2"] += Bq @ np.conj(np.swapaxes(Bq, -1, -2))
            a["S"] += sigma2 * (Vh @ V).sum(0).transpose(1, 0, 2, 3)
    out = {}
    stack = np.tile(np.eye(R), (Ma, 1))
    for c in combiners:
        a = acc[c]
        res2, res3 = np.zeros(Ku), np.zeros(Ku)
        for q in range(Ku):
            m1 = a["m1"][q] / trials
            m2 = a["m2"][q] / trials
            S = np.zeros((MR_, MR_), complex)
            for p in range(Ma):
                S[p * R:(p + 1) * R, p * R:(p + 1) * R] = a["S"][q, p] / trials
            cov = m2 - m1 @ np.conj(m1.T) + S
            cov = 0.5 * (cov + np.conj(cov.T))
            for A, res in ((stack, res2), (np.linalg.solve(m2 + S, m1), res3)):
                D = np.conj(A.T) @ m1
                Psi = np.conj(A.T) @ cov @ A
                res[q] = _logdet_se(D, 0.5 * (Psi + np.conj(Psi.T)), R)
        out[c] = {"level2": res2, "level3": res3}
    return out


def downlink_mmse_sic_bound(T, beta, gamma, eta, rho_d: float, trials: int, rng: np.random.Generator,
                            batch: int = 500):
    """Downlink SE with per-user joint (MMSE-SIC) decoding under statistical
    CSI, and the per-symbol decoding SE from the same sample moments.
    Returns (joint, per_symbol), each (K_u,) before overhead."""
    Ma, Ku, L, R, _ = T.shape
    sq = np.sqrt(np.asarray(eta, float))
    m1 = np.zeros((Ku, R, R), complex)
    m2 = np.zeros((Ku, R, R), complex)
    for n in _batches(trials, batch):
        h, hh = draw_estimates(beta, gamma, n, rng)
        H, Hh = _combine(h, T), _combine(hh, T)
        D = np.einsum("pk,tpqrs,tpkus->tqkru", sq, H, np.conj(Hh))
        m1 += np.einsum("tqqru->qru", D)
        m2 += np.einsum("tqkru,tqkvu->qrv", D, np.conj(D))
    m1 /= trials
    m2 /= trials
    joint, lcd = np.zeros(Ku), np.zeros(Ku)
    if rho_d <= 0:
        return joint, lcd
    for q in range(Ku):
        Psi = np.eye(R) + rho_d * (m2[q] - m1[q] @ np.conj(m1[q].T))
        Psi = 0.5 * (Psi + np.conj(Psi.T))
        joint[q] = _logdet_se(np.sqrt(rho_d) * m1[q], Psi, R)
        d = np.diag(m1[q])
        off = (np.abs(m1[q]) ** 2).sum(1) - np.abs(d) ** 2
        sinr = rho_d * np.abs(d) ** 2 / (np.real(np.diag(Psi)) + rho_d * off)
        lcd[q] = np.mean(np.log2(1 + np.minimum(sinr, SINR_CAP)))
    return joint, lcd


def level4_se(T, beta, gamma, rho, eta, trials: int, rng: np.random.Generator, combiner: str = "mmse",
              sigma2: float = 1.0, dense_cap: int = DENSE_CAP, batch: int = 50):
    """Centralized uplink SE with instantaneous-CSI side information:
    E log2 det(I + rho_q V^H Hh_q Hh_q^H V (V^H Z_q V)^-1) / R, where Z_q holds
    the other users' estimated channels, all estimation errors and noise.
    MMSE combining maximizes the per-draw value; MR uses V = Hh_q."""
    Ma, Ku, L, R, _ = T.shape
    _check_cap(Ma, R, dense_cap)
    beta = np.asarray(beta, float)
    gamma = np.asarray(gamma, float)
    pw = np.broadcast_to(np.asarray(rho, float) * np.asarray(eta, float), (Ku,))
    err = (beta - gamma).sum(-1)  # (p, q)
    E = np.repeat((err * pw).sum(1), R)  # stacked diagonal error covariance
    total = np.zeros(Ku)
    for n in _batches(trials, batch):
        _, hh = draw_estimates(beta, gamma, n, rng)
        Hh = _combine(hh, T)  # (t, p, q, R, R)
        Hs = np.transpose(Hh, (0, 2, 1, 3, 4)).reshape(n, Ku, Ma * R, R)
        full = np.einsum("k,tkab,tkcb->tac", pw, Hs, np.conj(Hs))
        full = full + np.diag(E + sigma2)
        for q in range(Ku):
            Z = full - pw[q] * Hs[:, q] @ np.conj(np.swapaxes(Hs[:, q], -1, -2))
            if combiner == "mmse":
                X = np.linalg.solve(Z, Hs[:, q])
                M = np.eye(R) + pw[q] * np.conj(np.swapaxes(Hs[:, q], -1, -2)) @ X
            elif combiner == "mr":
                V = Hs[:, q]
                VH = np.conj(np.swapaxes(V, -1, -2))
                sig = VH @ Hs[:, q]
                M = np.eye(R) + pw[q] * sig @ np.conj(np.swapaxes(sig, -1, -2)) @ np.linalg.inv(VH @ Z @ V)
            else:
                raise ValueError(f"unknown combiner {combiner!r}")
            total[q] += np.sum(np.linalg.slogdet(M)[1]) / np.log(2) / R
    return total / trials
