import numpy as np
import pytest
from hypothesis import given, strategies as st

from otfs_cf.dd_core import DDDims, build_dd_operator
from otfs_cf.estimation import (EpConfig, ep_estimate, ep_interference_i1_var, ep_interference_i2_var,
                                ep_interference_var, ep_mmse_coeff, estimation_mse, pilot_layout,
                                simulate_ep_pilot, simulate_sp_frames, sp_estimate, sp_gamma_closed_form,
                                sp_noise_covariance)


def test_i1_values():
    assert ep_interference_i1_var(1, 1, 4, 0, 0, 1) == pytest.approx(3 / 16)
    assert ep_interference_i1_var(0.5, 1, 20, 2, 0, 2) == pytest.approx(0.0275)
    assert ep_interference_i1_var(1, 1, 9, 2, 0, 1) == 0


def test_i2_values():
    assert ep_interference_i2_var(10, [], [], []) == 0
    assert ep_interference_i2_var(10, [1], [1], [1]) == pytest.approx(0.1)
    assert ep_interference_i2_var(20, [1], [1], [1]) == pytest.approx(0.05)


def test_grouped_variance_equals_i1_plus_i2():
    rng = np.random.default_rng(3)
    beta = rng.uniform(0.1, 1, (2, 3, 4))
    rho_dt = np.array([1.0, 2.0, 0.5])
    v = ep_interference_var(beta, rho_dt, 1.0, 20, 2, 0)
    S = beta.sum(-1)
    for p in range(2):
        for q in range(3):
            o = [u for u in range(3) if u != q]
            ref = ep_interference_i1_var(rho_dt[q], 1, 20, 2, 0, S[p, q]) + \
                ep_interference_i2_var(20, np.ones(2), rho_dt[o], S[p, o])
            assert v[p, q] == pytest.approx(ref)


def test_ep_single_path_substitution():
    q = ep_mmse_coeff(np.ones((1, 1, 1)), 10.0, 1.0, 1.0, 20, 2, 0)
    den = 10 + 1 / 20 - 9 / 400 + 1
    assert q.c[0, 0, 0] == pytest.approx(np.sqrt(10) / den)
    assert q.gamma[0, 0, 0] == pytest.approx(10 / den)


def test_ep_limits():
    beta = np.array([[[0.0, 0.5]]])
    q = ep_mmse_coeff(beta, 1e12, 1.0, 1.0, 20, 1)
    assert q.gamma[0, 0, 0] == 0
    assert q.gamma[0, 0, 1] == pytest.approx(0.5, rel=1e-9)


@given(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(0.01, 2.0))
def test_gamma_between_zero_and_beta(rp, rd, b):
    beta = np.full((2, 2, 3), b)
    for g in (ep_mmse_coeff(beta, rp, rd, 1.0, 16, 1).gamma, sp_gamma_closed_form(beta, rp, rd, 1.0)):
        assert np.all(g >= 0) and np.all(g <= beta)


def test_ep_monte_carlo(rng):
    beta = np.array([[[0.8, 0.3]]])
    q = ep_mmse_coeff(beta, 5.0, 2.0, 1.0, 16, 1)
    iv = ep_interference_var(beta, 2.0, 1.0, 16, 1)[:, :, None]
    n = 10_000
    h, y, hh = simulate_ep_pilot(beta, q.c, 5.0, 1.0, iv, n, rng)
    p = np.abs(hh) ** 2
    assert np.all(np.abs(p.mean(0) - q.gamma) < 3 * p.std(0) / np.sqrt(n))
    orth = (h - hh) * np.conj(hh)
    assert np.all(np.abs(orth.mean(0)) < 3 * np.abs(orth).std(0) / np.sqrt(n) * 1.5)
    e = (np.abs(h - hh) ** 2).sum(-1)
    assert abs(e.mean() - (beta - q.gamma).sum()) < 3 * e.std() / np.sqrt(n)


def test_ep_estimate_grid_lookup():
    q = ep_mmse_coeff(np.ones((1, 1, 2)), 4.0, 1.0, 1.0, 8, 1)
    grid = np.arange(12.0).reshape(3, 4)
    out = ep_estimate(grid, type(q)(q.c[0, 0], q.gamma[0, 0], "ep"), positions=[(1, 2), (2, 3)])
    assert np.allclose(out, q.c[0, 0] * np.array([6.0, 11.0]))
    with pytest.raises(IndexError):
        ep_estimate(grid, q, positions=[(3, 0)])


def test_noise_free_ep_estimate_recovers_scaled_gain():
    q = ep_mmse_coeff(np.ones((1, 1, 1)), 4.0, 0.0, 1.0, 8, 1)
    h = 0.3 - 0.2j
    assert ep_estimate(np.sqrt(4.0) * h, q) == pytest.approx(q.c[0, 0, 0] * 2 * h)


def test_pilot_layout():
    cfg = EpConfig(DDDims(32, 16), 1, 1)
    pos = pilot_layout(cfg, 4)
    assert len(set(pos)) == 4
    assert cfg.n_guard == 15
    with pytest.raises(ValueError):
        pilot_layout(cfg, cfg.max_users + 1)
    with pytest.raises(ValueError):
        EpConfig(DDDims(32, 4), 1, 1)


def test_sp_noise_covariance_values():
    assert sp_noise_covariance([0.0], [1.0], [1.0], [1.0], 1.0, 0) == 1.0
    assert sp_noise_covariance([1, 1], [1, 1], [1, 1], [1, 1], 1.0, 0) == 4.0


def test_sp_gamma_value():
    g = sp_gamma_closed_form(np.ones((1, 2, 1)), 1.0, 1.0, 1.0)
    assert g[0, 0, 0] == pytest.approx(0.2)
    g = sp_gamma_closed_form(np.ones((1, 2, 1)), 1e12, 1e-9, 1.0)
    assert g[0, 0, 0] == pytest.approx(0.5, rel=1e-6)  # other pilot scales with rho too


def test_sp_estimate_scalar_and_zero():
    xi = np.array([[2.0 - 1.0j]])
    y = np.array([0.7 + 0.1j])
    out = sp_estimate(y, xi, 0.5, np.array([0.8]))
    ref = 0.8 * np.conj(xi[0, 0]) * y[0] / (abs(xi[0, 0]) ** 2 * 0.8 + 0.5)
    assert out[0] == pytest.approx(ref)
    assert sp_estimate(np.zeros(1), xi, 0.5, np.array([0.8]))[0] == 0


def test_sp_gamma_below_ep_under_matched_power():
    rng = np.random.default_rng(11)
    for _ in range(50):
        beta = rng.uniform(0.01, 1, (3, 4, 5))
        rp, rd = rng.uniform(0.1, 50, 2)
        ep = ep_mmse_coeff(beta, rp, rd, 1.0, 32, 1).gamma
        sp = sp_gamma_closed_form(beta, rp, rd, 1.0)
        assert np.all(sp <= ep + 1e-12)


def test_sp_frames_noise_scalar_and_mse_bound(rng):
    dims = DDDims(8, 4)
    ops = [[build_dd_operator(0, 0, 0.0, dims), build_dd_operator(2, 1, 0.0, dims)],
           [build_dd_operator(1, 0, 0.0, dims), build_dd_operator(3, -1, 0.0, dims)]]
    b = [np.array([0.6, 0.4]), np.array([0.5, 0.5])]
    h, hh, w, cw = simulate_sp_frames(ops, b, 0.5, 1.0, 1.0, 1.0, 0, 4000, rng)
    assert cw == pytest.approx(1.0 + 1.0 + 0.5 + 1.0)
    assert estimation_mse(h, hh) <= b[0].sum()
    p = np.mean(np.abs(w) ** 2)
    assert p == pytest.approx(cw, rel=0.05)


def test_estimation_mse():
    h = np.ones((3, 2))
    assert estimation_mse(h, h) == 0
    assert estimation_mse(h, np.zeros_like(h)) == 2
