import numpy as np
import pytest
from hypothesis import given, strategies as st

from otfs_cf.ofdm import (OfdmConfig, aging_phases, bt_gamma, build_ofdm_channel, cp_fraction, ici_fraction,
                          make_config, ofdm_downlink_se, ofdm_kernels, ofdm_overhead, ofdm_uplink_se,
                          pilot_interval, q_bar)
from otfs_cf.se_closed_form import (distinct_delay_kernels, dl_power_control_full, downlink_se,
                                    uplink_se)


def test_static_single_tap_is_identity():
    ch = build_ofdm_channel([1.0], [0], [0.0], 8)
    assert np.allclose(ch.h_ofdm, np.eye(8))


def test_static_multipath_is_dft_of_taps():
    M = 16
    gains = np.array([0.8 + 0.1j, -0.3j, 0.2])
    delays = [0, 3, 7]
    ch = build_ofdm_channel(gains, delays, [0.0, 0.0, 0.0], M)
    taps = np.zeros(M, complex)
    taps[delays] = gains
    assert np.allclose(ch.h_ofdm, np.diag(np.fft.fft(taps)), atol=1e-12)


@given(st.integers(0, 15), st.floats(-0.5, 0.5), st.integers(0, 15), st.floats(-0.5, 0.5))
def test_q_bar_unitary_and_unit_row_sums(la, va, lb, vb):
    A, B = q_bar(la, va, 16), q_bar(lb, vb, 16)
    assert np.abs(A @ A.conj().T - np.eye(16)).max() < 1e-10
    assert np.allclose(np.abs((A @ B.conj().T).sum(1)) ** 2, 1.0, atol=1e-10)


def test_timing_and_overheads():
    cfg = make_config(15e3, 10e-6, 1111.1)
    assert cfg.d_t == 5
    assert cp_fraction(cfg) == pytest.approx(10 / (10 + 66.667), rel=1e-3)
    assert ofdm_overhead(OfdmConfig(15e3, 0.0, np.inf), block_pilots=False) == 1.0
    assert pilot_interval(0.0, 1e-4) == np.inf
    with pytest.raises(ValueError):
        pilot_interval(1e5, 1e-4)


def test_ici_and_bt_gamma():
    assert ici_fraction(0.0, 32) == pytest.approx(0.0, abs=1e-15)
    assert 0 < ici_fraction(0.1, 32) < 0.05
    beta = np.ones((1, 1, 2))
    g0 = bt_gamma(beta, 1e9, 1.0, np.zeros((1, 1, 2)))
    assert np.allclose(g0, 1.0, rtol=1e-6)
    g1 = bt_gamma(beta, 1e9, 1.0, np.full((1, 1, 2), 0.05))
    assert np.all(g1 < g0)


def test_aging_is_unit_modulus():
    assert np.allclose(np.abs(aging_phases(np.array([100.0, -900.0]), 7e-5, 3)), 1)


def test_static_distinct_delays_match_otfs_before_overheads():
    rng = np.random.default_rng(2)
    Ma, Ku, L, M = 3, 2, 2, 8
    beta = rng.uniform(0.2, 1, (Ma, Ku, L))
    gamma = 0.6 * beta
    delay = np.broadcast_to(np.array([0, 3]), (Ma, Ku, L))
    nu = np.zeros((Ma, Ku, L))
    cfg = OfdmConfig(15e3, 0.0, np.inf)
    eta = dl_power_control_full(gamma)
    chi, kap = ofdm_kernels(delay, nu, M)
    dl = ofdm_downlink_se(gamma, beta, eta, 10.0, chi, kap, nu, cfg, block_pilots=False)
    # zero Doppler: every pair of paths is diagonal in frequency, so the
    # cross-path terms land in beamforming uncertainty, not inter-symbol leakage
    assert np.allclose(chi, 1.0) and np.allclose(kap, 0.0, atol=1e-20)
    dd_chi, dd_kap = distinct_delay_kernels(Ma, Ku, L)
    ref = downlink_se(gamma, beta, eta, 10.0, dd_chi, dd_kap)
    assert np.allclose(dl, ref)
    chi_h, kap_h = ofdm_kernels(delay, nu, M, adjoint_first=True)
    ul = ofdm_uplink_se(gamma, beta, 1.0, 10.0, chi_h, kap_h, nu, cfg, block_pilots=False)
    assert np.allclose(ul, uplink_se(gamma, beta, 1.0, 10.0, dd_chi, dd_kap))


def test_aging_lowers_se():
    rng = np.random.default_rng(5)
    beta = rng.uniform(0.2, 1, (4, 2, 3))
    gamma = 0.8 * beta
    delay = np.broadcast_to(np.array([0, 1, 2]), beta.shape)
    nu_n = rng.uniform(-0.07, 0.07, beta.shape)
    chi, kap = ofdm_kernels(delay, nu_n, 8)
    cfg = make_config(15e3, 5e-6, 1111.0)
    eta = dl_power_control_full(gamma)
    aged = ofdm_downlink_se(gamma, beta, eta, 100.0, chi, kap, nu_n * 15e3, cfg)
    fresh = ofdm_downlink_se(gamma, beta, eta, 100.0, chi, kap, nu_n * 0.0, cfg)
    assert np.all(aged <= fresh + 1e-12)
