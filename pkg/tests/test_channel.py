import numpy as np
import pytest

from otfs_cf.channel import (EVA, EVB, PathTap, apply_channel, complex_normal, delay_taps, doppler_from_speed,
                             effective_channel, materialize_channel, realize_gains, sample_network_paths,
                             sample_paths)
from otfs_cf.dd_core import DDDims


def test_profiles():
    assert EVA.L == 9
    assert EVB.L == 6
    assert EVB.tau_max == pytest.approx(10e-6)


def test_doppler_index():
    nu, k = doppler_from_speed(300, 4e9, 128, 15e3)
    assert nu == pytest.approx(1111.1, rel=1e-3)
    assert k == 9
    assert doppler_from_speed(0, 4e9, 128, 15e3)[1] == 0


def test_delay_taps_fit_or_raise():
    assert delay_taps(EVB, 32, 15e3).max() == 5
    with pytest.raises(ValueError):
        delay_taps(EVB, 4, 150e3)


def test_zero_beta_gives_zero_gain(rng):
    r = realize_gains([PathTap(0, 0, 0.0, 0.0)], rng)
    assert r.gains[0] == 0


def test_gain_moments(rng):
    n = 100_000
    h = complex_normal(rng, np.broadcast_to([0.7, 0.2], (n, 2)))
    p = np.abs(h[:, 0]) ** 2
    assert abs(p.mean() - 0.7) < 3 * p.std() / np.sqrt(n)
    x = h[:, 0] * np.conj(h[:, 1])
    assert abs(x.mean()) < 3 * np.abs(x).std() / np.sqrt(n) * 1.5


def test_single_tap_identity(rng):
    dims = DDDims(4, 3)
    H = effective_channel(realize_gains([PathTap(0, 0, 0.0, 1.0)], rng), dims)
    H = type(H)(np.array([1.0 + 0j]), H.ops)
    x = rng.standard_normal(12) + 0j
    assert np.allclose(apply_channel(H, x), x)


def test_apply_channel_matches_dense(rng):
    dims = DDDims(4, 3)
    taps = [PathTap(0, 1, 0.2, 0.5), PathTap(2, -1, -0.1, 0.5)]
    H = effective_channel(realize_gains(taps, rng), dims)
    x = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    assert np.allclose(apply_channel(H, x), materialize_channel(H) @ x, atol=1e-10)


def test_frobenius_energy(rng):
    dims = DDDims(4, 3)
    taps = [PathTap(0, 1, 0.2, 0.3), PathTap(1, 0, 0.0, 0.7)]
    vals = []
    for _ in range(2000):
        H = effective_channel(realize_gains(taps, rng), dims)
        vals.append(np.linalg.norm(materialize_channel(H)) ** 2)
    vals = np.array(vals)
    assert abs(vals.mean() - 12 * 1.0) < 3 * vals.std() / np.sqrt(vals.size)


def test_sample_paths_quantizes_profile(rng):
    taps = sample_paths(EVB, DDDims(32, 16), 15e3, 1111.0, rng)
    assert [t.delay_tap for t in taps] == list(delay_taps(EVB, 32, 15e3))
    assert all(abs(t.doppler_tap) <= 1 and t.frac == 0 for t in taps)


def test_network_paths_shapes(rng):
    dims = DDDims(32, 16)
    beta = np.ones((3, 2, EVB.L))
    p = sample_network_paths(EVB, dims, 15e3, 1111.0, beta, rng)
    assert p.shape == (3, 2, 6)
    assert np.all(np.abs(p.doppler) <= 1)
    assert len(p.operators(0, 1, dims)) == 6
    with pytest.raises(ValueError):
        sample_network_paths(EVB, dims, 15e3, 1111.0, np.ones((3, 2, 4)), rng)
