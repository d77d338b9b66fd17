import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlos_track.channel import (AngleState, ArrayConfig, PathGain, build_channel, make_codebook,
                                noise_variance_from_snr, noiseless_observation, observe, snr_db_to_linear,
                                steering_derivative, steering_rx, steering_tx, steering_vector, synthesize_gains, unvec,
                                vec, write_observation_csv)

from oracles import central_difference, steering

angles = st.floats(0.0, math.pi)
sizes = st.integers(1, 64)


def state(aod, aoa, alphas):
    return AngleState(np.concatenate([aod, aoa]), [PathGain(complex(a)) for a in alphas])


def test_steering_examples():
    assert np.allclose(steering_tx(math.pi / 2, 4), 0.5 * np.ones(4))
    assert np.allclose(steering_tx(0.0, 2), np.array([1, -1]) / math.sqrt(2))
    assert np.allclose(steering_tx(math.pi / 3, 8), np.array([1, -1j, -1, 1j] * 2) / math.sqrt(8))
    assert np.allclose(steering_rx(math.pi / 2, 8), np.ones(8) / math.sqrt(8))
    assert np.array_equal(steering_rx(1.234, 1), np.array([1.0 + 0j]))


def test_steering_orthogonal_on_dft_spacing():
    n = 8
    t1 = math.acos(0.3)
    t2 = math.acos(0.3 - 2.0 / n)
    assert abs(np.vdot(steering_rx(t1, n), steering_rx(t2, n))) < 1e-12


@given(angles, sizes)
def test_steering_unit_norm_and_oracle(a, n):
    v = steering_vector(a, n)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(v, steering(a, n), atol=1e-12)


@given(angles, st.integers(1, 32))
def test_steering_derivative_matches_difference(a, n):
    fd = central_difference(lambda x: steering_vector(x[0], n), [a], h=1e-7)[:, 0]
    assert np.allclose(steering_derivative(a, n), fd, atol=1e-6)


def test_array_config():
    arr = ArrayConfig()
    assert (arr.n_tx, arr.n_rx, arr.carrier_freq) == (64, 8, 40e9)
    assert arr.wavelength == pytest.approx(299792458.0 / 40e9)
    with pytest.raises(ValueError):
        ArrayConfig(n_tx=0).validate()


def test_channel_examples():
    H = build_channel(state([0.3], [1.1], [2.0]), ArrayConfig(n_tx=1, n_rx=1))
    assert np.allclose(H, [[2.0]])
    H = build_channel(state([0.7], [1.9], [3 - 4j]), ArrayConfig(n_tx=16, n_rx=4))
    assert np.linalg.norm(H) == pytest.approx(5.0)
    H = build_channel(state([0.7, 0.7], [1.9, 1.9], [1 + 1j, -1 - 1j]), ArrayConfig(n_tx=16, n_rx=4))
    assert np.allclose(H, 0.0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_channel_rank_and_gain_linearity(seed, L):
    rng = np.random.default_rng(seed)
    arr = ArrayConfig(n_tx=16, n_rx=8)
    aod, aoa = rng.uniform(0, math.pi, L), rng.uniform(0, math.pi, L)
    a1 = rng.standard_normal(L) + 1j * rng.standard_normal(L)
    a2 = rng.standard_normal(L) + 1j * rng.standard_normal(L)
    H1, H2 = build_channel(state(aod, aoa, a1), arr), build_channel(state(aod, aoa, a2), arr)
    H12 = build_channel(state(aod, aoa, a1 + a2), arr)
    assert np.allclose(H12, H1 + H2, atol=1e-12)
    assert np.linalg.matrix_rank(H1, tol=1e-9) <= L
    ref = sum(a * np.outer(steering(r, 8), steering(d, 16).conj()) for a, d, r in zip(a1, aod, aoa))
    assert np.allclose(H1, ref, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 4, 8, 64])
def test_dft_codebook_unitary(n):
    cb = make_codebook(ArrayConfig(n_tx=n, n_rx=n), "dft")
    assert np.allclose(cb.B.conj().T @ cb.B, np.eye(n), atol=1e-12)
    assert np.allclose(np.linalg.norm(cb.C, axis=0), 1.0)
    cos = np.cos(cb.grid_angles_tx)
    assert np.all((cos > -1 - 1e-12) & (cos <= 1 + 1e-12))
    assert np.allclose(np.sort(cos), -1 + 2 * np.arange(1, n + 1) / n)


def test_dft_codebook_single_antenna():
    assert np.allclose(make_codebook(ArrayConfig(n_tx=1, n_rx=1)).B, [[1.0]])


def test_uniform_angle_codebook():
    cb = make_codebook(ArrayConfig(n_tx=2, n_rx=2), "uniform_angle")
    assert np.allclose(cb.grid_angles_tx, [math.pi / 4, 3 * math.pi / 4])
    assert np.allclose(cb.B[:, 1], steering(3 * math.pi / 4, 2))


def test_unknown_codebook():
    with pytest.raises(ValueError):
        make_codebook(ArrayConfig(), "hadamard")


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_vec_unvec_round_trip(nr, nt, seed):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((nr, nt)) + 1j * rng.standard_normal((nr, nt))
    assert np.array_equal(unvec(vec(Y), nr, nt), Y)
    assert np.array_equal(vec(Y)[:nr], Y[:, 0])


def test_on_grid_path_selects_one_beam():
    arr = ArrayConfig(n_tx=16, n_rx=8)
    cb = make_codebook(arr)
    st_ = state([cb.grid_angles_tx[5]], [cb.grid_angles_rx[2]], [0.6 - 0.8j])
    obs = observe(st_, cb, 0.0)
    mag = np.abs(obs.Y)
    assert np.count_nonzero(mag > 1e-12) == 1
    assert mag[2, 5] == pytest.approx(1.0)
    assert np.array_equal(obs.y, noiseless_observation(st_, cb))
    H = build_channel(st_, arr)
    assert np.allclose(obs.Y, cb.C.conj().T @ H @ cb.B, atol=1e-12)


def test_observe_noise_variance_monte_carlo():
    arr = ArrayConfig(n_tx=16, n_rx=8)
    cb = make_codebook(arr)
    st_ = state([0.9, 2.0], [1.2, 0.4], [1.0, 1j])
    clean = observe(st_, cb, 0.0).Y
    rng = np.random.default_rng(0)
    sigma2 = 2.5
    draws = 10_000
    acc = 0.0
    cov = np.zeros((4, 4), dtype=complex)
    for _ in range(draws):
        d = vec(observe(st_, cb, sigma2, rng).Y - clean)
        acc += np.vdot(d, d).real
        cov += np.outer(d[:4], d[:4].conj())
    assert acc / (draws * arr.n_meas) == pytest.approx(sigma2, rel=0.05)
    cov /= draws
    assert np.allclose(np.diag(cov).real, sigma2, rtol=0.05)
    assert np.max(np.abs(cov - np.diag(np.diag(cov)))) < 0.05 * sigma2


def test_observe_rejects_negative_noise():
    with pytest.raises(ValueError):
        observe(state([1.0], [1.0], [1.0]), make_codebook(ArrayConfig(n_tx=2, n_rx=2)), -1.0)


def test_noise_variance_from_snr():
    assert noise_variance_from_snr(100.0, ArrayConfig()) == pytest.approx(5.12)
    assert noise_variance_from_snr(snr_db_to_linear(20.0), ArrayConfig()) == pytest.approx(5.12, abs=1e-12)
    assert noise_variance_from_snr(1.0, ArrayConfig(n_tx=1, n_rx=1)) == 1.0
    assert noise_variance_from_snr(10.0, ArrayConfig(n_tx=16, n_rx=4)) == pytest.approx(6.4)
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            noise_variance_from_snr(bad, ArrayConfig())


def test_gains_unit_rho_and_unit_gain():
    arr = ArrayConfig()
    R = [120.0, 333.3, 512.25]
    g = synthesize_gains(R, arr, "unit_rho")
    assert all(x.rho == 1.0 and abs(x.alpha) == pytest.approx(math.sqrt(512)) for x in g)
    assert all(x.delta == r for x, r in zip(g, R))
    g1 = synthesize_gains(R, arr, "unit_gain")
    assert all(abs(x.alpha) == pytest.approx(1.0) for x in g1)
    for a, b in zip(g, g1):
        assert np.angle(a.alpha) == pytest.approx(np.angle(b.alpha))


def test_gain_phase_at_one_wavelength():
    arr = ArrayConfig()
    g = synthesize_gains([arr.wavelength], arr, "unit_rho")[0]
    assert g.alpha / math.sqrt(512) == pytest.approx(1.0 + 0j, abs=1e-9)


def test_gains_inverse_range():
    arr = ArrayConfig()
    g = synthesize_gains([100.0, 100.0, 100.0], arr, "inverse_range")
    assert all(x.rho == pytest.approx(1.0) for x in g)
    g = synthesize_gains([100.0, 200.0], arr, "inverse_range")
    assert g[0].rho / g[1].rho == pytest.approx(2.0)
    assert sum(x.rho ** 2 for x in g) == pytest.approx(2.0)


def test_gains_reject_bad_input():
    with pytest.raises(ValueError):
        synthesize_gains([0.0], ArrayConfig())
    with pytest.raises(ValueError):
        synthesize_gains([1.0], ArrayConfig(), "free_space")


def test_angle_state_validation():
    with pytest.raises(ValueError):
        AngleState(np.array([0.1, 0.2, 0.3]))
    with pytest.raises(ValueError):
        AngleState(np.array([0.1, np.nan]))
    with pytest.raises(ValueError):
        AngleState(np.array([0.1, 0.2]), [PathGain(1.0), PathGain(2.0)])


def test_observation_csv(tmp_path):
    cb = make_codebook(ArrayConfig(n_tx=4, n_rx=2))
    obs = observe(state([1.0], [2.0], [1 + 2j]), cb, 0.0)
    write_observation_csv(obs, tmp_path / "y.csv")
    data = np.loadtxt(tmp_path / "y.csv", delimiter=",")
    assert data.shape == (2, 8)
    assert np.array_equal(data[:, 0::2] + 1j * data[:, 1::2], obs.Y)
