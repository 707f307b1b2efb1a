import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from rismp.phy import (
    dbm_to_watt,
    link_gains,
    mmse_combiner,
    mmse_combiners,
    noise_power,
    rate,
    sinr,
    sinr_all,
)


def cgauss(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def eig_oracle(H_m, p_m, noise, n):
    """Largest generalized eigenvalue of (p_n h h^H, interference + noise)."""
    L = H_m.shape[1]
    A = p_m[n] * np.outer(H_m[n], H_m[n].conj())
    B = noise * np.eye(L, dtype=complex)
    for j in range(H_m.shape[0]):
        if j != n:
            B += p_m[j] * np.outer(H_m[j], H_m[j].conj())
    return float(scipy.linalg.eigh(A, B, eigvals_only=True)[-1])


def test_noise_power_units():
    # -174 dBm/Hz over 1 Hz is 10^-20.4 W
    assert noise_power(-174.0, 1.0) == pytest.approx(10 ** -20.4)
    assert noise_power(-174.0, 1e6, 5.0) == pytest.approx(10 ** -20.4 * 1e6 * 10 ** 0.5)


def test_dbm_to_watt():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(23.0) == pytest.approx(0.19952623)


def test_single_user_matched_filter():
    rng = np.random.default_rng(0)
    h = cgauss(rng, 1, 4)
    w = mmse_combiner(h, np.array([1.0]), 0.1, 0)
    assert abs(abs(np.vdot(w, h[0])) - np.linalg.norm(h[0])) < 1e-12
    assert np.linalg.norm(w) == pytest.approx(1.0)
    assert sinr(w, h, np.array([1.0]), 0.1, 0) == pytest.approx(np.linalg.norm(h[0]) ** 2 / 0.1)


def test_orthogonal_users_do_not_interfere():
    H = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=complex)
    p = np.array([2.0, 3.0])
    assert sinr(mmse_combiner(H, p, 0.5, 0), H, p, 0.5, 0) == pytest.approx(4.0)


def test_mmse_matches_generalized_eigenvalue():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        N, L = int(rng.integers(1, 5)), int(rng.integers(1, 7))
        H = cgauss(rng, N, L)
        p = rng.uniform(0.05, 2.0, N)
        noise = float(rng.uniform(0.01, 1.0))
        n = int(rng.integers(N))
        got = sinr(mmse_combiner(H, p, noise, n), H, p, noise, n)
        assert got == pytest.approx(eig_oracle(H, p, noise, n), rel=1e-8)


def test_mmse_three_users_four_antennas():
    rng = np.random.default_rng(2)
    H = cgauss(rng, 3, 4)
    p = np.array([0.2, 0.5, 1.0])
    for n in range(3):
        got = sinr(mmse_combiner(H, p, 0.1, n), H, p, 0.1, n)
        assert got == pytest.approx(eig_oracle(H, p, 0.1, n), rel=1e-8)


def test_mmse_dominates_random_combiners():
    rng = np.random.default_rng(3)
    H = cgauss(rng, 3, 4)
    p = np.array([0.3, 1.0, 0.7])
    best = sinr(mmse_combiner(H, p, 0.2, 1), H, p, 0.2, 1)
    for _ in range(100):
        w = cgauss(rng, 4)
        assert sinr(w, H, p, 0.2, 1) <= best * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_sinr_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    H = cgauss(rng, 3, 3)
    p = rng.uniform(0.1, 1.0, 3)
    w = cgauss(rng, 3)
    assert sinr(scale * w, H, p, 0.3, 0) == pytest.approx(sinr(w, H, p, 0.3, 0), rel=1e-10)


def test_batched_combiners_match_single():
    rng = np.random.default_rng(4)
    N, M, L = 3, 2, 4
    H = cgauss(rng, N, M, L)
    p = rng.uniform(0.1, 1.0, (N, M))
    W = mmse_combiners(H, p, 0.05)
    assert W.shape == (M, N, L)
    G = sinr_all(W, H, p, 0.05)
    for m in range(M):
        for n in range(N):
            w = mmse_combiner(H[:, m], p[:, m], 0.05, n)
            assert abs(abs(np.vdot(W[m, n], w)) - 1.0) < 1e-10
            assert G[n, m] == pytest.approx(sinr(W[m, n], H[:, m], p[:, m], 0.05, n), rel=1e-10)


def test_link_gains_definition():
    rng = np.random.default_rng(5)
    H = cgauss(rng, 2, 2, 3)
    W = cgauss(rng, 2, 2, 3)
    a = link_gains(W, H)
    for m in range(2):
        for n in range(2):
            for j in range(2):
                assert a[m, n, j] == pytest.approx(abs(np.vdot(W[m, n], H[j, m])) ** 2)


def test_zero_power_gives_zero_sinr():
    rng = np.random.default_rng(6)
    H = cgauss(rng, 2, 1, 2)
    p = np.array([[0.0], [1.0]])
    W = mmse_combiners(H, p, 0.1)
    assert sinr_all(W, H, p, 0.1)[0, 0] == 0.0


def test_rate_examples():
    assert rate(0.0, 1e6) == 0.0
    assert rate(1.0, 1e6) == pytest.approx(1e6)
    assert rate(3.0, 2e6) == pytest.approx(4e6)
    np.testing.assert_allclose(rate(np.array([0.0, 1.0, 3.0]), 1.0), [0.0, 1.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_rate_monotone(g1, g2):
    lo, hi = sorted((g1, g2))
    assert rate(lo, 1e6) <= rate(hi, 1e6)
