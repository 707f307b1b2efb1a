import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rismp.channel import (
    ChannelSet,
    Geometry,
    LargeScaleParams,
    PathlossDomainError,
    direct_channel,
    draw_channels,
    effective_channel,
    exponential_correlation,
    link_statistics,
    pathloss_uma_los_db,
    pathloss_uma_nlos,
    pathloss_uma_nlos_db,
    ris_bs_channel,
    ue_ris_channel,
    ula_response,
    upa_response,
    wrap_angle,
)

LAM = 299_792_458.0 / 2.6e9


def geometry(L=4, shape=(3, 2), n_ue=2, n_bs=2):
    return Geometry(
        bs_positions=np.array([[0.0, 0.0, 25.0], [400.0, 0.0, 25.0]])[:n_bs],
        ue_positions=np.array([[150.0, 90.0, 1.8], [300.0, 60.0, 1.8]])[:n_ue],
        ris_position=np.array([50.0, 86.6, 20.0]),
        bs_antennas=L,
        ris_shape=shape,
        bs_spacing=LAM / 2,
        ris_spacings=(LAM / 2, LAM / 2),
        wavelength=LAM,
        ris_normal_azimuth=np.deg2rad(-58.0),
    )


# -- array responses ---------------------------------------------------------------


def test_ula_broadside():
    np.testing.assert_allclose(ula_response(0.0, 5, LAM / 2, LAM), np.ones(5) / np.sqrt(5))


def test_ula_endfire_half_wavelength():
    np.testing.assert_allclose(ula_response(np.pi / 2, 2, LAM / 2, LAM), np.array([1, -1]) / np.sqrt(2), atol=1e-15)


def test_upa_single_element():
    np.testing.assert_allclose(upa_response(0.3, 1.1, (1, 1), (LAM / 2, LAM / 2), LAM), [1.0])


def test_upa_normal_incidence():
    np.testing.assert_allclose(upa_response(0.7, 0.0, (3, 4), (LAM / 2, LAM / 2), LAM), np.ones(12) / np.sqrt(12))


def test_upa_matches_elementwise_construction():
    phi, theta = 0.4, 0.9
    dx, dy = 0.6 * LAM, 0.45 * LAM
    a = upa_response(phi, theta, (2, 3), (dx, dy), LAM)
    ux, uy = np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi)
    expected = []
    for kx in range(2):
        for ky in range(3):
            expected.append(np.exp(-2j * np.pi / LAM * (kx * dx * ux + ky * dy * uy)) / np.sqrt(6))
    assert a.shape == (6,)
    np.testing.assert_allclose(a, expected, atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(
    st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi),
    st.integers(1, 8), st.integers(1, 8), st.floats(0.1, 2.0),
)
def test_array_responses_unit_norm(phi, theta, kx, ky, spacing):
    assert np.linalg.norm(ula_response(theta, kx, spacing * LAM, LAM)) == pytest.approx(1.0, abs=1e-12)
    a = upa_response(phi, theta, (kx, ky), (spacing * LAM, spacing * LAM), LAM)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -np.pi < w <= np.pi
    assert np.isclose(np.exp(1j * w), np.exp(1j * a))


# -- direct link ------------------------------------------------------------------------


def test_direct_los_limit():
    g = geometry(L=4)
    rng = np.random.default_rng(0)
    beta, aoa, phase = 1e-9, 0.3, 1.2
    h = direct_channel(beta, 1e9, aoa, phase, g, rng)
    expected = np.sqrt(beta) * np.sqrt(4) * np.exp(1j * phase) * ula_response(aoa, 4, g.bs_spacing, LAM)
    assert np.linalg.norm(h - expected) <= 1e-4 * np.linalg.norm(expected)


@pytest.mark.parametrize("kappa", [0.0, 1.0, 10.0])
def test_direct_mean_power(kappa):
    g = geometry(L=4)
    rng = np.random.default_rng(int(kappa) + 1)
    beta = 2.5e-10
    power = np.mean([
        np.linalg.norm(direct_channel(beta, kappa, 0.2, rng.uniform(-np.pi, np.pi), g, rng)) ** 2
        for _ in range(10_000)
    ])
    assert power == pytest.approx(beta * 4, rel=0.03)


def test_direct_correlation_shapes_covariance():
    g = geometry(L=3)
    R = exponential_correlation(3, 0.7)
    w, v = np.linalg.eigh(R)
    root = (v * np.sqrt(w)) @ v.conj().T
    rng = np.random.default_rng(5)
    H = np.array([direct_channel(1.0, 0.0, 0.0, 0.0, g, rng, root) for _ in range(40_000)])
    np.testing.assert_allclose(H.T @ H.conj() / len(H), R, atol=0.03)


def test_exponential_correlation():
    R = exponential_correlation(4, 0.5)
    assert np.allclose(np.diag(R), 1.0)
    assert R[0, 3] == pytest.approx(0.125)
    assert np.linalg.eigvalsh(R)[0] > 0
    np.testing.assert_array_equal(exponential_correlation(3, 0.0), np.eye(3))


# -- RIS links --------------------------------------------------------------------------


def test_ue_ris_single_path():
    g = geometry()
    h = ue_ris_channel(4.0, [1.0], [0.3], [0.5], g)
    np.testing.assert_allclose(h, 2.0 * upa_response(0.3, 0.5, g.ris_shape, g.ris_spacings, LAM))


def test_ue_ris_null_gains():
    g = geometry()
    np.testing.assert_array_equal(ue_ris_channel(1.0, [0, 0, 0], [0.1, 0.2, 0.3], [0.1, 0.2, 0.3], g), 0)


def test_ue_ris_three_paths_term_by_term():
    g = geometry()
    rng = np.random.default_rng(6)
    xi = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    phi, th = rng.uniform(-1, 1, 3), rng.uniform(0, 1.2, 3)
    h = ue_ris_channel(0.5, xi, phi, th, g)
    expected = sum(np.sqrt(0.5) * xi[s] * upa_response(phi[s], th[s], g.ris_shape, g.ris_spacings, LAM) for s in range(3))
    np.testing.assert_allclose(h, expected, atol=1e-14)


def test_ris_bs_single_path_rank_one():
    g = geometry(L=4)
    G = ris_bs_channel(9.0, [1.0], [0.2], [0.4], [0.6], g)
    s = np.linalg.svd(G, compute_uv=False)
    assert s[0] == pytest.approx(3.0)
    assert np.all(s[1:] < 1e-12)


def test_ris_bs_zero_gain():
    g = geometry(L=2)
    np.testing.assert_array_equal(ris_bs_channel(1.0, [0.0], [0.2], [0.4], [0.6], g), 0)


def test_ris_bs_two_paths_term_by_term():
    g = geometry(L=4)
    rho = np.array([0.8 + 0.1j, -0.3j])
    aoa, phi, th = np.array([0.1, 0.3]), np.array([0.2, -0.5]), np.array([0.7, 0.4])
    G = ris_bs_channel(2.0, rho, aoa, phi, th, g)
    expected = sum(
        np.sqrt(2.0) * rho[s] * np.outer(ula_response(aoa[s], 4, g.bs_spacing, LAM),
                                        upa_response(phi[s], th[s], g.ris_shape, g.ris_spacings, LAM).conj())
        for s in range(2)
    )
    np.testing.assert_allclose(G, expected, atol=1e-14)
    assert np.linalg.matrix_rank(G, tol=1e-10) <= 2


# -- effective channel -------------------------------------------------------------------


def random_channels(rng, N=2, M=2, L=3, K=4):
    c = lambda *s: rng.standard_normal(s) + 1j * rng.standard_normal(s)  # noqa: E731
    return ChannelSet(c(N, M, L), c(N, K), c(M, L, K))


def test_effective_without_cascade():
    rng = np.random.default_rng(7)
    ch = random_channels(rng).without_ris()
    phi = np.exp(1j * rng.uniform(-np.pi, np.pi, 4))
    np.testing.assert_array_equal(effective_channel(ch, phi, 1, 0), ch.direct[1, 0])


def test_effective_scalar_cascade():
    rng = np.random.default_rng(8)
    ch = random_channels(rng, K=1)
    ch = ChannelSet(np.zeros_like(ch.direct), ch.ue_ris, ch.ris_bs)
    np.testing.assert_allclose(effective_channel(ch, np.array([1.0]), 0, 1), ch.ris_bs[1][:, 0] * ch.ue_ris[0, 0])


def test_effective_columnwise_expansion():
    rng = np.random.default_rng(9)
    ch = random_channels(rng, K=4)
    phi = np.exp(1j * rng.uniform(-np.pi, np.pi, 4))
    for n in range(2):
        for m in range(2):
            expected = ch.direct[n, m] + sum(phi[k] * ch.ue_ris[n, k] * ch.ris_bs[m][:, k] for k in range(4))
            np.testing.assert_allclose(effective_channel(ch, phi, n, m), expected, atol=1e-12)
            np.testing.assert_allclose(ch.effective(phi)[n, m], expected, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cascade_is_linear_in_phases(seed):
    rng = np.random.default_rng(seed)
    ch = random_channels(rng)
    casc = lambda p: ch.effective(p) - ch.direct  # noqa: E731
    p0, p1, p2 = (np.exp(1j * rng.uniform(-np.pi, np.pi, 4)) for _ in range(3))
    np.testing.assert_allclose(casc(p1 + p2 - p0) + casc(p0), casc(p1) + casc(p2), atol=1e-10)


# -- pathloss -------------------------------------------------------------------------------


def test_nlos_pathloss_hand_value():
    pl = float(pathloss_uma_nlos_db(100.0, 2.6, h_ut=1.8))
    assert pl == pytest.approx(13.54 + 39.08 * 2 + 20 * np.log10(2.6) - 0.18, abs=1e-9)
    assert pl == pytest.approx(99.82, abs=0.01)


def test_nlos_pathloss_slope():
    d = np.array([60.0, 120.0, 400.0, 800.0])
    pl = pathloss_uma_nlos_db(d, 2.6, h_ut=1.8)
    assert pl[1] - pl[0] == pytest.approx(39.08 * np.log10(2), abs=1e-9)
    assert pl[3] - pl[2] == pytest.approx(11.77, abs=0.01)


def test_nlos_lower_bounded_by_los():
    d = np.linspace(10, 5000, 300)
    assert np.all(pathloss_uma_nlos_db(d, 2.6) >= pathloss_uma_los_db(d, 2.6) - 1e-12)


def test_nlos_gain_decreasing():
    d = np.linspace(10, 5000, 500)
    assert np.all(np.diff(pathloss_uma_nlos(d, 2.6, 1.8)) < 0)


def test_los_breakpoint_jump():
    # the two branches meet up to 9 log10(d_bp^2 / (d_bp^2 + (h_bs - h_ut)^2)), a small step
    h_bs, h_ut, fc = 25.0, 1.5, 2.6
    d_bp = 4 * (h_bs - 1) * (h_ut - 1) * fc * 1e9 / 299_792_458.0
    below = pathloss_uma_los_db(d_bp * (1 - 1e-12), fc, h_bs, h_ut)
    above = pathloss_uma_los_db(d_bp * (1 + 1e-12), fc, h_bs, h_ut)
    expected = 9 * np.log10(d_bp**2 / (d_bp**2 + (h_bs - h_ut) ** 2))
    assert float(above - below) == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("d,fc", [(5.0, 2.6), (6000.0, 2.6), (100.0, 0.2)])
def test_pathloss_domain(d, fc):
    with pytest.raises(PathlossDomainError, match="pathloss model domain"):
        pathloss_uma_nlos(d, fc)


# -- large-scale statistics and full draws ----------------------------------------------------


def test_link_statistics_invariants():
    g = geometry()
    stats = link_statistics(g, LargeScaleParams(correlation=0.3))
    assert np.all(stats.beta_direct > 0) and np.all(stats.beta_ue_ris > 0) and np.all(stats.beta_ris_bs > 0)
    assert np.allclose(np.diag(stats.bs_correlation), 1.0, atol=1e-12)
    assert np.linalg.eigvalsh(stats.bs_correlation)[0] >= 0


def test_shadowing_shifts_direct_gain():
    g = geometry()
    base = link_statistics(g, LargeScaleParams())
    shadow = np.array([[3.0, 0.0], [0.0, -3.0]])
    s = link_statistics(g, LargeScaleParams(), shadow)
    np.testing.assert_allclose(s.beta_direct, base.beta_direct * 10 ** (-shadow / 10))


def test_ris_link_scale_zero_removes_cascade():
    g = geometry()
    params = LargeScaleParams(ris_bs_scale=0.0)
    stats = link_statistics(g, params)
    ch = draw_channels(g, stats, params, np.random.default_rng(0))
    assert np.all(ch.ris_bs == 0)


def test_draw_channels_shapes_and_determinism():
    g = geometry(L=4, shape=(3, 2))
    params = LargeScaleParams()
    stats = link_statistics(g, params)
    a = draw_channels(g, stats, params, np.random.default_rng(11))
    b = draw_channels(g, stats, params, np.random.default_rng(11))
    assert a.shape == (2, 2, 4, 6)
    assert a.ue_ris.shape == (2, 6) and a.ris_bs.shape == (2, 4, 6)
    np.testing.assert_array_equal(a.direct, b.direct)
    np.testing.assert_array_equal(a.ris_bs, b.ris_bs)
    assert np.all(np.isfinite(a.direct)) and np.all(np.isfinite(a.ue_ris))


def test_blocks_independent():
    g = geometry(L=4)
    params = LargeScaleParams()
    stats = link_statistics(g, params)
    draws = np.array([
        draw_channels(g, stats, params, np.random.default_rng(np.random.SeedSequence([3, t]))).direct[0, 0]
        for t in range(4000)
    ])
    x, y = draws[:-1].ravel(), draws[1:].ravel()
    corr = abs(np.vdot(x, y)) / (np.linalg.norm(x) * np.linalg.norm(y))
    assert corr < 0.1


def test_ris_gain_accounting():
    # K * element gain * pattern * pathloss for the UE-RIS link, so its mean power is beta_r
    g = geometry(shape=(4, 4))
    params = LargeScaleParams(ris_element_gain_db=0.0)
    stats = link_statistics(g, params)
    power = np.mean([
        np.linalg.norm(draw_channels(g, stats, params, np.random.default_rng(t)).ue_ris[0]) ** 2 for t in range(3000)
    ])
    assert power == pytest.approx(stats.beta_ue_ris[0], rel=0.05)
