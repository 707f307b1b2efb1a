"""Block-fading channel generation: direct Rician UE-BS links, finite-path
UE-RIS and RIS-BS links, and the RIS-cascaded effective channel."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class PathlossDomainError(ValueError):
    pass


@dataclass
class Geometry:
    bs_positions: np.ndarray  # (M, 3) metres
    ue_positions: np.ndarray  # (N, 3) metres
    ris_position: np.ndarray  # (3,) metres
    bs_antennas: int
    ris_shape: tuple[int, int]
    bs_spacing: float
    ris_spacings: tuple[float, float]
    wavelength: float
    ris_normal_azimuth: float = 0.0  # radians, RIS panel is vertical

    def __post_init__(self):
        self.bs_positions = np.atleast_2d(np.asarray(self.bs_positions, dtype=float))
        self.ue_positions = np.atleast_2d(np.asarray(self.ue_positions, dtype=float))
        self.ris_position = np.asarray(self.ris_position, dtype=float)
        if self.bs_antennas < 1:
            raise ValueError("bs_antennas must be >= 1")
        if min(self.ris_shape) < 1:
            raise ValueError("ris_shape entries must be >= 1")
        if self.bs_spacing <= 0 or min(self.ris_spacings) <= 0 or self.wavelength <= 0:
            raise ValueError("spacings and wavelength must be > 0")

    @property
    def n_ue(self) -> int:
        return self.ue_positions.shape[0]

    @property
    def n_bs(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def n_ris(self) -> int:
        return self.ris_shape[0] * self.ris_shape[1]

    def ris_frame(self) -> np.ndarray:
        """Rows: in-plane x axis (horizontal), in-plane y axis (vertical), normal."""
        a = self.ris_normal_azimuth
        return np.array([[-np.sin(a), np.cos(a), 0.0], [0.0, 0.0, 1.0], [np.cos(a), np.sin(a), 0.0]])

    def bs_axes(self) -> np.ndarray:
        """ULA axis per BS: horizontal, perpendicular to the direction to the BS centroid."""
        centre = self.bs_positions.mean(axis=0)
        axes = np.zeros_like(self.bs_positions)
        for m, pos in enumerate(self.bs_positions):
            v = centre[:2] - pos[:2]
            if np.linalg.norm(v) < 1e-9:
                v = np.array([1.0, 0.0])
            v = v / np.linalg.norm(v)
            axes[m, :2] = (-v[1], v[0])
        return axes


@dataclass
class LinkStatistics:
    beta_direct: np.ndarray  # (N, M)
    beta_ue_ris: np.ndarray  # (N,)
    beta_ris_bs: np.ndarray  # (M,)
    kappa_direct: np.ndarray  # (N, M)
    kappa_ue_ris: float
    kappa_ris_bs: float
    bs_correlation: np.ndarray  # (L, L), shared by all links
    paths_ue_ris: int = 3
    paths_ris_bs: int = 3

    def __post_init__(self):
        self._corr_sqrt = None

    @property
    def correlation_sqrt(self) -> np.ndarray:
        if self._corr_sqrt is None:
            w, v = np.linalg.eigh(self.bs_correlation)
            self._corr_sqrt = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
        return self._corr_sqrt


@dataclass
class PathComponents:
    """Per-block small-scale parameters. Angles in radians."""

    xi: np.ndarray  # (N, S_r) UE-RIS path gains
    ue_ris_phi: np.ndarray  # (N, S_r) azimuth at the RIS
    ue_ris_theta: np.ndarray  # (N, S_r) angle off the RIS normal
    rho: np.ndarray  # (M, S_G) RIS-BS path gains
    ris_bs_aoa: np.ndarray  # (M, S_G) AoA at the BS
    ris_bs_phi: np.ndarray  # (M, S_G) AoD azimuth at the RIS
    ris_bs_theta: np.ndarray  # (M, S_G) AoD off-normal angle at the RIS
    los_phase: np.ndarray  # (N, M)
    direct_aoa: np.ndarray  # (N, M)


@dataclass
class ChannelSet:
    direct: np.ndarray  # (N, M, L)
    ue_ris: np.ndarray  # (N, K)
    ris_bs: np.ndarray  # (M, L, K)
    _cascade: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        N, M, L = self.direct.shape
        return N, M, L, self.ue_ris.shape[1]

    def cascade(self) -> np.ndarray:
        """(N, M, L, K) matrices G_m diag(h_r,n); the cascade term is ``cascade @ phi``."""
        if self._cascade is None:
            self._cascade = self.ris_bs[None, :, :, :] * self.ue_ris[:, None, None, :]
        return self._cascade

    def effective(self, phi: np.ndarray) -> np.ndarray:
        """(N, M, L) effective channels for all pairs."""
        return self.direct + self.cascade() @ phi

    def without_ris(self) -> "ChannelSet":
        return ChannelSet(self.direct, np.zeros_like(self.ue_ris), np.zeros_like(self.ris_bs))


def wrap_angle(a):
    """Map to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)


def ula_response(theta: float, L: int, d: float, wavelength: float) -> np.ndarray:
    k = np.arange(L)
    return np.exp(-2j * np.pi * d / wavelength * k * np.sin(theta)) / np.sqrt(L)


def upa_response(phi, theta, shape, spacings, wavelength) -> np.ndarray:
    kx, ky = shape
    dx, dy = spacings
    ux = np.sin(theta) * np.cos(phi)
    uy = np.sin(theta) * np.sin(phi)
    ax = np.exp(-2j * np.pi * dx / wavelength * np.arange(kx) * ux) / np.sqrt(kx)
    ay = np.exp(-2j * np.pi * dy / wavelength * np.arange(ky) * uy) / np.sqrt(ky)
    return np.kron(ax, ay)


def direct_channel(
    beta: float,
    kappa: float,
    aoa: float,
    los_phase: float,
    geometry: Geometry,
    rng: np.random.Generator,
    correlation_sqrt: np.ndarray | None = None,
) -> np.ndarray:
    """Rician direct link. The LOS term is scaled by sqrt(L) so that both
    components carry power L and E||h||^2 = beta * L for any kappa."""
    L = geometry.bs_antennas
    eta = np.sqrt(kappa / (kappa + 1.0))
    eta_bar = np.sqrt(1.0 / (kappa + 1.0))
    h_los = np.sqrt(L) * np.exp(1j * los_phase) * ula_response(aoa, L, geometry.bs_spacing, geometry.wavelength)
    g = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / np.sqrt(2.0)
    h_nlos = g if correlation_sqrt is None else correlation_sqrt @ g
    return np.sqrt(beta) * (eta * h_los + eta_bar * h_nlos)


def ue_ris_channel(beta: float, xi, phi, theta, geometry: Geometry) -> np.ndarray:
    h = np.zeros(geometry.n_ris, dtype=complex)
    for g, ph, th in zip(xi, phi, theta):
        h += g * upa_response(ph, th, geometry.ris_shape, geometry.ris_spacings, geometry.wavelength)
    return np.sqrt(beta) * h


def ris_bs_channel(beta: float, rho, aoa, phi_aod, theta_aod, geometry: Geometry) -> np.ndarray:
    L, K = geometry.bs_antennas, geometry.n_ris
    G = np.zeros((L, K), dtype=complex)
    for g, a, ph, th in zip(rho, aoa, phi_aod, theta_aod):
        a_bs = ula_response(a, L, geometry.bs_spacing, geometry.wavelength)
        a_ris = upa_response(ph, th, geometry.ris_shape, geometry.ris_spacings, geometry.wavelength)
        G += g * np.outer(a_bs, a_ris.conj())
    return np.sqrt(beta) * G


def effective_channel(ch: ChannelSet, phi: np.ndarray, n: int, m: int) -> np.ndarray:
    return ch.direct[n, m] + ch.ris_bs[m] @ (phi * ch.ue_ris[n])


# -- large-scale models ------------------------------------------------------


def _check_domain(d3d, fc_ghz):
    d3d = np.asarray(d3d, dtype=float)
    if np.any(d3d < 10.0) or np.any(d3d > 5000.0):
        raise PathlossDomainError(f"pathloss model domain: distance {d3d} m outside [10, 5000] m")
    if not 0.5 < fc_ghz < 100.0:
        raise PathlossDomainError(f"pathloss model domain: carrier {fc_ghz} GHz outside (0.5, 100)")
    return d3d


def pathloss_uma_los_db(d3d, fc_ghz: float, h_bs: float = 25.0, h_ut: float = 1.5):
    """UMa line-of-sight pathloss in dB (TR 38.901 PL1/PL2 with breakpoint)."""
    d3d = _check_domain(d3d, fc_ghz)
    d_bp = 4.0 * (h_bs - 1.0) * (h_ut - 1.0) * fc_ghz * 1e9 / SPEED_OF_LIGHT
    pl1 = 28.0 + 22.0 * np.log10(d3d) + 20.0 * np.log10(fc_ghz)
    pl2 = 28.0 + 40.0 * np.log10(d3d) + 20.0 * np.log10(fc_ghz) - 9.0 * np.log10(d_bp**2 + (h_bs - h_ut) ** 2)
    return np.where(d3d <= d_bp, pl1, pl2)


def pathloss_uma_nlos_db(d3d, fc_ghz: float, h_ut: float = 1.5, h_bs: float = 25.0):
    d3d = _check_domain(d3d, fc_ghz)
    pl_nlos = 13.54 + 39.08 * np.log10(d3d) + 20.0 * np.log10(fc_ghz) - 0.6 * (h_ut - 1.5)
    return np.maximum(pl_nlos, pathloss_uma_los_db(d3d, fc_ghz, h_bs, h_ut))


def pathloss_uma_nlos(d3d, fc_ghz: float, h_ut: float = 1.5, h_bs: float = 25.0):
    """Linear power gain of the UMa NLoS model (lower-bounded by UMa LoS)."""
    return 10.0 ** (-pathloss_uma_nlos_db(d3d, fc_ghz, h_ut, h_bs) / 10.0)


def exponential_correlation(L: int, r: float) -> np.ndarray:
    idx = np.arange(L)
    return np.asarray(r, dtype=complex) ** np.abs(idx[:, None] - idx[None, :])


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def ris_angles(geometry: Geometry, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(azimuth, off-normal angle) of ``points`` in the RIS frame."""
    frame = geometry.ris_frame()
    u = _unit(np.atleast_2d(points) - geometry.ris_position)
    local = u @ frame.T
    theta = np.arccos(np.clip(local[:, 2], -1.0, 1.0))
    phi = np.arctan2(local[:, 1], local[:, 0])
    return wrap_angle(phi), theta


def bs_aoa(geometry: Geometry, m: int, points: np.ndarray) -> np.ndarray:
    axis = geometry.bs_axes()[m]
    u = _unit(np.atleast_2d(points) - geometry.bs_positions[m])
    return np.arcsin(np.clip(u @ axis, -1.0, 1.0))


@dataclass
class LargeScaleParams:
    fc_ghz: float = 2.6
    kappa_direct: float = 0.0
    kappa_ris: float = 10.0
    paths_ue_ris: int = 3
    paths_ris_bs: int = 3
    angle_spread_deg: float = 10.0
    correlation: float = 0.0
    ris_element_gain_db: float | None = None  # None: (4 pi A / lambda^2)^2 from the element area
    ris_front_to_back_db: float = 30.0
    ris_bs_scale: float = 1.0  # multiplies the RIS-BS gain; 0 switches the cascade off


def ris_element_gain(geometry: Geometry, params: LargeScaleParams) -> float:
    if params.ris_element_gain_db is not None:
        return 10.0 ** (params.ris_element_gain_db / 10.0)
    area = geometry.ris_spacings[0] * geometry.ris_spacings[1]
    return (4.0 * np.pi * area / geometry.wavelength**2) ** 2


def _ris_pattern(theta, params: LargeScaleParams):
    floor = 10.0 ** (-params.ris_front_to_back_db / 10.0)
    return np.maximum(np.cos(theta), floor)


def link_statistics(
    geometry: Geometry,
    params: LargeScaleParams,
    shadowing_db: np.ndarray | None = None,
) -> LinkStatistics:
    """Large-scale gains for the current UE positions.

    Array-response channels are built from unit-norm steering vectors, so
    the RIS-side gains carry the array sizes: per-element power of the
    UE-RIS link is beta_ue_ris / K and of the RIS-BS link beta_ris_bs / (L K).
    """
    N, M, L, K = geometry.n_ue, geometry.n_bs, geometry.bs_antennas, geometry.n_ris
    ue, bs, ris = geometry.ue_positions, geometry.bs_positions, geometry.ris_position
    d_direct = np.linalg.norm(ue[:, None, :] - bs[None, :, :], axis=-1)
    pl_direct = np.empty((N, M))
    for m in range(M):
        pl_direct[:, m] = pathloss_uma_nlos_db(d_direct[:, m], params.fc_ghz, h_ut=ue[:, 2], h_bs=bs[m, 2])
    if shadowing_db is not None:
        pl_direct = pl_direct + shadowing_db
    beta_direct = 10.0 ** (-pl_direct / 10.0)

    _, th_ue = ris_angles(geometry, ue)
    d_ue_ris = np.linalg.norm(ue - ris, axis=-1)
    pl_ue_ris = pathloss_uma_los_db(d_ue_ris, params.fc_ghz, h_bs=ris[2], h_ut=ue[:, 2])
    beta_ue_ris = K * ris_element_gain(geometry, params) * _ris_pattern(th_ue, params) * 10.0 ** (-pl_ue_ris / 10.0)

    _, th_bs = ris_angles(geometry, bs)
    d_ris_bs = np.linalg.norm(bs - ris, axis=-1)
    pl_ris_bs = np.array(
        [pathloss_uma_los_db(d_ris_bs[m], params.fc_ghz, h_bs=max(bs[m, 2], ris[2]), h_ut=min(bs[m, 2], ris[2])) for m in range(M)]
    )
    beta_ris_bs = params.ris_bs_scale * L * K * _ris_pattern(th_bs, params) * 10.0 ** (-pl_ris_bs / 10.0)

    return LinkStatistics(
        beta_direct=beta_direct,
        beta_ue_ris=beta_ue_ris,
        beta_ris_bs=beta_ris_bs,
        kappa_direct=np.full((N, M), float(params.kappa_direct)),
        kappa_ue_ris=float(params.kappa_ris),
        kappa_ris_bs=float(params.kappa_ris),
        bs_correlation=exponential_correlation(L, params.correlation),
        paths_ue_ris=params.paths_ue_ris,
        paths_ris_bs=params.paths_ris_bs,
    )


def _path_gains(kappa: float, shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Dominant path carries kappa/(kappa+1) deterministically (random phase);
    the scattered power 1/(kappa+1) is spread as CN(0, 1/S) over all S paths."""
    S = shape[1]
    scattered = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5 / S)
    gains = np.sqrt(1.0 / (kappa + 1.0)) * scattered
    psi = rng.uniform(-np.pi, np.pi, shape[0])
    gains[:, 0] += np.sqrt(kappa / (kappa + 1.0)) * np.exp(1j * psi)
    return gains


def draw_path_components(
    geometry: Geometry, stats: LinkStatistics, params: LargeScaleParams, rng: np.random.Generator
) -> PathComponents:
    N, M = geometry.n_ue, geometry.n_bs
    Sr, Sg = stats.paths_ue_ris, stats.paths_ris_bs
    spread = np.deg2rad(params.angle_spread_deg)

    def perturb(base, S):
        out = np.repeat(np.asarray(base, dtype=float)[:, None], S, axis=1)
        out[:, 1:] += rng.uniform(-spread, spread, (out.shape[0], S - 1))
        return out

    phi_ue, th_ue = ris_angles(geometry, geometry.ue_positions)
    phi_bs, th_bs = ris_angles(geometry, geometry.bs_positions)
    aoa_ris = np.array([bs_aoa(geometry, m, geometry.ris_position)[0] for m in range(M)])
    direct_aoa = np.stack([bs_aoa(geometry, m, geometry.ue_positions) for m in range(M)], axis=1)

    return PathComponents(
        xi=_path_gains(stats.kappa_ue_ris, (N, Sr), rng),
        ue_ris_phi=wrap_angle(perturb(phi_ue, Sr)),
        ue_ris_theta=perturb(th_ue, Sr),
        rho=_path_gains(stats.kappa_ris_bs, (M, Sg), rng),
        ris_bs_aoa=wrap_angle(perturb(aoa_ris, Sg)),
        ris_bs_phi=wrap_angle(perturb(phi_bs, Sg)),
        ris_bs_theta=perturb(th_bs, Sg),
        los_phase=wrap_angle(rng.uniform(-np.pi, np.pi, (N, M))),
        direct_aoa=direct_aoa,
    )


def draw_channels(
    geometry: Geometry, stats: LinkStatistics, params: LargeScaleParams, rng: np.random.Generator
) -> ChannelSet:
    comps = draw_path_components(geometry, stats, params, rng)
    N, M, L = geometry.n_ue, geometry.n_bs, geometry.bs_antennas
    corr = None if np.allclose(stats.bs_correlation, np.eye(L)) else stats.correlation_sqrt
    direct = np.empty((N, M, L), dtype=complex)
    for n in range(N):
        for m in range(M):
            direct[n, m] = direct_channel(
                stats.beta_direct[n, m], stats.kappa_direct[n, m], comps.direct_aoa[n, m],
                comps.los_phase[n, m], geometry, rng, corr,
            )
    ue_ris = np.stack([
        ue_ris_channel(stats.beta_ue_ris[n], comps.xi[n], comps.ue_ris_phi[n], comps.ue_ris_theta[n], geometry)
        for n in range(N)
    ])
    ris_bs = np.stack([
        ris_bs_channel(stats.beta_ris_bs[m], comps.rho[m], comps.ris_bs_aoa[m], comps.ris_bs_phi[m],
                       comps.ris_bs_theta[m], geometry)
        for m in range(M)
    ])
    return ChannelSet(direct, ue_ris, ris_bs)
