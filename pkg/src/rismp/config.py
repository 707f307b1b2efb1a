"""Scenario configuration: dataclasses, flat ``dotted.key = value`` text format,
validation and stable hashing.

Defaults reproduce the 3-BS / 3-UE scenario (10x10 RIS near BS 1, 2.6 GHz,
100 MHz, 23 dBm, 50 ms blocks).
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .channel import SPEED_OF_LIGHT, Geometry, LargeScaleParams
from .optimizer import AoSettings
from .traffic import TrafficType

SCHEMES = ("mp_ris", "mp", "ps", "sp")

Vec3 = tuple[float, float, float]


class ConfigError(ValueError):
    """Validation or parse failure; ``key`` and ``line`` locate the problem."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        super().__init__(message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class SimSettings:
    blocks: int = 10_000
    block_ms: float = 50.0
    seed: int = 2026
    schemes: tuple[str, ...] = SCHEMES
    workers: int = 1
    ue_speed: float = 1.0  # m/s
    heading_blocks: int = 100
    area: float = 500.0  # m, side of the square the UEs move in
    evolved_backlog: bool = False


@dataclass(frozen=True)
class RadioSettings:
    fc_ghz: float = 2.6
    bandwidth_mhz: float = 100.0
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 5.0
    ptot_dbm: float = 23.0


@dataclass(frozen=True)
class BsSettings:
    positions: tuple[Vec3, ...] = ((0.0, 0.0, 25.0), (433.0, 0.0, 25.0), (216.5, 375.0, 25.0))
    antennas: int = 1
    spacing_wl: float = 0.5
    correlation: float = 0.0


@dataclass(frozen=True)
class UeSettings:
    positions: tuple[Vec3, ...] = ((151.6, 93.8, 1.8), (368.1, 56.3, 1.8), (66.5, 318.8, 1.8))


@dataclass(frozen=True)
class RisSettings:
    position: Vec3 = (50.0, 86.6, 20.0)
    kx: int = 10
    ky: int = 10
    spacing_wl: float = 0.5
    normal_azimuth_deg: float = -58.0
    element_gain_db: float | None = 0.0  # None: aperture gain (4 pi A / lambda^2)^2
    front_to_back_db: float = 30.0
    bs_link_scale: float = 1.0  # scales the RIS-BS gain; 0 disables the surface


@dataclass(frozen=True)
class ChannelSettings:
    kappa_direct: float = 0.0
    kappa_ris: float = 10.0
    paths_ue_ris: int = 3
    paths_ris_bs: int = 3
    angle_spread_deg: float = 10.0
    shadowing_db: float = 6.0
    decorrelation_m: float = 50.0


@dataclass(frozen=True)
class TrafficSettings:
    packet_bytes: float
    arrival_pps: float
    budget_s: float
    backhaul_mbps: tuple[tuple[float, float], ...]
    queue_mean: float | None = None  # packets per block

    def to_type(self) -> TrafficType:
        return TrafficType(
            packet_bits=8.0 * self.packet_bytes,
            arrival_pps=self.arrival_pps,
            budget_s=self.budget_s,
            backhaul_bps=tuple((lo * 1e6, hi * 1e6) for lo, hi in self.backhaul_mbps),
            queue_mean=self.queue_mean,
        )


DEFAULT_TRAFFIC = (
    TrafficSettings(10_000, 50.0, 0.9, ((100.0, 150.0), (110.0, 140.0), (105.0, 130.0))),
    TrafficSettings(20_000, 10.0, 1.0, ((180.0, 220.0), (190.0, 200.0), (170.0, 210.0))),
)


@dataclass(frozen=True)
class OptSettings:
    outer_cap: int = 8
    inner_cap: int = 20
    eps_ao: float = 1e-3
    eps_sca: float = 1e-3
    randomization_draws: int = 50
    sdp_method: str = "lowrank"

    def to_ao(self) -> AoSettings:
        return AoSettings(
            outer_cap=self.outer_cap, inner_cap=self.inner_cap, eps_ao=self.eps_ao, eps_sca=self.eps_sca,
            randomization_draws=self.randomization_draws, sdp_method=self.sdp_method,
        )


@dataclass(frozen=True)
class ScenarioConfig:
    sim: SimSettings = field(default_factory=SimSettings)
    radio: RadioSettings = field(default_factory=RadioSettings)
    bs: BsSettings = field(default_factory=BsSettings)
    ue: UeSettings = field(default_factory=UeSettings)
    ris: RisSettings = field(default_factory=RisSettings)
    channel: ChannelSettings = field(default_factory=ChannelSettings)
    traffic: tuple[TrafficSettings, ...] = DEFAULT_TRAFFIC
    opt: OptSettings = field(default_factory=OptSettings)

    # -- derived quantities -------------------------------------------------
    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / (self.radio.fc_ghz * 1e9)

    @property
    def n_ue(self) -> int:
        return len(self.ue.positions)

    @property
    def n_bs(self) -> int:
        return len(self.bs.positions)

    @property
    def block_s(self) -> float:
        return self.sim.block_ms * 1e-3

    @property
    def bandwidth_per_bs(self) -> float:
        return self.radio.bandwidth_mhz * 1e6 / self.n_bs

    def geometry(self, ue_positions=None) -> Geometry:
        lam = self.wavelength
        return Geometry(
            bs_positions=np.array(self.bs.positions),
            ue_positions=np.array(self.ue.positions if ue_positions is None else ue_positions),
            ris_position=np.array(self.ris.position),
            bs_antennas=self.bs.antennas,
            ris_shape=(self.ris.kx, self.ris.ky),
            bs_spacing=self.bs.spacing_wl * lam,
            ris_spacings=(self.ris.spacing_wl * lam, self.ris.spacing_wl * lam),
            wavelength=lam,
            ris_normal_azimuth=np.deg2rad(self.ris.normal_azimuth_deg),
        )

    def large_scale(self) -> LargeScaleParams:
        c = self.channel
        return LargeScaleParams(
            fc_ghz=self.radio.fc_ghz, kappa_direct=c.kappa_direct, kappa_ris=c.kappa_ris,
            paths_ue_ris=c.paths_ue_ris, paths_ris_bs=c.paths_ris_bs, angle_spread_deg=c.angle_spread_deg,
            correlation=self.bs.correlation, ris_element_gain_db=self.ris.element_gain_db,
            ris_front_to_back_db=self.ris.front_to_back_db, ris_bs_scale=self.ris.bs_link_scale,
        )

    def traffic_types(self) -> tuple[TrafficType, ...]:
        return tuple(t.to_type() for t in self.traffic)


# -- flat key/value format ------------------------------------------------------

_SECTIONS = ("sim", "radio", "bs", "ue", "ris", "channel", "opt")
_TRAFFIC_KEY = re.compile(r"^traffic\.t(\d+)\.(\w+)$")


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(", ".join(_fmt(x) for x in item) for item in value)
        return ", ".join(_fmt(x) for x in value)
    raise TypeError(f"cannot serialize {value!r}")


def serialize(config: ScenarioConfig) -> str:
    lines = []
    for section in _SECTIONS:
        obj = getattr(config, section)
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {_fmt(getattr(obj, f.name))}")
    for i, t in enumerate(config.traffic, start=1):
        for f in fields(t):
            lines.append(f"traffic.t{i}.{f.name} = {_fmt(getattr(t, f.name))}")
    return "\n".join(lines) + "\n"


def config_hash(config: ScenarioConfig) -> str:
    return hashlib.sha256(serialize(config).encode("utf-8")).hexdigest()


def _parse_value(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if raw.lower() == "none":
            return None
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None:
            return float(raw)
        if isinstance(default, str):
            return raw
        if isinstance(default, tuple):
            if default and isinstance(default[0], tuple):
                return tuple(tuple(float(x) for x in item.split(",")) for item in raw.split(";") if item.strip())
            if default and isinstance(default[0], str):
                return tuple(x.strip() for x in raw.split(",") if x.strip())
            return tuple(float(x) for x in raw.split(","))
    except ValueError:
        raise ConfigError(f"{key}: cannot parse value {raw!r}", key=key) from None
    raise ConfigError(f"{key}: unsupported value type", key=key)


def parse_pairs(text: str) -> list[tuple[str, str, int]]:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}", line=lineno)
        key, value = stripped.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key", line=lineno)
        pairs.append((key, value.strip(), lineno))
    return pairs


_TRAFFIC_FIELDS = {f.name for f in fields(TrafficSettings)}


def apply_pairs(config: ScenarioConfig, pairs) -> ScenarioConfig:
    sections = {s: {} for s in _SECTIONS}
    traffic_updates: dict[int, dict] = {}
    for key, raw, lineno in pairs:
        m = _TRAFFIC_KEY.match(key)
        if m:
            idx, name = int(m.group(1)), m.group(2)
            if name not in _TRAFFIC_FIELDS or idx < 1:
                raise ConfigError(f"unknown key {key!r}", key=key, line=lineno)
            if idx <= len(config.traffic):
                default = getattr(config.traffic[idx - 1], name)
            else:
                default = getattr(DEFAULT_TRAFFIC[0], name)
            if name == "queue_mean":
                default = 0.0
            traffic_updates.setdefault(idx, {})[name] = _parse_value(raw, default, key)
            continue
        section, _, name = key.partition(".")
        if section not in sections:
            raise ConfigError(f"unknown key {key!r}", key=key, line=lineno)
        obj = getattr(config, section)
        names = {f.name for f in fields(obj)}
        if name not in names:
            raise ConfigError(f"unknown key {key!r}", key=key, line=lineno)
        default = getattr(obj, name)
        if section == "ris" and name == "element_gain_db":
            default = 0.0
        sections[section][name] = _parse_value(raw, default, key)

    updates = {s: replace(getattr(config, s), **kv) for s, kv in sections.items() if kv}
    traffic = list(config.traffic)
    for idx in sorted(traffic_updates):
        kv = traffic_updates[idx]
        if idx <= len(traffic):
            traffic[idx - 1] = replace(traffic[idx - 1], **kv)
        elif idx == len(traffic) + 1:
            missing = sorted(_TRAFFIC_FIELDS - {"queue_mean"} - set(kv))
            if missing:
                raise ConfigError(f"traffic.t{idx} is missing {', '.join(missing)}", key=f"traffic.t{idx}.{missing[0]}")
            kv.setdefault("queue_mean", None)
            traffic.append(TrafficSettings(**kv))
        else:
            raise ConfigError(f"traffic.t{idx}: traffic types must be numbered consecutively", key=f"traffic.t{idx}")
    return replace(config, traffic=tuple(traffic), **updates)


def validate(config: ScenarioConfig) -> ScenarioConfig:
    def need(cond, key, constraint):
        if not cond:
            raise ConfigError(f"{key} must be {constraint}", key=key)

    s, r, b, u, ris, c, o = config.sim, config.radio, config.bs, config.ue, config.ris, config.channel, config.opt
    need(s.blocks >= 1, "sim.blocks", "≥ 1")
    need(s.block_ms > 0, "sim.block_ms", "> 0")
    need(0 <= s.seed < 2**64, "sim.seed", "a 64-bit unsigned integer")
    need(len(s.schemes) >= 1, "sim.schemes", "non-empty")
    for name in s.schemes:
        need(name in SCHEMES, "sim.schemes", f"a subset of {{{', '.join(SCHEMES)}}}")
    need(len(set(s.schemes)) == len(s.schemes), "sim.schemes", "free of duplicates")
    need(s.workers >= 1, "sim.workers", "≥ 1")
    need(s.ue_speed >= 0, "sim.ue_speed", "≥ 0")
    need(s.heading_blocks >= 1, "sim.heading_blocks", "≥ 1")
    need(s.area > 0, "sim.area", "> 0")
    need(0.5 < r.fc_ghz < 100, "radio.fc_ghz", "in (0.5, 100)")
    need(r.bandwidth_mhz > 0, "radio.bandwidth_mhz", "> 0")
    need(len(b.positions) >= 1, "bs.positions", "non-empty")
    need(all(len(p) == 3 for p in b.positions), "bs.positions", "3-D coordinates")
    need(b.antennas >= 1, "bs.antennas", "≥ 1")
    need(b.spacing_wl > 0, "bs.spacing_wl", "> 0")
    need(0 <= b.correlation < 1, "bs.correlation", "in [0, 1)")
    need(len(u.positions) >= 1, "ue.positions", "non-empty")
    need(all(len(p) == 3 for p in u.positions), "ue.positions", "3-D coordinates")
    need(len(ris.position) == 3, "ris.position", "a 3-D coordinate")
    need(ris.kx >= 1, "ris.kx", "≥ 1")
    need(ris.ky >= 1, "ris.ky", "≥ 1")
    need(ris.spacing_wl > 0, "ris.spacing_wl", "> 0")
    need(ris.front_to_back_db >= 0, "ris.front_to_back_db", "≥ 0")
    need(ris.bs_link_scale >= 0, "ris.bs_link_scale", "≥ 0")
    need(c.kappa_direct >= 0, "channel.kappa_direct", "≥ 0")
    need(c.kappa_ris >= 0, "channel.kappa_ris", "≥ 0")
    need(c.paths_ue_ris >= 1, "channel.paths_ue_ris", "≥ 1")
    need(c.paths_ris_bs >= 1, "channel.paths_ris_bs", "≥ 1")
    need(c.angle_spread_deg >= 0, "channel.angle_spread_deg", "≥ 0")
    need(c.shadowing_db >= 0, "channel.shadowing_db", "≥ 0")
    need(c.decorrelation_m > 0, "channel.decorrelation_m", "> 0")
    need(len(config.traffic) >= 1, "traffic", "non-empty")
    M = len(b.positions)
    for i, t in enumerate(config.traffic, start=1):
        key = f"traffic.t{i}"
        need(t.packet_bytes > 0, f"{key}.packet_bytes", "> 0")
        need(t.arrival_pps >= 0, f"{key}.arrival_pps", "≥ 0")
        need(t.budget_s > 0, f"{key}.budget_s", "> 0")
        need(t.queue_mean is None or t.queue_mean >= 0, f"{key}.queue_mean", "≥ 0")
        need(len(t.backhaul_mbps) == M, f"{key}.backhaul_mbps", f"one (low, high) range per BS ({M})")
        for lo_hi in t.backhaul_mbps:
            need(len(lo_hi) == 2 and 0 < lo_hi[0] <= lo_hi[1], f"{key}.backhaul_mbps", "ranges with 0 < low ≤ high")
    need(o.outer_cap >= 1, "opt.outer_cap", "≥ 1")
    need(o.inner_cap >= 1, "opt.inner_cap", "≥ 1")
    need(o.eps_ao > 0, "opt.eps_ao", "> 0")
    need(o.eps_sca > 0, "opt.eps_sca", "> 0")
    need(o.randomization_draws >= 0, "opt.randomization_draws", "≥ 0")
    need(o.sdp_method in ("admm", "lowrank"), "opt.sdp_method", "'admm' or 'lowrank'")
    return config


def parse_config_text(text: str, overrides=()) -> ScenarioConfig:
    pairs = parse_pairs(text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        k, v = item.split("=", 1)
        pairs.append((k.strip(), v.strip(), None))
    return validate(apply_pairs(ScenarioConfig(), pairs))


def parse_config(path, overrides=()) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf-8")
    return parse_config_text(text, overrides)
