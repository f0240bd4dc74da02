"""Scenario definition: transmitters, train, frame timing and per-frame flows.

Scenario files are TOML with flat dotted keys whose names carry their units
(``train.speed_kmh``). Loading converts everything to linear SI units and
derives the slot count, coverage distances and the train's entry point.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np

from . import channel as ch
from . import geometry as geo
from . import streams
from .errors import ParameterError, ScenarioError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

WEIGHTS = (0.2, 0.5, 0.8, 1.0)
SCENARIO_DIR_ENV = "SAGIN_SCENARIO_DIR"


class Tx(str, Enum):
    BS1 = "BS1"
    BS2 = "BS2"
    BS3 = "BS3"
    AIRSHIP = "AIRSHIP"
    SATELLITE = "SATELLITE"


BS_TX = (Tx.BS1, Tx.BS2, Tx.BS3)


class Band(str, Enum):
    W1 = "W1"
    W2 = "W2"


@dataclass(frozen=True)
class TransmitterDef:
    kind: Tx
    budget: ch.LinkBudget
    band: Band
    position: geo.Position3D | geo.GeoCoordinate


@dataclass(frozen=True)
class FrameConfig:
    slot_time: float
    beacon: float
    slots: int
    frame_advance: float
    switch_multiplier: int = 1

    def __post_init__(self):
        if self.slots < 1:
            raise ParameterError("a frame needs at least one slot")
        if self.slot_time <= 0 or self.beacon < 0:
            raise ParameterError("slot time must be positive and beacon non-negative")
        if self.switch_multiplier < 1:
            raise ParameterError("switch period multiplier must be a positive integer")

    @property
    def duration(self) -> float:
        return self.beacon + self.slots * self.slot_time

    def is_switch_frame(self, n: int) -> bool:
        return (n - 1) % self.switch_multiplier == 0


def slots_per_frame(frame_advance: float, speed: float, beacon: float, slot_time: float) -> int:
    """Largest slot count that keeps the per-frame train travel within ``frame_advance``."""
    return math.floor(round((frame_advance / speed - beacon) / slot_time, 9))


@dataclass(frozen=True)
class Flow:
    id: int
    mr_index: int
    qos: float
    weight: float
    frame: int


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    repetitions: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    train: geo.TrainPath
    transmitters: tuple[TransmitterDef, ...]
    orbit: geo.SatelliteOrbit
    channels: Mapping[Band, ch.ChannelParams]
    rician_k_bs: float
    rician_k_table: tuple[tuple[float, float], ...]
    frame: FrameConfig
    qos_range: tuple[float, float]
    rng_seed: int
    interference: bool
    coverage: geo.CoverageModel
    airship_anchor: geo.GeoCoordinate
    mr_rx_gain: float
    airship_rx_gain: float
    atmosphere_db_per_km: float
    atmosphere_ceiling: float
    sensitivity: float
    frames: int
    corridor_exit_x: float
    flow_fraction: float = 1.0
    persist_qos: bool = False
    # Baselines freeze their routes between switch frames, like MWFS.
    hold_baselines: bool = True
    sweep: SweepSpec | None = None
    raw: Mapping[str, Any] = field(default_factory=dict, repr=False, compare=False)

    def transmitter(self, kind: Tx) -> TransmitterDef:
        for t in self.transmitters:
            if t.kind == kind:
                return t
        raise KeyError(kind)

    @property
    def airship_height(self) -> float:
        return self.airship_anchor.altitude

    @property
    def mr_anchor(self) -> geo.GeoCoordinate:
        """Geodetic point used for every MR in satellite distance calculations."""
        return geo.GeoCoordinate(self.airship_anchor.latitude, self.airship_anchor.longitude,
                                 self.train.mr_height)

    def corridor_frames(self) -> int:
        return geo.total_frames(self.train, self.train.entry_x, self.corridor_exit_x,
                                self.frame.duration)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ScenarioConfig":
        """Rebuild the scenario with some raw keys replaced (used by sweeps)."""
        raw = dict(self.raw)
        for key, value in overrides.items():
            if key not in _SCHEMA:
                raise ScenarioError(f"unknown key '{key}'")
            raw[key] = value
        return build_scenario(raw)


_REQUIRED = object()

# key -> (kind, default). Kinds drive validation of the parsed value.
_SCHEMA: dict[str, tuple[str, Any]] = {
    "run.seed": ("int", _REQUIRED),
    "run.frames": ("int", _REQUIRED),
    "run.interference": ("bool", False),
    "carrier.frequency_ghz": ("float", _REQUIRED),
    "carrier.w1_mhz": ("float", _REQUIRED),
    "carrier.w2_mhz": ("float", _REQUIRED),
    "train.speed_kmh": ("float", _REQUIRED),
    "train.mr_count": ("int", _REQUIRED),
    "train.mr_spacing_m": ("float", _REQUIRED),
    "train.mr_height_m": ("float", _REQUIRED),
    "train.frame_advance_m": ("float", _REQUIRED),
    "bs.bs1_position_m": ("vec3", _REQUIRED),
    "bs.bs2_position_m": ("vec3", _REQUIRED),
    "bs.bs3_position_m": ("vec3", _REQUIRED),
    "bs.tx_power_dbm": ("float", _REQUIRED),
    "bs.tx_gain_dbi": ("float", _REQUIRED),
    "airship.height_m": ("float", _REQUIRED),
    "airship.latitude_deg": ("float", _REQUIRED),
    "airship.longitude_deg": ("float", _REQUIRED),
    "airship.tx_power_dbm": ("float", _REQUIRED),
    "airship.tx_gain_dbi": ("float", _REQUIRED),
    "airship.rx_gain_dbi": ("float", _REQUIRED),
    "satellite.height_km": ("float", _REQUIRED),
    "satellite.inclination_deg": ("float", 90.0),
    "satellite.initial_elevation_deg": ("float", None),
    "satellite.initial_latitude_deg": ("float", None),
    "satellite.initial_longitude_deg": ("float", None),
    "satellite.tx_power_dbm": ("float", _REQUIRED),
    "satellite.tx_gain_dbi": ("float", _REQUIRED),
    "mr.rx_gain_dbi": ("float", _REQUIRED),
    "channel.rician_k_bs_db": ("float", _REQUIRED),
    "channel.rician_k_elevation_table": ("table", _REQUIRED),
    "channel.pathloss_exponent": ("float", 2.0),
    "channel.atmospheric_attenuation_db_per_km": ("float", _REQUIRED),
    "channel.atmosphere_height_km": ("float", 10.0),
    "channel.noise_density_dbm_hz": ("float", ch.THERMAL_NOISE_DBM_HZ),
    "channel.efficiency": ("float", _REQUIRED),
    "channel.receiver_sensitivity_dbm": ("float", _REQUIRED),
    "frame.slot_time_us": ("float", _REQUIRED),
    "frame.beacon_us": ("float", _REQUIRED),
    "frame.slots": ("int", None),
    "frame.switch_period_frames": ("int", 1),
    "frame.hold_baselines": ("bool", True),
    "flows.qos_min_mbps": ("float", _REQUIRED),
    "flows.qos_max_mbps": ("float", _REQUIRED),
    "flows.fraction_of_mrs": ("float", 1.0),
    "flows.persist_qos": ("bool", False),
    "earth.radius_km": ("float", geo.EARTH_RADIUS_M / 1e3),
    "earth.mass_kg": ("float", geo.EARTH_MASS_KG),
    "earth.gravitational_constant": ("float", geo.GRAVITATIONAL_CONSTANT),
    "sweep.axis": ("str", None),
    "sweep.values": ("list", None),
    "sweep.repetitions": ("int", 1),
}


def _flatten(tree: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, path + "."))
        else:
            flat[path] = value
    return flat


def _coerce(key: str, kind: str, value: Any) -> Any:
    def fail(expected):
        raise ScenarioError(f"field '{key}': expected {expected}, got {value!r}")

    if value is None:
        return None
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            fail("an integer")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail("a number")
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            fail("true or false")
        return value
    if kind == "str":
        if not isinstance(value, str):
            fail("a string")
        return value
    if kind == "vec3":
        if not isinstance(value, (list, tuple)) or len(value) != 3:
            fail("a 3-element list [x, y, z]")
        return tuple(float(v) for v in value)
    if kind == "table":
        try:
            rows = tuple((float(a), float(b)) for a, b in value)
        except (TypeError, ValueError):
            fail("a list of [x, y] pairs")
        if not rows or any(rows[i][0] >= rows[i + 1][0] for i in range(len(rows) - 1)):
            fail("a non-empty list of pairs with increasing first elements")
        return rows
    if kind == "list":
        if not isinstance(value, (list, tuple)):
            fail("a list")
        return tuple(value)
    raise AssertionError(kind)


def resolve_scenario_path(name: str | os.PathLike) -> Path | None:
    """Map ``default`` or a bare name to a scenario file; ``None`` means bundled default."""
    text = str(name)
    if text == "default":
        directory = os.environ.get(SCENARIO_DIR_ENV)
        if directory and (Path(directory) / "default.toml").is_file():
            return Path(directory) / "default.toml"
        return None
    path = Path(text)
    if path.is_file():
        return path
    directory = os.environ.get(SCENARIO_DIR_ENV)
    if directory:
        for candidate in (Path(directory) / text, Path(directory) / f"{text}.toml"):
            if candidate.is_file():
                return candidate
    raise ScenarioError(f"scenario file not found: {text}")


def load_scenario(path: str | os.PathLike = "default") -> ScenarioConfig:
    """Parse, validate and derive a scenario from a TOML file (or ``"default"``)."""
    resolved = resolve_scenario_path(path)
    try:
        if resolved is None:
            text = resources.files("sagin_sched").joinpath("data/default.toml").read_text()
            origin = "<bundled default>"
        else:
            text = resolved.read_text()
            origin = str(resolved)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{origin}: parse error: {exc}") from exc
    return build_scenario(_flatten(tree))


def default_scenario() -> ScenarioConfig:
    return load_scenario("default")


def build_scenario(flat: Mapping[str, Any]) -> ScenarioConfig:
    """Validate a flat key map and compute every derived quantity."""
    unknown = sorted(set(flat) - set(_SCHEMA))
    if unknown:
        raise ScenarioError(f"unknown key(s): {', '.join(unknown)}")
    raw: dict[str, Any] = {}
    for key, (kind, default) in _SCHEMA.items():
        if key in flat:
            raw[key] = _coerce(key, kind, flat[key])
        elif default is _REQUIRED:
            raise ScenarioError(f"missing required field '{key}'")
        else:
            raw[key] = default
    try:
        return _derive(raw)
    except ParameterError as exc:
        raise ScenarioError(str(exc)) from exc


def _positive(raw, key, what):
    if raw[key] <= 0:
        raise ScenarioError(f"{what} must be positive ({key}={raw[key]})")


def _derive(raw: dict[str, Any]) -> ScenarioConfig:
    for key, what in [("train.speed_kmh", "train speed"), ("train.mr_count", "MR count"),
                      ("train.frame_advance_m", "frame advance"), ("satellite.height_km", "satellite height"),
                      ("airship.height_m", "airship height"), ("carrier.frequency_ghz", "carrier frequency"),
                      ("carrier.w1_mhz", "bandwidth W1"), ("carrier.w2_mhz", "bandwidth W2"),
                      ("frame.slot_time_us", "slot time"), ("channel.pathloss_exponent", "path-loss exponent"),
                      ("earth.radius_km", "earth radius")]:
        _positive(raw, key, what)
    if raw["run.frames"] < 0:
        raise ScenarioError("frame count must be non-negative")
    if raw["run.seed"] < 0 or raw["run.seed"] >= 2**64:
        raise ScenarioError("seed must be an unsigned 64-bit integer")
    if raw["train.mr_spacing_m"] < 0:
        raise ScenarioError("MR spacing must be non-negative")
    qmin, qmax = raw["flows.qos_min_mbps"], raw["flows.qos_max_mbps"]
    if not 0 <= qmin <= qmax:
        raise ScenarioError("QoS range must satisfy 0 <= min <= max")
    if not 0 <= raw["flows.fraction_of_mrs"] <= 1:
        raise ScenarioError("flows.fraction_of_mrs must lie in [0, 1]")

    speed = raw["train.speed_kmh"] / 3.6
    slot_time = raw["frame.slot_time_us"] * 1e-6
    beacon = raw["frame.beacon_us"] * 1e-6
    advance = raw["train.frame_advance_m"]
    slots = raw["frame.slots"]
    if slots is None:
        slots = slots_per_frame(advance, speed, beacon, slot_time)
        if slots < 1:
            raise ScenarioError("train too fast: no slot fits in the per-frame travel distance")
    frame = FrameConfig(slot_time, beacon, slots, advance, raw["frame.switch_period_frames"])

    wavelength = ch.SPEED_OF_LIGHT / (raw["carrier.frequency_ghz"] * 1e9)
    sigma = ch.free_space_reference_gain(wavelength)
    noise = float(ch.dbm_to_watts(raw["channel.noise_density_dbm_hz"]))
    k_bs = float(ch.db_to_linear(raw["channel.rician_k_bs_db"]))
    table = raw["channel.rician_k_elevation_table"]
    channels = MappingProxyType({
        band: ch.ChannelParams(
            rician_k=k_bs if band is Band.W2 else float(ch.db_to_linear(table[-1][1])),
            sigma=sigma,
            gamma=raw["channel.pathloss_exponent"],
            wavelength=wavelength,
            atmo_zeta=1.0,
            noise_density=noise,
            bandwidth=raw["carrier.w1_mhz" if band is Band.W1 else "carrier.w2_mhz"] * 1e6,
            efficiency=raw["channel.efficiency"],
        )
        for band in Band
    })

    mr_gain = float(ch.db_to_linear(raw["mr.rx_gain_dbi"]))
    airship_rx = float(ch.db_to_linear(raw["airship.rx_gain_dbi"]))

    def budget(prefix, rx_gain):
        return ch.LinkBudget(float(ch.dbm_to_watts(raw[f"{prefix}.tx_power_dbm"])),
                             float(ch.db_to_linear(raw[f"{prefix}.tx_gain_dbi"])), rx_gain)

    h_mr = raw["train.mr_height_m"]
    h_air = raw["airship.height_m"]
    bs_positions = [geo.Position3D(*raw[f"bs.bs{j}_position_m"]) for j in (1, 2, 3)]
    anchor = geo.GeoCoordinate(math.radians(raw["airship.latitude_deg"]),
                               math.radians(raw["airship.longitude_deg"]), h_air)
    earth_r = raw["earth.radius_km"] * 1e3
    h_sat = raw["satellite.height_km"] * 1e3

    elev = raw["satellite.initial_elevation_deg"]
    lat0, lon0 = raw["satellite.initial_latitude_deg"], raw["satellite.initial_longitude_deg"]
    if elev is not None and (lat0 is not None or lon0 is not None):
        raise ScenarioError("give either satellite.initial_elevation_deg or an initial latitude/longitude, not both")
    if elev is not None:
        if not 0 < elev <= 90:
            raise ScenarioError("satellite.initial_elevation_deg must lie in (0, 90]")
        mr_geo = geo.GeoCoordinate(anchor.latitude, anchor.longitude, h_mr)
        start = geo.satellite_start_for_elevation(mr_geo, math.radians(elev), h_sat, earth_r)
    elif lat0 is not None and lon0 is not None:
        start = geo.GeoCoordinate(math.radians(lat0), math.radians(lon0), h_sat)
    else:
        raise ScenarioError("satellite start position missing: set initial_elevation_deg or latitude/longitude")
    orbit = geo.SatelliteOrbit(h_sat, math.radians(raw["satellite.inclination_deg"]), start,
                               earth_r, raw["earth.mass_kg"], raw["earth.gravitational_constant"])

    sensitivity = float(ch.dbm_to_watts(raw["channel.receiver_sensitivity_dbm"]))
    atten = raw["channel.atmospheric_attenuation_db_per_km"]
    ceiling = raw["channel.atmosphere_height_km"] * 1e3
    bs_budget = budget("bs", mr_gain)
    air_budget = budget("airship", mr_gain)
    sat_budget = budget("satellite", mr_gain)
    w1, w2 = channels[Band.W1], channels[Band.W2]
    coverage = geo.CoverageModel(
        d_max_bs=ch.max_coverage_distance(bs_budget, w2, sensitivity, atten),
        d_max_airship=ch.max_coverage_distance(air_budget, w2, sensitivity, atten),
        # Space links: zenith in-atmosphere length, the geometry-independent part of the path.
        d_max_satellite=ch.max_coverage_distance(sat_budget, w1, sensitivity, atten,
                                                 fixed_path_m=max(ceiling - h_mr, 0.0)),
        d_max_satellite_airship=ch.max_coverage_distance(
            ch.LinkBudget(sat_budget.tx_power, sat_budget.tx_gain, airship_rx), w1, sensitivity, atten,
            fixed_path_m=max(ceiling - h_air, 0.0)),
    )

    entry_x, _ = geo.coverage_interval(bs_positions[0], coverage.d_max_bs, h_mr)
    _, exit_x = geo.coverage_interval(bs_positions[2], coverage.d_max_bs, h_mr)
    if geo.coverage_span(bs_positions[0], coverage.d_max_bs, h_mr) <= 0:
        raise ScenarioError("BS1 coverage does not reach the track; entry point undefined")
    train = geo.TrainPath(speed, raw["train.mr_count"], raw["train.mr_spacing_m"], entry_x, advance, h_mr)

    transmitters = tuple(
        [TransmitterDef(kind, bs_budget, Band.W2, pos) for kind, pos in zip(BS_TX, bs_positions)]
        + [TransmitterDef(Tx.AIRSHIP, air_budget, Band.W2, geo.Position3D(0.0, 0.0, h_air)),
           TransmitterDef(Tx.SATELLITE, sat_budget, Band.W1, start)]
    )

    sweep = None
    if raw["sweep.axis"] is not None:
        if raw["sweep.values"] is None:
            raise ScenarioError("sweep.axis given without sweep.values")
        sweep = SweepSpec(raw["sweep.axis"], tuple(raw["sweep.values"]), raw["sweep.repetitions"])

    return ScenarioConfig(
        train=train,
        transmitters=transmitters,
        orbit=orbit,
        channels=channels,
        rician_k_bs=k_bs,
        rician_k_table=table,
        frame=frame,
        qos_range=(qmin * 1e6, qmax * 1e6),
        rng_seed=raw["run.seed"],
        interference=raw["run.interference"],
        coverage=coverage,
        airship_anchor=anchor,
        mr_rx_gain=mr_gain,
        airship_rx_gain=airship_rx,
        atmosphere_db_per_km=atten,
        atmosphere_ceiling=ceiling,
        sensitivity=sensitivity,
        frames=raw["run.frames"],
        corridor_exit_x=exit_x,
        flow_fraction=raw["flows.fraction_of_mrs"],
        persist_qos=raw["flows.persist_qos"],
        hold_baselines=raw["frame.hold_baselines"],
        sweep=sweep,
        raw=MappingProxyType(dict(raw)),
    )


def generate_flows(config: ScenarioConfig, frame: int, rng: np.random.Generator | None = None) -> list[Flow]:
    """One flow per MR (or a configured fraction of MRs) for frame ``frame``.

    Without an explicit ``rng`` the draws come from the scenario seed's flow
    substream for this frame, so the result depends only on (seed, frame).
    """
    if frame < 1:
        raise ParameterError("frame index starts at 1")
    if rng is None:
        rng = streams.flow_stream(config.rng_seed, frame)
    n_mr = config.train.mr_count
    if config.flow_fraction >= 1.0:
        mrs = np.arange(1, n_mr + 1)
    else:
        count = int(round(config.flow_fraction * n_mr))
        mrs = np.sort(rng.choice(n_mr, size=count, replace=False)) + 1
    qmin, qmax = config.qos_range
    qos = rng.uniform(qmin, qmax, size=len(mrs))
    weight_idx = rng.integers(0, len(WEIGHTS), size=len(mrs))
    return [
        Flow(id=(frame - 1) * n_mr + int(i) - 1, mr_index=int(i), qos=float(q), weight=WEIGHTS[w], frame=frame)
        for i, q, w in zip(mrs, qos, weight_idx)
    ]
