"""Frame loop, link-state precomputation and parameter sweeps.

A run precomputes every per-frame link quantity for the whole horizon as
numpy arrays (positions, distances, coverage, frozen channel samples, bits
per slot) and then walks the frames, handing each scheduler a
:class:`~sagin_sched.scheduler.FrameInputs` snapshot. Channel and flow
draws come from per-link and per-frame substreams, so they are identical for
every algorithm run on the same seed.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import channel as ch
from . import geometry as geo
from . import streams
from .errors import ParameterError, VerificationError
from .scenario import BS_TX, Band, Flow, ScenarioConfig, Tx, build_scenario, generate_flows
from .scheduler import (ROUTE_OF_BS, FrameInputs, FrameResult, Hop, Route, RouteOption, ScheduleState,
                        get_algorithm, verify_schedule)

# Link names double as channel stream keys.
BS_LINKS = ("BS1", "BS2", "BS3")
AIRSHIP_LINK = "AIRSHIP"
SATELLITE_LINK = "SATELLITE"
RELAY_LINK = "SATELLITE_AIRSHIP"


@dataclass(frozen=True)
class LinkState:
    """Per-frame link tables for one (scenario, seed, horizon).

    ``bits`` and ``covered`` have shape (frames, mr_count) for links ending at
    an MR and shape (frames,) for the satellite-airship hop.
    """

    frames: int
    bits: Mapping[str, np.ndarray]
    covered: Mapping[str, np.ndarray]
    distance: Mapping[str, np.ndarray]
    elevation_deg: np.ndarray  # MR-to-satellite elevation per frame

    @cached_property
    def tables(self) -> tuple[dict[str, list], dict[str, list]]:
        """(bits, covered) as nested Python lists; far faster to index per flow."""
        return ({k: v.tolist() for k, v in self.bits.items()},
                {k: np.asarray(v).tolist() for k, v in self.covered.items()})


@dataclass(frozen=True)
class RunResult:
    per_frame: tuple[FrameResult, ...]
    cumulative_weighted_sum: float
    cumulative_bits: int
    algorithm: str
    seed: int
    sweep_point: tuple = ()
    frames: int = 0
    wall_time: float = 0.0


@dataclass(frozen=True)
class SweepGrid:
    axis: str
    values: tuple
    repetitions: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise ParameterError(f"unknown sweep axis '{self.axis}'; valid: {', '.join(AXES)}")
        if self.repetitions < 1:
            raise ParameterError("repetitions must be at least 1")
        for v in self.values:
            if self.axis == "elevation_angle":
                if not 0 < v <= 90:
                    raise ParameterError(f"elevation angle {v} outside (0, 90] degrees")
            elif self.axis in ("time", "switch_period"):
                if v < 0 or (self.axis == "switch_period" and v < 1) or int(v) != v:
                    raise ParameterError(f"{self.axis} value {v} must be a non-negative integer (period >= 1)")
            elif v <= 0:
                raise ParameterError(f"{self.axis} value {v} must be positive")


# axis -> (scenario key, multiplier from axis units to key units)
AXES: dict[str, tuple[str | None, float]] = {
    "time": (None, 1.0),                                  # frames
    "train_speed": ("train.speed_kmh", 1.0),              # km/h
    "switch_period": ("frame.switch_period_frames", 1),   # multiples of the frame
    "airship_height": ("airship.height_m", 1e3),          # km
    "satellite_height": ("satellite.height_km", 1.0),     # km
    "elevation_angle": ("satellite.initial_elevation_deg", 1.0),  # degrees
}


def _received(budget: ch.LinkBudget, distance, k_lin, params: ch.ChannelParams, nlos, zeta):
    h = ch.rician_gain(distance, k_lin, params, nlos)
    return budget.eirp_gain * np.abs(h) ** 2 * zeta


def _mean_received(budget: ch.LinkBudget, distance, params: ch.ChannelParams, zeta):
    return budget.eirp_gain * ch.mean_path_gain(distance, params) * zeta


def compute_link_state(config: ScenarioConfig, seed: int, frames: int) -> LinkState:
    """Vectorised distances, coverage, Rician draws and bits-per-slot for all frames."""
    train, fc = config.train, config.frame
    n_mr = train.mr_count
    w1, w2 = config.channels[Band.W1], config.channels[Band.W2]
    atten, ceiling = config.atmosphere_db_per_km, config.atmosphere_ceiling
    cov = config.coverage
    h_mr, h_air = train.mr_height, config.airship_height

    x = geo.mr_x_grid(train, frames)

    def nlos(link: str, mr: int) -> np.ndarray:
        return ch.complex_normal(streams.channel_stream(seed, link, mr), frames)

    def nlos_grid(link: str) -> np.ndarray:
        if frames == 0:
            return np.zeros((0, n_mr), dtype=complex)
        return np.stack([nlos(link, i + 1) for i in range(n_mr)], axis=1)

    signal: dict[str, np.ndarray] = {}
    distance: dict[str, np.ndarray] = {}
    covered: dict[str, np.ndarray] = {}
    mean_power: dict[str, np.ndarray] = {}

    # Terrestrial links: BSs and the airship, band W2.
    for tx, link in zip(BS_TX, BS_LINKS):
        t = config.transmitter(tx)
        p = t.position
        d = np.sqrt((x - p.x) ** 2 + p.y**2 + (p.z - h_mr) ** 2)
        zeta = ch.atmospheric_factor(ch.atmospheric_path(d, max(p.z, h_mr), min(p.z, h_mr), ceiling), atten)
        distance[link], covered[link] = d, d <= cov.d_max_bs
        signal[link] = _received(t.budget, d, config.rician_k_bs, w2, nlos_grid(link), zeta)
        mean_power[link] = _mean_received(t.budget, d, w2, zeta)

    t_air = config.transmitter(Tx.AIRSHIP)
    d_air = np.sqrt(x**2 + (h_air - h_mr) ** 2)
    k_air = ch.rician_k_for_elevation(np.degrees(np.arctan2(h_air - h_mr, np.abs(x))), config.rician_k_table)
    zeta_air = ch.atmospheric_factor(ch.atmospheric_path(d_air, h_air, h_mr, ceiling), atten)
    distance[AIRSHIP_LINK], covered[AIRSHIP_LINK] = d_air, d_air <= cov.d_max_airship
    signal[AIRSHIP_LINK] = _received(t_air.budget, d_air, k_air, w2, nlos_grid(AIRSHIP_LINK), zeta_air)
    mean_power[AIRSHIP_LINK] = _mean_received(t_air.budget, d_air, w2, zeta_air)

    # Space links, band W1. Every MR shares the airship's latitude/longitude.
    orbit = config.orbit
    radius = orbit.earth_radius
    elapsed = np.arange(frames, dtype=float) * fc.duration
    lat, lon = geo.propagate_satellite_many(orbit, elapsed)
    horiz = geo.haversine_many(lat, lon, config.airship_anchor, radius)
    central = horiz / radius
    h_sat = orbit.altitude
    t_sat = config.transmitter(Tx.SATELLITE)

    d_sm = geo.slant_distance(horiz, h_sat, h_mr) if frames else np.zeros(0)
    vis_mr = central < geo.horizon_angle(h_mr, h_sat, radius)
    elev_mr = np.degrees(geo.elevation_angle(central, h_mr, h_sat, radius)) if frames else np.zeros(0)
    zeta_sm = ch.atmospheric_factor(ch.atmospheric_path(d_sm, h_sat, h_mr, ceiling), atten)
    k_sm = ch.rician_k_for_elevation(elev_mr, config.rician_k_table)
    distance[SATELLITE_LINK] = np.broadcast_to(np.asarray(d_sm)[:, None], (frames, n_mr))
    covered[SATELLITE_LINK] = np.broadcast_to((vis_mr & (d_sm <= cov.d_max_satellite))[:, None], (frames, n_mr))
    signal[SATELLITE_LINK] = _received(t_sat.budget, np.asarray(d_sm)[:, None], np.asarray(k_sm)[:, None], w1,
                                       nlos_grid(SATELLITE_LINK), np.asarray(zeta_sm)[:, None])

    relay_budget = ch.LinkBudget(t_sat.budget.tx_power, t_sat.budget.tx_gain, config.airship_rx_gain)
    d_sa = geo.slant_distance(horiz, h_sat, h_air) if frames else np.zeros(0)
    vis_air = central < geo.horizon_angle(h_air, h_sat, radius)
    elev_air = np.degrees(geo.elevation_angle(central, h_air, h_sat, radius)) if frames else np.zeros(0)
    zeta_sa = ch.atmospheric_factor(ch.atmospheric_path(d_sa, h_sat, h_air, ceiling), atten)
    distance[RELAY_LINK] = np.asarray(d_sa)
    covered[RELAY_LINK] = vis_air & (d_sa <= cov.d_max_satellite_airship)
    signal[RELAY_LINK] = (_received(relay_budget, d_sa, ch.rician_k_for_elevation(elev_air, config.rician_k_table),
                                     w1, nlos(RELAY_LINK, 0), zeta_sa) if frames else np.zeros(0))

    interference = {k: np.zeros_like(v) for k, v in signal.items()}
    if config.interference:
        # Worst case: every other W2 transmitter is active while the link transmits.
        w2_links = (*BS_LINKS, AIRSHIP_LINK)
        total = sum(mean_power[k] for k in w2_links)
        for k in w2_links:
            interference[k] = total - mean_power[k]

    bits = {}
    for link, s in signal.items():
        params = w1 if link in (SATELLITE_LINK, RELAY_LINK) else w2
        rate = ch.slot_rate(ch.sinr(s, interference[link], params), params)
        bits[link] = np.where(covered[link], ch.slot_bits(rate, fc.slot_time), 0)
    return LinkState(frames, bits, covered, distance, np.asarray(elev_mr))


def build_frame_inputs(config: ScenarioConfig, state: LinkState, frame: int, flows: Sequence[Flow]) -> FrameInputs:
    """Attach every in-coverage route, with per-hop slot demands, to each flow."""
    fc = config.frame
    row = frame - 1
    bits, covered = state.tables
    relay_ok = covered[RELAY_LINK][row]
    relay_bits = bits[RELAY_LINK][row]
    bs_rows = [(tx, ROUTE_OF_BS[tx], covered[link][row], bits[link][row]) for tx, link in zip(BS_TX, BS_LINKS)]
    air_cov, air_bits = covered[AIRSHIP_LINK][row], bits[AIRSHIP_LINK][row]
    sat_cov, sat_bits = covered[SATELLITE_LINK][row], bits[SATELLITE_LINK][row]
    required, options = {}, {}
    for f in flows:
        need = ch.required_bits(f.qos, fc.duration)
        required[f.id] = need
        col = f.mr_index - 1
        opts: dict[Route, RouteOption] = {}
        for tx, route, cov_row, bits_row in bs_rows:
            if cov_row[col]:
                b = bits_row[col]
                opts[route] = RouteOption(route, (Hop(tx, ch.demand_from_bits(need, b), b),))
        if relay_ok and air_cov[col]:
            b = air_bits[col]
            opts[Route.AIRSHIP] = RouteOption(Route.AIRSHIP, (
                Hop(Tx.SATELLITE, ch.demand_from_bits(need, relay_bits), relay_bits),
                Hop(Tx.AIRSHIP, ch.demand_from_bits(need, b), b),
            ))
        if sat_cov[col]:
            b = sat_bits[col]
            opts[Route.SATELLITE] = RouteOption(Route.SATELLITE, (Hop(Tx.SATELLITE, ch.demand_from_bits(need, b), b),))
        options[f.id] = opts
    return FrameInputs(frame, fc.slots, tuple(flows), required, options)


# Keys that only affect scheduling, not the per-frame link tables or flows.
_SCHEDULING_KEYS = ("frame.switch_period_frames", "frame.hold_baselines", "run.frames")


def _config_key(config: ScenarioConfig) -> tuple:
    return tuple(sorted(config.raw.items()))


def _link_key(config: ScenarioConfig) -> tuple:
    return tuple((k, v) for k, v in _config_key(config) if k not in _SCHEDULING_KEYS and not k.startswith("sweep."))


@lru_cache(maxsize=4)
def _cached_frames(key: tuple, seed: int, frames: int) -> tuple[FrameInputs, ...]:
    config = build_scenario({**dict(key), "run.frames": frames})
    state = compute_link_state(config, seed, frames)
    return tuple(build_frame_inputs(config, state, n, generate_flows(config, n, streams.flow_stream(seed, n)))
                 for n in range(1, frames + 1))


def prepare_frames(config: ScenarioConfig, seed: int | None = None, frames: int | None = None) -> tuple[FrameInputs, ...]:
    """All frame snapshots for a run with per-frame redrawn flows (cached)."""
    seed = config.rng_seed if seed is None else seed
    frames = config.frames if frames is None else frames
    return _cached_frames(_link_key(config), seed, frames)


def run(config: ScenarioConfig, algorithm: str, frames: int | None = None, seed: int | None = None,
        keep_frames: bool = True) -> RunResult:
    """Simulate ``frames`` frames with one scheduler and verify every frame.

    Raises :class:`VerificationError` on the first frame whose schedule
    breaks a constraint. With ``keep_frames=False`` the per-frame results are
    dropped after accumulation (sweeps only need the totals).
    """
    algo = get_algorithm(algorithm)
    seed = config.rng_seed if seed is None else seed
    frames = config.frames if frames is None else frames
    if frames < 0:
        raise ParameterError("frame count must be non-negative")
    start = time.perf_counter()
    hold_enabled = algo.name == "mwfs" or config.hold_baselines

    if config.persist_qos:
        state = compute_link_state(config, seed, frames)
        inputs_iter = None
    else:
        inputs_iter = prepare_frames(config, seed, frames)

    held: ScheduleState | None = None
    carried: dict[int, tuple[float, float]] = {}
    kept: list[FrameResult] = []
    weights: list[float] = []
    bits = 0
    for n in range(1, frames + 1):
        if inputs_iter is not None:
            inputs = inputs_iter[n - 1]
        else:
            flows = generate_flows(config, n, streams.flow_stream(seed, n))
            flows = [Flow(f.id, f.mr_index, *carried[f.mr_index], n) if f.mr_index in carried else f for f in flows]
            inputs = build_frame_inputs(config, state, n, flows)
        switching = not hold_enabled or config.frame.is_switch_frame(n)
        rng = streams.order_stream(seed, n) if algo.randomized else None
        new_held, result = algo.step(inputs, held, switching, rng)
        if switching:
            held = new_held
        _check_frame(result, inputs, algo.name)
        if inputs_iter is None:
            done = {a.flow_id for a in result.assignments}
            carried = {f.mr_index: (f.qos, f.weight) for f in inputs.flows if f.id not in done}
        weights.append(result.weighted_sum)
        bits += result.transmitted_bits
        if keep_frames:
            kept.append(result)
    return RunResult(tuple(kept), math.fsum(weights), bits, algo.name, seed, (), frames,
                     time.perf_counter() - start)


def _check_frame(result: FrameResult, inputs: FrameInputs, name: str) -> None:
    violations = verify_schedule(result, inputs)
    over = [tx for tx, used in result.slots_used.items() if used > inputs.slots]
    if over and not violations:
        raise VerificationError(f"{name}: frame {inputs.frame} over budget on {over}", [])
    if violations:
        first = violations[0]
        raise VerificationError(
            f"{name}: frame {inputs.frame}: {len(violations)} constraint violation(s); "
            f"first: [{first.constraint}] flow {first.flow_id}: {first.detail}", violations)


def prefix_sums(result: RunResult, points: Iterable[int]) -> list[tuple[int, float, int]]:
    """Cumulative (weighted sum, bits) after each frame count in ``points``."""
    if len(result.per_frame) != result.frames:
        raise ParameterError("prefix sums need a run with per-frame results kept")
    out = []
    for p in points:
        head = result.per_frame[:p]
        out.append((p, math.fsum(r.weighted_sum for r in head), sum(r.transmitted_bits for r in head)))
    return out


def _point_config(config: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    key, scale = AXES[axis]
    if key is None:
        return config
    override = int(value) if axis == "switch_period" else float(value) * scale
    return config.with_overrides({key: override})


def _sweep_job(raw_items: tuple, axis: str, value, algorithms: tuple[str, ...], seed: int,
               frames: int | None) -> list[RunResult]:
    config = _point_config(build_scenario(dict(raw_items)), axis, value)
    out = []
    for name in algorithms:
        r = run(config, name, frames=frames, seed=seed, keep_frames=False)
        out.append(RunResult((), r.cumulative_weighted_sum, r.cumulative_bits, r.algorithm, seed,
                             (axis, value), r.frames, r.wall_time))
    return out


def _time_job(raw_items: tuple, values: tuple, algorithms: tuple[str, ...], seed: int) -> list[RunResult]:
    config = build_scenario(dict(raw_items))
    out = []
    horizon = int(max(values)) if values else 0
    for name in algorithms:
        r = run(config, name, frames=horizon, seed=seed)
        for p, w, b in prefix_sums(r, [int(v) for v in values]):
            out.append(RunResult((), w, b, r.algorithm, seed, ("time", p), p, r.wall_time))
    return out


def sweep(config: ScenarioConfig, grid: SweepGrid, algorithms: Sequence[str], frames: int | None = None,
          jobs: int = 1) -> list[RunResult]:
    """Run every (grid value, algorithm, seed) combination.

    Seeds are ``config.rng_seed + r`` for ``r < grid.repetitions``. The result
    order is point-major, then algorithm, then seed, whatever ``jobs`` is.
    """
    algorithms = tuple(get_algorithm(a).name for a in algorithms)
    seeds = [config.rng_seed + r for r in range(grid.repetitions)]
    raw_items = _config_key(config)
    if grid.axis == "time":
        tasks = [(_time_job, (raw_items, tuple(grid.values), algorithms, s)) for s in seeds]
    else:
        # Seed-major so consecutive tasks on a scheduling-only axis reuse the cached link tables.
        tasks = [(_sweep_job, (raw_items, grid.axis, v, algorithms, s, frames)) for s in seeds for v in grid.values]

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(fn, *args) for fn, args in tasks]
            chunks = [f.result() for f in futures]
    else:
        chunks = [fn(*args) for fn, args in tasks]

    results = [r for chunk in chunks for r in chunk]
    point_index = {v: i for i, v in enumerate(int(v) for v in grid.values)} if grid.axis == "time" else \
        {v: i for i, v in enumerate(grid.values)}
    algo_index = {a: i for i, a in enumerate(algorithms)}
    results.sort(key=lambda r: (point_index[r.sweep_point[1]], algo_index[r.algorithm], r.seed))
    return results
