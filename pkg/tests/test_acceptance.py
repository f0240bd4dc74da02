"""Acceptance suite: one test per criterion, each reporting a pass/fail line.

The sweep criteria (4 to 7) run the full 3600-frame default scenario over ten
seeds and take several minutes on one core.
"""

import io
import math
import sys
from contextlib import redirect_stdout

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from sagin_sched import channel as ch
from sagin_sched import cli, engine, geometry as geo, streams
from sagin_sched.oracle import random_instance, solution_schedule, solve_exact
from sagin_sched.scenario import Band, Tx
from sagin_sched.scheduler import ALGORITHMS, hold_frame, verify_schedule

SEEDS = 10
ALGOS = list(ALGORITHMS)


def report(number, title, ok, detail):
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, file=sys.stderr)
    assert ok, line


def non_increasing(values, band):
    """True when no point exceeds any earlier point by more than ``band`` (relative)."""
    return all(values[j] <= values[i] * (1 + band) for i in range(len(values)) for j in range(i + 1, len(values)))


def means(results, metric="weighted_sum"):
    table = {}
    for r in results:
        v = r.cumulative_weighted_sum if metric == "weighted_sum" else r.cumulative_bits
        table.setdefault(r.algorithm, {}).setdefault(r.sweep_point[1], []).append(v)
    return {a: {p: float(np.mean(v)) for p, v in pts.items()} for a, pts in table.items()}


def fmt(series):
    return "[" + ", ".join(f"{v:.0f}" for v in series) + "]"


@pytest.fixture(scope="module")
def acc_config(config):
    return config.with_overrides({"run.interference": False})


def test_orbital_mechanics(config):
    orbit = config.with_overrides({"satellite.height_km": 600.0}).orbit
    v = geo.satellite_speed(orbit) / 1e3
    t = geo.orbital_period(orbit) / 60
    report(1, "orbital mechanics", abs(v - 7.5) <= 0.1 and abs(t - 96) <= 1,
           f"speed {v:.4f} km/s (7.5 +/- 0.1), period {t:.3f} min (96 +/- 1)")


def test_channel_normalization(config):
    params = config.channels[Band.W2]
    d = 500.0
    expected = float(ch.mean_path_gain(d, params))
    rng = np.random.default_rng(2024)
    errors = []
    for k_db in (0.0, 10.0, 20.0):
        nlos = ch.complex_normal(rng, 100_000)
        h = ch.rician_gain(d, ch.db_to_linear(k_db), params, nlos)
        errors.append(abs(np.mean(np.abs(h) ** 2) / expected - 1))
    report(2, "channel normalization", max(errors) < 0.02,
           "relative error " + ", ".join(f"K={k}dB {e:.4%}" for k, e in zip((0, 10, 20), errors)) + " (< 2%)")


def test_oracle_dominance():
    checks = bad = 0
    for i in range(1000):
        inst = random_instance(streams.substream(0, streams.INSTANCES, i))
        inputs = inst.to_frame_inputs()
        best = solve_exact(inst)
        bad += bool(verify_schedule(solution_schedule(inst, best), inputs))
        for name, algo in ALGORITHMS.items():
            rng = streams.order_stream(0, i) if algo.randomized else None
            held, res = algo.switch(inputs, rng)
            hold = hold_frame(held, inputs, algo.hold_ordering, streams.order_stream(0, i))
            for r in (res, hold):
                checks += 1
                bad += bool(verify_schedule(r, inputs)) or r.weighted_sum > best.value + 1e-9
    report(3, "oracle dominance", bad == 0, f"1000 instances, {checks} schedules, {bad} failures")


def test_algorithm_ordering(acc_config):
    grid = engine.SweepGrid("train_speed", (500,), SEEDS)
    m = {a: v[500] for a, v in means(engine.sweep(acc_config, grid, ALGOS)).items()}
    ok = m["mwfs"] >= m["rc"] >= m["mfs"] and m["sasl"] >= m["slo"]
    report(4, "algorithm ordering", ok,
           ", ".join(f"{a}={m[a]:.1f}" for a in ALGOS) + " (mwfs>=rc>=mfs, sasl>=slo)")


def test_speed_trend(acc_config):
    speeds = (100, 200, 300, 400, 500)
    results = engine.sweep(acc_config, engine.SweepGrid("train_speed", speeds, SEEDS), ALGOS)
    ws, bits = means(results), means(results, "bits")
    rising = [a for a in ALGOS if not non_increasing([ws[a][s] for s in speeds], 0.03)]
    bits_ok = bits["mwfs"][500] > bits["rc"][500]
    detail = "; ".join(f"{a} {fmt(ws[a][s] for s in speeds)}" for a in ALGOS)
    detail += f"; bits@500 mwfs={bits['mwfs'][500]:.4e} rc={bits['rc'][500]:.4e}"
    if rising:
        detail += f"; increasing beyond 3%: {', '.join(rising)}"
    report(5, "speed trend", not rising and bits_ok, detail)


def test_switch_period_trend(acc_config):
    periods = tuple(range(1, 11))
    ws = means(engine.sweep(acc_config, engine.SweepGrid("switch_period", periods, SEEDS), ALGOS))
    rising = [a for a in ALGOS if not non_increasing([ws[a][p] for p in periods], 0.03)]
    not_max = [p for p in periods if ws["mwfs"][p] < max(ws[a][p] for a in ALGOS)]
    detail = "; ".join(f"{a} {fmt(ws[a][p] for p in periods)}" for a in ALGOS)
    report(6, "switch-period trend", not rising and not not_max,
           detail + f"; increasing: {rising or 'none'}; mwfs not maximal at: {not_max or 'none'}")


def test_satellite_height_sensitivity(acc_config):
    heights = (300, 600, 900, 1200, 1500)
    ws = means(engine.sweep(acc_config, engine.SweepGrid("satellite_height", heights, SEEDS), ALGOS))
    spread = {a: (max(ws[a].values()) - min(ws[a].values())) / max(ws[a].values()) for a in ("slo", "mfs")}
    flat_ok = all(s < 0.02 for s in spread.values())
    above = [h for h in heights if h >= 600]
    decline = {a: all(ws[a][x] >= ws[a][y] for x, y in zip(above, above[1:])) and ws[a][1500] < ws[a][600]
               for a in ("mwfs", "rc", "sasl")}
    detail = "; ".join(f"{a} {fmt(ws[a][h] for h in heights)}" for a in ALGOS)
    detail += "; spread " + ", ".join(f"{a} {s:.2%}" for a, s in spread.items()) + " (< 2%)"
    detail += "; declining above 600 km: " + ", ".join(f"{a}={d}" for a, d in decline.items())
    report(7, "satellite-height sensitivity", flat_ok and all(decline.values()), detail)


def test_determinism(tmp_path):
    paths = []
    for name in ALGOS:
        for attempt in (0, 1):
            p = tmp_path / f"{name}{attempt}.csv"
            with redirect_stdout(io.StringIO()):
                assert cli.main(["run", "--algorithm", name, "--frames", "300", "--seed", "9", "--out", str(p)]) == 0
            paths.append(p)
    same = all(paths[i].read_bytes() == paths[i + 1].read_bytes() for i in range(0, len(paths), 2))
    report(8, "determinism", same, f"{len(ALGOS)} schedulers, 300 frames, two invocations each, byte-identical={same}")


def test_budget_conservation(acc_config):
    worst = 0
    frames = 0
    for name in ALGOS:
        for seed in (1, 2):
            r = engine.run(acc_config, name, seed=seed)
            frames += r.frames
            for f in r.per_frame:
                for tx in Tx:
                    used = sum(b.count for a in f.assignments for b in a.blocks if b.tx is tx)
                    assert used == f.slots_used[tx]
                    worst = max(worst, used)
    m = acc_config.frame.slots
    report(9, "budget conservation", worst <= m, f"{frames} frames checked, max slots on one transmitter {worst} <= M={m}")
