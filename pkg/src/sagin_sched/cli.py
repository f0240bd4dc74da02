"""Command-line entry point: ``run``, ``figure`` and ``verify``.

Exit codes: 0 success, 1 bad flags or scenario, 2 internal verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from pathlib import Path
from typing import Mapping, Sequence

from . import engine, streams
from .errors import SaginError, VerificationError
from .oracle import random_instance, solution_schedule, solve_exact
from .scenario import Tx, load_scenario
from .scheduler import ALGORITHMS, Algorithm, hold_frame, verify_schedule

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2

RUN_HEADER = ["frame", "algorithm", "seed", "weighted_sum", "transmitted_bits", "completed_flows",
              "slots_bs1", "slots_bs2", "slots_bs3", "slots_airship", "slots_satellite"]
FIGURE_HEADER = ["axis", "algorithm", "mean", "min", "max"]
RECORD_HEADER = ["axis_value", "algorithm", "seed", "cumulative_weighted_sum", "cumulative_bits", "frames",
                 "wall_time_s"]

# figure id -> (sweep axis, metric, default values)
FIGURES: dict[int, tuple[str, str, tuple]] = {
    4: ("time", "weighted_sum", tuple(range(0, 3601, 360))),
    5: ("time", "bits", tuple(range(0, 3601, 360))),
    6: ("train_speed", "weighted_sum", (100, 200, 300, 400, 500)),
    7: ("train_speed", "bits", (100, 200, 300, 400, 500)),
    8: ("switch_period", "weighted_sum", tuple(range(1, 11))),
    9: ("switch_period", "bits", tuple(range(1, 11))),
    10: ("airship_height", "weighted_sum", (1, 2, 3, 4)),
    11: ("airship_height", "bits", (1, 2, 3, 4)),
    12: ("satellite_height", "weighted_sum", (300, 600, 900, 1200, 1500)),
    13: ("satellite_height", "bits", (300, 600, 900, 1200, 1500)),
    14: ("elevation_angle", "weighted_sum", (10, 20, 30, 40, 50, 60, 70, 80, 90)),
    15: ("elevation_angle", "bits", (10, 20, 30, 40, 50, 60, 70, 80, 90)),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def _num(value) -> str:
    """Full-precision, locale-free number formatting."""
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return str(value)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sagin-sched", description="mmWave HSR scheduling simulator for a space-air-ground network")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate one scenario with one scheduler")
    p.add_argument("--scenario", default="default", help="scenario TOML path or name (default: bundled)")
    p.add_argument("--algorithm", default="mwfs", help=f"one of: {', '.join(ALGORITHMS)}")
    p.add_argument("--frames", type=int, help="frame count (default: run.frames from the scenario)")
    p.add_argument("--seed", type=int, help="root seed (default: run.seed from the scenario)")
    p.add_argument("--out", help="per-frame CSV path; omitted means standard output")
    p.add_argument("--interference", choices=("on", "off"), help="override run.interference")

    p = sub.add_parser("figure", help="run a figure sweep for all six schedulers")
    p.add_argument("--figure", type=int, required=True, help="figure id, 4..15")
    p.add_argument("--seeds", type=int, default=10, help="seeds per sweep point (default 10)")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--scenario", default="default")
    p.add_argument("--frames", type=int, help="frames per run (default: run.frames)")
    p.add_argument("--values", help="comma-separated axis values overriding the figure's defaults")

    p = sub.add_parser("verify", help="check every scheduler against the exact oracle on random small instances")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Sequence[str] | None = None, *, schedulers: Mapping[str, Algorithm] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "figure":
            return cmd_figure(args)
        return cmd_verify(args, schedulers if schedulers is not None else ALGORITHMS)
    except VerificationError as exc:
        print(f"internal verification failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (SaginError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


def _load(args) -> "engine.ScenarioConfig":
    config = load_scenario(args.scenario)
    if getattr(args, "interference", None) is not None:
        config = config.with_overrides({"run.interference": args.interference == "on"})
    return config


def cmd_run(args) -> int:
    if args.algorithm.lower() not in ALGORITHMS:
        print(f"error: unknown algorithm '{args.algorithm}'; valid: {', '.join(ALGORITHMS)}", file=sys.stderr)
        return EXIT_USER
    if args.frames is not None and args.frames < 0:
        print("error: --frames must be non-negative", file=sys.stderr)
        return EXIT_USER
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USER
    config = _load(args)
    result = engine.run(config, args.algorithm, frames=args.frames, seed=args.seed)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUN_HEADER)
    for fr in result.per_frame:
        writer.writerow([fr.frame, result.algorithm, result.seed, _num(fr.weighted_sum), fr.transmitted_bits,
                         len(fr.assignments)] + [fr.slots_used[tx] for tx in Tx])
    summary = (f"algorithm={result.algorithm} seed={result.seed} frames={result.frames} "
               f"weighted_sum={_num(result.cumulative_weighted_sum)} bits={result.cumulative_bits} "
               f"wall_time_s={result.wall_time:.3f}")
    if args.out:
        Path(args.out).write_text(buf.getvalue())
        print(summary)
    else:
        sys.stdout.write(buf.getvalue())
        print(summary, file=sys.stderr)
    return EXIT_OK


def cmd_figure(args) -> int:
    if args.figure not in FIGURES:
        print(f"error: unknown figure {args.figure}; valid: {min(FIGURES)}..{max(FIGURES)}", file=sys.stderr)
        return EXIT_USER
    if args.seeds < 1 or args.jobs < 1:
        print("error: --seeds and --jobs must be at least 1", file=sys.stderr)
        return EXIT_USER
    axis, metric, values = FIGURES[args.figure]
    if args.values:
        values = tuple(float(v) if "." in v else int(v) for v in args.values.split(","))
    config = _load(args)
    if axis == "time" and args.frames is not None:
        values = tuple(v for v in values if v <= args.frames)
    grid = engine.SweepGrid(axis, tuple(values), args.seeds)
    results = engine.sweep(config, grid, list(ALGORITHMS), frames=args.frames, jobs=args.jobs)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple, list[float]] = {}
    for r in results:
        value = r.cumulative_weighted_sum if metric == "weighted_sum" else r.cumulative_bits
        groups.setdefault((r.sweep_point[1], r.algorithm), []).append(value)

    with open(out_dir / f"fig{args.figure}.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FIGURE_HEADER)
        for (point, algo), vals in groups.items():
            mean = math.fsum(vals) / len(vals) if metric == "weighted_sum" else sum(vals) / len(vals)
            writer.writerow([_num(point), algo, _num(float(mean)), _num(min(vals)), _num(max(vals))])
    with open(out_dir / f"fig{args.figure}_runs.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_HEADER)
        for r in results:
            writer.writerow([_num(r.sweep_point[1]), r.algorithm, r.seed, _num(r.cumulative_weighted_sum),
                             r.cumulative_bits, r.frames, f"{r.wall_time:.3f}"])
    print(f"figure {args.figure}: {len(results)} runs over axis '{axis}' -> {out_dir / f'fig{args.figure}.csv'}")
    return EXIT_OK


def cmd_verify(args, schedulers: Mapping[str, Algorithm]) -> int:
    if args.instances < 0:
        print("error: --instances must be non-negative", file=sys.stderr)
        return EXIT_USER
    checks = passed = 0
    start = time.perf_counter()
    for i in range(args.instances):
        instance = random_instance(streams.substream(args.seed, streams.INSTANCES, i))
        inputs = instance.to_frame_inputs()
        solution = solve_exact(instance)
        failures = [f"oracle: {v}" for v in verify_schedule(solution_schedule(instance, solution), inputs)]
        for name, algo in schedulers.items():
            rng = streams.order_stream(args.seed, i) if algo.randomized else None
            held, result = algo.switch(inputs, rng)
            hold = hold_frame(held, inputs, algo.hold_ordering, streams.order_stream(args.seed, i))
            for label, res in (("switch", result), ("hold", hold)):
                checks += 1
                problems = [str(v) for v in verify_schedule(res, inputs)]
                if res.weighted_sum > solution.value + 1e-9:
                    problems.append(f"weighted sum {res.weighted_sum} exceeds oracle optimum {solution.value}")
                if problems:
                    failures.append(f"{name} ({label} frame): " + "; ".join(problems))
                else:
                    passed += 1
        if failures:
            print(f"FAIL at instance {i}: {failures[0]}", file=sys.stderr)
            print(f"instance: {instance.to_json()}", file=sys.stderr)
            print(f"checked {checks} schedules, {passed} passed, {checks - passed} failed")
            return EXIT_INTERNAL
    print(f"verify: {args.instances} instances, {checks} schedules checked, {passed} passed, 0 failed "
          f"({time.perf_counter() - start:.2f}s)")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
