"""Brute-force maximiser of the weighted completed-flow objective on tiny instances.

The oracle works on integer slot demands, never on channel state, so it
checks the combinatorics of the schedulers in isolation.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import BoundsError
from .scenario import WEIGHTS, Flow, Tx
from .scheduler import (ROUTES, FrameInputs, FrameResult, Hop, Route, RouteOption, _SlotLedger)

MAX_CANDIDATES = 10_000
MAX_FLOWS = 3
MAX_SLOTS = 12

# Divisible by every integer 1..16, so bits/slot = REQUIRED // demand reproduces
# the demand exactly under the ceiling division used everywhere else.
REQUIRED_BITS = 720_720

_HOP_TX = {Route.BS1: Tx.BS1, Route.BS2: Tx.BS2, Route.BS3: Tx.BS3, Route.SATELLITE: Tx.SATELLITE}


@dataclass(frozen=True)
class SmallInstance:
    """Flows with fixed per-route slot demands and one slot budget ``slots``.

    ``demands[flow_id][route]`` is an int for direct routes and a
    ``(satellite_hop, airship_hop)`` pair for the relay route.
    """

    slots: int
    weights: Mapping[int, float]
    demands: Mapping[int, Mapping[Route, int | tuple[int, int]]]

    def __post_init__(self):
        if set(self.weights) != set(self.demands):
            raise ValueError("weights and demands must cover the same flow ids")

    @property
    def transmitters(self) -> frozenset[Tx]:
        used = set()
        for routes in self.demands.values():
            for r in routes:
                used.update((Tx.SATELLITE, Tx.AIRSHIP) if r is Route.AIRSHIP else (_HOP_TX[r],))
        return frozenset(used)

    def candidate_count(self) -> int:
        return math.prod(len(r) + 1 for r in self.demands.values())

    def check_bounds(self) -> None:
        if len(self.weights) > MAX_FLOWS:
            raise BoundsError(f"{len(self.weights)} flows exceed the oracle limit of {MAX_FLOWS}")
        if self.slots > MAX_SLOTS:
            raise BoundsError(f"M={self.slots} exceeds the oracle limit of {MAX_SLOTS}")
        if self.candidate_count() > MAX_CANDIDATES:
            raise BoundsError(f"{self.candidate_count()} candidate assignments exceed {MAX_CANDIDATES}")

    def to_frame_inputs(self, frame: int = 1) -> FrameInputs:
        flows = tuple(Flow(fid, fid + 1, 0.0, self.weights[fid], frame) for fid in sorted(self.weights))
        options = {}
        for fid, routes in self.demands.items():
            opts = {}
            for route, d in routes.items():
                if route is Route.AIRSHIP:
                    sat, air = d
                    hops = (Hop(Tx.SATELLITE, sat, REQUIRED_BITS // sat), Hop(Tx.AIRSHIP, air, REQUIRED_BITS // air))
                else:
                    hops = (Hop(_HOP_TX[route], d, REQUIRED_BITS // d),)
                opts[route] = RouteOption(route, hops)
            options[fid] = opts
        return FrameInputs(frame, self.slots, flows, {fid: REQUIRED_BITS for fid in self.weights}, options)

    def to_json(self) -> str:
        return json.dumps({
            "slots": self.slots,
            "flows": [
                {"id": fid, "weight": self.weights[fid],
                 "demands": {r.value: (list(d) if isinstance(d, tuple) else d) for r, d in self.demands[fid].items()}}
                for fid in sorted(self.weights)
            ],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SmallInstance":
        data = json.loads(text)
        weights, demands = {}, {}
        for f in data["flows"]:
            weights[f["id"]] = f["weight"]
            demands[f["id"]] = {Route(r): (tuple(d) if isinstance(d, list) else d) for r, d in f["demands"].items()}
        return cls(data["slots"], weights, demands)


@dataclass(frozen=True)
class OracleSolution:
    value: float
    assignment: Mapping[int, Route]


def solve_exact(instance: SmallInstance) -> OracleSolution:
    """Enumerate every skip/route choice per flow and keep the best feasible one.

    Ties in value go to the lexicographically smallest choice vector, with
    flows taken in id order and routes in the order BS1, BS2, BS3, AIRSHIP,
    SATELLITE, skip.
    """
    instance.check_bounds()
    inputs = instance.to_frame_inputs()
    fids = sorted(instance.weights)
    choices = [[r for r in ROUTES if r in instance.demands[fid]] + [None] for fid in fids]
    rank = {r: i for i, r in enumerate(ROUTES)}

    best_value, best_key, best = -1.0, None, {}
    for combo in itertools.product(*choices):
        used = {tx: 0 for tx in Tx}
        for fid, route in zip(fids, combo):
            if route is not None:
                for tx, c in inputs.options[fid][route].charges().items():
                    used[tx] += c
        if any(v > instance.slots for v in used.values()):
            continue
        value = math.fsum(instance.weights[fid] for fid, r in zip(fids, combo) if r is not None)
        key = tuple(len(ROUTES) if r is None else rank[r] for r in combo)
        if value > best_value + 1e-12 or (abs(value - best_value) <= 1e-12 and key < best_key):
            best_value, best_key = value, key
            best = {fid: r for fid, r in zip(fids, combo) if r is not None}
    return OracleSolution(max(best_value, 0.0), best)


def solution_schedule(instance: SmallInstance, solution: OracleSolution) -> FrameResult:
    """Materialise an oracle assignment as a slot-level frame schedule."""
    inputs = instance.to_frame_inputs()
    ledger = _SlotLedger(inputs)
    for f in inputs.flows:
        route = solution.assignment.get(f.id)
        if route is not None and not ledger.try_admit(f, inputs.options[f.id][route]):
            raise AssertionError("oracle assignment does not fit its own budgets")
    return ledger.result()


def random_instance(rng: np.random.Generator, max_flows: int = MAX_FLOWS, max_slots: int = MAX_SLOTS,
                    max_transmitters: int = 2) -> SmallInstance:
    """Draw an instance using at most ``max_transmitters`` budgets.

    The transmitter pool is one BS, the satellite, or the satellite plus
    airship (so the relay route is available), plus a second BS when room
    allows. Demands range over 1..M+2 so some routes never fit.
    """
    slots = int(rng.integers(1, max_slots + 1))
    n_flows = int(rng.integers(0, max_flows + 1))
    pools = [
        [Route.BS1],
        [Route.SATELLITE],
        [Route.BS1, Route.BS2],
        [Route.BS1, Route.SATELLITE],
        [Route.AIRSHIP, Route.SATELLITE],
        [Route.AIRSHIP],
    ]
    pools = [p for p in pools if _tx_count(p) <= max_transmitters]
    pool = pools[int(rng.integers(len(pools)))]
    weights, demands = {}, {}
    for fid in range(n_flows):
        weights[fid] = WEIGHTS[int(rng.integers(len(WEIGHTS)))]
        routes = {}
        for route in pool:
            if rng.random() < 0.25:
                continue  # out of coverage for this route
            if route is Route.AIRSHIP:
                routes[route] = (int(rng.integers(1, slots + 3)), int(rng.integers(1, slots + 3)))
            else:
                routes[route] = int(rng.integers(1, slots + 3))
        demands[fid] = routes
    return SmallInstance(slots, weights, demands)


def _tx_count(routes: Sequence[Route]) -> int:
    txs = set()
    for r in routes:
        txs.update((Tx.SATELLITE, Tx.AIRSHIP) if r is Route.AIRSHIP else (_HOP_TX[r],))
    return len(txs)
