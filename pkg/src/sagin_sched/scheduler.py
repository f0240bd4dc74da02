"""Link selection, multi-link weighted flow scheduling (MWFS) and baselines.

Every scheduler consumes a :class:`FrameInputs` snapshot: the flows of one
frame and, for each flow, the routes whose coverage test passed together with
their per-hop slot demands. Routes are

* ``BS1``/``BS2``/``BS3`` - direct BS to MR,
* ``SATELLITE`` - direct satellite to MR,
* ``AIRSHIP`` - satellite to airship to MR. It charges the hop demand on the
  satellite budget and hop + airship demand on the airship budget (the airship
  receives, then forwards).

Admission is always tentative: a route is taken only if every budget it
charges stays non-negative, otherwise the budgets are left untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ParameterError, SchedulerError
from .scenario import BS_TX, Flow, Tx


class Route(str, Enum):
    BS1 = "BS1"
    BS2 = "BS2"
    BS3 = "BS3"
    AIRSHIP = "AIRSHIP"
    SATELLITE = "SATELLITE"


ROUTES = tuple(Route)
BS_ROUTES = (Route.BS1, Route.BS2, Route.BS3)
ROUTE_OF_BS = dict(zip(BS_TX, BS_ROUTES))


@dataclass(frozen=True, slots=True)
class Hop:
    tx: Tx
    slots: float  # int, or math.inf when the link cannot carry the flow
    bits_per_slot: int


@dataclass(frozen=True, slots=True)
class RouteOption:
    route: Route
    hops: tuple[Hop, ...]

    def charges(self) -> dict[Tx, float]:
        if self.route is Route.AIRSHIP:
            sat, air = self.hops
            return {Tx.SATELLITE: sat.slots, Tx.AIRSHIP: sat.slots + air.slots}
        (hop,) = self.hops
        return {hop.tx: hop.slots}

    @property
    def demand(self) -> float:
        """Slots the route occupies in total; the tie-break key within a weight class."""
        return sum(h.slots for h in self.hops)

    @property
    def feasible(self) -> bool:
        return all(math.isfinite(h.slots) for h in self.hops)


@dataclass(frozen=True)
class FrameInputs:
    frame: int
    slots: int
    flows: tuple[Flow, ...]
    required_bits: Mapping[int, int]
    options: Mapping[int, Mapping[Route, RouteOption]]

    def __post_init__(self):
        if self.slots < 1:
            raise ParameterError("a frame needs at least one slot")

    def flow(self, flow_id: int) -> Flow:
        for f in self.flows:
            if f.id == flow_id:
                return f
        raise KeyError(flow_id)

    def flow_by_mr(self) -> dict[int, Flow]:
        return {f.mr_index: f for f in self.flows}


@dataclass(frozen=True)
class SlotBlock:
    tx: Tx
    start: int
    count: int


@dataclass(frozen=True)
class Assignment:
    flow_id: int
    mr_index: int
    weight: float
    route: Route
    blocks: tuple[SlotBlock, ...]
    bits: int


@dataclass(frozen=True)
class FrameResult:
    frame: int
    weighted_sum: float
    transmitted_bits: int
    assignments: tuple[Assignment, ...]
    slots_used: Mapping[Tx, int]

    @property
    def completed_flows(self) -> list[tuple[int, float, Route]]:
        return [(a.flow_id, a.weight, a.route) for a in self.assignments]

    @property
    def per_transmitter_slots_used(self) -> Mapping[Tx, int]:
        return self.slots_used


@dataclass(frozen=True)
class ScheduleState:
    remaining: Mapping[Tx, int]
    assignments: Mapping[int, Route]
    completed: frozenset[int]
    # MR indices admitted per route on the last switch frame.
    held: Mapping[Route, tuple[int, ...]]


@dataclass(frozen=True)
class LinkSets:
    s_bs: Mapping[Tx, tuple[int, ...]]
    s_airship: tuple[int, ...]
    s_satellite: tuple[int, ...]
    gamma_bs: Mapping[Tx, float]
    cleared: bool = False

    @property
    def bs_union(self) -> frozenset[int]:
        return frozenset(fid for ids in self.s_bs.values() for fid in ids)


@dataclass(frozen=True)
class QueueEntry:
    flow_id: int
    weight: float
    demand: float
    option: RouteOption


@dataclass(frozen=True)
class OrderedQueues:
    bs: Mapping[Tx, tuple[QueueEntry, ...]]
    airship: tuple[QueueEntry, ...]
    satellite: tuple[QueueEntry, ...]


class _SlotLedger:
    """Per-frame budgets and contiguous slot allocation for every transmitter."""

    def __init__(self, inputs: FrameInputs):
        self.inputs = inputs
        self.remaining = {tx: inputs.slots for tx in Tx}
        self._cursor = {tx: 0 for tx in Tx}
        self.assignments: list[Assignment] = []
        self.admitted: set[int] = set()

    def fits(self, option: RouteOption) -> bool:
        return all(self.remaining[tx] - c >= 0 for tx, c in option.charges().items())

    def try_admit(self, flow: Flow, option: RouteOption | None) -> bool:
        if option is None or flow.id in self.admitted or not self.fits(option):
            return False
        blocks = []
        for tx, count in option.charges().items():
            count = int(count)
            blocks.append(SlotBlock(tx, self._cursor[tx], count))
            self._cursor[tx] += count
            self.remaining[tx] -= count
        bits = sum(int(h.slots) * h.bits_per_slot for h in option.hops)
        self.assignments.append(Assignment(flow.id, flow.mr_index, flow.weight, option.route, tuple(blocks), bits))
        self.admitted.add(flow.id)
        return True

    def result(self) -> FrameResult:
        used = {tx: self.inputs.slots - r for tx, r in self.remaining.items()}
        return FrameResult(
            frame=self.inputs.frame,
            weighted_sum=math.fsum(a.weight for a in self.assignments),
            transmitted_bits=sum(a.bits for a in self.assignments),
            assignments=tuple(self.assignments),
            slots_used=used,
        )

    def state(self) -> ScheduleState:
        held: dict[Route, list[int]] = {r: [] for r in ROUTES}
        for a in self.assignments:
            held[a.route].append(a.mr_index)
        return ScheduleState(
            remaining=dict(self.remaining),
            assignments={a.flow_id: a.route for a in self.assignments},
            completed=frozenset(self.admitted),
            held={r: tuple(v) for r, v in held.items()},
        )


def select_links(inputs: FrameInputs, clear: bool = True) -> LinkSets:
    """Sort the frame's flows into BS, airship and satellite candidate sets.

    A flow joins ``s_bs[j]`` when its MR is inside BS j's coverage, the airship
    set when both the MR-airship and satellite-airship links are in range, and
    the satellite set when the MR-satellite link is in range. Gamma_j sums the
    slot demand BS j would need for every BS-covered flow (infinite if BS j
    does not cover one of them). If some BS could carry every flow of the frame
    on its own, the airship and satellite sets are emptied (unless ``clear`` is
    false, as for the baselines).
    """
    s_bs: dict[Tx, list[int]] = {tx: [] for tx in BS_TX}
    s_air: list[int] = []
    s_sat: list[int] = []
    in_bs: list[int] = []
    for f in inputs.flows:
        opts = inputs.options.get(f.id, {})
        covering = [tx for tx in BS_TX if ROUTE_OF_BS[tx] in opts]
        if covering:
            in_bs.append(f.id)
            for tx in covering:
                s_bs[tx].append(f.id)
        if Route.AIRSHIP in opts:
            s_air.append(f.id)
        if Route.SATELLITE in opts:
            s_sat.append(f.id)

    gamma: dict[Tx, float] = {}
    for tx in BS_TX:
        route = ROUTE_OF_BS[tx]
        total = 0
        for fid in in_bs:
            opt = inputs.options[fid].get(route)
            total += opt.hops[0].slots if opt is not None else math.inf
        gamma[tx] = total

    # The clearing step only applies when the BS-covered flows are all the flows.
    cleared = clear and bool(in_bs) and len(in_bs) == len(inputs.flows) and min(gamma.values()) <= inputs.slots
    if cleared:
        s_air, s_sat = [], []
    return LinkSets({tx: tuple(v) for tx, v in s_bs.items()}, tuple(s_air), tuple(s_sat), gamma, cleared)


def priority_key(entry: QueueEntry):
    return (-entry.weight, entry.demand, entry.flow_id)


def demand_key(entry: QueueEntry):
    return (entry.demand, entry.flow_id)


def _entries(inputs: FrameInputs, flow_ids: Iterable[int], route: Route) -> list[QueueEntry]:
    weight = {f.id: f.weight for f in inputs.flows}
    out = []
    for fid in flow_ids:
        opt = inputs.options[fid][route]
        out.append(QueueEntry(fid, weight[fid], opt.demand, opt))
    return out


def build_queues(sets: LinkSets, inputs: FrameInputs, key: Callable[[QueueEntry], tuple] = priority_key) -> OrderedQueues:
    """Order each candidate set by weight (desc), slot demand (asc), flow id (asc)."""
    return OrderedQueues(
        bs={tx: tuple(sorted(_entries(inputs, ids, ROUTE_OF_BS[tx]), key=key)) for tx, ids in sets.s_bs.items()},
        airship=tuple(sorted(_entries(inputs, sets.s_airship, Route.AIRSHIP), key=key)),
        satellite=tuple(sorted(_entries(inputs, sets.s_satellite, Route.SATELLITE), key=key)),
    )


def _run_queues(inputs: FrameInputs, queues: Sequence[Sequence[QueueEntry]]) -> _SlotLedger:
    ledger = _SlotLedger(inputs)
    flows = {f.id: f for f in inputs.flows}
    for queue in queues:
        for entry in queue:
            ledger.try_admit(flows[entry.flow_id], entry.option)
    return ledger


def mwfs_switch_frame(queues: OrderedQueues, inputs: FrameInputs) -> tuple[ScheduleState, FrameResult]:
    """Greedy admission on a link-switching frame.

    BS queues go first, then the satellite-airship-MR queue, then the direct
    satellite queue; flows completed on an earlier queue are skipped.
    """
    order = [queues.bs[tx] for tx in BS_TX] + [queues.airship, queues.satellite]
    ledger = _run_queues(inputs, order)
    return ledger.state(), ledger.result()


def hold_frame(held: ScheduleState | None, inputs: FrameInputs, ordering: str = "priority",
               rng: np.random.Generator | None = None) -> FrameResult:
    """Re-admit the flows of held MRs on their frozen routes with fresh budgets.

    Demands come from the current frame, so a held flow whose MR has left the
    route's coverage, or whose demand no longer fits, stays incomplete.
    """
    if held is None:
        raise SchedulerError("hold frame requested before any link-switching frame")
    by_mr = inputs.flow_by_mr()
    queues = []
    for route in ROUTES:
        entries = []
        for mr in held.held.get(route, ()):
            f = by_mr.get(mr)
            if f is None:
                continue
            opt = inputs.options.get(f.id, {}).get(route)
            if opt is None:
                continue
            entries.append(QueueEntry(f.id, f.weight, opt.demand, opt))
        queues.append(_order(entries, ordering, rng))
    return _run_queues(inputs, queues).result()


def mwfs_hold_frame(held: ScheduleState | None, inputs: FrameInputs) -> FrameResult:
    return hold_frame(held, inputs, "priority")


def _order(entries: list[QueueEntry], ordering: str, rng: np.random.Generator | None) -> list[QueueEntry]:
    if ordering == "priority":
        return sorted(entries, key=priority_key)
    if ordering == "demand":
        return sorted(entries, key=demand_key)
    if ordering == "random":
        if rng is None:
            raise ParameterError("random ordering needs a random stream")
        entries = sorted(entries, key=lambda e: e.flow_id)
        return [entries[i] for i in rng.permutation(len(entries))]
    raise ParameterError(f"unknown ordering '{ordering}'")


def mwfs(inputs: FrameInputs, rng: np.random.Generator | None = None) -> tuple[ScheduleState, FrameResult]:
    sets = select_links(inputs)
    return mwfs_switch_frame(build_queues(sets, inputs), inputs)


# Baselines --------------------------------------------------------------------

def _blo(inputs, rng=None):
    queues = build_queues(select_links(inputs, clear=False), inputs)
    ledger = _run_queues(inputs, [queues.bs[tx] for tx in BS_TX])
    return ledger.state(), ledger.result()


def _slo(inputs, rng=None):
    queues = build_queues(_raw_sets(inputs), inputs)
    ledger = _run_queues(inputs, [queues.airship])
    return ledger.state(), ledger.result()


def _sasl(inputs, rng=None):
    queues = build_queues(_raw_sets(inputs), inputs)
    ledger = _run_queues(inputs, [queues.airship, queues.satellite])
    return ledger.state(), ledger.result()


def _mfs(inputs, rng=None):
    """Relay selection, then demand-ascending scheduling per relay.

    Each flow is bound to the BS or satellite-airship route that loads its
    busiest transmitter least; there is no fallback if that route is full and
    the direct satellite route is never used.
    """
    chosen: dict[Route, list[QueueEntry]] = {r: [] for r in (*BS_ROUTES, Route.AIRSHIP)}
    for f in inputs.flows:
        opts = inputs.options.get(f.id, {})
        candidates = [opts[r] for r in (*BS_ROUTES, Route.AIRSHIP) if r in opts]
        if not candidates:
            continue
        best = min(candidates, key=lambda o: (max(o.charges().values()), ROUTES.index(o.route)))
        chosen[best.route].append(QueueEntry(f.id, f.weight, best.demand, best))
    ledger = _run_queues(inputs, [sorted(chosen[r], key=demand_key) for r in chosen])
    return ledger.state(), ledger.result()


def _rc(inputs, rng=None):
    """Random flow order; each flow takes a uniformly random route that still fits."""
    if rng is None:
        raise ParameterError("RC needs a random stream")
    ledger = _SlotLedger(inputs)
    flows = sorted(inputs.flows, key=lambda f: f.id)
    for idx in rng.permutation(len(flows)):
        f = flows[idx]
        opts = inputs.options.get(f.id, {})
        fitting = [opts[r] for r in ROUTES if r in opts and ledger.fits(opts[r])]
        if fitting:
            ledger.try_admit(f, fitting[int(rng.integers(len(fitting)))])
    return ledger.state(), ledger.result()


def _raw_sets(inputs: FrameInputs) -> LinkSets:
    return select_links(inputs, clear=False)


BASELINES = ("blo", "slo", "sasl", "mfs", "rc")
_BASELINE_FUNCS = {"blo": _blo, "slo": _slo, "sasl": _sasl, "mfs": _mfs, "rc": _rc}


def baseline(kind: str, inputs: FrameInputs, rng: np.random.Generator | None = None) -> FrameResult:
    return baseline_switch(kind, inputs, rng)[1]


def baseline_switch(kind: str, inputs: FrameInputs,
                    rng: np.random.Generator | None = None) -> tuple[ScheduleState, FrameResult]:
    try:
        func = _BASELINE_FUNCS[kind.lower()]
    except KeyError:
        raise ParameterError(f"unknown baseline '{kind}'; valid: {', '.join(BASELINES)}") from None
    return func(inputs, rng)


@dataclass(frozen=True)
class Algorithm:
    """A scheduler as the engine drives it: a switch-frame step plus a hold ordering."""

    name: str
    switch: Callable[[FrameInputs, np.random.Generator | None], tuple[ScheduleState, FrameResult]]
    hold_ordering: str
    randomized: bool = False

    def step(self, inputs: FrameInputs, held: ScheduleState | None, switching: bool,
             rng: np.random.Generator | None = None) -> tuple[ScheduleState | None, FrameResult]:
        if switching:
            return self.switch(inputs, rng)
        return held, hold_frame(held, inputs, self.hold_ordering, rng)


ALGORITHMS: dict[str, Algorithm] = {
    "mwfs": Algorithm("mwfs", mwfs, "priority"),
    "blo": Algorithm("blo", _blo, "priority"),
    "slo": Algorithm("slo", _slo, "priority"),
    "sasl": Algorithm("sasl", _sasl, "priority"),
    "mfs": Algorithm("mfs", _mfs, "demand"),
    "rc": Algorithm("rc", _rc, "random", randomized=True),
}


def get_algorithm(name: str) -> Algorithm:
    try:
        return ALGORITHMS[name.lower()]
    except KeyError:
        raise ParameterError(f"unknown algorithm '{name}'; valid: {', '.join(ALGORITHMS)}") from None


# Verification -----------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    constraint: str
    flow_id: int | None
    detail: str


def verify_schedule(result: FrameResult, inputs: FrameInputs) -> list[Violation]:
    """Check a frame schedule against the throughput, route and slot constraints.

    Labels: ``throughput`` (direct route short of the required bits),
    ``relay_uplink`` / ``relay_forward`` (a relay hop short of them),
    ``direct_hops`` / ``relay_hops`` (wrong transmitters for the route),
    ``single_route`` (flow served twice) and ``slot_overlap`` (slot shared or
    out of frame), plus the ``coverage``, ``budget`` and ``metrics``
    bookkeeping checks.
    """
    out: list[Violation] = []
    flows = {f.id: f for f in inputs.flows}
    per_flow: dict[int, int] = {}
    blocks_by_tx: dict[Tx, list[tuple[SlotBlock, int]]] = {tx: [] for tx in Tx}

    for a in result.assignments:
        per_flow[a.flow_id] = per_flow.get(a.flow_id, 0) + 1
        for b in a.blocks:
            blocks_by_tx[b.tx].append((b, a.flow_id))
        if a.flow_id not in flows:
            out.append(Violation("coverage", a.flow_id, "assignment for a flow not in this frame"))
            continue
        opt = inputs.options.get(a.flow_id, {}).get(a.route)
        if opt is None:
            out.append(Violation("coverage", a.flow_id, f"route {a.route.value} not available to this flow"))
            continue
        need = inputs.required_bits[a.flow_id]
        by_tx = {b.tx: b for b in a.blocks}
        if a.route is Route.AIRSHIP:
            if set(by_tx) != {Tx.SATELLITE, Tx.AIRSHIP} or len(a.blocks) != 2:
                out.append(Violation("relay_hops", a.flow_id, "relay route must use exactly the satellite and airship hops"))
                continue
            sat_hop, air_hop = opt.hops
            received = by_tx[Tx.SATELLITE].count
            forwarded = by_tx[Tx.AIRSHIP].count - received
            if received * sat_hop.bits_per_slot < need:
                out.append(Violation("relay_uplink", a.flow_id, f"satellite-airship hop carries {received * sat_hop.bits_per_slot} < {need} bits"))
            if forwarded < 0 or forwarded * air_hop.bits_per_slot < need:
                out.append(Violation("relay_forward", a.flow_id, f"airship-MR hop carries {max(forwarded, 0) * air_hop.bits_per_slot} < {need} bits"))
        else:
            (hop,) = opt.hops
            if len(a.blocks) != 1 or a.blocks[0].tx != hop.tx:
                out.append(Violation("direct_hops", a.flow_id, "direct route must use exactly its own transmitter"))
                continue
            carried = a.blocks[0].count * hop.bits_per_slot
            if carried < need:
                out.append(Violation("throughput", a.flow_id, f"throughput {carried} < {need} bits"))

    for fid, count in per_flow.items():
        if count > 1:
            out.append(Violation("single_route", fid, f"flow served on {count} routes"))

    for tx, blocks in blocks_by_tx.items():
        used = 0
        spans = sorted((b.start, b.start + b.count, fid) for b, fid in blocks if b.count > 0)
        for b, fid in blocks:
            used += b.count
            if b.start < 0 or b.start + b.count > inputs.slots or b.count < 0:
                out.append(Violation("slot_overlap", fid, f"{tx.value} block [{b.start},{b.start + b.count}) outside frame"))
        for (s0, e0, f0), (s1, e1, f1) in zip(spans, spans[1:]):
            if s1 < e0:
                out.append(Violation("slot_overlap", f1, f"{tx.value} slot {s1} shared by flows {f0} and {f1}"))
        if used > inputs.slots:
            out.append(Violation("budget", None, f"{tx.value} uses {used} > {inputs.slots} slots"))
        if result.slots_used.get(tx, 0) != used:
            out.append(Violation("budget", None, f"{tx.value} reports {result.slots_used.get(tx, 0)} slots, blocks sum to {used}"))

    if result.weighted_sum != math.fsum(a.weight for a in result.assignments):
        out.append(Violation("metrics", None, "weighted sum differs from the sum of completed weights"))
    if result.transmitted_bits != sum(a.bits for a in result.assignments):
        out.append(Violation("metrics", None, "transmitted bits differ from the per-assignment sum"))
    return out
