import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_inputs
from sagin_sched import engine, streams
from sagin_sched.errors import ParameterError, SchedulerError
from sagin_sched.oracle import random_instance, solve_exact
from sagin_sched.scenario import Tx
from sagin_sched.scheduler import (ALGORITHMS, Assignment, FrameResult, Route, SlotBlock, baseline,
                                   build_queues, hold_frame, mwfs, mwfs_hold_frame, mwfs_switch_frame,
                                   select_links, verify_schedule)

BS1, BS2, AIR, SAT = Route.BS1, Route.BS2, Route.AIRSHIP, Route.SATELLITE


def completed(result):
    return {a.flow_id for a in result.assignments}


def run_switch(name, inputs, seed=0):
    algo = ALGORITHMS[name]
    rng = streams.order_stream(seed, inputs.frame) if algo.randomized else None
    return algo.switch(inputs, rng)


class TestSelectLinks:
    def test_bs_can_carry_everything_clears_space_links(self):
        inputs = make_inputs(12, [(0.5, {BS2: 2, AIR: (2, 2), SAT: 3}), (1.0, {BS2: 3, SAT: 3})])
        sets = select_links(inputs)
        assert sets.cleared
        assert sets.s_airship == () and sets.s_satellite == ()
        assert sets.s_bs[Tx.BS2] == (0, 1)
        assert sets.gamma_bs[Tx.BS2] == 5

    def test_no_flows(self):
        sets = select_links(make_inputs(12, []))
        assert sets.s_airship == () and sets.s_satellite == () and not sets.bs_union

    def test_satellite_hidden(self):
        # Flow in airship range but with no satellite link: neither space set holds it.
        inputs = make_inputs(12, [(0.5, {BS1: 20})])
        sets = select_links(inputs)
        assert sets.s_airship == () and sets.s_satellite == ()

    def test_overloaded_bs_keeps_space_links(self):
        inputs = make_inputs(12, [(0.5, {BS1: 8, SAT: 4}), (0.5, {BS1: 8, AIR: (3, 3)})])
        sets = select_links(inputs)
        assert not sets.cleared
        assert sets.s_satellite == (0,) and sets.s_airship == (1,)

    def test_flow_outside_every_bs_blocks_clearing(self):
        inputs = make_inputs(12, [(0.5, {BS1: 1}), (0.5, {SAT: 4})])
        assert not select_links(inputs).cleared
        assert select_links(inputs).s_satellite == (1,)

    def test_gamma_infinite_when_bs_misses_a_flow(self):
        inputs = make_inputs(12, [(0.5, {BS1: 1}), (0.5, {BS2: 1})])
        sets = select_links(inputs)
        assert sets.gamma_bs[Tx.BS1] == math.inf and sets.gamma_bs[Tx.BS3] == math.inf


class TestQueues:
    def test_weight_order(self):
        inputs = make_inputs(12, [(0.2, {BS1: 1}), (1.0, {BS1: 1}), (0.5, {BS1: 1})])
        q = build_queues(select_links(inputs), inputs)
        assert [e.weight for e in q.bs[Tx.BS1]] == [1.0, 0.5, 0.2]

    def test_demand_breaks_weight_tie(self):
        inputs = make_inputs(12, [(0.5, {BS1: 7}), (0.5, {BS1: 3})])
        q = build_queues(select_links(inputs), inputs)
        assert [e.demand for e in q.bs[Tx.BS1]] == [3, 7]

    def test_id_breaks_full_tie(self):
        inputs = make_inputs(12, [(0.5, {BS1: 4}), (0.5, {BS1: 4})])
        q = build_queues(select_links(inputs), inputs)
        assert [e.flow_id for e in q.bs[Tx.BS1]] == [0, 1]


class TestMwfsSwitch:
    def test_single_flow(self):
        state, res = mwfs(make_inputs(12, [(0.8, {BS1: 5})]))
        assert res.weighted_sum == 0.8
        assert state.remaining[Tx.BS1] == 7
        assert state.held[BS1] == (1,)

    def test_small_demand_first_then_full_rejected(self):
        inputs = make_inputs(12, [(0.5, {BS1: 12}), (0.5, {BS1: 1})])
        _, res = mwfs(inputs)
        assert completed(res) == {1}
        assert res.weighted_sum == 0.5

    def test_greedy_below_optimum(self):
        inputs = make_inputs(12, [(1.0, {BS1: 10}), (0.8, {BS1: 6}), (0.8, {BS1: 6})])
        _, res = mwfs(inputs)
        assert res.weighted_sum == 1.0
        assert res.weighted_sum < 1.6

    def test_relay_charges_both_budgets(self):
        state, res = mwfs(make_inputs(12, [(1.0, {AIR: (3, 4)})]))
        assert state.remaining[Tx.SATELLITE] == 9
        assert state.remaining[Tx.AIRSHIP] == 5
        assert not verify_schedule(res, make_inputs(12, [(1.0, {AIR: (3, 4)})]))

    def test_relay_rejected_when_airship_sum_overflows(self):
        # 6 + 7 > 12 on the airship even though each hop alone fits.
        _, res = mwfs(make_inputs(12, [(1.0, {AIR: (6, 7)})]))
        assert res.weighted_sum == 0

    def test_bs_completion_skips_space_queues(self):
        inputs = make_inputs(12, [(1.0, {BS1: 8, SAT: 2}), (1.0, {BS1: 8, SAT: 2})])
        _, res = mwfs(inputs)
        routes = {a.flow_id: a.route for a in res.assignments}
        assert routes == {0: BS1, 1: SAT}

    def test_queues_entry_point(self):
        inputs = make_inputs(12, [(1.0, {BS1: 8, SAT: 2})])
        _, res = mwfs_switch_frame(build_queues(select_links(inputs), inputs), inputs)
        assert res.weighted_sum == 1.0


class TestMwfsHold:
    def test_unchanged_channel_same_set(self):
        inputs = make_inputs(12, [(1.0, {BS1: 4}), (0.5, {BS1: 6}), (0.2, {SAT: 9})])
        state, res = mwfs(inputs)
        again = mwfs_hold_frame(state, make_inputs(12, [(1.0, {BS1: 4}), (0.5, {BS1: 6}), (0.2, {SAT: 9})], frame=2))
        assert completed(again) == completed(res)

    def test_grown_demand_fails_alone(self):
        state, _ = mwfs(make_inputs(12, [(1.0, {BS1: 4}), (0.5, {BS2: 6})]))
        res = mwfs_hold_frame(state, make_inputs(12, [(1.0, {BS1: 4}), (0.5, {BS2: 13})], frame=2))
        assert completed(res) == {0}

    def test_lost_coverage_fails(self):
        state, _ = mwfs(make_inputs(12, [(1.0, {BS1: 4})]))
        res = mwfs_hold_frame(state, make_inputs(12, [(1.0, {BS2: 4})], frame=2))
        assert res.weighted_sum == 0

    def test_routes_frozen(self):
        # Frame 2 would prefer BS1, but the held route is the satellite.
        state, _ = mwfs(make_inputs(12, [(1.0, {SAT: 4})]))
        res = mwfs_hold_frame(state, make_inputs(12, [(1.0, {BS1: 2, SAT: 5})], frame=2))
        assert [a.route for a in res.assignments] == [SAT]

    def test_needs_switch_state(self):
        with pytest.raises(SchedulerError):
            mwfs_hold_frame(None, make_inputs(12, [(1.0, {BS1: 1})]))

    def test_reoptimised_hold_beats_naive_reuse(self, config):
        frames = engine.prepare_frames(config.with_overrides({"frame.switch_period_frames": 2}), 3, 1200)
        first, second = frames[1000], frames[1001]
        state, res = mwfs(first)
        alg = mwfs_hold_frame(state, second)
        # Naive reuse: a frame-2 flow completes only if its demand fits the slots its MR got in frame 1.
        granted = {a.mr_index: (a.route, {b.tx: b.count for b in a.blocks}) for a in res.assignments}
        naive = 0.0
        for f in second.flows:
            if f.mr_index not in granted:
                continue
            route, slots = granted[f.mr_index]
            opt = second.options[f.id].get(route)
            if opt is not None and all(c <= slots.get(tx, 0) for tx, c in opt.charges().items()):
                naive += f.weight
        assert alg.weighted_sum >= naive


class TestBaselines:
    def test_blo_outside_coverage(self):
        res = baseline("blo", make_inputs(12, [(1.0, {SAT: 2}), (0.5, {AIR: (1, 1)})]))
        assert res.weighted_sum == 0

    def test_route_restrictions(self):
        inputs = make_inputs(12, [(1.0, {BS1: 2}), (0.8, {AIR: (2, 2)}), (0.5, {SAT: 2})])
        assert completed(baseline("blo", inputs)) == {0}
        assert completed(baseline("slo", inputs)) == {1}
        assert completed(baseline("sasl", inputs)) == {1, 2}
        assert completed(baseline("mfs", inputs)) == {0, 1}

    def test_mfs_ignores_weight(self):
        inputs = make_inputs(12, [(1.0, {BS1: 10}), (0.2, {BS1: 3}), (0.2, {BS1: 3})])
        assert completed(baseline("mfs", inputs)) == {1, 2}

    def test_mfs_relay_choice_has_no_fallback(self):
        # Both flows prefer BS1 (smaller load); the second does not fit and is not retried on the relay.
        inputs = make_inputs(12, [(1.0, {BS1: 8, AIR: (5, 5)}), (1.0, {BS1: 9, AIR: (5, 5)})])
        assert completed(baseline("mfs", inputs)) == {0}

    def test_rc_single_choice_equals_mwfs(self):
        inputs = make_inputs(12, [(0.8, {BS2: 5})])
        _, a = mwfs(inputs)
        b = baseline("rc", inputs, np.random.default_rng(9))
        assert a.completed_flows == b.completed_flows

    def test_rc_deterministic(self):
        inputs = make_inputs(12, [(0.8, {BS1: 5, SAT: 4}), (0.5, {BS1: 6, SAT: 6}), (1.0, {BS1: 4, AIR: (2, 3)})])
        a = baseline("rc", inputs, streams.order_stream(4, 1))
        b = baseline("rc", inputs, streams.order_stream(4, 1))
        assert a == b

    def test_rc_needs_stream(self):
        with pytest.raises(ParameterError):
            baseline("rc", make_inputs(12, []))

    def test_unknown(self):
        with pytest.raises(ParameterError, match="blo"):
            baseline("xyz", make_inputs(12, []))


class TestVerify:
    def test_double_booking(self):
        inputs = make_inputs(12, [(1.0, {BS1: 4}), (1.0, {BS1: 4})])
        bits = 720720
        res = FrameResult(1, 2.0, 2 * bits, (
            Assignment(0, 1, 1.0, BS1, (SlotBlock(Tx.BS1, 0, 4),), bits),
            Assignment(1, 2, 1.0, BS1, (SlotBlock(Tx.BS1, 2, 4),), bits),
        ), {tx: (8 if tx is Tx.BS1 else 0) for tx in Tx})
        violations = verify_schedule(res, inputs)
        assert [v.constraint for v in violations] == ["slot_overlap"]

    def test_short_throughput(self):
        inputs = make_inputs(12, [(1.0, {BS1: 4})])
        per_slot = 720720 // 4
        res = FrameResult(1, 1.0, 3 * per_slot, (Assignment(0, 1, 1.0, BS1, (SlotBlock(Tx.BS1, 0, 3),), 3 * per_slot),),
                          {tx: (3 if tx is Tx.BS1 else 0) for tx in Tx})
        assert [v.constraint for v in verify_schedule(res, inputs)] == ["throughput"]

    def test_relay_hops(self):
        inputs = make_inputs(12, [(1.0, {AIR: (3, 4)})])
        bits = 2 * 720720
        short = FrameResult(1, 1.0, bits, (Assignment(0, 1, 1.0, AIR, (SlotBlock(Tx.SATELLITE, 0, 3),
                                                                        SlotBlock(Tx.AIRSHIP, 0, 6)), bits),),
                            {Tx.BS1: 0, Tx.BS2: 0, Tx.BS3: 0, Tx.AIRSHIP: 6, Tx.SATELLITE: 3})
        assert [v.constraint for v in verify_schedule(short, inputs)] == ["relay_forward"]
        one_hop = FrameResult(1, 1.0, bits, (Assignment(0, 1, 1.0, AIR, (SlotBlock(Tx.AIRSHIP, 0, 7),), bits),),
                              {Tx.BS1: 0, Tx.BS2: 0, Tx.BS3: 0, Tx.AIRSHIP: 7, Tx.SATELLITE: 0})
        assert [v.constraint for v in verify_schedule(one_hop, inputs)] == ["relay_hops"]

    def test_two_routes_for_one_flow(self):
        inputs = make_inputs(12, [(1.0, {BS1: 4, SAT: 4})])
        b = 720720
        res = FrameResult(1, 2.0, 2 * b, (Assignment(0, 1, 1.0, BS1, (SlotBlock(Tx.BS1, 0, 4),), b),
                                          Assignment(0, 1, 1.0, SAT, (SlotBlock(Tx.SATELLITE, 0, 4),), b)),
                          {Tx.BS1: 4, Tx.BS2: 0, Tx.BS3: 0, Tx.AIRSHIP: 0, Tx.SATELLITE: 4})
        assert "single_route" in [v.constraint for v in verify_schedule(res, inputs)]

    def test_uncovered_route(self):
        inputs = make_inputs(12, [(1.0, {BS1: 4})])
        b = 720720
        res = FrameResult(1, 1.0, b, (Assignment(0, 1, 1.0, BS2, (SlotBlock(Tx.BS2, 0, 4),), b),),
                          {Tx.BS1: 0, Tx.BS2: 4, Tx.BS3: 0, Tx.AIRSHIP: 0, Tx.SATELLITE: 0})
        assert [v.constraint for v in verify_schedule(res, inputs)] == ["coverage"]

    def test_seeded_frames_clean(self, config):
        frames = engine.prepare_frames(config, 11, 1000)
        for name in ALGORITHMS:
            held = None
            for inputs in frames:
                held, res = run_switch(name, inputs, 11)
                assert verify_schedule(res, inputs) == []


instances = st.integers(0, 2**32 - 1).map(lambda s: random_instance(np.random.default_rng(s)))


class TestProperties:
    @settings(max_examples=300, deadline=None)
    @given(instances, st.sampled_from(sorted(ALGORITHMS)))
    def test_sound_and_bounded(self, inst, name):
        inputs = inst.to_frame_inputs()
        state, res = run_switch(name, inputs)
        assert verify_schedule(res, inputs) == []
        assert res.weighted_sum <= solve_exact(inst).value + 1e-9
        hold = hold_frame(state, inputs, ALGORITHMS[name].hold_ordering, np.random.default_rng(0))
        assert verify_schedule(hold, inputs) == []

    @settings(max_examples=200, deadline=None)
    @given(instances, st.sampled_from(sorted(ALGORITHMS)))
    def test_budget_conservation(self, inst, name):
        inputs = inst.to_frame_inputs()
        state, res = run_switch(name, inputs)
        for tx in Tx:
            assigned = sum(b.count for a in res.assignments for b in a.blocks if b.tx is tx)
            assert assigned + state.remaining[tx] == inputs.slots
            assert 0 <= state.remaining[tx] <= inputs.slots

    @settings(max_examples=300, deadline=None)
    @given(instances)
    def test_priority_greedy_replay(self, inst):
        inputs = inst.to_frame_inputs()
        queues = build_queues(select_links(inputs), inputs)
        _, res = mwfs_switch_frame(queues, inputs)
        done = {a.flow_id: a.route for a in res.assignments}
        remaining = {tx: inputs.slots for tx in Tx}
        seen = set()
        for queue in [queues.bs[tx] for tx in (Tx.BS1, Tx.BS2, Tx.BS3)] + [queues.airship, queues.satellite]:
            for e in queue:
                if e.flow_id in seen:
                    continue
                fits = all(remaining[tx] >= c for tx, c in e.option.charges().items())
                if done.get(e.flow_id) == e.option.route:
                    assert fits
                    for tx, c in e.option.charges().items():
                        remaining[tx] -= c
                    seen.add(e.flow_id)
                else:
                    assert not fits

    @settings(max_examples=200, deadline=None)
    @given(instances, st.floats(0.01, 100.0))
    def test_weight_scaling_keeps_completed_set(self, inst, factor):
        from sagin_sched.oracle import SmallInstance
        scaled = SmallInstance(inst.slots, {k: w * factor for k, w in inst.weights.items()}, inst.demands)
        _, a = mwfs(inst.to_frame_inputs())
        _, b = mwfs(scaled.to_frame_inputs())
        assert completed(a) == completed(b)


def test_rc_below_mwfs_over_seeds(config):
    rc, mw = [], []
    for seed in range(100):
        rc.append(engine.run(config, "rc", frames=150, seed=seed, keep_frames=False).cumulative_weighted_sum)
        mw.append(engine.run(config, "mwfs", frames=150, seed=seed, keep_frames=False).cumulative_weighted_sum)
    assert np.mean(rc) <= np.mean(mw)
