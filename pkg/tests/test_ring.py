import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ringroute.ring import (Protocol, RingSpec, apply_step, critical_rate, decode_block,
                            decompose_bidirectional, bidirectional_queue, draw_block,
                            new_ring, nominal_load, priority, step)
from ringroute.sim import replication_rng, run_replication, simulate, trajectory

ALL = list(Protocol)


def reference_trace(spec, steps, rng):
    state = new_ring(spec)
    out = []
    for _ in range(steps):
        step(state, rng)
        state.check()
        out.append(state.queue_lengths())
    return np.array(out), state


class TestSpec:
    def test_standard_sets_L(self):
        assert RingSpec.standard(5, 0.1).L == 4

    @pytest.mark.parametrize("kwargs", [
        dict(N=0, L=1), dict(N=3, L=0), dict(N=3, L=2, p=1.5), dict(N=3, L=2, p=-0.1),
    ])
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(ValueError):
            RingSpec(**kwargs)

    def test_geometric_bounds(self):
        with pytest.raises(ValueError):
            RingSpec.geometric_ring(4, lam=5, mu=1)
        spec = RingSpec.geometric_ring(4, lam=1, mu=2)
        assert spec.depart_prob == 0.5 and nominal_load(spec) == 0.5

    def test_roundtrip(self):
        for spec in (RingSpec.standard(4, 0.2, "EPF"), RingSpec(3, 2, 0.4),
                     RingSpec.geometric_ring(5, 1.0, 2.5)):
            assert RingSpec.from_dict(spec.to_dict()) == spec

    @pytest.mark.parametrize("spec", [RingSpec(3, 2), RingSpec(1, 2), RingSpec.standard(6, 0.2)])
    def test_new_ring_is_empty(self, spec):
        state = new_ring(spec)
        assert state.t == 0 and state.total_packets() == 0
        assert all(n.slot is None and not n.queue for n in state.nodes)


class TestLoads:
    def test_standard(self):
        assert nominal_load(RingSpec.standard(10, 0.1)) == pytest.approx(0.5)

    def test_nonstandard(self):
        assert nominal_load(RingSpec(7, 2, 0.5)) == pytest.approx(0.75)
        assert nominal_load(RingSpec(7, 2, 0.0)) == 0

    def test_critical(self):
        assert critical_rate(4) == 0.5
        assert critical_rate(2) == 1
        with pytest.raises(ValueError):
            critical_rate(1)

    def test_bidirectional_split(self):
        a, b = decompose_bidirectional(5, 1.0)
        assert a == b and a.L == 2 and a.p == 0.5
        assert bidirectional_queue(1.0) == 1.0
        assert bidirectional_queue(0.0) == 0.0
        with pytest.raises(ValueError):
            decompose_bidirectional(6, 0.2)

    def test_bidirectional_nine_by_simulation(self):
        a, b = decompose_bidirectional(9, 0.4)
        assert (a.L, a.p) == (4, 0.2)
        total = sum(simulate(s, 100_000, 4, seed=i).mean_queue for i, s in enumerate((a, b)))
        one = simulate(a, 100_000, 4, seed=7)
        assert total == pytest.approx(2 * one.mean_queue, rel=0.1)


class TestStepSemantics:
    def test_hot_potato_has_priority(self):
        spec = RingSpec(3, 3, 0.0)
        state = new_ring(spec)
        apply_step(state, [3, 0, 0])
        apply_step(state, [0, 2, 0])
        # node 1 now holds the newcomer; node 0's packet arrives there next
        apply_step(state, [0, 0, 0])
        assert state.nodes[1].slot.origin == 1 and state.nodes[1].slot.hops == 0
        assert state.nodes[2].slot.origin == 0
        state.check()

    def test_departure_frees_slot_same_step(self):
        spec = RingSpec(2, 1, 0.0)
        state = new_ring(spec)
        apply_step(state, [1, 1])
        apply_step(state, [1, 1])
        assert state.departures == 2 and state.queue_lengths() == [0, 0]

    def test_queue_advances_when_idle(self):
        spec = RingSpec(1, 2)
        state = new_ring(spec)
        apply_step(state, [2])
        apply_step(state, [1])
        assert state.queue_lengths() == [1]
        apply_step(state, [0])
        slot = state.nodes[0].slot
        assert state.queue_lengths() == [0] and slot.hops == 0 and slot.remaining == 1
        assert state.departures == 1

    def test_arrival_numbering_follows_node_index(self):
        state = new_ring(RingSpec(4, 2))
        apply_step(state, [1, 0, 2, 1])
        seqs = [n.slot.seq for n in state.nodes if n.slot]
        assert seqs == sorted(seqs) == [0, 1, 2]

    @pytest.mark.parametrize("proto", ALL)
    def test_priority_keys_are_tuples(self, proto):
        from ringroute.ring import Packet
        pk = Packet(0, 1, 0, 3)
        pk.arrived_at = 0
        assert isinstance(priority(proto, pk, 0), tuple)


@given(seed=st.integers(0, 2**32), N=st.integers(1, 6), L=st.integers(1, 5),
       p=st.floats(0, 1), proto=st.sampled_from(ALL), steps=st.integers(1, 60))
def test_conservation_and_hop_law(seed, N, L, p, proto, steps):
    spec = RingSpec(N, L, p, proto)
    rng = np.random.default_rng(seed)
    state = new_ring(spec)
    for _ in range(steps):
        before = {n.slot.seq: n.slot.remaining for n in state.nodes if n.slot}
        step(state, rng)
        state.check()
        for node in state.nodes:
            pk = node.slot
            if pk is not None and pk.seq in before:
                assert pk.remaining == before[pk.seq] - 1
        assert state.arrivals - state.departures == state.total_packets()


@given(seed=st.integers(0, 2**32), N=st.integers(1, 8), p=st.floats(0, 1),
       proto=st.sampled_from(ALL))
def test_L1_never_queues(seed, N, p, proto):
    spec = RingSpec(N, 1, p, proto)
    trace = trajectory(spec, 500, np.random.default_rng(seed))
    assert trace.max() == 0


@given(seed=st.integers(0, 2**32), N=st.integers(1, 5), L=st.integers(1, 4),
       p=st.floats(0, 0.9), proto=st.sampled_from(ALL))
def test_kernel_matches_reference(seed, N, L, p, proto):
    spec = RingSpec(N, min(L, max(N, 1) + 2), p, proto)
    ref, state = reference_trace(spec, 150, np.random.default_rng(seed))
    rep = run_replication(spec, 150, np.random.default_rng(seed), record=True, chunk=37)
    assert np.array_equal(rep.queue_trace, ref)
    final = rep.final.to_state(spec)
    assert final.queue_lengths() == state.queue_lengths()
    assert final.departures == state.departures and final.delay_sum == state.delay_sum


@given(seed=st.integers(0, 2**32), N=st.integers(1, 5), proto=st.sampled_from(["GHP", "FIFO", "LIS", "SIS", "EPF"]))
def test_geometric_kernel_matches_reference(seed, N, proto):
    spec = RingSpec.geometric_ring(N, lam=0.4 * N / 2, mu=N / 2, protocol=proto)
    ref, _ = reference_trace(spec, 120, np.random.default_rng(seed))
    rep = run_replication(spec, 120, np.random.default_rng(seed), record=True)
    assert np.array_equal(rep.queue_trace, ref)


def test_block_draw_matches_single_draws():
    spec = RingSpec(4, 3, 0.3)
    a = draw_block(spec, np.random.default_rng(5), 10)
    rng = np.random.default_rng(5)
    b = np.stack([draw_block(spec, rng) for _ in range(10)])
    assert np.array_equal(a, b)


def test_destinations_uniform():
    spec = RingSpec(1, 4, 1.0)
    rng = np.random.default_rng(0)
    counts = np.zeros(5, int)
    for _ in range(4000):
        arr, _ = decode_block(spec, draw_block(spec, rng))
        counts[arr[0]] += 1
    assert counts[0] == 0
    assert np.all(np.abs(counts[1:] - 1000) < 5 * math.sqrt(1000))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_l2_protocols_share_trajectories(seed):
    base = RingSpec(6, 2, 0.45)
    traces = [trajectory(base.with_(protocol=proto), 20_000, replication_rng(seed, 0))
              for proto in ("EPF", "SIS", "CTO", "FTG")]
    for other in traces[1:]:
        assert np.array_equal(traces[0], other)


def test_chunking_does_not_change_results():
    spec = RingSpec.standard(5, 0.3)
    a = run_replication(spec, 5000, replication_rng(3, 0), chunk=100)
    b = run_replication(spec, 5000, replication_rng(3, 0))
    assert np.array_equal(a.hist, b.hist) and a.delay_sum == b.delay_sum


class TestSimulate:
    def test_deterministic(self):
        spec = RingSpec(5, 2, 0.4)
        assert simulate(spec, 20_000, 3, seed=11).to_dict() == simulate(spec, 20_000, 3, seed=11).to_dict()

    def test_workers_do_not_matter(self):
        spec = RingSpec(5, 2, 0.4)
        assert simulate(spec, 10_000, 4, seed=2, workers=3).to_dict() == \
            simulate(spec, 10_000, 4, seed=2).to_dict()

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            simulate(RingSpec(3, 2, 0.1), 0)
        with pytest.raises(ValueError):
            simulate(RingSpec(3, 2, 0.1), 10, 0)

    def test_warns_when_overloaded(self):
        with pytest.warns(RuntimeWarning):
            simulate(RingSpec.standard(10, 0.3), 100)

    def test_empty_probability_three_nodes(self):
        st_ = simulate(RingSpec.standard(3, 0.4), 200_000, 8, seed=4)
        assert abs(st_.idle_fraction - 0.4) < 4 * st_.idle_fraction_se

    def test_idle_fraction_is_one_minus_load(self):
        spec = RingSpec.standard(6, 0.2)
        st_ = simulate(spec, 100_000, 8, seed=9)
        assert abs(st_.idle_fraction - (1 - nominal_load(spec))) < 4 * st_.idle_fraction_se

    def test_stats_ranges(self):
        st_ = simulate(RingSpec(4, 3, 0.3), 20_000, 2)
        assert 0 <= st_.idle_fraction <= 1
        assert st_.mean_queue >= 0 and st_.mean_packets >= st_.mean_queue
        assert set(st_.csv_row()) == set(st_.CSV_FIELDS)

    def test_protocol_marginals_agree(self):
        means = [simulate(RingSpec(5, 2, 0.4, proto), 100_000, 6, seed=1)
                 for proto in ("GHP", "EPF", "SIS", "CTO", "FTG")]
        for m in means:
            assert abs(m.mean_queue - 0.2) < 4 * m.mean_queue_se + 1e-3
