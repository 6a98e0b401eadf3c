from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from ringroute.lyapunov import (PhiParams, Phi, default_delta, drift_probe, f_reach,
                                loaded_state, phi, phi_vector, queue_trend, sample_states,
                                state_with_phi, trick_check, trick_violations,
                                weighted_queue_bound)
from ringroute.ring import Packet, RingSpec, apply_step, new_ring


def standard(N, r=0.8):
    return RingSpec.standard(N, 2 * r / N)


class TestParams:
    def test_default_delta(self):
        assert default_delta(0.4) == 0.5
        assert default_delta(0.9) == pytest.approx(0.0625)
        assert default_delta(0.6) == pytest.approx(0.5)

    @given(st.floats(0.01, 0.99))
    def test_default_delta_admissible(self, r):
        p = PhiParams(10, r, default_delta(r))
        assert p.r_hat < 1 and p.zeta > 1

    @pytest.mark.parametrize("r,delta", [(0.5, 0), (0.5, 1), (0.95, 0.5)])
    def test_rejects(self, r, delta):
        with pytest.raises(ValueError):
            PhiParams(10, r, delta)

    def test_derived(self):
        p = PhiParams(10, Fraction(1, 2), Fraction(1, 5))
        assert p.horizon == 12 and p.zeta == Fraction(12, 11)
        assert p.r_hat == Fraction(1, 2) * (1 + Fraction(1, 6))


class TestReach:
    P = PhiParams(10, Fraction(1, 2), Fraction(1, 5))

    def test_examples(self):
        assert f_reach(0, 0, 0, self.P) == 1
        assert f_reach(7, 0, 3, self.P) == Fraction(5, 9)
        assert f_reach(2, 0, 3, self.P) == 0
        assert f_reach(9, 0, 0, self.P) == 0

    def test_wraps(self):
        assert f_reach(1, 8, 9, self.P) == f_reach(3, 0, 1, self.P)

    def test_short_paths(self):
        assert f_reach(3, 0, 0, self.P, L=3) == 0
        assert f_reach(2, 0, 0, self.P, L=3) == Fraction(10, 12)

    @given(st.integers(3, 40), st.floats(0.05, 0.95), st.integers(0, 39), st.integers(0, 39),
           st.integers(0, 39))
    def test_monotone_and_bounded(self, N, delta, origin, dj, di):
        params = PhiParams(N, 0.3, delta)
        origin, dj, di = origin % N, dj % (N - 1), di % (N - 1)
        assume(dj < di)
        at = (origin + dj) % N
        i = (origin + di) % N
        here = f_reach(i, origin, at, params)
        before = f_reach((i - 1) % N, origin, at, params)
        assert 0 < here <= before <= 1


class TestPhi:
    def test_ground(self):
        spec = standard(6)
        params = PhiParams.for_spec(spec)
        assert Phi(new_ring(spec), params) == 0
        assert trick_check(new_ring(spec), params)

    def test_single_hot_potato(self):
        spec = standard(5)
        params = PhiParams(5, Fraction(1, 2), Fraction(1, 2))
        state = new_ring(spec)
        state.nodes[0].slot = Packet(0, 3, 0, 0)
        state.arrivals = 1
        got = phi_vector(state, params, exact=True)
        M = Fraction(15, 2)
        assert got == [1, (M - 1) / M, (M - 2) / M, (M - 3) / M, 0]
        assert np.allclose(phi_vector(state, params), [float(x) for x in got])

    @given(st.integers(0, 2**32), st.integers(3, 12))
    def test_float_matches_exact(self, seed, N):
        spec = standard(N, 0.85)
        params = PhiParams.for_spec(spec)
        (state,) = sample_states(spec, 1, stride=40, seed=seed)
        exact = phi_vector(state, params, exact=True)
        assert np.allclose(phi_vector(state, params), [float(x) for x in exact])

    def test_moving_past_drops_one(self):
        spec = RingSpec.standard(6, 0.0)
        params = PhiParams.for_spec(spec, 0.3)
        state = loaded_state(spec, [4, 0, 0, 0, 0, 0], seed=1)
        node = int(np.argmax(phi_vector(state, params)))
        before = phi(node, state, params, exact=True)
        state.nodes[node].queue.pop(0)
        state.departures += 1
        assert before - phi(node, state, params, exact=True) == 1

    def test_hop_releases_node(self):
        spec = RingSpec.standard(6, 0.0)
        params = PhiParams.for_spec(spec, 0.3)
        state = new_ring(spec)
        apply_step(state, [3, 0, 0, 0, 0, 0])
        before = phi(0, state, params, exact=True)
        apply_step(state, [0] * 6)
        assert before - phi(0, state, params, exact=True) == 1

    @given(st.integers(0, 2**32), st.sampled_from([4, 7, 12]))
    def test_weighted_queue_bound(self, seed, N):
        spec = standard(N, 0.9)
        params = PhiParams.for_spec(spec)
        for state in sample_states(spec, 5, stride=23, seed=seed):
            lhs, rhs = weighted_queue_bound(state, params)
            assert lhs <= rhs


class TestTrick:
    @given(st.integers(0, 2**32), st.sampled_from([5, 8, 20]), st.floats(0.3, 0.95))
    def test_random_reachable_states(self, seed, N, r):
        spec = standard(N, r)
        params = PhiParams.for_spec(spec)
        for state in sample_states(spec, 20, stride=11, seed=seed):
            assert not trick_violations(state, params)

    @pytest.mark.parametrize("N", [5, 20])
    @pytest.mark.parametrize("size", [10, 1000, 100_000])
    def test_one_huge_queue(self, N, size):
        spec = standard(N)
        params = PhiParams(N, 0.8, 0.2)
        for node in (0, N // 2, N - 1):
            queues = [0] * N
            queues[node] = size
            assert trick_check(loaded_state(spec, queues), params)

    @given(st.lists(st.integers(0, 30), min_size=5, max_size=5), st.integers(0, 2**32))
    def test_arbitrary_queues(self, queues, seed):
        spec = standard(5)
        assert trick_check(loaded_state(spec, queues, seed), PhiParams(5, 0.8, 0.2))

    def test_reports_violation(self):
        spec = standard(5)
        params = PhiParams(5, 0.8, 0.2)
        state = loaded_state(spec, [0, 0, 4, 0, 0])
        state.queue_lengths = lambda: [0] * 5
        bad = trick_violations(state, params)
        assert bad and bad[0].node == 2


class TestStates:
    def test_loaded(self):
        spec = standard(5)
        state = loaded_state(spec, [3, 0, 1, 0, 2])
        state.check()
        assert state.queue_lengths() == [3, 0, 1, 0, 2]
        with pytest.raises(ValueError):
            loaded_state(spec, [1, 2])

    def test_peaked(self):
        spec = standard(10, 0.9)
        params = PhiParams.for_spec(spec)
        state = state_with_phi(spec, params, 50)
        assert Phi(state, params) == pytest.approx(50)

    def test_uniform(self):
        spec = standard(10, 0.9)
        params = PhiParams.for_spec(spec)
        state = state_with_phi(spec, params, 50, peaked=False)
        assert abs(Phi(state, params) - 50) <= 10


class TestDrift:
    def test_ground_state_drifts_up(self):
        spec = standard(10, 0.9)
        rep = drift_probe(spec, new_ring(spec), PhiParams.for_spec(spec), 20, 30)
        assert rep.start == 0 and rep.estimate >= 0

    def test_full_node_drains(self):
        spec = standard(10, 0.9)
        params = PhiParams.for_spec(spec)
        T = 50
        state = loaded_state(spec, [2 * T] + [0] * 9)
        rep = drift_probe(spec, state, params, T, 100, node=0)
        assert rep.estimate < (float(params.r_hat) - 1) * T + 3 * rep.stderr

    def test_deterministic(self):
        spec = standard(8, 0.9)
        params = PhiParams.for_spec(spec)
        state = state_with_phi(spec, params, 40)
        a = drift_probe(spec, state, params, 30, 10, seed=4)
        assert a == drift_probe(spec, state, params, 30, 10, seed=4)
        assert a.ci_low < a.estimate < a.ci_high

    def test_rejects(self):
        spec = standard(8, 0.9)
        params = PhiParams.for_spec(spec)
        with pytest.raises(ValueError):
            drift_probe(spec, new_ring(spec), params, 10, 1)
        over = RingSpec.standard(8, 0.3)
        with pytest.raises(ValueError):
            drift_probe(over, new_ring(over), params, 10, 5)


def test_trend_report_shape():
    rep = queue_trend(0.8, [5, 10], 20_000, replications=2)
    assert [pt["N"] for pt in rep["points"]] == [5, 10]
    assert rep["direction"] in ("decreasing", "increasing", "mixed")
    assert rep["scaled"][0] == pytest.approx(5 * rep["points"][0]["mean_queue"])
