"""Potential function for standard rings and a Monte Carlo drift probe.

A packet from origin ``k`` now at node ``j`` is weighted at node ``i`` by
the chance it would still need node ``i`` if lifetimes were uniform on
``1..(1+delta)N``:  ``((1+delta)N - (i-k)) / ((1+delta)N - (j-k))`` with all
distances measured forward from ``k``.  Only nodes the packet can still
need under the true law (forward distance at most ``L - 1``) count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import stats

from .ring import Packet, RingSpec, RingState, new_ring, nominal_load
from .sim import replication_rng, run_replication

TIGHT = 1e-9


def default_delta(r: float) -> float:
    """Midpoint of the admissible inflation range."""
    if r > 0.5:
        return 0.5 * min(1.0, (1 - r) / (2 * r - 1))
    return 0.5


@dataclass(frozen=True)
class PhiParams:
    N: int
    r: float
    delta: float

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.r_hat >= 1:
            raise ValueError(f"r(1 + delta/(1+delta)) = {float(self.r_hat):.4g} must be < 1")

    @classmethod
    def for_spec(cls, spec: RingSpec, delta=None) -> "PhiParams":
        r = nominal_load(spec)
        return cls(spec.N, r, default_delta(r) if delta is None else delta)

    @property
    def r_hat(self):
        return self.r * (1 + self.delta / (1 + self.delta))

    @property
    def horizon(self):
        """Inflated lifetime range ``(1 + delta) N``."""
        return (1 + self.delta) * self.N

    @property
    def zeta(self):
        return 1 + 1 / (self.horizon - 1)

    def exact(self) -> "PhiParams":
        return PhiParams(self.N, Fraction(self.r).limit_denominator(10**9) if not
                         isinstance(self.r, Fraction) else self.r,
                         Fraction(self.delta).limit_denominator(10**9) if not
                         isinstance(self.delta, Fraction) else self.delta)

    def to_dict(self) -> dict:
        return {k: float(v) if isinstance(v, Fraction) else v for k, v in asdict(self).items()} | {
            "r_hat": float(self.r_hat), "zeta": float(self.zeta)}


def _max_reach(spec: RingSpec) -> int:
    return (spec.L if spec.L is not None else spec.N - 1) - 1


def f_reach(i: int, origin: int, at: int, params: PhiParams, L: Optional[int] = None):
    """Weight of a packet from ``origin`` now at node ``at`` on node ``i``."""
    N = params.N
    L = N - 1 if L is None else L
    di = (i - origin) % N
    dj = (at - origin) % N
    if not dj <= di <= L - 1:
        return 0 * params.horizon
    M = params.horizon
    return (M - di) / (M - dj)


def _packet_positions(state: RingState):
    for j, node in enumerate(state.nodes):
        for pk in node.queue:
            yield pk.origin, j, False
        if node.slot is not None:
            yield node.slot.origin, j, True


def phi_vector(state: RingState, params: PhiParams, exact: bool = False):
    """``phi(i)`` for every node ``i``.

    Floats by default; ``exact`` evaluates with Fractions.
    """
    N = state.spec.N
    reach = _max_reach(state.spec)
    if exact:
        p = params.exact()
        M = p.horizon
        out = [Fraction(0)] * N
        groups: dict = {}
        for k, j, _ in _packet_positions(state):
            groups[(k, j)] = groups.get((k, j), 0) + 1
        for (k, j), count in groups.items():
            dj = (j - k) % N
            for di in range(dj, reach + 1):
                out[(k + di) % N] += count * (M - di) / (M - dj)
        return out
    pos = np.array([(k, j) for k, j, _ in _packet_positions(state)], np.int64).reshape(-1, 2)
    if pos.size == 0:
        return np.zeros(N)
    M = float(params.horizon)
    i = np.arange(N)
    di = (i[None, :] - pos[:, :1]) % N
    dj = ((pos[:, 1] - pos[:, 0]) % N)[:, None]
    ok = (dj <= di) & (di <= reach)
    return np.where(ok, (M - di) / (M - dj), 0.0).sum(axis=0)


def phi(i: int, state: RingState, params: PhiParams, exact: bool = False):
    return phi_vector(state, params, exact)[i]


def Phi(state: RingState, params: PhiParams, exact: bool = False):
    return max(phi_vector(state, params, exact))


@dataclass
class TrickViolation:
    node: int
    queue: int
    bound: object


def trick_violations(state: RingState, params: PhiParams) -> list[TrickViolation]:
    """Nodes where ``Q_i >= phi(i) - phi(i-1)/zeta - 1`` fails.

    Near-tight float comparisons are settled in exact arithmetic.
    """
    N = state.spec.N
    Q = state.queue_lengths()
    v = phi_vector(state, params)
    zeta = float(params.zeta)
    suspects = [i for i in range(N) if Q[i] < v[i] - v[i - 1] / zeta - 1 + TIGHT * (1 + v[i])]
    if not suspects:
        return []
    ex = phi_vector(state, params, exact=True)
    z = params.exact().zeta
    bad = []
    for i in suspects:
        bound = ex[i] - ex[i - 1] / z - 1
        if Q[i] < bound:
            bad.append(TrickViolation(i, Q[i], bound))
    return bad


def trick_check(state: RingState, params: PhiParams) -> bool:
    return not trick_violations(state, params)


def weighted_queue_bound(state: RingState, params: PhiParams) -> tuple:
    """``(sum_j j/(N-1) Q_j, phi(N-1))``; the first never exceeds the second."""
    N = state.spec.N
    Q = state.queue_lengths()
    lhs = sum(Fraction(j, N - 1) * q for j, q in enumerate(Q))
    return lhs, phi(N - 1, state, params, exact=True)


def loaded_state(spec: RingSpec, queues, seed: int = 0) -> RingState:
    """Ring with no hot potatoes and the given queue lengths.

    ``queues`` is one length for every node or a per-node sequence.
    """
    if isinstance(queues, int):
        queues = [queues] * spec.N
    if len(queues) != spec.N:
        raise ValueError("need one queue length per node")
    rng = np.random.default_rng(seed)
    state = new_ring(spec)
    seq = 0
    for i, (node, q) in enumerate(zip(state.nodes, queues)):
        for _ in range(q):
            rem = int(rng.integers(1, spec.L + 1)) if spec.L else -1
            node.queue.append(Packet(i, rem, 0, seq, 0, 0))
            seq += 1
    state.arrivals = seq
    return state


def state_with_phi(spec: RingSpec, params: PhiParams, target: float, seed: int = 0,
                   peaked: bool = True) -> RingState:
    """State whose ``Phi`` is close to ``target``.

    ``peaked`` loads node 0 only, so ``Phi = phi(0) = Q_0``; otherwise every
    node gets the same queue length.
    """
    if peaked:
        return loaded_state(spec, [round(target)] + [0] * (spec.N - 1), seed)
    best = None
    for q in range(0, 10 * math.ceil(target / max(spec.N, 1)) + 10):
        st = loaded_state(spec, q, seed)
        gap = abs(Phi(st, params) - target)
        if best is None or gap < best[0]:
            best = (gap, st)
        elif gap > best[0]:
            break
    return best[1]


def sample_states(spec: RingSpec, count: int, stride: int = 7, seed: int = 0,
                  start: Optional[RingState] = None) -> list[RingState]:
    """Snapshots of one trajectory taken every ``stride`` steps."""
    rng = replication_rng(seed, 0)
    state = start if start is not None else new_ring(spec)
    out = []
    for _ in range(count):
        rep = run_replication(spec, stride, rng, state=state)
        state = rep.final.to_state(spec)
        out.append(state)
    return out


@dataclass
class DriftReport:
    estimate: float
    stderr: float
    ci_low: float
    ci_high: float
    reps: int
    horizon: int
    start: float
    node: Optional[int]
    params: dict

    def to_dict(self) -> dict:
        return asdict(self)


def drift_probe(spec: RingSpec, state: RingState, params: PhiParams, T: int, reps: int,
                seed: int = 0, node: Optional[int] = None, level: float = 0.95) -> DriftReport:
    """Estimate ``E[Phi(after T steps)] - Phi(state)`` with a t-interval.

    With ``node`` set the tracked quantity is ``phi(node)`` instead of ``Phi``.
    """
    if reps < 2:
        raise ValueError("need at least 2 replications for an interval")
    if nominal_load(spec) >= 1:
        raise ValueError("drift probe needs nominal load < 1")

    def value(st):
        v = phi_vector(st, params)
        return float(v[node]) if node is not None else float(v.max())

    start = value(state)
    deltas = np.empty(reps)
    for rep in range(reps):
        out = run_replication(spec, T, replication_rng(seed, rep), state=state)
        deltas[rep] = value(out.final.to_state(spec)) - start
    est = float(deltas.mean())
    se = float(deltas.std(ddof=1) / math.sqrt(reps))
    half = float(stats.t.ppf(0.5 + level / 2, reps - 1)) * se
    return DriftReport(est, se, est - half, est + half, reps, T, start, node, params.to_dict())


@dataclass
class TrendPoint:
    N: int
    p: float
    mean_queue: float
    stderr: float


def queue_trend(r: float, sizes, steps: int, replications: int = 4, seed: int = 0,
                burn_in: Optional[int] = None) -> dict:
    """Mean per-node queue at fixed nominal load as the ring grows.

    ``direction`` is ``"decreasing"``, ``"increasing"`` or ``"mixed"``;
    ``scaled`` lists ``N * E[Q]`` for comparison against a ``1/N`` law.
    """
    from .sim import simulate

    points = []
    for N in sorted(sizes):
        spec = RingSpec.standard(N, 2 * r / N)
        st = simulate(spec, steps, replications, seed,
                      burn_in=steps // 10 if burn_in is None else burn_in)
        points.append(TrendPoint(N, spec.p, st.mean_queue, st.mean_queue_se))
    means = [pt.mean_queue for pt in points]
    pairs = list(zip(means, means[1:]))
    if all(b < a for a, b in pairs):
        direction = "decreasing"
    elif all(b > a for a, b in pairs):
        direction = "increasing"
    else:
        direction = "mixed"
    return {"r": r, "points": [asdict(pt) for pt in points], "direction": direction,
            "monotone": direction != "mixed",
            "scaled": [pt.N * pt.mean_queue for pt in points]}
