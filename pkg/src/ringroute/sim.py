"""Seeded Monte Carlo harness around a compiled ring kernel.

The kernel consumes exactly the uniforms that :func:`ringroute.ring.step`
would draw, so for a given generator both produce the same trajectory.
Every replication owns a Philox stream keyed by ``(seed, replication)``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Optional

import numba
import numpy as np

from .ring import (GEOMETRIC, NodeState, Packet, Protocol, PROTOCOL_CODES, RingSpec,
                   RingState, new_ring, nominal_load)

GHP, FIFO, EPF, SIS, CTO, FTG, LIS = (PROTOCOL_CODES[p] for p in Protocol)

# counters layout
T_NOW, SEQ, DEPARTED, DELAY, NFREE, MEASURED, MEAS_DEP, MEAS_DELAY = range(8)

CHUNK = 8192


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep])))


@numba.njit(cache=True, inline="always")
def _push(qbuf, qhead, qlen, i, pid):
    cap = qbuf.shape[1]
    qbuf[i, (qhead[i] + qlen[i]) % cap] = pid
    qlen[i] += 1


@numba.njit(cache=True, inline="always")
def _pop_front(qbuf, qhead, qlen, i):
    pid = qbuf[i, qhead[i]]
    qhead[i] = (qhead[i] + 1) % qbuf.shape[1]
    qlen[i] -= 1
    return pid


@numba.njit(cache=True, inline="always")
def _key(proto, pid, t, pk):
    hops = pk[pid, 4]
    seq = pk[pid, 3]
    exo_late = 0 if (hops == 0 and pk[pid, 2] == t) else 1
    if proto == GHP:
        return (1 if hops == 0 else 0), seq, 0
    if proto == FIFO:
        return pk[pid, 5], seq, 0
    if proto == EPF:
        return exo_late, seq, 0
    if proto == SIS:
        return -seq, 0, 0
    if proto == CTO:
        return hops, seq, 0
    if proto == FTG:
        return -pk[pid, 1], exo_late, seq
    return seq, 0, 0


@numba.njit(cache=True, nogil=True)
def _run(proto, L, p, dep_prob, U, start, burn_in, thin,
         qbuf, qhead, qlen, slot, pk, free, counters,
         sum_q, sum_pk, idle, hist, thin_hist, rec_q, rec_tot):
    """Run steps ``start..len(U)-1``; return the index reached.

    Stops early when the packet pool or a queue buffer might overflow on the
    next step, so the caller can grow them and resume.
    pk columns: origin, remaining, inserted_at, seq, hops, arrived_at.
    """
    N = slot.shape[0]
    cap = qbuf.shape[1]
    H = hist.shape[1]
    geometric = dep_prob > 0.0
    incoming = np.empty(N, np.int64)
    record = rec_q.shape[0] > 0
    for k in range(start, U.shape[0]):
        if counters[NFREE] < N:
            return k
        for i in range(N):
            if qlen[i] + 2 > cap:
                return k
        t = counters[T_NOW] + 1
        measuring = t > burn_in
        for i in range(N):
            incoming[i] = -1
        for i in range(N):
            pid = slot[i]
            if pid < 0:
                continue
            slot[i] = -1
            pk[pid, 4] += 1
            if geometric:
                done = U[k, 1, i] < dep_prob
            else:
                pk[pid, 1] -= 1
                done = pk[pid, 1] == 0
            if done:
                counters[DEPARTED] += 1
                counters[DELAY] += t - pk[pid, 2]
                if measuring:
                    counters[MEAS_DEP] += 1
                    counters[MEAS_DELAY] += t - pk[pid, 2]
                free[counters[NFREE]] = pid
                counters[NFREE] += 1
            else:
                pk[pid, 5] = t
                incoming[(i + 1) % N] = pid
        for i in range(N):
            inc = incoming[i]
            exo = -1
            u = U[k, 0, i]
            if u < p:
                counters[NFREE] -= 1
                exo = free[counters[NFREE]]
                pk[exo, 0] = i
                if geometric:
                    pk[exo, 1] = -1
                else:
                    d = int(u / p * L)
                    pk[exo, 1] = (d if d < L - 1 else L - 1) + 1
                pk[exo, 2] = t
                pk[exo, 3] = counters[SEQ]
                pk[exo, 4] = 0
                pk[exo, 5] = t
                counters[SEQ] += 1
            if proto == GHP:
                if inc >= 0:
                    slot[i] = inc
                    if exo >= 0:
                        _push(qbuf, qhead, qlen, i, exo)
                else:
                    if exo >= 0:
                        _push(qbuf, qhead, qlen, i, exo)
                    if qlen[i] > 0:
                        slot[i] = _pop_front(qbuf, qhead, qlen, i)
            elif proto == FIFO:
                if qlen[i] > 0:
                    slot[i] = _pop_front(qbuf, qhead, qlen, i)
                    if inc >= 0:
                        _push(qbuf, qhead, qlen, i, inc)
                    if exo >= 0:
                        _push(qbuf, qhead, qlen, i, exo)
                elif inc >= 0:
                    slot[i] = inc
                    if exo >= 0:
                        _push(qbuf, qhead, qlen, i, exo)
                elif exo >= 0:
                    slot[i] = exo
            else:
                if inc >= 0:
                    _push(qbuf, qhead, qlen, i, inc)
                if exo >= 0:
                    _push(qbuf, qhead, qlen, i, exo)
                n = qlen[i]
                if n > 0:
                    h = qhead[i]
                    best = 0
                    b1, b2, b3 = _key(proto, qbuf[i, h], t, pk)
                    for j in range(1, n):
                        c1, c2, c3 = _key(proto, qbuf[i, (h + j) % cap], t, pk)
                        if c1 < b1 or (c1 == b1 and (c2 < b2 or (c2 == b2 and c3 < b3))):
                            best = j
                            b1, b2, b3 = c1, c2, c3
                    if best:
                        jpos = (h + best) % cap
                        tmp = qbuf[i, jpos]
                        qbuf[i, jpos] = qbuf[i, h]
                        qbuf[i, h] = tmp
                    slot[i] = _pop_front(qbuf, qhead, qlen, i)
        counters[T_NOW] = t
        if measuring:
            counters[MEASURED] += 1
            sample = thin > 0 and (t - burn_in) % thin == 0
            for i in range(N):
                q = qlen[i]
                c = q + (1 if slot[i] >= 0 else 0)
                sum_q[i] += q
                sum_pk[i] += c
                if c == 0:
                    idle[i] += 1
                b = c if c < H else H - 1
                hist[i, b] += 1
                if sample:
                    thin_hist[i, b] += 1
        if record:
            for i in range(N):
                rec_q[k, i] = qlen[i]
            rec_tot[k] = counters[SEQ] - counters[DEPARTED]
    return U.shape[0]


class KernelState:
    """Array form of a :class:`RingState` used by the compiled kernel."""

    def __init__(self, N: int, cap: int = 16, pool: int = 64):
        self.qbuf = np.full((N, cap), -1, np.int64)
        self.qhead = np.zeros(N, np.int64)
        self.qlen = np.zeros(N, np.int64)
        self.slot = np.full(N, -1, np.int64)
        self.pk = np.zeros((pool, 6), np.int64)
        self.free = np.arange(pool - 1, -1, -1, dtype=np.int64)
        self.counters = np.zeros(8, np.int64)
        self.counters[NFREE] = pool

    def grow(self) -> None:
        N, cap = self.qbuf.shape
        if np.any(self.qlen + 2 > cap):
            new = np.full((N, cap * 2), -1, np.int64)
            for i in range(N):
                idx = (self.qhead[i] + np.arange(self.qlen[i])) % cap
                new[i, : self.qlen[i]] = self.qbuf[i, idx]
            self.qbuf = new
            self.qhead[:] = 0
        if self.counters[NFREE] < N:
            old = self.pk.shape[0]
            size = max(2 * old, old + N)
            pk = np.zeros((size, 6), np.int64)
            pk[:old] = self.pk
            self.pk = pk
            nfree = self.counters[NFREE]
            free = np.empty(size, np.int64)
            free[:nfree] = self.free[:nfree]
            extra = np.arange(size - 1, old - 1, -1, dtype=np.int64)
            free[nfree: nfree + len(extra)] = extra
            self.free = free
            self.counters[NFREE] = nfree + len(extra)

    @classmethod
    def from_state(cls, state: RingState) -> "KernelState":
        N = state.spec.N
        packets = [pk for node in state.nodes for pk in node.queue]
        packets += [node.slot for node in state.nodes if node.slot is not None]
        cap = 16
        while max(state.queue_lengths(), default=0) + 2 > cap:
            cap *= 2
        ks = cls(N, cap, max(64, 2 * len(packets) + N))
        ids = {}
        nfree = int(ks.counters[NFREE])
        for pk in packets:
            nfree -= 1
            pid = int(ks.free[nfree])
            ids[id(pk)] = pid
            remaining = GEOMETRIC if state.spec.geometric else pk.remaining
            ks.pk[pid] = (pk.origin, remaining, pk.inserted_at, pk.seq, pk.hops, pk.arrived_at)
        ks.counters[NFREE] = nfree
        for i, node in enumerate(state.nodes):
            for j, pk in enumerate(node.queue):
                ks.qbuf[i, j] = ids[id(pk)]
            ks.qlen[i] = len(node.queue)
            if node.slot is not None:
                ks.slot[i] = ids[id(node.slot)]
        ks.counters[T_NOW] = state.t
        ks.counters[SEQ] = state.arrivals
        ks.counters[DEPARTED] = state.departures
        ks.counters[DELAY] = state.delay_sum
        return ks

    def to_state(self, spec: RingSpec) -> RingState:
        def packet(pid):
            o, rem, ins, seq, hops, arr = (int(x) for x in self.pk[pid])
            return Packet(o, rem, ins, seq, hops, arr)

        cap = self.qbuf.shape[1]
        nodes = []
        for i in range(spec.N):
            ids = [self.qbuf[i, (self.qhead[i] + j) % cap] for j in range(self.qlen[i])]
            queue = sorted((packet(pid) for pid in ids), key=lambda pk: pk.seq)
            slot = packet(self.slot[i]) if self.slot[i] >= 0 else None
            nodes.append(NodeState(queue, slot))
        c = self.counters
        return RingState(spec, nodes, int(c[T_NOW]), int(c[SEQ]), int(c[DEPARTED]), int(c[DELAY]))


@dataclass
class Replication:
    """Raw per-replication accumulators."""

    steps: int
    sum_queue: np.ndarray
    sum_packets: np.ndarray
    idle: np.ndarray
    hist: np.ndarray
    thin_hist: np.ndarray
    departures: int
    delay_sum: int
    final: KernelState
    queue_trace: Optional[np.ndarray] = None
    total_trace: Optional[np.ndarray] = None

    @property
    def mean_queue(self) -> float:
        return float(self.sum_queue.sum()) / (self.steps * len(self.sum_queue))

    @property
    def mean_packets(self) -> float:
        return float(self.sum_packets.sum()) / (self.steps * len(self.sum_packets))

    @property
    def idle_fraction(self) -> float:
        return float(self.idle.sum()) / (self.steps * len(self.idle))

    @property
    def mean_delay(self) -> float:
        return self.delay_sum / self.departures if self.departures else math.nan


def run_replication(spec: RingSpec, steps: int, rng: np.random.Generator, *,
                    state: Optional[RingState] = None, burn_in: int = 0, thin: int = 0,
                    bins: int = 64, record: bool = False,
                    chunk: int = CHUNK) -> Replication:
    """Run one replication of ``steps`` measured steps after ``burn_in``."""
    ks = KernelState.from_state(state if state is not None else new_ring(spec))
    N = spec.N
    L = spec.L if spec.L is not None else 1
    proto = PROTOCOL_CODES[spec.protocol]
    sum_q = np.zeros(N, np.int64)
    sum_pk = np.zeros(N, np.int64)
    idle = np.zeros(N, np.int64)
    hist = np.zeros((N, bins), np.int64)
    thin_hist = np.zeros((N, bins), np.int64)
    total = burn_in + steps
    traces_q, traces_t = [], []
    start_t = int(ks.counters[T_NOW])
    done = 0
    while done < total:
        c = min(chunk, total - done)
        U = rng.random((c, 2 if spec.geometric else 1, N))
        rec_q = np.zeros((c if record else 0, N), np.int32)
        rec_t = np.zeros(c if record else 0, np.int64)
        k = 0
        while k < c:
            k = _run(proto, L, float(spec.p), float(spec.depart_prob), U, k,
                     start_t + burn_in, thin, ks.qbuf, ks.qhead, ks.qlen, ks.slot, ks.pk,
                     ks.free, ks.counters, sum_q, sum_pk, idle, hist, thin_hist, rec_q, rec_t)
            if k < c:
                ks.grow()
        if record:
            traces_q.append(rec_q)
            traces_t.append(rec_t)
        done += c
    return Replication(
        steps=steps, sum_queue=sum_q, sum_packets=sum_pk, idle=idle, hist=hist,
        thin_hist=thin_hist, departures=int(ks.counters[MEAS_DEP]),
        delay_sum=int(ks.counters[MEAS_DELAY]), final=ks,
        queue_trace=np.concatenate(traces_q)[burn_in:] if record else None,
        total_trace=np.concatenate(traces_t)[burn_in:] if record else None,
    )


@dataclass
class SimStats:
    spec: dict
    steps: int
    replications: int
    seed: int
    mean_queue: float
    mean_queue_se: float
    mean_packets: float
    mean_packets_se: float
    idle_fraction: float
    idle_fraction_se: float
    mean_delay: float
    mean_delay_se: float
    mean_queue_by_node: list = field(default_factory=list)
    mean_packets_by_node: list = field(default_factory=list)
    idle_fraction_by_node: list = field(default_factory=list)
    replication_mean_queue: list = field(default_factory=list)
    histogram: list = field(default_factory=list)
    thinned_histogram: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    CSV_FIELDS = ("steps", "replications", "seed", "mean_queue", "mean_queue_se",
                  "mean_packets", "mean_packets_se", "idle_fraction", "idle_fraction_se",
                  "mean_delay", "mean_delay_se")

    def csv_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


def _mean_se(values) -> tuple[float, float]:
    vals = [v for v in values if not math.isnan(v)]
    if not vals:
        return math.nan, math.nan
    m = math.fsum(vals) / len(vals)
    if len(vals) < 2:
        return m, math.nan
    var = math.fsum((v - m) ** 2 for v in vals) / (len(vals) - 1)
    return m, math.sqrt(var / len(vals))


def summarize(spec: RingSpec, reps: list[Replication], seed: int) -> SimStats:
    R = len(reps)
    steps = reps[0].steps
    q = _mean_se([r.mean_queue for r in reps])
    pk = _mean_se([r.mean_packets for r in reps])
    idle = _mean_se([r.idle_fraction for r in reps])
    delay = _mean_se([r.mean_delay for r in reps])
    denom = steps * R
    by_node = lambda attr: [math.fsum(int(getattr(r, attr)[i]) for r in reps) / denom
                            for i in range(spec.N)]
    hist = sum(r.hist.sum(axis=0) for r in reps)
    thin = sum(r.thin_hist.sum(axis=0) for r in reps)
    return SimStats(
        spec=spec.to_dict(), steps=steps, replications=R, seed=seed,
        mean_queue=q[0], mean_queue_se=q[1], mean_packets=pk[0], mean_packets_se=pk[1],
        idle_fraction=idle[0], idle_fraction_se=idle[1],
        mean_delay=delay[0], mean_delay_se=delay[1],
        mean_queue_by_node=by_node("sum_queue"), mean_packets_by_node=by_node("sum_packets"),
        idle_fraction_by_node=by_node("idle"),
        replication_mean_queue=[r.mean_queue for r in reps],
        histogram=[int(x) for x in hist], thinned_histogram=[int(x) for x in thin],
    )


def simulate(spec: RingSpec, steps: int, replications: int = 1, seed: int = 0, *,
             burn_in: int = 0, thin: int = 0, bins: int = 64, workers: int = 1) -> SimStats:
    """Estimate stationary per-node statistics from independent replications.

    Replication ``j`` uses the stream keyed by ``(seed, j)``; results do not
    depend on ``workers``.  ``thin > 0`` additionally histograms the node
    occupancy every ``thin`` steps.
    """
    if steps <= 0 or replications <= 0:
        raise ValueError("steps and replications must be positive")
    if nominal_load(spec) >= 1:
        warnings.warn(f"nominal load {nominal_load(spec):.3g} >= 1; the ring is not stable",
                      RuntimeWarning, stacklevel=2)

    def one(rep):
        return run_replication(spec, steps, replication_rng(seed, rep),
                               burn_in=burn_in, thin=thin, bins=bins)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            reps = list(pool.map(one, range(replications)))
    else:
        reps = [one(rep) for rep in range(replications)]
    return summarize(spec, reps, seed)


def trajectory(spec: RingSpec, steps: int, rng: np.random.Generator) -> np.ndarray:
    """Queue-length vectors after each of ``steps`` steps, shape ``(steps, N)``."""
    return run_replication(spec, steps, rng, record=True).queue_trace


def totals_trace(spec: RingSpec, steps: int, rng: np.random.Generator) -> np.ndarray:
    """Packets in the system after each step."""
    return run_replication(spec, steps, rng, record=True).total_trace
