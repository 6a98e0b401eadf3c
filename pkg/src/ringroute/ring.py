"""Discrete-time state model for unidirectional Bernoulli rings.

One step moves every hot potato one hop (removing those that reach their
destination), then inserts the exogenous arrivals, then lets every node
choose which of its packets occupies the outgoing slot.  The state is
observed after that selection.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

GEOMETRIC = -1


class Protocol(str, enum.Enum):
    GHP = "GHP"
    FIFO = "FIFO"
    EPF = "EPF"
    SIS = "SIS"
    CTO = "CTO"
    FTG = "FTG"
    LIS = "LIS"


PROTOCOL_CODES = {proto: code for code, proto in enumerate(Protocol)}


@dataclass(frozen=True)
class RingSpec:
    """Parameters of a ring.

    ``p`` is the per-node Bernoulli arrival probability.  For the geometric
    ring ``lam`` and ``mu`` are set, ``L`` is ``None`` and a hot potato leaves
    with probability ``mu / N`` after every hop.
    """

    N: int
    L: Optional[int]
    p: float = 0.0
    protocol: Protocol = Protocol.GHP
    lam: Optional[float] = None
    mu: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if not isinstance(self.N, int) or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if self.geometric:
            if self.L is not None:
                raise ValueError("geometric ring has no maximum path length")
            if self.lam is None or self.mu is None:
                raise ValueError("geometric ring needs both lam and mu")
            if not (0 < self.lam / self.N <= 1 and 0 < self.mu / self.N <= 1):
                raise ValueError("lam/N and mu/N must lie in (0, 1]")
            if self.protocol in (Protocol.FTG, Protocol.CTO):
                raise ValueError(f"{self.protocol.value} needs known destinations")
        else:
            if not isinstance(self.L, int) or self.L < 1:
                raise ValueError(f"L must be an integer >= 1, got {self.L!r}")
            if not 0 <= self.p <= 1:
                raise ValueError(f"p must lie in [0, 1], got {self.p!r}")

    @classmethod
    def standard(cls, N: int, p: float = 0.0, protocol=Protocol.GHP) -> "RingSpec":
        if N < 2:
            raise ValueError("a standard ring needs N >= 2")
        return cls(N, N - 1, p, protocol)

    @classmethod
    def nonstandard(cls, N: int, L: int, p: float = 0.0, protocol=Protocol.GHP) -> "RingSpec":
        return cls(N, L, p, protocol)

    @classmethod
    def geometric_ring(cls, N: int, lam: float, mu: float, protocol=Protocol.GHP) -> "RingSpec":
        return cls(N, None, lam / N, protocol, lam, mu)

    @property
    def geometric(self) -> bool:
        return self.lam is not None or self.mu is not None

    @property
    def depart_prob(self) -> float:
        return self.mu / self.N if self.geometric else 0.0

    def with_(self, **changes) -> "RingSpec":
        fields = dict(N=self.N, L=self.L, p=self.p, protocol=self.protocol,
                      lam=self.lam, mu=self.mu)
        fields.update(changes)
        return RingSpec(**fields)

    def to_dict(self) -> dict:
        out = {"N": self.N, "L": self.L, "p": self.p, "protocol": self.protocol.value}
        if self.geometric:
            out.update(lam=self.lam, mu=self.mu)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RingSpec":
        if data.get("lam") is not None:
            return cls.geometric_ring(int(data["N"]), float(data["lam"]), float(data["mu"]),
                                      data.get("protocol", "GHP"))
        N = int(data["N"])
        L = data.get("L")
        L = N - 1 if L is None else int(L)
        return cls(N, L, float(data.get("p", 0.0)), data.get("protocol", "GHP"))


@dataclass(slots=True)
class Packet:
    origin: int
    remaining: int
    inserted_at: int
    seq: int
    hops: int = 0
    arrived_at: int = 0

    def copy(self) -> "Packet":
        return Packet(self.origin, self.remaining, self.inserted_at, self.seq,
                      self.hops, self.arrived_at)


@dataclass
class NodeState:
    queue: list = field(default_factory=list)
    slot: Optional[Packet] = None

    @property
    def packets(self) -> int:
        return len(self.queue) + (self.slot is not None)


@dataclass
class RingState:
    spec: RingSpec
    nodes: list
    t: int = 0
    arrivals: int = 0
    departures: int = 0
    delay_sum: int = 0

    def queue_lengths(self) -> list[int]:
        return [len(node.queue) for node in self.nodes]

    def packet_counts(self) -> list[int]:
        return [node.packets for node in self.nodes]

    def total_packets(self) -> int:
        return sum(node.packets for node in self.nodes)

    def copy(self) -> "RingState":
        nodes = [NodeState([pk.copy() for pk in node.queue],
                           node.slot.copy() if node.slot else None)
                 for node in self.nodes]
        return RingState(self.spec, nodes, self.t, self.arrivals, self.departures,
                         self.delay_sum)

    def check(self) -> None:
        """Raise ``AssertionError`` if the bookkeeping is inconsistent."""
        assert self.arrivals - self.departures == self.total_packets()
        for i, node in enumerate(self.nodes):
            for pk in node.queue:
                if self.spec.protocol is Protocol.GHP:
                    assert pk.hops == 0 and pk.origin == i
            if node.slot is not None and not self.spec.geometric:
                assert 1 <= node.slot.remaining <= self.spec.L


def new_ring(spec: RingSpec) -> RingState:
    """Ground state: every queue and slot empty at ``t = 0``."""
    if not isinstance(spec, RingSpec):
        raise TypeError("expected a RingSpec")
    return RingState(spec, [NodeState() for _ in range(spec.N)])


def priority(protocol: Protocol, pk: Packet, t: int) -> tuple:
    """Sort key for slot selection at time ``t``; the smallest key wins."""
    exo_now = pk.hops == 0 and pk.inserted_at == t
    if protocol is Protocol.GHP:
        return (pk.hops == 0, pk.seq)
    if protocol is Protocol.FIFO:
        return (pk.arrived_at, pk.seq)
    if protocol is Protocol.EPF:
        return (not exo_now, pk.seq)
    if protocol is Protocol.SIS:
        return (-pk.seq,)
    if protocol is Protocol.CTO:
        return (pk.hops, pk.seq)
    if protocol is Protocol.FTG:
        return (-pk.remaining, not exo_now, pk.seq)
    return (pk.seq,)


def apply_step(state: RingState, arrivals: Sequence[int],
               departs: Optional[Sequence[bool]] = None) -> RingState:
    """Advance ``state`` one step in place with the given exogenous outcome.

    ``arrivals[i]`` is 0 for no arrival at node ``i``, otherwise the
    destination distance (any positive value on the geometric ring).
    ``departs[i]`` says whether the hot potato leaving node ``i`` exits after
    this hop; it is only consulted on the geometric ring.
    """
    spec = state.spec
    N = spec.N
    t = state.t + 1
    incoming: list[Optional[Packet]] = [None] * N
    for i, node in enumerate(state.nodes):
        pk = node.slot
        if pk is None:
            continue
        node.slot = None
        pk.hops += 1
        if spec.geometric:
            done = bool(departs[i])
        else:
            pk.remaining -= 1
            done = pk.remaining == 0
        if done:
            state.departures += 1
            state.delay_sum += t - pk.inserted_at
        else:
            pk.arrived_at = t
            incoming[(i + 1) % N] = pk
    seq = state.arrivals
    for i, node in enumerate(state.nodes):
        present = node.queue
        if incoming[i] is not None:
            present.append(incoming[i])
        if arrivals[i]:
            rem = GEOMETRIC if spec.geometric else int(arrivals[i])
            present.append(Packet(i, rem, t, seq, 0, t))
            seq += 1
        if present:
            best = min(range(len(present)), key=lambda j: priority(spec.protocol, present[j], t))
            node.slot = present.pop(best)
    state.arrivals = seq
    state.t = t
    return state


def draw_block(spec: RingSpec, rng: np.random.Generator, steps: Optional[int] = None) -> np.ndarray:
    """Uniforms consumed by ``steps`` ring steps, shape ``(steps, rows, N)``.

    Row 0 drives arrivals and destinations; on the geometric ring row 1
    drives the hot-potato exit coins.  Drawing ``k`` steps at once yields the
    same numbers as ``k`` single-step draws.
    """
    rows = 2 if spec.geometric else 1
    if steps is None:
        return rng.random((rows, spec.N))
    return rng.random((steps, rows, spec.N))


def decode_block(spec: RingSpec, block: np.ndarray) -> tuple[list[int], Optional[list[bool]]]:
    """Turn one step's uniforms into (arrival destinations, exit coins)."""
    u = block[0]
    p = spec.p
    if spec.geometric:
        arrivals = [1 if x < p else 0 for x in u]
        departs = [bool(x < spec.depart_prob) for x in block[1]]
        return arrivals, departs
    L = spec.L
    arrivals = [min(int(x / p * L), L - 1) + 1 if x < p else 0 for x in u]
    return arrivals, None


def step(state: RingState, rng: np.random.Generator) -> RingState:
    """Advance one step drawing the exogenous outcome from ``rng``."""
    arrivals, departs = decode_block(state.spec, draw_block(state.spec, rng))
    return apply_step(state, arrivals, departs)


def nominal_load(spec: RingSpec) -> float:
    """Expected work per node per step; ``lam / mu`` on the geometric ring."""
    if spec.geometric:
        return spec.lam / spec.mu
    return (spec.L + 1) * spec.p / 2


def critical_rate(N: int) -> float:
    """Arrival probability above which a standard GHP ring is unstable."""
    if N < 2:
        raise ValueError("critical rate needs N >= 2")
    return 2 / N


def decompose_bidirectional(N: int, p) -> tuple[RingSpec, RingSpec]:
    """Split an odd bidirectional shortest-path ring into two one-way rings.

    Each direction carries half the arrivals with destinations uniform over
    the ``(N - 1) / 2`` nodes on its side.  The two rings are correlated but
    their expected queues add.
    """
    if N < 3 or N % 2 == 0:
        raise ValueError("bidirectional decomposition needs odd N >= 3")
    half = Fraction(p) / 2 if isinstance(p, Fraction) else p / 2
    L = (N - 1) // 2
    return RingSpec(N, L, half), RingSpec(N, L, half)


def bidirectional_queue(p: float) -> float:
    """Expected queue per node of the 5-node bidirectional ring, p^2/(4-3p)."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    return p * p / (4 - 3 * p)
