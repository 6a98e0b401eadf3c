"""Exact light-traffic expansion of the GHP ring's stationary distribution.

Every exogenous event at a node is either "no arrival", with weight
``1 - L*s``, or "arrival with destination d", with weight ``s`` (``s = p/L``).
Starting from the empty ring, the probability of each state after ``t`` steps
is a polynomial in ``s`` with integer coefficients.  Only states holding at
most ``k`` packets carry coefficients of degree ``<= k``, and those
coefficients stop changing after finitely many steps; the limit is the
Taylor expansion of the stationary probability.

Two state spaces are supported:

* uncompressed: each queue is the ordered tuple of its packets' remaining
  distances;
* compressed: each queue is a count.  A promoted packet picks its distance
  uniformly from ``1..L``.  Storing ``P(state) / L**queued(state)`` instead
  of ``P(state)`` keeps every transition weight equal to ``s**b (1-L s)**a``,
  so this mode is integral too.

Propagation runs on residues modulo several primes below ``2**28`` with a
sparse integer transition matrix per arrival count.  The number of primes
is chosen from an a-priori bound on the coefficients, and the result is
recovered exactly by Chinese remaindering.
"""

from __future__ import annotations

import json
import math
from array import array
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

from .ring import Protocol, RingSpec
from .series import IntSeries

DEFAULT_STATE_CAP = 1_000_000
# About 24 bytes each while building; bounds the chain to a few GB.
TRANSITION_CAP = 40_000_000


class StateCapExceeded(RuntimeError):
    """Raised when enumeration would exceed the configured state budget."""

    def __init__(self, count: int, cap: int, transitions: int = 0, bits: int = 0):
        super().__init__(f"state budget exceeded at {count} states (cap {cap}) with "
                         f"{transitions} transitions; coefficients need up to {bits} bits")
        self.count = count
        self.cap = cap
        self.transitions = transitions
        self.bits = bits


class ConvergenceError(RuntimeError):
    pass


class SymbolicState(tuple):
    """Ring state as a tuple of per-node ``(queue, slot)`` pairs.

    ``queue`` is an int (compressed) or a tuple of remaining distances in
    FIFO order (uncompressed); ``slot`` is the hot potato's remaining
    distance, 0 when the slot is empty.
    """

    __slots__ = ()

    @classmethod
    def ground(cls, N: int, compressed: bool) -> "SymbolicState":
        return cls(((0 if compressed else ()), 0) for _ in range(N))

    @classmethod
    def parse(cls, text: str) -> "SymbolicState":
        """Parse ``"[0|2] X [1|1]"``; queue counts give a compressed state."""
        nodes = []
        for tok in text.replace(",", " ").split():
            if tok.upper() == "X":
                nodes.append((0, 0))
                continue
            n, t = tok.strip("[]").split("|")
            nodes.append((int(n), 0 if t.upper() == "X" else int(t)))
        return cls(nodes)

    @property
    def compressed(self) -> bool:
        return isinstance(self[0][0], int)

    def queued(self) -> int:
        if self.compressed:
            return sum(q for q, _ in self)
        return sum(len(q) for q, _ in self)

    def packets(self) -> int:
        return self.queued() + sum(1 for _, t in self if t)

    def compress(self) -> "SymbolicState":
        if self.compressed:
            return self
        return SymbolicState((len(q), t) for q, t in self)

    def reversed(self) -> "SymbolicState":
        return SymbolicState(tuple(self)[::-1])

    def __str__(self) -> str:
        def node(q, t):
            n = q if isinstance(q, int) else len(q)
            if not t and not n:
                return "X"
            return f"[{n}|{t or 'X'}]"
        return " ".join(node(q, t) for q, t in self)


def _node_packets(entry) -> int:
    q, t = entry
    return (q if isinstance(q, int) else len(q)) + (1 if t else 0)


@lru_cache(maxsize=None)
def _node_options(queue, incoming: int, L: int) -> tuple:
    """Successor entries of one node as ``(entry, arrived, multiplicity)``."""
    out = []
    if isinstance(queue, int):
        n = queue
        if incoming:
            out.append(((n, incoming), 0, 1))
            out.append(((n + 1, incoming), 1, 1))
        elif n:
            out.extend(((n - 1, r), 0, 1) for r in range(1, L + 1))
            out.extend(((n, r), 1, 1) for r in range(1, L + 1))
        else:
            out.append(((0, 0), 0, 1))
            out.extend(((0, d), 1, 1) for d in range(1, L + 1))
        return tuple(out)
    if incoming:
        out.append(((queue, incoming), 0, 1))
        out.extend(((queue + (d,), incoming), 1, 1) for d in range(1, L + 1))
    elif queue:
        head, rest = queue[0], queue[1:]
        out.append(((rest, head), 0, 1))
        out.extend(((rest + (d,), head), 1, 1) for d in range(1, L + 1))
    else:
        out.append((((), 0), 0, 1))
        out.extend((((), d), 1, 1) for d in range(1, L + 1))
    return tuple(out)


def successors(state: SymbolicState, L: int, k: int) -> dict:
    """One GHP step from ``state``: ``{(next_state, arrivals): multiplicity}``.

    Successors holding more than ``k`` packets are dropped.
    """
    N = len(state)
    incoming = [0] * N
    for i, (_, t) in enumerate(state):
        if t > 1:
            incoming[(i + 1) % N] = t - 1
    partial = {((), 0): 1}
    for i in range(N):
        opts = _node_options(state[i][0], incoming[i], L)
        nxt: dict = {}
        for (prefix, b), mult in partial.items():
            for entry, arrived, m in opts:
                key = (prefix + (entry,), b + arrived)
                nxt[key] = nxt.get(key, 0) + mult * m
        partial = {}
        for key, mult in nxt.items():
            if sum(_node_packets(e) for e in key[0]) <= k:
                partial[key] = mult
    return {(SymbolicState(s), b): m for (s, b), m in partial.items()}


@dataclass
class Chain:
    """Truncated chain: states in BFS order and one count matrix per arrival total."""

    N: int
    L: int
    k: int
    compressed: bool
    states: list
    index: dict
    matrices: list  # matrices[b][j, i] = ways to go i -> j with b arrivals

    @property
    def size(self) -> int:
        return len(self.states)


@lru_cache(maxsize=8)
def _build_chain(N: int, L: int, k: int, compressed: bool, cap: int) -> Chain:
    fanout = sum(math.comb(N, b) * L ** b for b in range(min(N, k) + 1))
    if fanout > TRANSITION_CAP // 10:
        bits = coefficient_bound(N, L, k, (k + 1) * (L + N) * 4).bit_length()
        raise StateCapExceeded(1, cap, fanout, bits)
    ground = SymbolicState.ground(N, compressed)
    states = [ground]
    index = {ground: 0}
    rows = [array("q") for _ in range(N + 1)]
    cols = [array("q") for _ in range(N + 1)]
    vals = [array("q") for _ in range(N + 1)]
    head = 0
    edges = 0
    while head < len(states):
        src = states[head]
        for (dst, b), mult in successors(src, L, k).items():
            j = index.get(dst)
            edges += 1
            if j is None or edges > TRANSITION_CAP:
                if len(states) >= cap or edges > TRANSITION_CAP:
                    bits = coefficient_bound(N, L, k, (k + 1) * (L + N) * 4).bit_length()
                    raise StateCapExceeded(len(states) + (j is None), cap, edges, bits)
                j = index[dst] = len(states)
                states.append(dst)
            rows[b].append(j)
            cols[b].append(head)
            vals[b].append(mult)
        head += 1
    S = len(states)
    mats = [sp.csr_matrix((np.frombuffer(vals[b], np.int64),
                           (np.frombuffer(rows[b], np.int64), np.frombuffer(cols[b], np.int64))),
                          shape=(S, S), dtype=np.int64) for b in range(N + 1)]
    return Chain(N, L, k, compressed, states, index, mats)


def _check_spec(spec: RingSpec) -> None:
    if spec.geometric or spec.L is None:
        raise ValueError("the exact engine needs a finite maximum path length")
    if spec.protocol is not Protocol.GHP:
        raise ValueError("the exact engine supports the GHP protocol only")


def build_chain(spec: RingSpec, k: int, compressed: bool = False,
                cap: int = DEFAULT_STATE_CAP) -> Chain:
    _check_spec(spec)
    if k < 0:
        raise ValueError("k must be >= 0")
    return _build_chain(spec.N, spec.L, k, compressed, cap)


def enumerate_states(spec: RingSpec, k: int, compressed: bool = False,
                     cap: int = DEFAULT_STATE_CAP) -> set:
    """States reachable from the empty ring through states of at most ``k`` packets."""
    return set(build_chain(spec, k, compressed, cap).states)


def _is_prime(n: int) -> bool:
    if n < 2 or n % 2 == 0:
        return n == 2
    return all(n % f for f in range(3, math.isqrt(n) + 1, 2))


@lru_cache(maxsize=None)
def _primes(count: int) -> tuple:
    out, n = [], (1 << 28) - 1
    while len(out) < count:
        if _is_prime(n):
            out.append(n)
        n -= 2
    return tuple(out)


def coefficient_bound(N: int, L: int, k: int, steps: int) -> int:
    """Bound on ``|coefficient|`` of any state after ``steps`` steps.

    Replacing every weight by its absolute-value majorant turns one step into
    multiplication of the total mass by ``(1 + 2 L s)**N``.
    """
    return max(math.comb(N * steps, j) * (2 * L) ** j for j in range(k + 1))


def _prime_count(bound: int) -> int:
    m, prod = 0, 1
    while prod <= 2 * bound:
        m += 1
        prod *= _primes(m)[-1]
    return m


@dataclass
class StateDist:
    """Series expansion (in ``s = p/L``) of the probability of each state."""

    spec: RingSpec
    k: int
    compressed: bool
    probs: dict
    states: frozenset
    steps: int = 0
    converged: bool = False
    converged_at: Optional[int] = None
    window: Optional[int] = None

    def __getitem__(self, state) -> IntSeries:
        state = SymbolicState(state)
        if state not in self.states:
            raise KeyError(f"state {state} is not in the enumeration")
        return self.probs.get(state, IntSeries.zero(self.k))

    def total(self) -> IntSeries:
        acc = IntSeries.zero(self.k)
        for series in self.probs.values():
            acc = acc + series
        return acc

    def empty_state(self) -> IntSeries:
        return self[SymbolicState.ground(self.spec.N, self.compressed)]

    def node_marginal(self, node: int, entry) -> IntSeries:
        """Series of the event "node ``node`` is in ``(queued, slot)``"."""
        n, t = entry
        acc = [0] * (self.k + 1)
        for state, series in self.probs.items():
            q, slot = state[node]
            if (q if isinstance(q, int) else len(q)) == n and slot == t:
                for j, a in enumerate(series):
                    acc[j] += a
        return IntSeries(acc)

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_dict(), "k": self.k, "compressed": self.compressed,
            "steps": self.steps, "converged": self.converged,
            "converged_at": self.converged_at, "window": self.window,
            "states": [[state_to_json(s), self.probs[s].to_json()]
                       for s in sorted(self.probs, key=_order)],
        }

    @classmethod
    def from_json(cls, data: dict, states: Optional[Iterable] = None) -> "StateDist":
        probs = {state_from_json(s): IntSeries.from_json(c) for s, c in data["states"]}
        return cls(RingSpec.from_dict(data["spec"]), int(data["k"]), bool(data["compressed"]),
                   probs, frozenset(states if states is not None else probs),
                   data.get("steps", 0), data.get("converged", False),
                   data.get("converged_at"), data.get("window"))

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "StateDist":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def state_to_json(state: SymbolicState) -> list:
    return [[q if isinstance(q, int) else list(q), t] for q, t in state]


def state_from_json(data) -> SymbolicState:
    return SymbolicState((q if isinstance(q, int) else tuple(q), t) for q, t in data)


def _order(state: SymbolicState):
    return (state.packets(), repr(tuple(state)))


class _Propagator:
    """Residue-level evolution of the truncated chain."""

    def __init__(self, chain: Chain, steps_bound: int):
        self.chain = chain
        N, L, k = chain.N, chain.L, chain.k
        self.m = _prime_count(coefficient_bound(N, L, k, max(steps_bound, 1)))
        self.primes = np.array(_primes(self.m), np.int64)
        S = chain.size
        K = k + 1
        self.K = K
        self.P = np.zeros((S, self.m * K), np.int64)
        self.P[0, [r * K for r in range(self.m)]] = 1
        # Toeplitz factors: coefficients of s^b (1 - L s)^(N-b) below degree k+1
        self.toeplitz = []
        for b in range(N + 1):
            poly = [0] * K
            for i in range(N - b + 1):
                if b + i < K:
                    poly[b + i] = math.comb(N - b, i) * (-L) ** i
            blocks = []
            for prime in self.primes:
                T = np.zeros((K, K), np.int64)
                for src in range(K):
                    for dst in range(src, K):
                        T[src, dst] = poly[dst - src] % int(prime)
                blocks.append(T)
            self.toeplitz.append(blocks)
        packets = np.array([s.packets() for s in chain.states])
        self.below = np.arange(K)[None, :] < packets[:, None]
        queued = [s.queued() for s in chain.states] if chain.compressed else [0] * S
        self.weights = np.array([[pow(L, q, int(prime)) for prime in self.primes]
                                 for q in queued], np.int64)

    def step(self) -> bool:
        K = self.K
        new = np.zeros_like(self.P)
        for b, M in enumerate(self.chain.matrices):
            if M.nnz == 0:
                continue
            Y = np.asarray(M @ self.P)
            for r, prime in enumerate(self.primes):
                blk = slice(r * K, (r + 1) * K)
                Yr = Y[:, blk] % prime
                new[:, blk] += (Yr @ self.toeplitz[b][r]) % prime
        for r, prime in enumerate(self.primes):
            blk = slice(r * K, (r + 1) * K)
            new[:, blk] %= prime
        changed = not np.array_equal(new, self.P)
        self.P = new
        return changed

    def check(self) -> None:
        K = self.K
        for r, prime in enumerate(self.primes):
            blk = self.P[:, r * K:(r + 1) * K]
            tot = ((blk * self.weights[:, r:r + 1]) % prime).sum(axis=0) % prime
            expect = np.zeros(K, np.int64)
            expect[0] = 1
            if not np.array_equal(tot, expect):
                raise AssertionError(f"probability conservation fails: {tot.tolist()}")
            if blk[self.below].any():
                raise AssertionError("a state has a coefficient below its packet count")

    def exact(self) -> dict:
        """Chinese-remainder the residues into signed integer series."""
        K, m = self.K, self.m
        primes = [int(x) for x in self.primes]
        modulus = math.prod(primes)
        half = modulus // 2
        basis = []
        for prime in primes:
            other = modulus // prime
            basis.append(other * pow(other, -1, prime))
        L = self.chain.L
        out = {}
        nz = np.nonzero(self.P.any(axis=1))[0]
        for idx in nz:
            row = self.P[idx].tolist()
            coeffs = []
            for j in range(K):
                v = sum(row[r * K + j] * basis[r] for r in range(m)) % modulus
                coeffs.append(v - modulus if v > half else v)
            state = self.chain.states[idx]
            if self.chain.compressed:
                scale = L ** state.queued()
                coeffs = [c * scale for c in coeffs]
            out[state] = IntSeries(coeffs)
        return out


def propagate(spec: RingSpec, k: int, steps: int, *, compressed: bool = False,
              check: bool = True, cap: int = DEFAULT_STATE_CAP) -> StateDist:
    """Series of each state's probability after ``steps`` steps from the empty ring.

    With ``check`` set, conservation and the minimum-degree law are asserted
    after every step.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    chain = build_chain(spec, k, compressed, cap)
    prop = _Propagator(chain, steps)
    for _ in range(steps):
        prop.step()
        if check:
            prop.check()
    return StateDist(spec, k, compressed, prop.exact(), frozenset(chain.states), steps)


def convergence_window(spec: RingSpec, k: int) -> int:
    return (k + 1) * (spec.L + spec.N)


def stationary_series(spec: RingSpec, k: int, *, compressed: bool = False,
                      check: bool = True, cap: int = DEFAULT_STATE_CAP,
                      window: Optional[int] = None, progress=None) -> StateDist:
    """Limit of :func:`propagate` as the step count grows.

    Convergence is declared once nothing of degree ``<= k`` has changed for
    ``window`` consecutive steps; propagation then continues to four windows
    in total and any later change raises :class:`ConvergenceError`.
    """
    W = window or convergence_window(spec, k)
    hard_cap = 4 * W
    chain = build_chain(spec, k, compressed, cap)
    prop = _Propagator(chain, hard_cap)
    last_change = 0
    declared = None
    for t in range(1, hard_cap + 1):
        if prop.step():
            last_change = t
            if declared is not None:
                raise ConvergenceError(f"coefficients changed at step {t} after "
                                       f"convergence was declared at step {declared}")
        if check:
            prop.check()
        if declared is None and t - last_change >= W:
            declared = last_change
        if progress:
            progress(t, hard_cap)
    if declared is None:
        raise ConvergenceError(f"no convergence within {hard_cap} steps")
    return StateDist(spec, k, compressed, prop.exact(), frozenset(chain.states), hard_cap,
                     True, declared, W)


def expected_queue_series(dist: StateDist) -> IntSeries:
    """Series of the expected total number of queued packets in the ring."""
    acc = [0] * (dist.k + 1)
    for state, series in dist.probs.items():
        q = state.queued()
        if q:
            for j, a in enumerate(series):
                acc[j] += q * a
    return IntSeries(acc)


def per_node(series: IntSeries, N: int) -> IntSeries:
    """Divide a ring total by ``N``; exact by rotational symmetry."""
    out = []
    for a in series:
        if a % N:
            raise ArithmeticError(f"coefficient {a} is not divisible by N={N}")
        out.append(a // N)
    return IntSeries(out)


def product_form_probe(spec: RingSpec, k: int, state, *,
                       compressed: bool = True) -> tuple[IntSeries, IntSeries]:
    """Series of ``state`` and of the same state with node order reversed."""
    state = SymbolicState(state)
    if compressed and not state.compressed:
        raise ValueError("compressed probe needs queue counts")
    dist = stationary_series(spec, k, compressed=compressed)
    return dist[state], dist[state.reversed()]
