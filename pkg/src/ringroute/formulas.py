"""Closed-form queueing quantities for Bernoulli rings and discrete queues.

Evaluators accept floats or :class:`fractions.Fraction`; rational input gives
rational output wherever the formula is rational.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .ring import RingSpec


def _unit(p):
    return Fraction(1) if isinstance(p, Fraction) else 1.0


def _check_l2(p) -> None:
    if p < 0 or p >= Fraction(2, 3):
        raise ValueError(f"need 0 <= p < 2/3 for a stable L=2 ring, got {p}")


def l2_ratio(p):
    """Geometric tail ratio ``p^2 / ((1-p)(2-p))`` of the L=2 occupancy law."""
    return p * p / ((1 - p) * (2 - p))


def l2_marginal(p, n: int):
    """Stationary probability that a node of an L=2 GHP ring holds ``n`` packets."""
    _check_l2(p)
    if n < 0:
        raise ValueError("n must be >= 0")
    one = _unit(p)
    empty = one - Fraction(3, 2) * p
    g = (1 - p) * (2 - p)
    if n == 0:
        return empty
    if n == 1:
        return empty * (3 * p - p * p) / g
    return empty * 2 * p ** (2 * (n - 1)) / g ** n


def l2_marginal_tail(p, n: int):
    """``Pr(more than n packets)`` for ``n >= 1``, summed in closed form."""
    _check_l2(p)
    if n < 1:
        raise ValueError("closed-form tail starts at n = 1")
    rho = l2_ratio(p)
    return l2_marginal(p, n + 1) / (1 - rho)


def l2_queue_marginal(p, n: int):
    """Stationary probability of ``n`` packets waiting (slot excluded)."""
    _check_l2(p)
    rho = l2_ratio(p)
    return (1 - rho) * rho ** n


@dataclass(frozen=True)
class L2Moments:
    expected_queue: object
    variance: object
    entropy: float


def l2_moments(p) -> L2Moments:
    """Mean, variance and entropy (nats) of the per-node queue length."""
    _check_l2(p)
    e = p * p / (2 - 3 * p)
    if p == 0:
        return L2Moments(e, e, 0.0)
    g = (1 - p) * (2 - p)
    h = -math.log((2 - 3 * p) / g) - float(e) * math.log(p * p / g)
    return L2Moments(e, e * e + e, h)


def _l2_node_prob(n: int, t, p):
    one = _unit(p)
    empty = one - Fraction(3, 2) * p
    if t in (None, 0, "X"):
        if n:
            raise ValueError("a node without a hot potato has an empty queue")
        return empty
    g = (1 - p) * (2 - p)
    if t == 1:
        if n == 0:
            return empty * p / (1 - p)
        return empty * p ** (2 * n) / g ** (n + 1) * (2 - p)
    if t == 2:
        return empty * p ** (2 * n) / g ** (n + 1) * p
    raise ValueError(f"hot potato distance must be 1, 2 or X on an L=2 ring, got {t!r}")


def l2_state_prob(state: Sequence, p, N: Optional[int] = None):
    """Product-form probability of an L=2 ring state.

    ``state`` lists ``(queued, slot)`` per node with ``slot`` in
    ``{1, 2, 0}``; 0 (or ``None``/``"X"``) marks an empty slot.
    """
    _check_l2(p)
    nodes = list(state)
    if N is not None and len(nodes) != N:
        raise ValueError(f"state has {len(nodes)} nodes, expected {N}")
    prob = _unit(p)
    for n, t in nodes:
        prob = prob * _l2_node_prob(n, t, p)
    return prob


@dataclass(frozen=True)
class BirthDeath:
    """Discrete-time single-server queue: one arrival w.p. ``a_hat`` and one
    service completion w.p. ``d_hat`` per step."""

    a_hat: object
    d_hat: object
    measure: str = "after-arrivals"

    def __post_init__(self):
        if self.measure not in ("after-arrivals", "after-departures"):
            raise ValueError("measure must be 'after-arrivals' or 'after-departures'")
        if not (0 <= self.a_hat < self.d_hat <= 1):
            raise ValueError("need 0 <= a_hat < d_hat <= 1")

    @property
    def A(self):
        return self.a_hat * (1 - self.d_hat)

    @property
    def D(self):
        return self.d_hat * (1 - self.a_hat)

    def prob(self, n: int):
        A, D = self.A, self.D
        if self.measure == "after-departures":
            return (A / D) ** n * (D - A) / D
        if n == 0:
            return (self.d_hat - self.a_hat) / self.d_hat
        return (self.a_hat / self.d_hat) * ((D - A) / D) * (A / D) ** (n - 1)

    def tail(self, n: int):
        """``Pr(more than n in system)``."""
        A, D = self.A, self.D
        if self.measure == "after-departures":
            return (A / D) ** (n + 1)
        if A == 0:
            return 0 * A if n >= 1 else self.a_hat / self.d_hat
        return (self.a_hat / self.d_hat) * (A / D) ** n

    def pmf(self, n_max: int) -> list:
        return [self.prob(n) for n in range(n_max + 1)]

    @property
    def expected_queue(self):
        """Mean number waiting, i.e. ``E[(n - 1)^+]``."""
        A, D = self.A, self.D
        if self.measure == "after-departures":
            return A * A / (D * (D - A))
        return self.a_hat ** 2 * (1 - self.d_hat) / (self.d_hat * (self.d_hat - self.a_hat))


def birth_death(a_hat, d_hat, measure: str = "after-arrivals") -> BirthDeath:
    return BirthDeath(a_hat, d_hat, measure)


def pk_queue(lam, EZ, EZ2):
    """Mean queue of a Bernoulli-arrival discrete single server."""
    if lam < 0:
        raise ValueError("arrival rate must be >= 0")
    if EZ < 1 or EZ2 < EZ:
        raise ValueError("need EZ2 >= EZ >= 1")
    if lam * EZ >= 1:
        raise ValueError(f"saturated server: lam*EZ = {lam * EZ} >= 1")
    return lam * lam * (EZ2 - EZ) / (2 * (1 - lam * EZ))


def one_node_service_moments(L: int) -> tuple[Fraction, Fraction]:
    """Moments of a path length uniform on ``1..L``."""
    return Fraction(L + 1, 2), Fraction((2 * L + 1) * (L + 1), 6)


def pk_one_node_ring(L: int, r):
    """P-K mean queue of a single-node ring with load ``r``."""
    EZ, EZ2 = one_node_service_moments(L)
    lam = 2 * r / (L + 1)
    if not isinstance(r, Fraction):
        EZ, EZ2 = float(EZ), float(EZ2)
    return pk_queue(lam, EZ, EZ2)


def one_node_ring_closed(L: int, r):
    return Fraction(L - 1, L + 1) * 2 * r * r / (3 * (1 - r)) if isinstance(r, Fraction) \
        else (L - 1) / (L + 1) * 2 * r * r / (3 * (1 - r))


def little_relations(r, e_queue) -> tuple:
    """``(idle probability, mean packets at node)`` from load and mean queue."""
    if r < 0 or r >= 1:
        raise ValueError("need 0 <= r < 1")
    return 1 - r, e_queue + r


@dataclass(frozen=True)
class ChernoffBound:
    exponent: float
    bound: float


def chernoff_bounds(beta: float, P: float, side: str = "upper") -> ChernoffBound:
    """Tail bound for a sum of independent Bernoullis with mean ``P``.

    ``upper`` bounds ``Pr(sum >= beta P)`` for ``beta > 1``; ``lower`` bounds
    ``Pr(sum <= beta P)`` for ``0 < beta < 1``.  The lower exponent is
    ``(beta - 1 + beta ln beta) P``, which is more negative than the
    textbook ``(beta - 1 - beta ln beta) P``; do not rely on it as a bound.
    """
    if P <= 0:
        raise ValueError("P must be > 0")
    if side == "upper":
        if beta <= 1:
            raise ValueError("upper bound needs beta > 1")
        exponent = (1 - 1 / beta - math.log(beta)) * beta * P
    elif side == "lower":
        if not 0 < beta < 1:
            raise ValueError("lower bound needs 0 < beta < 1")
        exponent = (1 - 1 / beta + math.log(beta)) * beta * P
    else:
        raise ValueError("side must be 'upper' or 'lower'")
    return ChernoffBound(exponent, math.exp(exponent))


def empty_slot_bound(A: float, B: float, C: float, D: float, r: float, N: float,
                     delta: float = 0.0) -> float:
    """Lower bound on the chance an empty slot reaches a node of a large ring."""
    total = A + B + C + D
    for name, v in (("A", A), ("B", B), ("C", C), ("D", D), ("A+B+C+D", total)):
        if not 0 < v < 1:
            raise ValueError(f"{name} must lie in (0, 1), got {v}")
    J = A * (A + B) * C * (C + D) * (1 - math.exp(-2 * r * B)) * (1 - math.exp(-2 * r * D))
    return (1 - delta + J * (1 / total - 1)) / N


def empty_slot_search(r: float = 0.5, grid: int = 40, polish: bool = True) -> tuple[float, tuple]:
    """Maximum of ``N * bound / 2`` over ``(A, B, C, D)``.

    A symmetric grid (``A=C``, ``B=D``) seeds a Nelder-Mead polish over all
    four parameters.
    """
    best = (-math.inf, ())
    for i, j in itertools.product(range(1, grid), repeat=2):
        a, b = i / (2 * grid), j / (2 * grid)
        if 2 * (a + b) >= 1:
            continue
        val = empty_slot_bound(a, b, a, b, r, 1.0) / 2
        if val > best[0]:
            best = (val, (a, b, a, b))
    if not polish:
        return best

    def loss(x):
        try:
            return -empty_slot_bound(*x, r, 1.0) / 2
        except ValueError:
            return math.inf

    res = optimize.minimize(loss, best[1], method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    if -res.fun > best[0]:
        best = (float(-res.fun), tuple(float(x) for x in res.x))
    return best


@dataclass
class TrafficModel:
    """Multiclass routing data: class ``c`` is served at ``constituency[c]``."""

    alpha: Sequence
    P: Sequence
    mu: Sequence
    constituency: Sequence

    def __post_init__(self):
        n = len(self.alpha)
        if len(self.P) != n or any(len(row) != n for row in self.P):
            raise ValueError("P must be square with one row per class")
        if len(self.mu) != n or len(self.constituency) != n:
            raise ValueError("mu and constituency need one entry per class")
        if any(a < 0 for a in self.alpha) or any(x < 0 for row in self.P for x in row):
            raise ValueError("rates and routing probabilities must be >= 0")
        if any(m <= 0 for m in self.mu):
            raise ValueError("service rates must be > 0")


def _exact(values) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in values)


def _solve_exact(M: list, rhs: list) -> list:
    """Gauss-Jordan over the rationals; ``None`` if ``M`` is singular."""
    n = len(M)
    aug = [list(map(Fraction, row)) + [Fraction(b)] for row, b in zip(M, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            return None
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [x * inv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [row[n] for row in aug]


def traffic_solve(model: TrafficModel) -> tuple[list, dict]:
    """Effective class rates and per-node loads.

    Exact inputs are solved over the rationals.  Transience is checked by
    requiring ``(I - P')^{-1}`` to exist and be entrywise nonnegative, which
    for a nonnegative ``P`` is equivalent to spectral radius below 1.
    """
    n = len(model.alpha)
    flat = list(model.alpha) + [x for row in model.P for x in row] + list(model.mu)
    if _exact(flat):
        M = [[(1 if i == j else 0) - Fraction(model.P[j][i]) for j in range(n)]
             for i in range(n)]
        inverse_cols = [_solve_exact(M, [1 if i == c else 0 for i in range(n)])
                        for c in range(n)]
        if any(col is None for col in inverse_cols) or \
                any(x < 0 for col in inverse_cols for x in col):
            raise ValueError("routing matrix is not transient (spectral radius >= 1)")
        lam = [sum(inverse_cols[c][i] * Fraction(model.alpha[c]) for c in range(n))
               for i in range(n)]
        mu = [Fraction(m) for m in model.mu]
    else:
        Pm = np.asarray(model.P, float)
        radius = max(abs(np.linalg.eigvals(Pm))) if n else 0.0
        if radius >= 1:
            raise ValueError(f"routing matrix is not transient (spectral radius {radius:.6g})")
        M = np.eye(n) - Pm.T
        cond = np.linalg.cond(M)
        if cond > 1e10:
            warnings.warn(f"ill-conditioned routing system (cond {cond:.3g})", RuntimeWarning)
        lam = list(np.linalg.solve(M, np.asarray(model.alpha, float)))
        mu = [float(m) for m in model.mu]
    rho: dict = {}
    for c in range(n):
        node = model.constituency[c]
        rho[node] = rho.get(node, 0) + lam[c] / mu[c]
    return lam, rho


def ring_traffic_model(N: int, L: int, p) -> TrafficModel:
    """Classes ``(origin, distance, hop)`` of a Bernoulli ring with unit service."""
    classes = [(o, d, h) for o in range(N) for d in range(1, L + 1) for h in range(d)]
    index = {c: i for i, c in enumerate(classes)}
    n = len(classes)
    rate = p / L
    zero = 0 * rate
    alpha = [rate if h == 0 else zero for (_, _, h) in classes]
    P = [[0] * n for _ in range(n)]
    for (o, d, h), i in index.items():
        if h + 1 < d:
            P[i][index[(o, d, h + 1)]] = 1
    constituency = [(o + h) % N for (o, _, h) in classes]
    return TrafficModel(alpha, P, [1] * n, constituency)


@dataclass
class BalanceReport:
    max_residual: object
    tail_bound: object
    states: int
    worst_state: tuple
    mass: object

    @property
    def ok(self) -> bool:
        return self.max_residual < self.tail_bound


def _numeric_node_moves(n: int, inc: int, L: int, p: float) -> list:
    """Compressed one-node GHP moves with their probabilities."""
    q = 1 - p
    if inc:
        return [((n, inc), q), ((n + 1, inc), p)]
    if n:
        return [((n - 1, r), q / L) for r in range(1, L + 1)] + \
               [((n, r), p / L) for r in range(1, L + 1)]
    return [((0, 0), q)] + [((0, d), p / L) for d in range(1, L + 1)]


def balance_check(spec: RingSpec, candidate: Callable, B: int, p: Optional[float] = None, *,
                  tail_ratio: Optional[float] = None,
                  tolerance: Optional[float] = None) -> BalanceReport:
    """Largest violation of the global balance equations by ``candidate``.

    With a :class:`~fractions.Fraction` ``p`` (and a candidate returning
    Fractions) the residual is computed exactly.
    States keep at most ``B`` queued packets per node; ``candidate`` maps a
    tuple of ``(queued, slot)`` pairs to a probability and is renormalised on
    that set.  Inflow is accumulated by expanding every retained state
    forward one step.
    """
    p = spec.p if p is None else p
    L, N = spec.L, spec.N
    if L is None:
        raise ValueError("balance check needs a finite maximum path length")
    exact = isinstance(p, Fraction)
    if tail_ratio is None:
        if L != 2:
            raise ValueError("tail_ratio is required unless L = 2")
        tail_ratio = l2_ratio(p)
    tail = tail_ratio ** B
    if tolerance is not None and tail > tolerance:
        raise ValueError(f"queue cap {B} gives tail bound {float(tail):.3g} above {tolerance:.3g}")
    node_states = [(0, 0)] + [(n, t) for t in range(1, L + 1) for n in range(B + 1)]
    states = list(itertools.product(node_states, repeat=N))
    pi = {s: (candidate(s) if exact else float(candidate(s))) for s in states}
    mass = sum(pi.values()) if exact else math.fsum(pi.values())
    inflow = dict.fromkeys(states, 0)
    for s, w in pi.items():
        if w == 0:
            continue
        incoming = [0] * N
        for i, (_, t) in enumerate(s):
            if t > 1:
                incoming[(i + 1) % N] = t - 1
        per_node = [[m for m in _numeric_node_moves(s[i][0], incoming[i], L, p) if m[0][0] <= B]
                    for i in range(N)]
        for combo in itertools.product(*per_node):
            prob = w
            for _, x in combo:
                prob *= x
            inflow[tuple(e for e, _ in combo)] += prob
    worst, worst_state = 0, states[0]
    for s in states:
        res = abs(pi[s] - inflow[s]) / mass
        if res > worst:
            worst, worst_state = res, s
    return BalanceReport(worst, tail, len(states), worst_state, mass)


def uniform_candidate(spec: RingSpec, B: int) -> Callable:
    count = (1 + spec.L * (B + 1)) ** spec.N
    return lambda state: Fraction(1, count)
