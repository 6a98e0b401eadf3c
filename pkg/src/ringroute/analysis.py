"""Diagnostics for light-traffic series: rationality, absolute monotonicity,
leading-order checks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence, Union

from .series import IntSeries

PRIME = (1 << 61) - 1
CONFIRM_PRIME = (1 << 127) - 1


def coeff_matrix(c: Sequence[int], alpha: int, beta: int) -> list[list[int]]:
    """Rows ``(c[alpha+i], c[alpha+i-1], ..., c[alpha+i-beta])`` for ``i = 1..beta+1``.

    A kernel vector ``v`` is a polynomial ``sum v_j s^j`` whose product with
    the series vanishes in degrees ``alpha+1 .. alpha+beta+1``.
    """
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be >= 0")
    gamma = len(c) - 1
    if gamma < alpha + beta + 1:
        raise ValueError(f"need at least {alpha + beta + 2} coefficients, got {len(c)}")
    at = lambda j: int(c[j]) if j >= 0 else 0
    return [[at(alpha + i - j) for j in range(beta + 1)] for i in range(1, beta + 2)]


def rank_mod(M: Sequence[Sequence[int]], prime: int) -> int:
    rows = [[x % prime for x in row] for row in M]
    rank = 0
    ncols = len(rows[0]) if rows else 0
    for col in range(ncols):
        piv = next((r for r in range(rank, len(rows)) if rows[r][col]), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        inv = pow(rows[rank][col], -1, prime)
        rows[rank] = [x * inv % prime for x in rows[rank]]
        for r in range(len(rows)):
            if r != rank and rows[r][col]:
                f = rows[r][col]
                rows[r] = [(x - f * y) % prime for x, y in zip(rows[r], rows[rank])]
        rank += 1
    return rank


def nullspace(M: Sequence[Sequence[int]]) -> list[list[int]]:
    """Primitive integer basis of the rational kernel of ``M``."""
    rows = [[Fraction(x) for x in row] for row in M]
    ncols = len(M[0])
    pivots = []
    r = 0
    for col in range(ncols):
        piv = next((i for i in range(r, len(rows)) if rows[i][col]), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = 1 / rows[r][col]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][col]:
                f = rows[i][col]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(col)
        r += 1
    basis = []
    for fcol in (col for col in range(ncols) if col not in pivots):
        vec = [Fraction(0)] * ncols
        vec[fcol] = Fraction(1)
        for i, pcol in enumerate(pivots):
            vec[pcol] = -rows[i][fcol]
        den = math.lcm(*(x.denominator for x in vec))
        ints = [int(x * den) for x in vec]
        g = math.gcd(*ints)
        ints = [x // g for x in ints]
        lead = next(x for x in ints if x)
        basis.append([-x for x in ints] if lead < 0 else ints)
    return basis


def _pick_denominator(basis: list[list[int]]) -> list[int]:
    """Prefer a kernel vector with nonzero constant term and lowest degree."""
    usable = [v for v in basis if v[0]]
    pool = usable or basis
    return min(pool, key=lambda v: max(j for j, x in enumerate(v) if x))


@dataclass
class RationalityResult:
    alpha: int
    beta: int
    prime: int
    rank: int
    full_rank: bool
    annihilator: Optional[list[int]] = None
    verified: bool = False
    admissible: bool = False

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "prime": str(self.prime),
                "rank": self.rank, "full_rank": self.full_rank,
                "annihilator": None if self.annihilator is None else [str(x) for x in self.annihilator],
                "verified": self.verified, "admissible": self.admissible}


def verify_annihilator(c: Sequence[int], alpha: int, beta: int, v: Sequence[int]) -> bool:
    M = coeff_matrix(c, alpha, beta)
    return any(v) and all(sum(a * b for a, b in zip(row, v)) == 0 for row in M)


def rationality_test(c: Sequence[int], alpha: int, beta: int,
                     prime: int = PRIME) -> RationalityResult:
    """Rank of the coefficient matrix over GF(prime).

    On a rank deficiency an exact integer kernel vector is computed and
    checked against the integer matrix.  A deficiency seen only modulo
    ``prime`` (the prime divides every maximal minor) comes back with
    ``verified`` false; rerun with another prime.  ``admissible`` marks a
    kernel vector with nonzero constant term, i.e. a genuine denominator;
    leading zero coefficients in ``c`` can force kernels without one.
    """
    M = coeff_matrix(c, alpha, beta)
    n = beta + 1
    rank = rank_mod(M, prime)
    if rank == n:
        return RationalityResult(alpha, beta, prime, rank, True)
    if not any(any(row) for row in M):
        trivial = [1] + [0] * beta
        return RationalityResult(alpha, beta, prime, 0, False, trivial, True, True)
    basis = nullspace(M)
    if not basis:
        return RationalityResult(alpha, beta, prime, rank, False, None, False)
    vec = _pick_denominator(basis)
    return RationalityResult(alpha, beta, prime, rank, False, vec,
                             verify_annihilator(c, alpha, beta, vec), bool(vec[0]))


def rationality_scan(c: Sequence[int], total: int,
                     primes: Sequence[int] = (PRIME, CONFIRM_PRIME)) -> list[dict]:
    """Verdicts for every split ``alpha + beta = total`` under each prime."""
    out = []
    for alpha in range(total + 1):
        beta = total - alpha
        verdicts = [rationality_test(c, alpha, beta, q) for q in primes]
        out.append({"alpha": alpha, "beta": beta,
                     "full_rank": [v.full_rank for v in verdicts],
                     "admissible": [v.admissible for v in verdicts],
                     "agree": len({v.full_rank for v in verdicts}) == 1})
    return out


def recover_rational(c: Sequence[int], alpha: int, beta: int) -> Optional[tuple[list, list]]:
    """``(numerator, denominator)`` with the series equal to ``num/den`` through ``len(c)-1``.

    Returns ``None`` when the coefficient matrix has full rank or the
    recovered denominator does not reproduce the full coefficient list.
    """
    res = rationality_test(c, alpha, beta)
    if res.full_rank or not res.verified or not res.admissible:
        return None
    den = res.annihilator
    k = len(c) - 1
    prod = [sum(den[j] * int(c[i - j]) for j in range(min(i, beta) + 1)) for i in range(k + 1)]
    num = prod[: alpha + 1]
    if any(prod[alpha + 1:]):
        return None
    return num, den


Samples = Union[Mapping, Callable]


def _sample(f: Samples, point):
    if callable(f):
        return f(point)
    try:
        return f[point]
    except KeyError:
        raise ValueError(f"no sample at {point}; grid misaligned") from None


def finite_difference(f: Samples, x, n: int, h):
    """``n``-th forward difference with step ``h`` at ``x``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return sum((-1) ** (n - k) * math.comb(n, k) * _sample(f, x + k * h) for k in range(n + 1))


def f_n_recursion(f: Samples, x, h, n: int):
    """Value at ``x + n h`` of the ``n``-th term of the discrete Newton expansion.

    ``f_0`` is the constant ``f(x)``; for ``l >= 1``
    ``f_l(x + k h) = C(k, l) * (f(x + l h) - sum_{j<l} f_j(x + l h))``.
    The result equals the ``n``-th forward difference exactly.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    base = _sample(f, x)
    leads = []  # leads[l-1] = f(x + l h) - sum_{j<l} f_j(x + l h)

    def f_j(j, k):
        if j == 0:
            return base
        if k < j:
            return 0
        return leads[j - 1] * math.comb(k, j)

    for l in range(1, n + 1):
        leads.append(_sample(f, x + l * h) - sum(f_j(j, l) for j in range(l)))
    return f_j(n, n)


@dataclass
class MonotonicityVerdict:
    passed: bool
    mode: str
    witness: Optional[dict] = None

    def to_dict(self) -> dict:
        w = None if self.witness is None else {k: str(v) for k, v in self.witness.items()}
        return {"passed": self.passed, "mode": self.mode, "witness": w}


def abso_mono_verdict(f: Union[IntSeries, Sequence, Samples], domain=None,
                      max_n: int = 8) -> MonotonicityVerdict:
    """Absolute-monotonicity check.

    A series (``IntSeries`` or coefficient list) passes when every coefficient
    is nonnegative; the witness is the first negative coefficient.  Sampled
    functions need ``domain = (grid_points)`` sorted and evenly spaced; every
    difference ``Delta_h^n f(x)`` with ``n <= max_n`` whose points lie in
    the grid is tested.
    """
    if isinstance(f, IntSeries) or (isinstance(f, (list, tuple)) and domain is None):
        for j, a in enumerate(f):
            if a < 0:
                return MonotonicityVerdict(False, "series", {"degree": j, "coefficient": a})
        return MonotonicityVerdict(True, "series")
    points = list(domain)
    if len(points) < 2:
        return MonotonicityVerdict(True, "samples")
    step = points[1] - points[0]
    m = len(points)
    for n in range(max_n + 1):
        for stride in range(1, m):
            if n * stride >= m:
                break
            h = stride * step
            for i in range(m - n * stride):
                x = points[i]
                val = finite_difference(f, x, n, h)
                if val < 0:
                    return MonotonicityVerdict(False, "samples",
                                               {"n": n, "x": x, "h": h, "value": val})
    return MonotonicityVerdict(True, "samples")


@dataclass
class LeadingCheck:
    predicted: Fraction
    actual: int
    ok: bool


def light_traffic_leading(series: Union[IntSeries, Sequence[int]], N: int) -> LeadingCheck:
    """Compare the ``s^2`` coefficient with ``(N-2)/2 * (N-1)^2``."""
    coeffs = list(series)
    if len(coeffs) < 3:
        raise ValueError("series must reach degree 2")
    predicted = Fraction(N - 2, 2) * (N - 1) ** 2
    return LeadingCheck(predicted, coeffs[2], predicted == coeffs[2])
