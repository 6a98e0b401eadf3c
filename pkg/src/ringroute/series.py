"""Truncated power series with exact integer coefficients."""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence


class IntSeries:
    """``a_0 + a_1 s + ... + a_k s^k`` modulo ``s^(k+1)``.

    Coefficients are Python integers (or Fractions when a caller divides);
    equality compares the degree bound as well.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable, k: int | None = None):
        c = list(coeffs)
        if k is not None:
            c = (c + [0] * (k + 1))[: k + 1]
        if not c:
            raise ValueError("a series needs at least one coefficient")
        self.coeffs = tuple(c)

    @classmethod
    def zero(cls, k: int) -> "IntSeries":
        return cls([0] * (k + 1))

    @classmethod
    def one(cls, k: int) -> "IntSeries":
        return cls([1] + [0] * k)

    @property
    def k(self) -> int:
        return len(self.coeffs) - 1

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, j):
        return self.coeffs[j]

    def __iter__(self):
        return iter(self.coeffs)

    def __eq__(self, other) -> bool:
        if isinstance(other, IntSeries):
            return self.coeffs == other.coeffs
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.coeffs)

    def __repr__(self) -> str:
        return f"IntSeries({list(self.coeffs)})"

    def _check(self, other: "IntSeries") -> None:
        if self.k != other.k:
            raise ValueError(f"degree bounds differ: {self.k} vs {other.k}")

    def __add__(self, other: "IntSeries") -> "IntSeries":
        self._check(other)
        return IntSeries(a + b for a, b in zip(self, other))

    def __sub__(self, other: "IntSeries") -> "IntSeries":
        self._check(other)
        return IntSeries(a - b for a, b in zip(self, other))

    def __neg__(self) -> "IntSeries":
        return IntSeries(-a for a in self)

    def __mul__(self, other) -> "IntSeries":
        if not isinstance(other, IntSeries):
            return IntSeries(a * other for a in self)
        self._check(other)
        k = self.k
        out = [0] * (k + 1)
        for i, a in enumerate(self.coeffs):
            if a:
                for j in range(k + 1 - i):
                    out[i + j] += a * other.coeffs[j]
        return IntSeries(out)

    __rmul__ = __mul__

    def shift(self, n: int = 1) -> "IntSeries":
        """Multiply by ``s^n``."""
        return IntSeries([0] * n + list(self.coeffs[: len(self) - n]))

    def truncate(self, k: int) -> "IntSeries":
        if k > self.k:
            raise ValueError("cannot extend a truncated series")
        return IntSeries(self.coeffs[: k + 1])

    def valuation(self) -> int | None:
        """Index of the first nonzero coefficient, ``None`` for zero."""
        return next((j for j, a in enumerate(self.coeffs) if a), None)

    def is_integral(self) -> bool:
        return all(isinstance(a, int) or (isinstance(a, Fraction) and a.denominator == 1)
                   for a in self.coeffs)

    def __call__(self, s) -> Fraction | float:
        """Evaluate the truncated polynomial."""
        acc = 0
        for a in reversed(self.coeffs):
            acc = acc * s + a
        return acc

    def rescale(self, c) -> "IntSeries":
        """Substitute ``s -> c s``; use ``Fraction(1, L)`` to switch to ``p``."""
        return IntSeries(a * c ** j for j, a in enumerate(self.coeffs))

    def to_json(self) -> list[str]:
        return [str(a) for a in self.coeffs]

    @classmethod
    def from_json(cls, data: Sequence) -> "IntSeries":
        out = []
        for x in data:
            v = Fraction(str(x))
            out.append(int(v) if v.denominator == 1 else v)
        return cls(out)

    @classmethod
    def from_rational(cls, num: Sequence[int], den: Sequence[int], k: int) -> "IntSeries":
        """Expand ``num(s) / den(s)``; ``den[0]`` must be +-1 for integrality."""
        if not den or den[0] == 0:
            raise ValueError("denominator must have a nonzero constant term")
        num = list(num) + [0] * (k + 1)
        out = []
        for j in range(k + 1):
            acc = Fraction(num[j])
            for i in range(1, min(j, len(den) - 1) + 1):
                acc -= den[i] * out[j - i]
            v = acc / den[0]
            out.append(int(v) if v.denominator == 1 else v)
        return cls(out)
