"""Exact arithmetic on radial profiles of the form sum c * r**a * log(r)**b."""

from __future__ import annotations

from collections import defaultdict
from math import factorial

import numpy as np


class PowerLog:
    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms: dict[tuple[int, int], complex] = {}
        for key, c in (terms or {}).items():
            if c != 0:
                self.terms[key] = complex(c)

    @classmethod
    def monomial(cls, a: int, b: int = 0, c: complex = 1.0) -> "PowerLog":
        return cls({(a, b): c})

    def __add__(self, other):
        out = defaultdict(complex, self.terms)
        for key, c in other.terms.items():
            out[key] += c
        return PowerLog(out)

    def __sub__(self, other):
        return self + other * (-1.0)

    def __mul__(self, other):
        if isinstance(other, PowerLog):
            out = defaultdict(complex)
            for (a1, b1), c1 in self.terms.items():
                for (a2, b2), c2 in other.terms.items():
                    out[(a1 + a2, b1 + b2)] += c1 * c2
            return PowerLog(out)
        return PowerLog({key: c * other for key, c in self.terms.items()})

    __rmul__ = __mul__

    def shift(self, m: int) -> "PowerLog":
        """Multiply by r**m."""
        return PowerLog({(a + m, b): c for (a, b), c in self.terms.items()})

    def diff(self) -> "PowerLog":
        out = defaultdict(complex)
        for (a, b), c in self.terms.items():
            if a != 0:
                out[(a - 1, b)] += a * c
            if b != 0:
                out[(a - 1, b - 1)] += b * c
        return PowerLog(out)

    def conj(self) -> "PowerLog":
        return PowerLog({key: np.conj(c) for key, c in self.terms.items()})

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.log(r)
            for (a, b), c in self.terms.items():
                term = r**a if a != 0 else np.ones_like(r)
                if b:
                    term = term * lg**b
                out = out + c * term
        return out

    def integrate(self, r0: float, r1: float) -> complex:
        """Exact definite integral over [r0, r1]; r0 may be 0 for regular profiles."""
        return sum(c * (_antiderivative(a, b, r1) - _antiderivative(a, b, r0))
                   for (a, b), c in self.terms.items())


def _antiderivative(a: int, b: int, r: float) -> float:
    if r == 0.0:
        if a + 1 > 0:
            return 0.0
        raise ValueError(f"r**{a} log**{b} is not integrable at 0")
    lg = np.log(r)
    if a == -1:
        return lg ** (b + 1) / (b + 1)
    # int r^a log^b r dr = r^(a+1) sum_j (-1)^j b!/(b-j)! log^(b-j) r / (a+1)^(j+1)
    s = 0.0
    for j in range(b + 1):
        s += (-1) ** j * factorial(b) / factorial(b - j) * lg ** (b - j) / (a + 1) ** (j + 1)
    return r ** (a + 1) * s
