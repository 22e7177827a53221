"""Sparse multivariate polynomials over the species counts."""

from __future__ import annotations

from math import comb
from typing import Iterable, Mapping, Sequence

MultiIndex = tuple[int, ...]


class Polynomial:
    """Immutable map from exponent tuples to non-zero float coefficients."""

    __slots__ = ("_terms", "nvars")

    def __init__(self, terms: Mapping[MultiIndex, float] | Iterable[tuple[MultiIndex, float]] = (), nvars: int = 0):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[MultiIndex, float] = {}
        for m, c in items:
            m = tuple(int(e) for e in m)
            if len(m) != nvars:
                raise ValueError(f"multi-index {m} does not have {nvars} entries")
            if any(e < 0 for e in m):
                raise ValueError(f"negative exponent in {m}")
            acc[m] = acc.get(m, 0.0) + float(c)
        self._terms = {m: c for m, c in sorted(acc.items()) if c != 0.0}
        self.nvars = nvars

    @classmethod
    def constant(cls, value: float, nvars: int) -> "Polynomial":
        return cls({(0,) * nvars: value}, nvars)

    @classmethod
    def variable(cls, index: int, nvars: int) -> "Polynomial":
        m = [0] * nvars
        m[index] = 1
        return cls({tuple(m): 1.0}, nvars)

    @classmethod
    def monomial(cls, m: Sequence[int], coefficient: float = 1.0) -> "Polynomial":
        return cls({tuple(m): coefficient}, len(m))

    # -- mapping-ish access
    @property
    def terms(self) -> dict[MultiIndex, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __iter__(self):
        return iter(self._terms)

    def __len__(self):
        return len(self._terms)

    def __getitem__(self, m: MultiIndex) -> float:
        return self._terms.get(tuple(m), 0.0)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self):
        return hash((self.nvars, tuple(self._terms.items())))

    def __repr__(self):
        return f"Polynomial({self._terms!r}, nvars={self.nvars})"

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        return max((sum(m) for m in self._terms), default=0)

    def constant_term(self) -> float:
        return self._terms.get((0,) * self.nvars, 0.0)

    # -- arithmetic
    def _check(self, other: "Polynomial"):
        if other.nvars != self.nvars:
            raise ValueError("polynomials over different variable counts")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self.nvars)
        self._check(other)
        return Polynomial(list(self._terms.items()) + list(other._terms.items()), self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({m: -c for m, c in self._terms.items()}, self.nvars)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self.nvars)
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial({m: c * other for m, c in self._terms.items()}, self.nvars)
        self._check(other)
        out: list[tuple[MultiIndex, float]] = []
        for ma, ca in self._terms.items():
            for mb, cb in other._terms.items():
                out.append((tuple(a + b for a, b in zip(ma, mb)), ca * cb))
        return Polynomial(out, self.nvars)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power of a polynomial")
        result = Polynomial.constant(1.0, self.nvars)
        for _ in range(k):
            result = result * self
        return result

    def __call__(self, x: Sequence[float]) -> float:
        total = 0.0
        for m, c in self._terms.items():
            term = c
            for xi, e in zip(x, m):
                for _ in range(e):
                    term *= xi
            total += term
        return total

    def shift(self, v: Sequence[int]) -> "Polynomial":
        """Return ``q`` with ``q(x) == p(x + v)``."""
        return shift_polynomial(self, v)

    def format(self, names: Sequence[str] | None = None) -> str:
        if not self._terms:
            return "0"
        names = names or [f"x{i}" for i in range(self.nvars)]
        parts = []
        for m, c in self._terms.items():
            factors = [n if e == 1 else f"{n}^{e}" for n, e in zip(names, m) if e]
            parts.append(" * ".join([repr(c)] + factors))
        return " + ".join(parts)


def shift_polynomial(p: Polynomial, v: Sequence[int]) -> Polynomial:
    """Binomial expansion of ``p(x + v)`` coordinate by coordinate."""
    if len(v) != p.nvars:
        raise ValueError("shift vector length differs from variable count")
    terms: list[tuple[MultiIndex, float]] = []
    for m, c in p.items():
        partial: list[tuple[list[int], float]] = [([], c)]
        for e, vi in zip(m, v):
            nxt = []
            for prefix, coef in partial:
                if vi == 0:
                    nxt.append((prefix + [e], coef))
                    continue
                # (x + vi)^e = sum_k C(e,k) x^k vi^(e-k)
                for k in range(e + 1):
                    nxt.append((prefix + [k], coef * comb(e, k) * float(vi) ** (e - k)))
            partial = nxt
        terms.extend((tuple(idx), coef) for idx, coef in partial)
    return Polynomial(terms, p.nvars)
