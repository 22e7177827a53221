"""Moment drift and the exponentially weighted moment constraints.

For ``f(x) = x^m`` and weight ``exp(lam t)`` every trajectory yields

    Z = exp(lam T) f(X_T) - f(x_0) - int_0^T exp(lam t) g(X_t) dt

with ``g = lam f + sum_j (f(x + v_j) - f(x)) alpha_j(x)``, and ``E[Z] = 0``.
``ConstraintExpansion`` stores the pieces of ``Z`` so the simulator only has
to accumulate ``int exp(lam t) X_t^k dt`` for the monomials ``k`` of ``g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .core import Model, stoich_change
from .polynomial import MultiIndex, Polynomial, shift_polynomial

LAMBDA_ZERO_TOL = 1e-12


@dataclass(frozen=True, order=True)
class ControlVariateId:
    m: MultiIndex
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(e) for e in self.m))
        object.__setattr__(self, "lam", float(self.lam))
        if any(e < 0 for e in self.m) or sum(self.m) < 1:
            raise ValueError(f"moment multi-index {self.m} must have order >= 1")

    @property
    def order(self) -> int:
        return sum(self.m)

    def label(self, species: Sequence[str] | None = None) -> str:
        names = species or [f"x{i}" for i in range(len(self.m))]
        mono = "*".join(n if e == 1 else f"{n}^{e}" for n, e in zip(names, self.m) if e)
        return f"{mono}@{self.lam:.6g}"


def moment_drift(model: Model, m: Sequence[int]) -> Polynomial:
    """Generator applied to ``x^m``: ``sum_j (f(x+v_j) - f(x)) alpha_j(x)``."""
    m = tuple(m)
    n = model.n_species
    if len(m) != n:
        raise ValueError("multi-index length differs from species count")
    f = Polynomial.monomial(m)
    total = Polynomial({}, n)
    if sum(m) == 0:
        return total
    for j, reaction in enumerate(model.reactions):
        diff = shift_polynomial(f, stoich_change(reaction)) - f
        if diff.is_zero():
            continue
        total = total + diff * model.rate_polynomial(j)
    return total


def weighted_integral_of_constant(lam: float, T: float) -> float:
    """``int_0^T exp(lam t) dt``."""
    if abs(lam) < LAMBDA_ZERO_TOL:
        return T
    return math.expm1(lam * T) / lam


@dataclass(frozen=True)
class ConstraintExpansion:
    id: ControlVariateId
    horizon: float
    terminal_coefficient: float  # exp(lam T)
    initial_term: float  # -x_0^m
    integral_terms: Polynomial  # g

    @property
    def integral_constant(self) -> float:
        return self.integral_terms.constant_term()

    def z_constant(self) -> float:
        """Deterministic part of ``Z``: ``-x_0^m - g_0 int exp(lam t) dt``."""
        lam = self.id.lam
        return self.initial_term - self.integral_constant * weighted_integral_of_constant(lam, self.horizon)

    def integral_monomials(self) -> list[tuple[MultiIndex, float]]:
        zero = (0,) * self.integral_terms.nvars
        return [(k, c) for k, c in self.integral_terms.items() if k != zero]

    def describe(self, species: Sequence[str] | None = None) -> str:
        names = species or [f"x{i}" for i in range(len(self.id.m))]
        lines = [
            f"constraint {self.id.label(names)}  T={self.horizon!r}",
            f"  terminal: {self.terminal_coefficient!r} * {Polynomial.monomial(self.id.m).format(names)}",
            f"  initial:  {self.initial_term!r}",
            "  integral: monomial -> coefficient",
        ]
        for k, c in self.integral_terms.items():
            mono = Polynomial.monomial(k).format(names).split(" * ", 1)
            lines.append(f"    {mono[1] if len(mono) > 1 else '1'} -> {c!r}")
        return "\n".join(lines)


def constraint_expansion(
    model: Model, cv: ControlVariateId, T: float, drift: Polynomial | None = None,
) -> ConstraintExpansion:
    """``drift`` may pass a precomputed ``moment_drift(model, cv.m)``."""
    if not T > 0:
        raise ValueError("horizon must be positive")
    if len(cv.m) != model.n_species:
        raise ValueError("multi-index length differs from species count")
    f = Polynomial.monomial(cv.m)
    g = f * cv.lam + (moment_drift(model, cv.m) if drift is None else drift)
    x0 = model.initial_state
    return ConstraintExpansion(
        id=cv,
        horizon=float(T),
        terminal_coefficient=math.exp(cv.lam * T),
        initial_term=-f(x0),
        integral_terms=g,
    )


def accumulator_keys(expansions: Iterable[ConstraintExpansion]) -> set[tuple[MultiIndex, float]]:
    """Distinct ``(monomial, lam)`` integrals needed by the expansions.

    The constant monomial is excluded; it is integrated in closed form.
    """
    keys = set()
    for e in expansions:
        for k, _ in e.integral_monomials():
            keys.add((k, e.id.lam))
    return keys


def multi_indices(n_species: int, max_order: int, min_order: int = 1) -> list[MultiIndex]:
    """All exponent vectors with ``min_order <= |m| <= max_order``, by order."""
    out = []
    for order in range(min_order, max_order + 1):
        level = [m for m in product(range(order + 1), repeat=n_species) if sum(m) == order]
        out.extend(sorted(level, reverse=True))
    return out


def z_realization(terminal_state: Sequence[int], accumulators: dict, expansion: ConstraintExpansion) -> float:
    """Value of ``Z`` on one trajectory from its terminal state and integrals."""
    lam = expansion.id.lam
    f_T = Polynomial.monomial(expansion.id.m)(np.asarray(terminal_state, dtype=float))
    integral = 0.0
    for k, c in expansion.integral_monomials():
        try:
            integral += c * accumulators[(k, lam)]
        except KeyError:
            raise KeyError(f"missing accumulator for monomial {k} at lambda={lam}") from None
    return expansion.terminal_coefficient * f_T + expansion.z_constant() - integral
