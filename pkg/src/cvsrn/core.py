"""Stochastic reaction network types."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Mapping, Sequence, Union

import numpy as np

from .polynomial import Polynomial
from .rates import (
    RateExpr,
    StackProgram,
    compile_expr,
    depends_on_species,
    mass_action_expr,
    to_polynomial,
    tree_eval,
)


class ModelError(ValueError):
    """Structurally invalid model."""


@dataclass(frozen=True)
class MassAction:
    """Mass-action kinetics with a (species-independent) rate constant."""

    constant: RateExpr


@dataclass(frozen=True)
class RateExpression:
    """Arbitrary rate function of the state."""

    expr: RateExpr


RateLaw = Union[MassAction, RateExpression]


@dataclass(frozen=True)
class Reaction:
    reactants: tuple[int, ...]
    products: tuple[int, ...]
    rate_law: RateLaw

    def __post_init__(self):
        object.__setattr__(self, "reactants", tuple(int(k) for k in self.reactants))
        object.__setattr__(self, "products", tuple(int(k) for k in self.products))
        if len(self.reactants) != len(self.products):
            raise ModelError("reactant and product vectors differ in length")
        if any(k < 0 for k in self.reactants + self.products):
            raise ModelError("negative stoichiometry")
        if not any(self.reactants) and not any(self.products):
            raise ModelError("reaction has neither reactants nor products")

    @property
    def change(self) -> tuple[int, ...]:
        return stoich_change(self)


def stoich_change(reaction: Reaction) -> tuple[int, ...]:
    """State increment ``v+ - v-`` applied when the reaction fires."""
    return tuple(p - r for r, p in zip(reaction.reactants, reaction.products))


@dataclass(frozen=True)
class Model:
    species: tuple[str, ...]
    reactions: tuple[Reaction, ...]
    parameters: Mapping[str, float] = field(default_factory=dict)
    initial_state: tuple[int, ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        object.__setattr__(self, "parameters", dict(self.parameters))
        init = tuple(int(x) for x in self.initial_state) or (0,) * len(self.species)
        object.__setattr__(self, "initial_state", init)
        if len(set(self.species)) != len(self.species):
            raise ModelError("duplicate species names")
        if len(init) != len(self.species):
            raise ModelError("initial state length differs from species count")
        if any(x < 0 for x in init):
            raise ModelError("negative initial count")
        for j, r in enumerate(self.reactions):
            if len(r.reactants) != len(self.species):
                raise ModelError(f"reaction {j} references undeclared species")
            if isinstance(r.rate_law, MassAction):
                if depends_on_species(r.rate_law.constant):
                    raise ModelError(f"reaction {j}: mass-action constant depends on the state")
                c = tree_eval(r.rate_law.constant, init, self.parameter_vector)
                if not c > 0:
                    raise ModelError(f"reaction {j}: mass-action constant must be positive, got {c}")

    def __eq__(self, other):
        if not isinstance(other, Model):
            return NotImplemented
        return (
            self.species == other.species
            and self.reactions == other.reactions
            and list(self.parameters.items()) == list(other.parameters.items())
            and self.initial_state == other.initial_state
        )

    __hash__ = None

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def parameter_vector(self) -> np.ndarray:
        return np.array(list(self.parameters.values()), dtype=np.float64)

    def species_index(self, name: str) -> int:
        try:
            return self.species.index(name)
        except ValueError:
            raise KeyError(f"unknown species {name!r}") from None

    def change_matrix(self) -> np.ndarray:
        return np.array([stoich_change(r) for r in self.reactions], dtype=np.int64).reshape(
            len(self.reactions), self.n_species
        )

    def rate_expr(self, j: int) -> RateExpr:
        r = self.reactions[j]
        if isinstance(r.rate_law, MassAction):
            return mass_action_expr(r.rate_law.constant, r.reactants, self.species)
        return r.rate_law.expr

    def rate_program(self, j: int) -> StackProgram:
        return compile_expr(self.rate_expr(j), self.n_species, len(self.parameters))

    def rate_polynomial(self, j: int) -> Polynomial:
        return to_polynomial(self.rate_expr(j), self.parameter_vector, self.n_species)

    def propensity(self, j: int, state: Sequence[int]) -> float:
        """Reference (tree-walking) propensity of reaction ``j``."""
        return tree_eval(self.rate_expr(j), state, self.parameter_vector)


def mass_action_propensity(reaction: Reaction, state: Sequence[int], parameters: Sequence[float] = ()) -> float:
    """``c * prod_i binom(x_i, v-_i)`` evaluated directly."""
    if not isinstance(reaction.rate_law, MassAction):
        raise TypeError("reaction does not use mass-action kinetics")
    c = tree_eval(reaction.rate_law.constant, state, parameters)
    for x, k in zip(state, reaction.reactants):
        c *= comb(int(x), k)
    return c


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-constant path: ``states[i]`` holds on ``[times[i], times[i+1])``.

    ``times[0]`` is 0 and the last entry of ``times`` is the horizon, so
    ``len(times) == len(states) + 1``.
    """

    times: np.ndarray
    states: np.ndarray

    @property
    def terminal_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_jumps(self) -> int:
        return len(self.states) - 1

    def to_csv(self, species: Sequence[str]) -> str:
        lines = ["time," + ",".join(species)]
        for t, x in zip(self.times[:-1], self.states):
            lines.append(f"{float(t)!r}," + ",".join(str(int(v)) for v in x))
        lines.append(f"{float(self.times[-1])!r}," + ",".join(str(int(v)) for v in self.states[-1]))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Mean:
    """Expected count of a species at the horizon."""

    species: int
    horizon: float

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


@dataclass(frozen=True)
class ThresholdProbability:
    """Probability that a species count is ``<= level`` at the horizon."""

    species: int
    level: int
    horizon: float

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.level < 0:
            raise ValueError("threshold level must be non-negative")


TargetQuery = Union[Mean, ThresholdProbability]


def target_values(terminal_states: np.ndarray, query: TargetQuery) -> np.ndarray:
    """Vectorised ``target_value`` over rows of terminal states."""
    x = np.asarray(terminal_states)
    if not 0 <= query.species < x.shape[-1]:
        raise IndexError(f"species index {query.species} out of range")
    col = x[..., query.species]
    if isinstance(query, Mean):
        return col.astype(np.float64)
    return (col <= query.level).astype(np.float64)


def target_value(trajectory: Trajectory, query: TargetQuery) -> float:
    return float(target_values(trajectory.terminal_state, query))


def describe_query(query: TargetQuery, species: Sequence[str]) -> dict:
    name = species[query.species]
    if isinstance(query, Mean):
        return {"kind": "mean", "species": name, "horizon": query.horizon}
    return {"kind": "prob_le", "species": name, "level": query.level, "horizon": query.horizon}
