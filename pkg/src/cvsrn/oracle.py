"""Reference answers: birth-death closed form and a finite state projection.

The FSP integrates the master equation on the states reachable from the
initial state inside a box. Probability flowing out of the box is collected
in an absorbing sink so that tracked mass plus lost mass stays 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp

from .core import Model, TargetQuery, target_values
from .rates import BinOp, Const, Neg, Param, Pow, SpeciesRef

MAX_FSP_STATES = 10**6
MAX_BOX_CELLS = 10**8


class TruncationError(RuntimeError):
    """Lost probability mass exceeds the tolerance, or the window is too large."""


def bd_mean_closed_form(gamma: float, delta: float, T: float) -> float:
    """``E[X_T] = gamma/delta (1 - exp(-delta T))`` for ``X_0 = 0``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if T < 0:
        raise ValueError("T must be non-negative")
    if math.isinf(T):
        return gamma / delta
    return -gamma / delta * math.expm1(-delta * T)


@dataclass(frozen=True)
class TruncationBox:
    upper: tuple[int, ...]
    tolerance: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "upper", tuple(int(u) for u in self.upper))

    def check(self, model: Model):
        if len(self.upper) != model.n_species:
            raise ValueError("box dimension differs from species count")
        if any(x > u for x, u in zip(model.initial_state, self.upper)):
            raise ValueError("initial state lies outside the box")


def _eval_vec(expr, X: np.ndarray, params: np.ndarray) -> np.ndarray:
    """Tree-walk evaluation over many states at once (rows of ``X``)."""
    if isinstance(expr, Const):
        return np.full(X.shape[0], float(expr.value))
    if isinstance(expr, Param):
        return np.full(X.shape[0], float(params[expr.index]))
    if isinstance(expr, SpeciesRef):
        return X[:, expr.index].astype(np.float64)
    if isinstance(expr, Neg):
        return -_eval_vec(expr.operand, X, params)
    if isinstance(expr, Pow):
        base = _eval_vec(expr.base, X, params)
        if expr.exponent < 0 and np.any(base == 0):
            raise ZeroDivisionError("zero raised to a negative power")
        return base ** float(expr.exponent)
    if isinstance(expr, BinOp):
        a = _eval_vec(expr.left, X, params)
        b = _eval_vec(expr.right, X, params)
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        if np.any(b == 0):
            raise ZeroDivisionError("division by zero in rate expression")
        return a / b
    raise TypeError(f"malformed expression node {expr!r}")


def propensity_matrix(model: Model, X: np.ndarray) -> np.ndarray:
    """Propensities of all reactions at the rows of ``X`` (states x reactions)."""
    params = model.parameter_vector
    cols = [_eval_vec(model.rate_expr(j), X, params) for j in range(len(model.reactions))]
    return np.column_stack(cols) if cols else np.zeros((X.shape[0], 0))


def reachable_states(model: Model, box: TruncationBox, max_states: int = MAX_FSP_STATES) -> np.ndarray:
    """Breadth-first enumeration of states reachable inside the box."""
    box.check(model)
    upper = np.array(box.upper, dtype=np.int64)
    dims = upper + 1
    cells = int(np.prod(dims.astype(object)))
    if cells > MAX_BOX_CELLS:
        raise TruncationError(f"box has {cells} cells; model out of FSP scope")
    change = model.change_matrix()
    visited = np.zeros(cells, dtype=bool)
    x0 = np.array(model.initial_state, dtype=np.int64)[None, :]
    visited[np.ravel_multi_index(x0.T, dims)] = True
    found = [x0]
    frontier = x0
    total = 1
    while frontier.shape[0] and change.shape[0]:
        props = propensity_matrix(model, frontier)
        cand = frontier[:, None, :] + change[None, :, :]
        ok = (props > 0) & np.all(cand >= 0, axis=2) & np.all(cand <= upper, axis=2)
        cand = cand[ok]
        if cand.shape[0] == 0:
            break
        flat = np.unique(np.ravel_multi_index(cand.T, dims))
        flat = flat[~visited[flat]]
        visited[flat] = True
        frontier = np.column_stack(np.unravel_index(flat, dims)).astype(np.int64)
        total += frontier.shape[0]
        if total > max_states:
            raise TruncationError(f"more than {max_states} reachable states; model out of FSP scope")
        found.append(frontier)
    return np.concatenate(found, axis=0)


@dataclass
class FspResult:
    states: np.ndarray
    probabilities: np.ndarray
    lost_mass: float
    horizon: float

    @property
    def tracked_mass(self) -> float:
        return float(self.probabilities.sum())

    def expectation(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.probabilities, f(self.states)))

    def moment(self, m: Sequence[int]) -> float:
        mono = np.prod(self.states.astype(np.float64) ** np.asarray(m, dtype=np.float64), axis=1)
        return float(np.dot(self.probabilities, mono))

    def mean(self, species: int) -> float:
        return float(np.dot(self.probabilities, self.states[:, species]))

    def query_value(self, query: TargetQuery) -> float:
        return float(np.dot(self.probabilities, target_values(self.states, query)))


class FiniteStateProjection:
    """Truncated master equation on the reachable states of a box."""

    def __init__(self, model: Model, box: TruncationBox, max_states: int = MAX_FSP_STATES):
        self.model = model
        self.box = box
        self.states = reachable_states(model, box, max_states)
        n = self.states.shape[0]
        dims = np.array(box.upper, dtype=np.int64) + 1
        lookup = np.full(int(np.prod(dims)), -1, dtype=np.int64)
        lookup[np.ravel_multi_index(self.states.T, dims)] = np.arange(n)
        change = model.change_matrix()
        props = propensity_matrix(model, self.states)
        rows, cols, vals = [], [], []
        sink = n
        for j in range(change.shape[0]):
            a = props[:, j]
            live = a > 0
            src = np.flatnonzero(live)
            tgt = self.states[src] + change[j]
            inside = np.all(tgt >= 0, axis=1) & np.all(tgt <= dims - 1, axis=1)
            dest = np.full(src.shape[0], sink, dtype=np.int64)
            dest[inside] = lookup[np.ravel_multi_index(tgt[inside].T, dims)]
            # unreachable-by-BFS targets cannot occur inside the box
            rows.append(dest)
            cols.append(src)
            vals.append(a[src])
            rows.append(src)
            cols.append(src)
            vals.append(-a[src])
        if rows:
            rows, cols, vals = (np.concatenate(v) for v in (rows, cols, vals))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        self.generator = sparse.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))
        self.p0 = np.zeros(n + 1)
        self.p0[0] = 1.0  # BFS puts the initial state first

    def solve(self, T: float, p0: np.ndarray | None = None, rtol: float = 1e-8, atol: float = 1e-14,
              method: str = "RK45") -> np.ndarray:
        """Distribution (with sink as last entry) at time ``T``."""
        p = self.p0 if p0 is None else p0
        if T == 0 or self.generator.nnz == 0:
            return p.copy()
        Q = self.generator
        sol = solve_ivp(lambda t, y: Q @ y, (0.0, T), p, method=method, rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"FSP integration failed: {sol.message}")
        return sol.y[:, -1]

    def result(self, p: np.ndarray, T: float) -> FspResult:
        probs = np.clip(p[:-1], 0.0, None)
        return FspResult(self.states, probs, max(float(p[-1]), 0.0), T)


def fsp_transient(model: Model, box: TruncationBox, T: float, rtol: float = 1e-8, method: str = "RK45") -> FspResult:
    """Transient distribution at ``T``; raises if lost mass exceeds the tolerance."""
    fsp = FiniteStateProjection(model, box)
    res = fsp.result(fsp.solve(T, rtol=rtol, method=method), T)
    if res.lost_mass > box.tolerance:
        raise TruncationError(f"lost mass {res.lost_mass:.3g} exceeds tolerance {box.tolerance:g}; enlarge the box")
    return res
