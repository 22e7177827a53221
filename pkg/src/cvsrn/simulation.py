"""Gillespie simulation with in-loop control-variate accumulators."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from . import _kernels
from .core import Model, TargetQuery, Trajectory, target_values
from .moments import ConstraintExpansion, LAMBDA_ZERO_TOL
from .polynomial import MultiIndex
from .stats import RunningStats

logger = logging.getLogger(__name__)

DEFAULT_MAX_EVENTS = 10**8


class SimulationError(RuntimeError):
    pass


_STATUS_MESSAGES = {
    _kernels.EVENT_CAP: "event cap exceeded",
    _kernels.BAD_PROPENSITY: "rate function returned a negative or non-finite propensity",
    _kernels.DIV_ZERO: "division by zero while evaluating a rate function",
    _kernels.NEGATIVE_STATE: "reaction fired without enough reactant molecules",
}


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    seed: int = 0
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.max_events <= 0:
            raise ValueError("event cap must be positive")


class CompiledModel:
    """Array form of a model: change matrix plus concatenated rate programs."""

    def __init__(self, model: Model):
        self.model = model
        self.x0 = np.array(model.initial_state, dtype=np.int64)
        self.change = model.change_matrix()
        ops, fargs, iargs, bounds = [], [], [], []
        depth = 1
        for j in range(len(model.reactions)):
            prog = model.rate_program(j)
            bounds.append((len(ops), len(ops) + len(prog)))
            ops.extend(prog.ops)
            fargs.extend(prog.fargs)
            iargs.extend(prog.iargs)
            depth = max(depth, prog.max_depth())
        self.ops = np.array(ops, dtype=np.int64)
        self.fargs = np.array(fargs, dtype=np.float64)
        self.iargs = np.array(iargs, dtype=np.int64)
        self.bounds = np.array(bounds, dtype=np.int64).reshape(-1, 2)
        self.ends = self.bounds[:, 1].copy()
        self.params = model.parameter_vector
        if self.params.size == 0:
            self.params = np.zeros(1)
        self.stack_size = depth


def compile_model(model: Model | CompiledModel) -> CompiledModel:
    return model if isinstance(model, CompiledModel) else CompiledModel(model)


@dataclass
class AccumulatorPlan:
    """Accumulator keys and the linear map from accumulators to ``Z``.

    ``Z = terminal_coef * x_T^terminal_exps + z_const - acc @ weights``.
    """

    keys: list[tuple[MultiIndex, float]]
    lams: np.ndarray
    key_lam: np.ndarray
    key_exps: np.ndarray
    weights: np.ndarray  # (n_keys, d)
    terminal_coef: np.ndarray  # (d,)
    terminal_exps: np.ndarray  # (d, n_species)
    z_const: np.ndarray  # (d,)
    expansions: list[ConstraintExpansion] = field(default_factory=list)

    @classmethod
    def build(cls, expansions: Sequence[ConstraintExpansion], n_species: int) -> "AccumulatorPlan":
        expansions = list(expansions)
        index: dict[tuple[MultiIndex, float], int] = {}
        for e in expansions:
            for k, _ in e.integral_monomials():
                index.setdefault((k, e.id.lam), len(index))
        keys = list(index)
        lam_values = sorted({lam for _, lam in keys})
        lam_pos = {lam: i for i, lam in enumerate(lam_values)}
        d = len(expansions)
        weights = np.zeros((len(keys), d))
        for col, e in enumerate(expansions):
            for k, c in e.integral_monomials():
                weights[index[(k, e.id.lam)], col] = c
        return cls(
            keys=keys,
            lams=np.array(lam_values, dtype=np.float64),
            key_lam=np.array([lam_pos[lam] for _, lam in keys], dtype=np.int64),
            key_exps=np.array([k for k, _ in keys], dtype=np.int64).reshape(len(keys), n_species),
            weights=weights,
            terminal_coef=np.array([e.terminal_coefficient for e in expansions], dtype=np.float64),
            terminal_exps=np.array([e.id.m for e in expansions], dtype=np.int64).reshape(d, n_species),
            z_const=np.array([e.z_constant() for e in expansions], dtype=np.float64),
            expansions=expansions,
        )

    @classmethod
    def from_keys(cls, keys, n_species: int) -> "AccumulatorPlan":
        """Plan that only accumulates the given ``(monomial, lam)`` integrals."""
        keys = list(dict.fromkeys((tuple(int(e) for e in k), float(lam)) for k, lam in keys))
        lam_values = sorted({lam for _, lam in keys})
        lam_pos = {lam: i for i, lam in enumerate(lam_values)}
        return cls(
            keys=keys,
            lams=np.array(lam_values, dtype=np.float64),
            key_lam=np.array([lam_pos[lam] for _, lam in keys], dtype=np.int64),
            key_exps=np.array([k for k, _ in keys], dtype=np.int64).reshape(len(keys), n_species),
            weights=np.zeros((len(keys), 0)),
            terminal_coef=np.zeros(0),
            terminal_exps=np.zeros((0, n_species), dtype=np.int64),
            z_const=np.zeros(0),
        )

    @property
    def n_keys(self) -> int:
        return len(self.keys)

    @property
    def d(self) -> int:
        return len(self.expansions)

    def z_values(self, terminal_states: np.ndarray, acc: np.ndarray) -> np.ndarray:
        x = np.asarray(terminal_states, dtype=np.float64)
        mono = np.prod(x[:, None, :] ** self.terminal_exps[None, :, :], axis=2)
        return mono * self.terminal_coef + self.z_const - acc @ self.weights


_WARM = False


def warm_up():
    """Load or compile the batch kernel once per process, outside timed regions."""
    global _WARM
    if _WARM:
        return
    change = np.ones((1, 1), dtype=np.int64)
    ops = np.array([0], dtype=np.int64)
    _kernels.ssa_batch(
        np.zeros(1, dtype=np.int64), change, ops, np.ones(1), np.zeros(1, dtype=np.int64),
        np.array([1], dtype=np.int64), np.zeros(1), 1.0, 10, 1,
        np.zeros(1), np.zeros(1, dtype=np.int64), np.ones((1, 1), dtype=np.int64),
        np.zeros(2, dtype=np.uint32), np.empty((2, 1), dtype=np.int64), np.zeros((2, 1)),
        np.zeros(2, dtype=np.int64), np.zeros(2, dtype=np.int64),
    )
    _WARM = True


def derive_seeds(seed: int, stage: int, n: int) -> np.ndarray:
    """Per-trajectory 32-bit seeds; entry ``i`` depends only on (seed, stage, i)."""
    return np.random.SeedSequence([int(seed), int(stage)]).generate_state(n, dtype=np.uint32)


def _resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("CV_SSA_WORKERS", "1"))
    return max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS))


def _run_kernel(cm: CompiledModel, horizon, max_events, plan, seeds, workers):
    n = seeds.shape[0]
    n_species = cm.x0.shape[0]
    if plan is None:
        lams = np.zeros(0)
        key_lam = np.zeros(0, dtype=np.int64)
        key_exps = np.zeros((0, n_species), dtype=np.int64)
    else:
        lams, key_lam, key_exps = plan.lams, plan.key_lam, plan.key_exps
    x_out = np.empty((n, n_species), dtype=np.int64)
    acc = np.zeros((n, key_lam.shape[0]))
    status = np.zeros(n, dtype=np.int64)
    events = np.zeros(n, dtype=np.int64)
    prev = numba.get_num_threads()
    numba.set_num_threads(_resolve_workers(workers))
    try:
        _kernels.ssa_batch(
            cm.x0, cm.change, cm.ops, cm.fargs, cm.iargs, cm.ends, cm.params,
            float(horizon), int(max_events), cm.stack_size,
            lams, key_lam, key_exps, seeds, x_out, acc, status, events,
        )
    finally:
        numba.set_num_threads(prev)
    bad = np.flatnonzero(status)
    if bad.size:
        code = int(status[bad[0]])
        raise SimulationError(f"trajectory {int(bad[0])}: {_STATUS_MESSAGES.get(code, code)}")
    return x_out, acc, events


def _single(model, config: SimConfig, plan: AccumulatorPlan | None, record: bool, stage: int, index: int):
    cm = compile_model(model)
    n_species = cm.x0.shape[0]
    seed = derive_seeds(config.seed, stage, index + 1)[index]
    if plan is None:
        lams = np.zeros(0)
        key_lam = np.zeros(0, dtype=np.int64)
        key_exps = np.zeros((0, n_species), dtype=np.int64)
    else:
        lams, key_lam, key_exps = plan.lams, plan.key_lam, plan.key_exps
    cap = 1024
    while True:
        x_out = np.empty(n_species, dtype=np.int64)
        acc = np.zeros(key_lam.shape[0])
        rec_t = np.empty(cap if record else 1)
        rec_s = np.empty((cap if record else 1, n_species), dtype=np.int64)
        status, _, n_rec = _kernels.ssa_run(
            cm.x0, cm.change, cm.ops, cm.fargs, cm.iargs, cm.ends, cm.params,
            float(config.horizon), int(config.max_events), cm.stack_size,
            lams, key_lam, key_exps, seed, x_out, acc, rec_t, rec_s, record,
        )
        if status == _kernels.RECORD_FULL:
            cap *= 4
            continue
        if status != _kernels.OK:
            raise SimulationError(_STATUS_MESSAGES.get(status, str(status)))
        traj = Trajectory(rec_t[: n_rec + 1].copy(), rec_s[:n_rec].copy()) if record else None
        return x_out, acc, traj


def simulate(model: Model | CompiledModel, config: SimConfig, stage: int = 0, index: int = 0) -> Trajectory:
    """Exact SSA path on ``[0, horizon]`` for stream ``(seed, stage, index)``."""
    return _single(model, config, None, True, stage, index)[2]


def simulate_with_accumulators(
    model: Model | CompiledModel, config: SimConfig, plan, stage: int = 0, index: int = 0,
) -> tuple[np.ndarray, dict[tuple[MultiIndex, float], float]]:
    """Terminal state and weighted integrals for every key of ``plan``.

    ``plan`` is an :class:`AccumulatorPlan` or an iterable of ``(monomial,
    lam)`` keys. Uses the same random stream as :func:`simulate` with equal
    arguments, so both see the same path.
    """
    if not isinstance(plan, AccumulatorPlan):
        plan = AccumulatorPlan.from_keys(plan, compile_model(model).x0.shape[0])
    x_out, acc, _ = _single(model, config, plan, False, stage, index)
    return x_out, {key: float(a) for key, a in zip(plan.keys, acc)}


def path_integrals(trajectory: Trajectory, keys: Sequence[tuple[MultiIndex, float]]) -> dict:
    """Post-hoc ``sum_i (exp(lam t_{i+1}) - exp(lam t_i)) / lam * x_i^m`` on a stored path."""
    t = np.asarray(trajectory.times, dtype=np.float64)
    x = np.asarray(trajectory.states, dtype=np.float64)
    out = {}
    for m, lam in keys:
        mono = np.prod(x ** np.asarray(m, dtype=np.float64), axis=1)
        if abs(lam) < LAMBDA_ZERO_TOL:
            w = np.diff(t)
        else:
            w = np.diff(np.exp(lam * t)) / lam
        out[(tuple(m), lam)] = float(np.sum(w * mono))
    return out


@dataclass
class BatchResult:
    V: np.ndarray
    Z: np.ndarray  # (n, d)
    stats: RunningStats
    wall_time: float
    events: np.ndarray
    terminal_states: np.ndarray

    @property
    def n(self) -> int:
        return len(self.V)

    @property
    def cost_per_trajectory(self) -> float:
        return self.wall_time / max(self.n, 1)


def run_batch(
    model: Model | CompiledModel,
    query: TargetQuery,
    expansions: Sequence[ConstraintExpansion] | AccumulatorPlan,
    n: int,
    seed: int,
    stage: int = 0,
    workers: int | None = None,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> BatchResult:
    """Simulate ``n`` trajectories and collect target values and ``Z`` vectors.

    Trajectory ``i`` uses the stream derived from ``(seed, stage, i)``, so the
    result does not depend on ``workers``.
    """
    if n < 2:
        raise ValueError("need at least two trajectories")
    cm = compile_model(model)
    if isinstance(expansions, AccumulatorPlan):
        plan = expansions
    else:
        plan = AccumulatorPlan.build(expansions, cm.x0.shape[0])
    seeds = derive_seeds(seed, stage, n)
    start = time.perf_counter()
    x_out, acc, events = _run_kernel(cm, query.horizon, max_events, plan if plan.n_keys else None, seeds, workers)
    wall = time.perf_counter() - start
    V = target_values(x_out, query)
    if plan.n_keys == 0:
        acc = np.zeros((n, 0))
    Z = plan.z_values(x_out, acc) if plan.d else np.zeros((n, 0))
    stats = RunningStats(Z.shape[1]).push_batch(V, Z)
    return BatchResult(V=V, Z=Z, stats=stats, wall_time=wall, events=events, terminal_states=x_out)
