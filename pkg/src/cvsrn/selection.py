"""Candidate search and redundancy-aware greedy selection of control variates.

Pipeline (``run_pipeline``):

1. initial pool: every moment of order ``1..n_max`` combined with ``lam = 0``
   and ``n_lambda`` draws from the prior;
2. ``n_r`` resampling rounds: new candidates get a cheap pilot estimate of
   their correlation with the target from ``d`` trajectories, then ``n_c``
   parents are drawn with probability proportional to their improvement ratio
   and each spawns ``n_s`` children with a perturbed ``lam``. Children of the
   last round are never evaluated and do not join the pool;
3. covariance of the whole pool from ``5 d`` trajectories;
4. greedy selection with redundancy discount;
5. a fresh batch of ``n`` trajectories with only the selected variates.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .control_variates import EfficiencyReport, LcvEstimate, improvement_ratio, lcv_estimate
from .core import Model, TargetQuery, describe_query
from .moments import ControlVariateId, constraint_expansion, moment_drift, multi_indices
from .rates import PolynomialityError
from .simulation import DEFAULT_MAX_EVENTS, BatchResult, CompiledModel, run_batch, warm_up
from .stats import RunningStats

logger = logging.getLogger(__name__)

# stream ids for the pipeline stages; pilot round r uses PILOT_STAGE + r
LAMBDA_STAGE = 1
COVARIANCE_STAGE = 2
FINAL_STAGE = 3
PILOT_STAGE = 100


@dataclass
class SelectionConfig:
    n: int = 10_000
    d: int = 10
    n_max: int = 1
    n_lambda: int = 10
    n_c: int = 2
    n_s: int = 2
    n_r: int = 3
    epsilon: float = 1.02
    step_sd: float = 0.5
    prior_mean: float = 0.0
    prior_sd: float = 1.0
    covariance_factor: int = 5
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        for name in ("n", "d", "n_max", "n_c", "n_s"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.n < 2 or self.d < 2:
            raise ValueError("n and d must be at least 2")
        if self.covariance_factor < 1:
            raise ValueError("covariance_factor must be at least 1")
        if self.n_lambda < 0 or self.n_r < 0:
            raise ValueError("n_lambda and n_r must be non-negative")
        if self.step_sd <= 0 or self.prior_sd <= 0:
            raise ValueError("standard deviations must be positive")


@dataclass
class Candidate:
    id: ControlVariateId
    round: int
    rho: float | None = None  # pilot correlation with the target

    @property
    def gamma(self) -> float | None:
        return None if self.rho is None else improvement_ratio(self.rho)


class CandidatePool:
    """Ordered, duplicate-free collection of control-variate candidates."""

    def __init__(self):
        self.candidates: list[Candidate] = []
        self._index: dict[ControlVariateId, int] = {}

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __contains__(self, cv: ControlVariateId):
        return cv in self._index

    @property
    def ids(self) -> list[ControlVariateId]:
        return [c.id for c in self.candidates]

    def add(self, ids: Sequence[ControlVariateId], round: int) -> list[ControlVariateId]:
        """Add new ids; returns those that were not already present."""
        added = []
        for cv in ids:
            if cv in self._index:
                continue
            self._index[cv] = len(self.candidates)
            self.candidates.append(Candidate(cv, round))
            added.append(cv)
        return added

    def get(self, cv: ControlVariateId) -> Candidate:
        return self.candidates[self._index[cv]]

    def set_pilot(self, cv: ControlVariateId, rho: float):
        self.candidates[self._index[cv]].rho = float(rho)

    def evaluated(self) -> list[Candidate]:
        return [c for c in self.candidates if c.rho is not None]


def _expansions(model: Model, ids, T, drifts: dict | None = None):
    drifts = {} if drifts is None else drifts
    out = []
    for cv in ids:
        if cv.m not in drifts:
            drifts[cv.m] = moment_drift(model, cv.m)
        out.append(constraint_expansion(model, cv, T, drifts[cv.m]))
    return out


def init_pool(model: Model, config: SelectionConfig, rng: np.random.Generator, drifts: dict | None = None) -> CandidatePool:
    """Initial candidates: all moments up to ``n_max`` times ``{0} + n_lambda`` prior draws.

    Moments whose drift is not polynomial are skipped with a warning.
    ``drifts`` (optional) is filled with the drift of every kept moment.
    """
    drifts = {} if drifts is None else drifts
    lams = [0.0] + list(rng.normal(config.prior_mean, config.prior_sd, size=config.n_lambda))
    pool = CandidatePool()
    ids = []
    for m in multi_indices(model.n_species, config.n_max):
        try:
            drifts[m] = moment_drift(model, m)
        except PolynomialityError as exc:
            logger.warning("skipping moment %s: %s", m, exc)
            continue
        ids.extend(ControlVariateId(m, lam) for lam in lams)
    pool.add(ids, round=0)
    return pool


def resample_round(pool: CandidatePool, config: SelectionConfig, rng: np.random.Generator, round: int) -> list[ControlVariateId]:
    """Spawn children of candidates drawn proportionally to their improvement ratio.

    Parents are drawn with replacement from the evaluated candidates; each
    draw spawns ``n_s`` children ``(m, lam')`` with ``lam' ~ N(lam, step_sd^2)``.
    Returns the children that are new to the pool (they are added to it).
    """
    parents = pool.evaluated()
    if not parents:
        return []
    gam = np.array([c.gamma for c in parents])
    picks = rng.choice(len(parents), size=config.n_c, replace=True, p=gam / gam.sum())
    children = []
    for k in picks:
        parent = parents[k].id
        for lam in rng.normal(parent.lam, config.step_sd, size=config.n_s):
            children.append(ControlVariateId(parent.m, lam))
    return pool.add(children, round=round)


def greedy_select(gamma_v: np.ndarray, gamma_pair: np.ndarray, epsilon: float):
    """Greedy pick by improvement ratio discounted for redundancy.

    The score of candidate ``i`` given the current selection ``S`` is
    ``gamma_v[i] * prod_{j in S} 1 / gamma_pair[i, j]``. Picks the best
    score while it exceeds ``epsilon``. Returns ``(order, scores_at_pick,
    final_scores)`` where ``final_scores`` holds the last computed score of
    every candidate (``nan`` for selected ones).
    """
    gamma_v = np.asarray(gamma_v, dtype=np.float64)
    gamma_pair = np.asarray(gamma_pair, dtype=np.float64)
    k = gamma_v.shape[0]
    scores = gamma_v.copy()
    remaining = np.ones(k, dtype=bool)
    order: list[int] = []
    picked_scores: list[float] = []
    while remaining.any():
        masked = np.where(remaining, scores, -np.inf)
        best = int(np.argmax(masked))
        if not masked[best] > epsilon:
            break
        order.append(best)
        picked_scores.append(float(masked[best]))
        remaining[best] = False
        scores = scores / gamma_pair[:, best]
    final = np.where(remaining, scores, np.nan)
    return order, picked_scores, final


def pair_gammas(corr: np.ndarray) -> np.ndarray:
    """Pairwise improvement ratios; the diagonal is set to 1 (never used)."""
    g = improvement_ratio(corr)
    g = np.atleast_2d(g)
    np.fill_diagonal(g, 1.0)
    return g


class GreedyCVSelector(SelectorMixin, BaseEstimator):
    """Select control-variate columns of ``Z`` for estimating ``E[V]``.

    Parameters
    ----------
    epsilon : float
        Minimum discounted improvement ratio for a column to be picked.
    """

    def __init__(self, epsilon: float = 1.02):
        self.epsilon = epsilon

    def fit(self, Z, V):
        Z = check_array(Z, ensure_min_samples=2)
        V = check_array(V, ensure_2d=False, ensure_min_samples=2)
        check_consistent_length(Z, V)
        stats = RunningStats(Z.shape[1]).push_batch(V, Z)
        return self.fit_stats(stats)

    def fit_stats(self, stats: RunningStats):
        corr = stats.correlation()
        d = stats.d
        self.gamma_v_ = np.atleast_1d(improvement_ratio(corr[:d, d]))
        self.gamma_pair_ = pair_gammas(corr[:d, :d])
        self.order_, self.pick_scores_, self.scores_ = greedy_select(self.gamma_v_, self.gamma_pair_, self.epsilon)
        self.n_features_in_ = d
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "order_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.order_] = True
        return mask


@dataclass
class SelectionOutcome:
    selected: list[ControlVariateId]
    gamma_v: dict[ControlVariateId, float]
    pick_scores: dict[ControlVariateId, float]
    audit: dict = field(default_factory=dict)

    def to_json(self, species: Sequence[str] | None = None) -> str:
        return json.dumps(self.audit_record(species), indent=2)

    def audit_record(self, species: Sequence[str] | None = None) -> dict:
        out = dict(self.audit)
        out["selected"] = [
            {"m": list(cv.m), "lambda": cv.lam, "label": cv.label(species), "gamma_v": self.gamma_v[cv],
             "score": self.pick_scores[cv]}
            for cv in self.selected
        ]
        return out


@dataclass
class PipelineResult:
    estimate: LcvEstimate
    selection: SelectionOutcome
    efficiency: EfficiencyReport | None
    timings: dict
    final_batch: BatchResult
    query: TargetQuery
    config: SelectionConfig
    seed: int

    @property
    def n_selected(self) -> int:
        return len(self.selection.selected)


def _pilot(model, cm, query, pool, ids, n, seed, stage, workers, max_events, drifts):
    batch = run_batch(cm, query, _expansions(model, ids, query.horizon, drifts), n, seed, stage, workers, max_events)
    corr = batch.stats.correlation()
    d = len(ids)
    for i, cv in enumerate(ids):
        pool.set_pilot(cv, corr[i, d])
    return batch


def run_pipeline(
    model: Model,
    query: TargetQuery,
    config: SelectionConfig | None = None,
    seed: int = 0,
    workers: int | None = None,
    measure_baseline: bool = True,
    forced: Sequence[ControlVariateId] | None = None,
) -> PipelineResult:
    """Search, select and estimate; see the module docstring for the stages.

    ``forced`` skips the search and uses the given variates directly.
    With ``measure_baseline`` a plain batch on the same random streams as the
    final batch is timed to obtain the baseline cost ``c0``.
    """
    config = config or SelectionConfig()
    cm = CompiledModel(model)
    T = query.horizon
    species = model.species
    timings: dict[str, float] = {}
    audit: dict = {"query": describe_query(query, species), "seed": seed, "rounds": []}
    drifts: dict = {}
    warm_up()
    start = time.perf_counter()

    if forced is not None:
        selected = list(forced)
        gamma_v = {cv: float("nan") for cv in selected}
        pick_scores = dict(gamma_v)
    else:
        rng = np.random.default_rng([seed, LAMBDA_STAGE])
        pool = init_pool(model, config, rng, drifts)
        new = pool.ids
        for r in range(config.n_r):
            if new:
                _pilot(model, cm, query, pool, new, config.d, seed, PILOT_STAGE + r, workers, config.max_events,
                       drifts)
            audit["rounds"].append({
                "round": r,
                "evaluated": [{"m": list(cv.m), "lambda": cv.lam, "rho": pool.get(cv).rho}
                              for cv in new],
            })
            if r + 1 < config.n_r:
                new = resample_round(pool, config, rng, round=r + 1)
        timings["search"] = time.perf_counter() - start

        ids = pool.ids
        if ids:
            n_cov = max(config.covariance_factor * config.d, 2)
            cov_batch = run_batch(cm, query, _expansions(model, ids, T, drifts), n_cov, seed, COVARIANCE_STAGE,
                                  workers, config.max_events)
            selector = GreedyCVSelector(config.epsilon).fit_stats(cov_batch.stats)
            selected = [ids[i] for i in selector.order_]
            gamma_v = {cv: float(g) for cv, g in zip(ids, selector.gamma_v_)}
            pick_scores = {ids[i]: s for i, s in zip(selector.order_, selector.pick_scores_)}
            audit["covariance"] = {
                "n": n_cov,
                "candidates": [
                    {"m": list(cv.m), "lambda": cv.lam, "gamma_v": float(g),
                     "final_score": None if np.isnan(s) else float(s)}
                    for cv, g, s in zip(ids, selector.gamma_v_, selector.scores_)
                ],
            }
        else:
            selected, gamma_v, pick_scores = [], {}, {}
        timings["selection"] = time.perf_counter() - start - timings["search"]

    t_final = time.perf_counter()
    final = run_batch(cm, query, _expansions(model, selected, T, drifts), config.n, seed, FINAL_STAGE, workers,
                      config.max_events)
    timings["final"] = time.perf_counter() - t_final
    c1 = time.perf_counter() - start
    timings["total"] = c1
    estimate = lcv_estimate(final.stats)
    outcome = SelectionOutcome(selected, {cv: gamma_v[cv] for cv in selected}, pick_scores, audit)
    if estimate.dropped:
        audit["dropped"] = [selected[i].label(species) for i in estimate.dropped]

    report = None
    if measure_baseline:
        t_base = time.perf_counter()
        run_batch(cm, query, [], config.n, seed, FINAL_STAGE, workers, config.max_events)
        c0 = time.perf_counter() - t_base
        timings["baseline"] = c0
        if estimate.variance_crude > 0:
            report = EfficiencyReport(c0=c0, c1=c1, variance_crude=estimate.variance_crude,
                                      variance_lcv=estimate.variance_lcv)
    return PipelineResult(estimate, outcome, report, timings, final, query, config, seed)


class MomentControlVariates(BaseEstimator):
    """Estimator facade over :func:`run_pipeline`.

    ``fit(model, query)`` runs the whole search and estimation; results are
    exposed as ``estimate_``, ``standard_error_``, ``selected_`` and
    ``result_``.
    """

    def __init__(self, n=10_000, d=10, n_max=1, n_lambda=10, n_c=2, n_s=2, n_r=3, epsilon=1.02, step_sd=0.5,
                 random_state=0, workers=None):
        self.n = n
        self.d = d
        self.n_max = n_max
        self.n_lambda = n_lambda
        self.n_c = n_c
        self.n_s = n_s
        self.n_r = n_r
        self.epsilon = epsilon
        self.step_sd = step_sd
        self.random_state = random_state
        self.workers = workers

    def _config(self) -> SelectionConfig:
        return SelectionConfig(n=self.n, d=self.d, n_max=self.n_max, n_lambda=self.n_lambda, n_c=self.n_c,
                               n_s=self.n_s, n_r=self.n_r, epsilon=self.epsilon, step_sd=self.step_sd)

    def fit(self, model: Model, query: TargetQuery):
        self.result_ = run_pipeline(model, query, self._config(), seed=int(self.random_state), workers=self.workers,
                                    measure_baseline=False)
        self.estimate_ = self.result_.estimate.point
        self.standard_error_ = self.result_.estimate.se_lcv
        self.selected_ = list(self.result_.selection.selected)
        return self
