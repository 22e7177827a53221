"""Repeated estimation to measure variance reduction and efficiency.

Each repetition runs the full pipeline and a plain estimator on the same
random streams as the pipeline's final batch. Variances are taken across
repetitions; costs are mean wall-clock seconds per repetition.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from .control_variates import GAMMA_CAP
from .core import Model, TargetQuery
from .moments import ControlVariateId
from .selection import SelectionConfig, run_pipeline


def repetition_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([int(seed), 7, int(rep)]).generate_state(1)[0])


@dataclass
class RepetitionRow:
    rep: int
    seed: int
    crude: float
    lcv: float
    se_crude: float
    se_lcv: float
    c0: float
    c1: float
    n_selected: int
    selected: str


@dataclass
class BenchSummary:
    repetitions: int
    crude_mean: float
    lcv_mean: float
    var_crude: float
    var_lcv: float
    reduction_factor: float
    mean_c0: float
    mean_c1: float
    slowdown: float
    efficiency: float
    mean_selected: float
    mean_estimated_reduction: float
    pooled_reduction: float
    pooled_efficiency: float

    def as_dict(self) -> dict:
        return asdict(self)


def _ratio(a: float, b: float) -> float:
    if b > 0:
        return min(a / b, GAMMA_CAP) if a > 0 else 1.0 if a == 0 else 0.0
    return 1.0 if a == 0 else GAMMA_CAP


def summarize(rows: list[RepetitionRow]) -> BenchSummary:
    crude = np.array([r.crude for r in rows])
    lcv = np.array([r.lcv for r in rows])
    var0 = float(np.var(crude, ddof=1))
    var1 = float(np.var(lcv, ddof=1))
    c0 = float(np.mean([r.c0 for r in rows]))
    c1 = float(np.mean([r.c1 for r in rows]))
    red = _ratio(var0, var1)
    est = [_ratio(r.se_crude ** 2, r.se_lcv ** 2) for r in rows]
    # in-run variance estimates averaged over repetitions; far less noisy than
    # the cross-repetition ratio when R is small
    pooled = _ratio(float(np.mean([r.se_crude ** 2 for r in rows])), float(np.mean([r.se_lcv ** 2 for r in rows])))
    return BenchSummary(
        repetitions=len(rows),
        crude_mean=float(crude.mean()),
        lcv_mean=float(lcv.mean()),
        var_crude=var0,
        var_lcv=var1,
        reduction_factor=red,
        mean_c0=c0,
        mean_c1=c1,
        slowdown=c1 / c0 if c0 > 0 else math.inf,
        efficiency=red * c0 / c1 if c1 > 0 else math.inf,
        mean_selected=float(np.mean([r.n_selected for r in rows])),
        mean_estimated_reduction=float(np.mean(est)),
        pooled_reduction=pooled,
        pooled_efficiency=pooled * c0 / c1 if c1 > 0 else math.inf,
    )


def reduction_interval(rows: list[RepetitionRow], level: float = 0.95, n_boot: int = 2000,
                       seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval of the cross-repetition variance ratio."""
    crude = np.array([r.crude for r in rows])
    lcv = np.array([r.lcv for r in rows])
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(rows), size=(n_boot, len(rows)))
    ratios = [_ratio(float(np.var(crude[i], ddof=1)), float(np.var(lcv[i], ddof=1))) for i in idx]
    tail = 50 * (1 - level)
    lo, hi = np.percentile(ratios, [tail, 100 - tail])
    return float(lo), float(hi)


def bench(
    model: Model,
    query: TargetQuery,
    repetitions: int,
    config: SelectionConfig | None = None,
    seed: int = 0,
    workers: int | None = None,
    forced: list[ControlVariateId] | None = None,
    progress=None,
) -> tuple[list[RepetitionRow], BenchSummary]:
    """Run ``repetitions`` independent pipeline and plain estimations."""
    if repetitions < 2:
        raise ValueError("need at least two repetitions")
    config = config or SelectionConfig()
    rows = []
    for rep in range(repetitions):
        s = repetition_seed(seed, rep)
        res = run_pipeline(model, query, config, seed=s, workers=workers, measure_baseline=True, forced=forced)
        est = res.estimate
        rows.append(RepetitionRow(
            rep=rep,
            seed=s,
            crude=est.mean_V,
            lcv=est.point,
            se_crude=est.se_crude,
            se_lcv=est.se_lcv,
            c0=res.timings["baseline"],
            c1=res.timings["total"],
            n_selected=res.n_selected,
            selected=";".join(cv.label(model.species) for cv in res.selection.selected),
        ))
        if progress is not None:
            progress(rep, rows[-1])
    return rows, summarize(rows)


def rows_to_csv(rows: list[RepetitionRow], extra: dict | None = None) -> str:
    """CSV with one line per repetition; ``extra`` columns are prepended."""
    extra = extra or {}
    buf = io.StringIO()
    fields = list(extra) + list(RepetitionRow.__dataclass_fields__)
    writer = csv.DictWriter(buf, fieldnames=fields)
    writer.writeheader()
    for r in rows:
        writer.writerow({**extra, **asdict(r)})
    return buf.getvalue()
