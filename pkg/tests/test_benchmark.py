import numpy as np
import pytest

from cvsrn.benchmark import RepetitionRow, bench, reduction_interval, repetition_seed, rows_to_csv, summarize
from cvsrn.core import Mean
from cvsrn.selection import SelectionConfig


def _rows(crude, lcv, se=(1.0, 0.5)):
    return [RepetitionRow(i, i, c, l, se[0], se[1], 1.0, 2.0, 1, "A@1") for i, (c, l) in enumerate(zip(crude, lcv))]


def test_summary_ratios():
    rng = np.random.default_rng(0)
    crude = rng.normal(size=400)
    rows = _rows(crude, crude / 3)
    s = summarize(rows)
    assert s.reduction_factor == pytest.approx(9.0)
    assert s.slowdown == 2.0
    assert s.efficiency == pytest.approx(4.5)
    assert s.pooled_reduction == pytest.approx(4.0)
    assert s.pooled_efficiency == pytest.approx(2.0)


def test_interval_brackets_point_estimate():
    rng = np.random.default_rng(1)
    rows = _rows(rng.normal(size=200), 0.2 * rng.normal(size=200))
    lo, hi = reduction_interval(rows)
    assert lo < summarize(rows).reduction_factor < hi
    assert reduction_interval(rows) == (lo, hi)


def test_zero_variance_is_capped():
    s = summarize(_rows([1.0, 2.0, 3.0], [5.0, 5.0, 5.0]))
    assert s.reduction_factor == 1e6
    assert summarize(_rows([1.0] * 3, [1.0] * 3)).reduction_factor == 1.0


def test_repetition_seeds_distinct():
    assert len({repetition_seed(0, r) for r in range(100)}) == 100
    assert repetition_seed(3, 1) == repetition_seed(3, 1)


def test_bench_rows(dimerization):
    rows, s = bench(dimerization, Mean(0, 2.0), 3, SelectionConfig(n=300), seed=1)
    assert [r.rep for r in rows] == [0, 1, 2]
    assert s.repetitions == 3 and s.mean_c0 > 0
    text = rows_to_csv(rows, {"level": 7})
    assert text.splitlines()[0].startswith("level,rep,seed,crude")
    with pytest.raises(ValueError):
        bench(dimerization, Mean(0, 2.0), 1)
