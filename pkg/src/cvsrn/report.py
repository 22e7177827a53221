"""Summaries and plots from ``cvsrn estimate`` JSON and ``cvsrn bench`` CSV output.

Plotting needs matplotlib (``pip install artifact[report]``); text output
does not.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .cli import SCHEMA_VERSION

RECORD_KEYS = ("schema_version", "model", "query", "seed", "config", "crude", "lcv", "selected",
               "reduction_factor", "slowdown", "efficiency", "timings")


def load_record(path: str | Path) -> dict:
    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    missing = [k for k in RECORD_KEYS if k not in rec]
    if missing:
        raise ValueError(f"{path}: not an estimate record (missing {', '.join(missing)})")
    if rec["schema_version"] != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {rec['schema_version']}")
    return rec


def load_bench(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            try:
                r[k] = float(v)
            except (TypeError, ValueError):
                pass
    return rows


def format_record(rec: dict) -> str:
    q = rec["query"]
    what = f"E[{q['species']}]" if q["kind"] == "mean" else f"P({q['species']} <= {q['level']})"
    lines = [
        f"{rec['model']}: {what} at T={q['horizon']}",
        f"  crude {rec['crude']['estimate']:.6g} +- {rec['crude']['se']:.3g}",
        f"  lcv   {rec['lcv']['estimate']:.6g} +- {rec['lcv']['se']:.3g}",
        f"  variates: {', '.join(s['label'] for s in rec['selected']) or 'none'}",
        f"  reduction {rec['reduction_factor']:.4g}",
    ]
    if rec["efficiency"] is not None:
        lines.append(f"  slowdown {rec['slowdown']:.3g}  efficiency {rec['efficiency']:.4g}")
    return "\n".join(lines)


def format_bench(rows: list[dict]) -> str:
    cols = ("level", "crude_mean", "reduction_factor", "slowdown", "efficiency", "mean_selected")
    out = ["  ".join(f"{c:>16}" for c in cols)]
    for r in rows:
        out.append("  ".join(f"{r.get(c, ''):>16.6g}" if isinstance(r.get(c), float) else f"{r.get(c, ''):>16}"
                             for c in cols))
    return "\n".join(out)


def plot_bench(rows: list[dict], out: str | Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    levels = [r["level"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(levels, [r["efficiency"] for r in rows], "o-", label="efficiency")
    ax.plot(levels, [r["reduction_factor"] for r in rows], "s--", label="variance reduction")
    ax.axhline(1.0, color="grey", lw=0.8)
    ax.set_xlabel("threshold level")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="cvsrn-report", description=__doc__.splitlines()[0])
    p.add_argument("inputs", nargs="+", help="estimate JSON records or bench CSV tables")
    p.add_argument("--plot", metavar="PNG", help="plot the (single) bench table against threshold level")
    args = p.parse_args(argv)
    tables = []
    for path in args.inputs:
        try:
            if path.endswith(".json"):
                print(format_record(load_record(path)))
            else:
                rows = load_bench(path)
                tables.append(rows)
                print(format_bench(rows))
        except (OSError, ValueError, KeyError) as exc:
            print(f"cvsrn-report: {exc}", file=sys.stderr)
            return 1
    if args.plot:
        if len(tables) != 1:
            print("cvsrn-report: --plot needs exactly one bench table", file=sys.stderr)
            return 1
        plot_bench(tables[0], args.plot)
    return 0


if __name__ == "__main__":
    sys.exit(main())
