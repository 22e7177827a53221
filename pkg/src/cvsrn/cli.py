"""Command-line interface: ``cvsrn estimate | bench | validate | models``.

Exit codes: 0 success, 1 invalid input (unreadable or malformed model, bad
flags), 2 runtime failure (simulation error, oracle truncation).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import bench, rows_to_csv
from .control_variates import GAMMA_CAP
from .core import Mean, Model, ModelError, ThresholdProbability, describe_query
from .dsl import ParseError, load_model
from .models import BUILTIN_NAMES, FSP_SCOPE, builtin_model, builtin_source
from .moments import ControlVariateId
from .oracle import TruncationBox, TruncationError, fsp_transient
from .selection import SelectionConfig, run_pipeline
from .simulation import SimConfig, SimulationError, run_batch, simulate

SCHEMA_VERSION = 1

# FSP windows that keep lost mass far below 1e-6 at the case-study horizons
DEFAULT_BOXES = {"birthdeath": (200,), "dimerization": (100, 100), "distmod": (300, 300, 300)}


class InputError(Exception):
    """Bad user input; exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _finite(x: float) -> float:
    if math.isnan(x):
        return x
    return max(min(x, GAMMA_CAP), -GAMMA_CAP) if math.isinf(x) else x


def _load(args) -> Model:
    if args.builtin:
        try:
            return builtin_model(args.builtin)
        except KeyError as exc:
            raise InputError(str(exc.args[0])) from exc
    try:
        return load_model(args.model)
    except FileNotFoundError as exc:
        raise InputError(f"model file not found: {args.model}") from exc
    except (ParseError, ModelError) as exc:
        raise InputError(f"{args.model}: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read {args.model}: {exc}") from exc


def _species(model: Model, name: str) -> int:
    try:
        return model.species_index(name)
    except (KeyError, ValueError) as exc:
        raise InputError(f"unknown species {name!r}; model has {', '.join(model.species)}") from exc


def _query(model: Model, args, level: int | None = None):
    if args.mean is not None:
        return Mean(_species(model, args.mean), args.horizon)
    name, lvl = args.prob_le
    try:
        lvl = int(lvl) if level is None else level
    except ValueError as exc:
        raise InputError(f"threshold level must be an integer, got {lvl!r}") from exc
    try:
        return ThresholdProbability(_species(model, name), lvl, args.horizon)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _parse_cv(text: str, model: Model) -> ControlVariateId:
    """``SPECIES[^k][*SPECIES[^k]...]:LAMBDA``, e.g. ``A:1`` or ``M^2*D:0.5``."""
    try:
        mono, lam = text.rsplit(":", 1)
        m = [0] * model.n_species
        for factor in mono.split("*"):
            name, _, power = factor.partition("^")
            m[_species(model, name.strip())] += int(power) if power else 1
        return ControlVariateId(tuple(m), float(lam))
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(f"malformed control variate {text!r}; expected e.g. 'A:1.0'") from exc


def _config(args) -> SelectionConfig:
    try:
        return SelectionConfig(
            n=args.n, d=args.d, n_max=args.n_max, n_lambda=args.n_lambda, n_c=args.n_c, n_s=args.n_s,
            n_r=args.n_r, epsilon=args.epsilon, step_sd=args.step_sd, max_events=args.max_events,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _model_args(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="path to a .srn model file")
    src.add_argument("--builtin", choices=BUILTIN_NAMES, help="use a bundled model")


def _query_args(p: argparse.ArgumentParser):
    q = p.add_mutually_exclusive_group(required=True)
    q.add_argument("--mean", metavar="SPECIES", help="estimate E[X_T] of SPECIES")
    q.add_argument("--prob-le", nargs=2, metavar=("SPECIES", "LEVEL"), help="estimate P(X_T <= LEVEL)")
    p.add_argument("--horizon", type=float, required=True, help="time horizon T")


def _run_args(p: argparse.ArgumentParser):
    d = SelectionConfig()
    p.add_argument("--n", type=int, default=d.n, help="final trajectory count")
    p.add_argument("--d", type=int, default=d.d, help="pilot trajectories per resampling round")
    p.add_argument("--n-max", type=int, default=d.n_max, help="maximum moment order")
    p.add_argument("--n-lambda", type=int, default=d.n_lambda, help="initial lambda draws")
    p.add_argument("--n-c", type=int, default=d.n_c, help="parents drawn per round")
    p.add_argument("--n-s", type=int, default=d.n_s, help="children per parent")
    p.add_argument("--n-r", type=int, default=d.n_r, help="resampling rounds (0 disables resampling)")
    p.add_argument("--epsilon", type=float, default=d.epsilon, help="greedy stopping threshold")
    p.add_argument("--step-sd", type=float, default=d.step_sd, help="lambda resampling step sd")
    p.add_argument("--max-events", type=int, default=d.max_events, help="per-trajectory event cap")
    p.add_argument("--cv", action="append", metavar="SPEC",
                   help="skip the search and use this control variate, e.g. 'A:1' (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None, help="parallel workers (default: $CV_SSA_WORKERS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cvsrn", description="Moment-constraint control variates for reaction networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="run the estimator once and print a JSON record")
    _model_args(p)
    _query_args(p)
    _run_args(p)
    p.add_argument("--no-baseline", action="store_true", help="skip the plain run used for cost c0")
    p.add_argument("--audit", metavar="PATH", help="write the selection audit trail as JSON")
    p.add_argument("--trajectory-dump", metavar="PATH", help="write one sample path as CSV")

    p = sub.add_parser("bench", help="repeat estimation and print a CSV efficiency table")
    _model_args(p)
    _query_args(p)
    _run_args(p)
    p.add_argument("--repetitions", "-R", type=int, default=20)
    p.add_argument("--levels", help="comma-separated threshold levels to sweep (with --prob-le)")
    p.add_argument("--details", metavar="PATH", help="write per-repetition rows as CSV")

    p = sub.add_parser("validate", help="compare a quick estimate with the FSP oracle")
    _model_args(p)
    _query_args(p)
    p.add_argument("--box", help="comma-separated per-species upper bounds of the FSP window")
    p.add_argument("--tolerance", type=float, default=1e-6, help="allowed lost probability mass")
    p.add_argument("--n", type=int, default=2000, help="trajectories for the quick estimate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("models", help="list bundled models or print one")
    p.add_argument("name", nargs="?", choices=BUILTIN_NAMES)
    return parser


def _record(model: Model, query, args, config: SelectionConfig, res) -> dict:
    est = res.estimate
    rec = {
        "schema_version": SCHEMA_VERSION,
        "model": model.name or (args.builtin or args.model),
        "query": describe_query(query, model.species),
        "seed": args.seed,
        "config": {k: getattr(config, k) for k in config.__dataclass_fields__},
        "crude": {"estimate": est.mean_V, "se": est.se_crude},
        "lcv": {"estimate": est.point, "se": est.se_lcv},
        "selected": [{"m": list(cv.m), "lambda": cv.lam, "label": cv.label(model.species)}
                     for cv in res.selection.selected],
        "dropped": [res.selection.selected[i].label(model.species) for i in est.dropped],
        "r_squared": est.r_squared,
        "reduction_factor": _finite(est.reduction_factor),
        "slowdown": None,
        "efficiency": None,
        "timings": res.timings,
    }
    if res.efficiency is not None:
        rec["slowdown"] = _finite(res.efficiency.slowdown)
        rec["efficiency"] = _finite(res.efficiency.efficiency)
    return rec


def cmd_estimate(args) -> int:
    model = _load(args)
    query = _query(model, args)
    config = _config(args)
    forced = [_parse_cv(c, model) for c in args.cv] if args.cv else None
    res = run_pipeline(model, query, config, seed=args.seed, workers=args.workers,
                       measure_baseline=not args.no_baseline, forced=forced)
    if args.audit:
        Path(args.audit).write_text(res.selection.to_json(model.species), encoding="utf-8")
    if args.trajectory_dump:
        traj = simulate(model, SimConfig(args.horizon, seed=args.seed, max_events=args.max_events))
        Path(args.trajectory_dump).write_text(traj.to_csv(model.species), encoding="utf-8")
    json.dump(_record(model, query, args, config, res), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_bench(args) -> int:
    model = _load(args)
    config = _config(args)
    forced = [_parse_cv(c, model) for c in args.cv] if args.cv else None
    if args.repetitions < 2:
        raise InputError("--repetitions must be at least 2")
    if args.levels:
        if args.prob_le is None:
            raise InputError("--levels needs --prob-le")
        try:
            levels = [int(v) for v in args.levels.split(",") if v.strip()]
        except ValueError as exc:
            raise InputError(f"malformed --levels {args.levels!r}") from exc
        queries = [_query(model, args, level) for level in levels]
    else:
        queries = [_query(model, args)]
    log = logging.getLogger("cvsrn.bench")
    summaries, details = [], []
    for query in queries:
        desc = describe_query(query, model.species)
        rows, summary = bench(model, query, args.repetitions, config, seed=args.seed, workers=args.workers,
                              forced=forced, progress=lambda r, row: log.info("rep %d: lcv=%.6g", r, row.lcv))
        summaries.append({"model": model.name, **{k: desc.get(k, "") for k in ("kind", "species", "level")},
                          "horizon": query.horizon, **summary.as_dict()})
        details.append(rows_to_csv(rows, {"level": desc.get("level", "")}))
    fields = list(summaries[0])
    sys.stdout.write(",".join(fields) + "\n")
    for s in summaries:
        sys.stdout.write(",".join(_fmt(s[k]) for k in fields) + "\n")
    if args.details:
        text = details[0] + "".join(d.split("\n", 1)[1] for d in details[1:])
        Path(args.details).write_text(text, encoding="utf-8")
    return 0


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(_finite(v))
    return str(v)


def cmd_validate(args) -> int:
    model = _load(args)
    query = _query(model, args)
    if args.builtin and args.builtin not in FSP_SCOPE:
        raise TruncationError("model out of FSP scope")
    if args.box:
        try:
            upper = tuple(int(v) for v in args.box.split(","))
        except ValueError as exc:
            raise InputError(f"malformed --box {args.box!r}") from exc
    elif args.builtin in DEFAULT_BOXES:
        upper = DEFAULT_BOXES[args.builtin]
    else:
        raise InputError("--box is required for model files")
    try:
        box = TruncationBox(upper, args.tolerance)
        box.check(model)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    fsp = fsp_transient(model, box, args.horizon)
    oracle = fsp.query_value(query)
    batch = run_batch(model, query, [], args.n, args.seed, workers=args.workers)
    est = float(batch.V.mean())
    se = float(batch.V.std(ddof=1) / np.sqrt(batch.n))
    rec = {
        "schema_version": SCHEMA_VERSION,
        "model": model.name,
        "query": describe_query(query, model.species),
        "box": list(upper),
        "states": int(fsp.states.shape[0]),
        "oracle_value": oracle,
        "lost_mass": fsp.lost_mass,
        "ssa_estimate": est,
        "ssa_se": se,
        "n": batch.n,
        "gap": est - oracle,
        "gap_in_se": (est - oracle) / se if se > 0 else (0.0 if est == oracle else None),
    }
    json.dump(rec, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_models(args) -> int:
    if args.name:
        sys.stdout.write(builtin_source(args.name))
        return 0
    for name in BUILTIN_NAMES:
        m = builtin_model(name)
        sys.stdout.write(f"{name}\t{m.n_species} species\t{len(m.reactions)} reactions\n")
    return 0


COMMANDS = {"estimate": cmd_estimate, "bench": cmd_bench, "validate": cmd_validate, "models": cmd_models}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"cvsrn: error: {exc}", file=sys.stderr)
        return 1
    except (SimulationError, TruncationError, ZeroDivisionError, RuntimeError, ValueError) as exc:
        print(f"cvsrn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
