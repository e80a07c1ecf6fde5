"""Command-line entry point: ``iadcnet {train,sweep,eval,export,baseline}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from ..baselines import first_order_model
from ..core import convert
from ..errors import IADCError
from ..metrics import SNR_TRIALS, evaluate_model, test_grid
from .artifacts import load_result, load_table, run_path, save_result
from .config import load_config
from .export import FORMATS, export_results
from .search import TABLE_GRID, random_search
from .training import reevaluate, train_run


def _summary(metrics) -> dict:
    d = metrics.to_dict()
    d.pop("enob_curve", None)
    return d


def cmd_train(args) -> int:
    config = load_config(args.config)
    run_id = args.run_id or f"train-{config.config_hash()}"
    result = train_run(config, run_id)
    path = save_result(result, run_path(args.out, run_id))
    print(json.dumps({"run_id": run_id, "status": result.status, "artifact": str(path),
                      "metrics": None if result.metrics is None else _summary(result.metrics),
                      "diagnostics": result.diagnostics}, indent=1))
    return 0 if result.ok else 2


def cmd_sweep(args) -> int:
    template = load_config(args.config)
    grid = TABLE_GRID
    if args.grid:
        grid = yaml.safe_load(Path(args.grid).read_text())
        if not isinstance(grid, dict):
            raise IADCError("grid file must map field names to value lists")

    def progress(r):
        snr = "-" if r.metrics is None else f"{r.metrics.snr_enob:.3f}"
        print(f"{r.run_id} K={r.config.K} Q={r.config.Q} TPT={r.config.tpt:g} {r.status} snr={snr}", flush=True)

    results = random_search(template, grid, args.n_runs, args.master_seed, args.out, args.workers, progress)
    ok = sum(r.ok for r in results)
    print(f"{ok}/{len(results)} runs completed; artifacts in {args.out}")
    return 0


def cmd_eval(args) -> int:
    result = load_result(args.artifact)
    metrics = reevaluate(result, args.cycles, args.trials, args.seed)
    out = _summary(metrics)
    if not args.noise:
        out["snr_enob"] = None
    print(json.dumps(out, indent=1))
    return 0


def cmd_export(args) -> int:
    table = load_table(args.sweep_dir)
    for path in export_results(table, args.out, args.format):
        print(path)
    return 0


def cmd_baseline(args) -> int:
    model, realized = first_order_model(args.N, args.delta, args.q, args.c_unit)
    metrics = evaluate_model(model, realized, test_grid(), args.N, args.trials, args.seed)
    out = _summary(metrics)
    x = test_grid()
    out["max_abs_error"] = float(abs(x - convert(x, model).estimate()).max())
    print(json.dumps(out, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iadcnet", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a single run from a config file")
    t.add_argument("config")
    t.add_argument("--out", default="runs_out")
    t.add_argument("--run-id")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="seeded random search over a grid")
    s.add_argument("config", help="template config; grid fields are overridden per run")
    s.add_argument("--grid", help="YAML mapping of field -> list of values (default: K x Q x tpt table)")
    s.add_argument("--n-runs", type=int, required=True)
    s.add_argument("--master-seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, help="parallel runs (default: $IADCNET_WORKERS or 1)")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("eval", help="re-evaluate a stored run artifact")
    e.add_argument("artifact")
    e.add_argument("--cycles", type=int, help="oversampling ratio to evaluate at (default: trained N)")
    e.add_argument("--noise", action=argparse.BooleanOptionalAction, default=True)
    e.add_argument("--trials", type=int)
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export", help="write the results table and figure data")
    x.add_argument("sweep_dir")
    x.add_argument("--out", required=True)
    x.add_argument("--format", choices=FORMATS, default="csv")
    x.set_defaults(func=cmd_export)

    b = sub.add_parser("baseline", help="evaluate the first-order reference converter")
    b.add_argument("--N", type=int, default=80)
    b.add_argument("--delta", type=float, default=0.4)
    b.add_argument("--q", type=float, default=0.5)
    b.add_argument("--c-unit", type=float, default=1.0, help="unit capacitor in pF")
    b.add_argument("--trials", type=int, default=SNR_TRIALS)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_baseline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (IADCError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
