"""Command-line entry point: ``python -m rlforecast <command>``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from ..datapipe import fill_missing, load_csv, preprocess, write_csv
from ..errors import ConfigurationError, DataError
from .config import ALL_METHODS, ExperimentConfig, load_config, parse_seeds
from .experiment import run_experiment
from .export import FORMATS, export_results, format_table, load_result
from .synthetic import gen_synthetic


def _common(p: argparse.ArgumentParser, out_help: str = "output directory") -> None:
    p.add_argument("--config", help="YAML config; omitted keys keep their defaults")
    p.add_argument("--seeds", help="seed list such as 0-9 or 0,3,5")
    p.add_argument("--out", help=out_help)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--dataset", help="CSV with series_id,date,value rows")
    src.add_argument("--synthetic", action="store_true", help="use the synthetic benchmark even if the config names a CSV")
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(ALL_METHODS)}")
    p.add_argument("--no-timing", action="store_true", help="leave the train_seconds column empty")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlforecast", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset and its regime sidecar")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, help="data seed (default: config data_seed)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("preprocess", help="transform a CSV and write the inversion metadata")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)

    for name, text in [("train-committee", "train (or reuse) the six committee members per seed"),
                       ("train-selector", "train the selection agents on top of cached committees"),
                       ("evaluate", "forecast the test horizon and score every method"),
                       ("run", "full pipeline from data to exported tables")]:
        _common(sub.add_parser(name, help=text))

    p = sub.add_parser("export", help="re-export a saved result.json")
    p.add_argument("--result", required=True, help="path to result.json")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=FORMATS, action="append", help="repeatable; default both")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    changes = {}
    if args.seeds:
        changes["seeds"] = parse_seeds(args.seeds)
    if args.out:
        changes["out"] = args.out
    if args.methods:
        changes["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.no_timing:
        changes["record_timing"] = False
    if args.dataset:
        changes["dataset"] = dataclasses.replace(cfg.dataset, path=args.dataset)
    elif args.synthetic:
        changes["dataset"] = dataclasses.replace(cfg.dataset, path=None)
    return dataclasses.replace(cfg, **changes)


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.data_seed if args.seed is None else args.seed
    demand, sidecar = gen_synthetic(cfg.synthetic, seed).write(args.out)
    print(f"wrote {demand} and {sidecar}")
    return 0


def cmd_preprocess(args) -> int:
    out = Path(args.out)
    series = [preprocess(fill_missing(s)) for s in load_csv(args.dataset)]
    # the transformed values go out in the ingestion layout (they may be negative)
    write_csv([dataclasses.replace(s, values=s.transformed) for s in series], out / "transformed.csv")
    meta = {s.series_id: {"mean_scale": s.mean_scale, "zero_adjusted": s.zero_adjusted} for s in series}
    (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"preprocessed {len(series)} series into {out}")
    return 0


def cmd_pipeline(args, stop_after: str) -> int:
    cfg = resolve_config(args)
    result = run_experiment(cfg, stop_after=stop_after)
    if stop_after == "evaluate":
        print(format_table(result))
        print(f"results in {cfg.out}")
    else:
        print(f"{stop_after} stage done for seeds {cfg.seeds}; artefacts in {cfg.out}")
    if result.failures:
        for f in result.failures:
            print(f"seed {f['seed']} failed during {f['stage']}: {f['error']}", file=sys.stderr)
        print(f"failure manifest: {Path(cfg.out) / 'failures.json'}", file=sys.stderr)
        return 1
    return 0


def cmd_export(args) -> int:
    result = load_result(args.result)
    for path in export_results(result, args.out, tuple(args.format or FORMATS)):
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "preprocess":
            return cmd_preprocess(args)
        if args.command == "export":
            return cmd_export(args)
        stage = {"train-committee": "committee", "train-selector": "selector",
                 "evaluate": "evaluate", "run": "evaluate"}[args.command]
        return cmd_pipeline(args, stage)
    except (ConfigurationError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
