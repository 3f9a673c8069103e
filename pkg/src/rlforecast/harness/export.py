"""Result tables: aggregate CSV, long-format per-seed CSV and a JSON document that reloads losslessly."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from ..metrics import ErrorRecord
from .experiment import ExperimentResult

AGGREGATE_HEADER = ["method", "mean_smape", "std_smape", "mean_mase", "std_mase", "train_seconds"]
PER_SEED_HEADER = ["method", "seed", "smape", "mase"]
FORMATS = ("json", "csv")


def _cell(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def _num(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)


def _unnum(x) -> float:
    return math.nan if x is None else float(x)


def aggregate_rows(result: ExperimentResult) -> list[list[str]]:
    return [[a.method, _cell(a.mean_smape), _cell(a.std_smape), _cell(a.mean_mase), _cell(a.std_mase),
             _cell(result.train_seconds(a.method))] for a in result.aggregates()]


def _write_csv(path: Path, header: list[str], rows) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def result_to_dict(result: ExperimentResult) -> dict:
    timing = result.record_timing
    return {
        "methods": list(result.methods),
        "seeds": list(result.seeds),
        "records": [{"method": r.method, "seed": r.seed, "smape": _num(r.smape), "mase": _num(r.mase)}
                    for r in result.records],
        "aggregates": [{"method": a.method, "mean_smape": _num(a.mean_smape), "std_smape": _num(a.std_smape),
                        "mean_mase": _num(a.mean_mase), "std_mase": _num(a.std_mase), "n_seeds": a.n_seeds,
                        "train_seconds": result.train_seconds(a.method)} for a in result.aggregates()],
        "seconds": ({m: {str(k): v for k, v in per.items()} for m, per in result.seconds.items()}
                    if timing else None),
        "stop_episodes": {m: {str(k): v for k, v in per.items()} for m, per in result.stop_episodes.items()},
        "failures": [{k: v for k, v in f.items() if k != "traceback"} for f in result.failures],
        "record_timing": timing,
    }


def result_from_dict(doc: dict) -> ExperimentResult:
    records = [ErrorRecord(r["method"], int(r["seed"]), _unnum(r["smape"]), _unnum(r["mase"]))
               for r in doc["records"]]
    seconds = {m: {int(k): v for k, v in per.items()} for m, per in (doc.get("seconds") or {}).items()}
    stops = {m: {int(k): v for k, v in per.items()} for m, per in doc.get("stop_episodes", {}).items()}
    return ExperimentResult(list(doc["methods"]), [int(s) for s in doc["seeds"]], records, seconds, stops,
                            list(doc.get("failures", [])), bool(doc.get("record_timing", True)))


def load_result(path: str | Path) -> ExperimentResult:
    return result_from_dict(json.loads(Path(path).read_text()))


def export_results(result: ExperimentResult, directory: str | Path, formats=FORMATS) -> list[Path]:
    """Write ``aggregate.csv`` and ``per_seed.csv`` and/or ``result.json``."""
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ValueError(f"unknown export format(s) {bad}; choose from {FORMATS}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        written.append(_write_csv(directory / "aggregate.csv", AGGREGATE_HEADER, aggregate_rows(result)))
        order = {m: i for i, m in enumerate(result.methods)}
        rows = [[r.method, r.seed, _cell(r.smape), _cell(r.mase)]
                for r in sorted(result.records, key=lambda r: (order.get(r.method, len(order)), r.seed))]
        written.append(_write_csv(directory / "per_seed.csv", PER_SEED_HEADER, rows))
    if "json" in formats:
        path = directory / "result.json"
        path.write_text(json.dumps(result_to_dict(result), indent=2) + "\n")
        written.append(path)
    return written


def format_table(result: ExperimentResult) -> str:
    """Plain-text aggregate table for the terminal."""
    lines = [f"{'method':<16}{'SMAPE':>9}{'(std)':>9}{'MASE':>9}{'(std)':>9}{'train s':>10}"]
    for a in result.aggregates():
        secs = result.train_seconds(a.method)
        lines.append(f"{a.method:<16}{a.mean_smape:9.3f}{a.std_smape:9.3f}{a.mean_mase:9.3f}{a.std_mase:9.3f}"
                     f"{'' if secs is None else f'{secs:.1f}':>10}")
    return "\n".join(lines)
