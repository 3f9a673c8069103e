"""Small end-to-end run: synthetic data, trained committee, ensembles and both selectors.

    python3 demos/quick_benchmark.py --seeds 0-1 --out runs/quick

Uses a shrunken config (4 series, short training) so it finishes in about a minute.
"""
from __future__ import annotations

import argparse

from rlforecast.harness import config_from_dict, format_table, parse_seeds, run_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", default="0-1")
    parser.add_argument("--out", default=None, help="write artefacts here (default: keep in memory)")
    args = parser.parse_args()

    cfg = config_from_dict({
        "synthetic": {"n_series": 4, "length": 160},
        "seeds": parse_seeds(args.seeds),
        "committee": {"train": {"epochs": 4, "patience": 2}},
        "selector": {"max_episodes": 60, "arirbes_n": 5, "arirbes_patience": 5},
    })
    result = run_experiment(cfg, out=args.out)
    print(format_table(result))
    for f in result.failures:
        print(f"seed {f['seed']} failed during {f['stage']}: {f['error']}")


if __name__ == "__main__":
    main()
