"""Selector versus its oracle on the two-specialist stub committee, for one seed.

The stub committee holds one exact forecaster per regime and four noisy ones,
so a good selector should track the per-step oracle closely.

    python3 demos/stub_selector.py --seed 3
"""
from __future__ import annotations

import argparse

from rlforecast.harness import config_from_dict, prepare, run_seed
from rlforecast.harness.config import MEMBER_METHODS


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--episodes", type=int, default=1000)
    args = parser.parse_args()

    cfg = config_from_dict({
        "synthetic": {"n_series": 20, "length": 150},
        "data_seed": args.seed,
        "seeds": [args.seed],
        "committee": {"mode": "stub"},
        "selector": {"max_episodes": args.episodes},
        "methods": [*MEMBER_METHODS, "CRFFNN-ARIRBES", "Oracle"],
    })
    outcome = run_seed(cfg, prepare(cfg), args.seed, None)
    if outcome.failure:
        raise SystemExit(outcome.failure["error"])
    for r in outcome.records:
        print(f"{r.method:<16} SMAPE {r.smape:8.3f}")
    stop = outcome.stop_episodes["CRFFNN-ARIRBES"]
    print(f"ARIRBES stopped after {stop} of {args.episodes} episodes "
          f"({outcome.seconds['CRFFNN-ARIRBES']:.1f} s)")


if __name__ == "__main__":
    main()
