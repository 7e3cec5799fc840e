#!/usr/bin/env python3
"""Print the input / training-strategy comparison table over seeded runs."""

import argparse
import json

from citysent.experiments import (
    run_ablation,
    run_adaptation_comparison,
    run_freeze_comparison,
    run_global_comparison,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5, help="number of seeds (0..n-1)")
    ap.add_argument("--per-seed", action="store_true", help="also dump per-seed rows")
    args = ap.parse_args()

    seeds = range(args.seeds)
    table = run_ablation(seeds)
    width = max(len(k) for k in table)
    print(f"{'variant':<{width}}  median macro-F1")
    for name, value in table.items():
        print(f"{name:<{width}}  {value:.4f}")

    if args.per_seed:
        detail = {
            "global": run_global_comparison(seeds),
            "adaptation": run_adaptation_comparison(seeds),
            "freeze": run_freeze_comparison(seeds),
        }
        print(json.dumps(detail, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
