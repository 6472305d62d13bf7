#!/usr/bin/env python3
"""Run the full desk-scale benchmark: source-only baseline plus every
adaptation variant over several seeds, and print the comparison table.

Example:
    python scripts/run_benchmark.py --seeds 0,1,2,3,4 --out runs/benchmark
"""

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace
from statistics import mean

from dmapl import TrainConfig, run_experiment
from dmapl.configio import shift_spec_from_sources
from dmapl.trainer import MODES


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--spec", help="benchmark spec file (flat key-value)")
    parser.add_argument("--seeds", default="0,1,2,3,4")
    parser.add_argument("--out", default=None, help="directory for CSV/JSON results")
    args = parser.parse_args()

    spec = shift_spec_from_sources(args.spec, {})
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    started = time.perf_counter()

    rows = []
    for seed in seeds:
        for mode in MODES:
            config = TrainConfig(seed=seed, mode=mode)
            result = run_experiment(replace(spec, seed=seed), config)
            rows.append({
                "mode": mode, "seed": seed,
                "source_val": result["source_val_micro"],
                "test_micro": result["test_micro"],
                "test_macro": result["test_macro"],
                "ratio": (result["split"] or {}).get("ratio"),
                "pl_accuracy": (result["split"] or {}).get("pl_accuracy"),
            })
            print(f"seed {seed}  {mode:>20s}  test micro {result['test_micro']:.4f}")

    print("\nmode means over seeds " + args.seeds)
    means = {}
    for mode in MODES:
        vals = [r["test_micro"] for r in rows if r["mode"] == mode]
        means[mode] = mean(vals)
        print(f"  {mode:>20s}  {100 * means[mode]:6.2f}%")
    gain = means["dmapl"] - means["source_only"]
    print(f"\nadaptation gain over source-only: {100 * gain:.2f} pp")
    print(f"total wall clock: {time.perf_counter() - started:.1f}s")

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "benchmark.csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        with open(os.path.join(args.out, "benchmark_summary.json"), "w") as fh:
            json.dump({"means": means, "gain_pp": 100 * gain, "seeds": seeds},
                      fh, indent=2, sort_keys=True)
        print(f"results written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
