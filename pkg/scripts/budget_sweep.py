"""Selected free-objective test mean as the evaluation budget grows.

    python3 scripts/budget_sweep.py --budgets 10 20 50 --trials 30
"""

import argparse
import json
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from certbo.experiments import ExperimentConfig, run_budget_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--problem", default="pruning-like")
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--budgets", type=int, nargs="+", default=[10, 20, 50])
    ap.add_argument("--init", type=int, default=5)
    ap.add_argument("--trials", type=int, default=30)
    ap.add_argument("--k", type=int, default=2500)
    ap.add_argument("--m", type=int, default=2500)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/budget_sweep.json"))
    args = ap.parse_args()

    cfg = ExperimentConfig(
        {"kind": "synthetic", "preset": args.problem}, [[args.alpha]], budget=min(args.budgets), init_size=args.init,
        trials=args.trials, k=args.k, m=args.m, seed=args.seed, jobs=args.jobs, resample_validation=True,
    )
    out = run_budget_sweep(cfg, sorted(args.budgets))
    for row in out["table"]:
        print(f"N={row['budget']:<4} free_mean={row['free_mean']:.4f} nulls={row['n_null']}/{row['n_trials']}")

    lo, hi = str(min(args.budgets)), str(max(args.budgets))
    pairs = [(a["free"], b["free"]) for a, b in zip(out["per_trial"][lo], out["per_trial"][hi])
             if a["free"] is not None and b["free"] is not None]
    wins, losses = sum(b < a for a, b in pairs), sum(b > a for a, b in pairs)
    if wins + losses:
        p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue
        print(f"N={hi} beats N={lo} in {wins} of {wins + losses} decided pairs (sign test p={p:.3g}); "
              f"mean difference {np.mean([b - a for a, b in pairs]):+.4f}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
