"""Guided search against the three baselines under one testing stage.

    python3 scripts/guided_vs_random.py --problem pruning-like --alpha 0.1 --budget 20 --init 10
"""

import argparse
from pathlib import Path

from certbo.experiments import METHODS, ExperimentConfig, emit_results, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--problem", default="pruning-like")
    ap.add_argument("--alpha", type=float, nargs="+", default=[0.1])
    ap.add_argument("--methods", nargs="+", default=list(METHODS), choices=METHODS)
    ap.add_argument("--budget", type=int, default=20)
    ap.add_argument("--init", type=int, default=10)
    ap.add_argument("--trials", type=int, default=30)
    ap.add_argument("--k", type=int, default=2500)
    ap.add_argument("--m", type=int, default=2500)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--fixed-validation", action="store_true", help="reuse one validation draw across trials")
    ap.add_argument("--out", type=Path, default=Path("results/guided_vs_random"))
    args = ap.parse_args()

    cfg = ExperimentConfig(
        {"kind": "synthetic", "preset": args.problem}, [[a] for a in args.alpha], budget=args.budget,
        init_size=args.init, methods=args.methods, trials=args.trials, k=args.k, m=args.m, seed=args.seed,
        jobs=args.jobs, resample_validation=not args.fixed_validation,
    )
    report = run_experiment(cfg)
    emit_results(report, args.out)
    print(f"{'method':<11} {'alpha':>6} {'free mean':>10} {'95% CI':>20} {'in region':>10} {'nulls':>6}")
    for g in report.groups:
        s = g["summary"]
        ci = "-" if s["free_mean"] is None else f"[{s['free_ci'][0]:.4f}, {s['free_ci'][1]:.4f}]"
        free = "-" if s["free_mean"] is None else f"{s['free_mean']:.4f}"
        reg = "-" if s["in_region_rate"] is None else f"{s['in_region_rate']:.2f}"
        print(f"{g['method']:<11} {g['alphas'][0]:>6} {free:>10} {ci:>20} {reg:>10} {s['n_null']:>6}")


if __name__ == "__main__":
    main()
