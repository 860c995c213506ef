"""Violation rate of the certified choice over repeated calibration draws.

    python3 scripts/fwer_study.py --trials 500 --delta 0.1 0.05
"""

import argparse
import json
from pathlib import Path

from certbo.experiments import ExperimentConfig, run_fwer_study


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--problem", default="fairness-like")
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--delta", type=float, nargs="+", default=[0.1, 0.05])
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--k", type=int, default=2000)
    ap.add_argument("--m", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results/fwer_study.json"))
    args = ap.parse_args()

    rows = []
    for delta in args.delta:
        cfg = ExperimentConfig(
            {"kind": "synthetic", "preset": args.problem}, [[args.alpha]], delta=delta,
            trials=args.trials, k=args.k, m=args.m, seed=args.seed,
        )
        s = run_fwer_study(cfg)["studies"][0]
        rows.append(s)
        verdict = "ok" if s["rate"] <= s["tolerance"] else "ABOVE TOLERANCE"
        print(f"delta={delta:<5} violations={s['violations']}/{s['trials']} rate={s['rate']:.4f} "
              f"ci=[{s['ci'][0]:.4f}, {s['ci'][1]:.4f}] tolerance={s['tolerance']:.4f} {verdict}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(rows, indent=1) + "\n")


if __name__ == "__main__":
    main()
