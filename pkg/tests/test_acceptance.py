"""Acceptance gate: ten end-to-end criteria at their stated tolerances.

Each ``check_N`` returns (passed, detail). Under pytest every criterion
prints one PASS/FAIL line; ``python3 tests/test_acceptance.py`` prints all ten.
"""

from __future__ import annotations

import json
import math
import subprocess
import sys
import tempfile
import time
import timeit
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import binomtest

sys.path.insert(0, str(Path(__file__).parent))
import oracles  # noqa: E402

from certbo.core import Bound, RiskSpec  # noqa: E402
from certbo.experiments import ExperimentConfig, generate_candidates, run_budget_sweep, run_experiment, run_fwer_study  # noqa: E402
from certbo.guided_bo import BOConfig, run_bo  # noqa: E402
from certbo.objectives import get_problem  # noqa: E402
from certbo.pareto import hvi_batch, hypervolume, hypervolume_mc, pareto_front  # noqa: E402
from certbo.stats import RegionOfInterest, alpha_max, hb_p_values, hoeffding_p_value, region_of_interest  # noqa: E402
from certbo.surrogate import GPModel, KernelParams  # noqa: E402

PRUNING = {"kind": "synthetic", "preset": "pruning-like"}


def check_1():
    v = alpha_max(0.05, 0.1, 5000, "hoeffding")
    per_call = min(timeit.repeat(lambda: alpha_max(0.05, 0.1, 5000, "hoeffding"), number=1000, repeat=5)) / 1000
    ok = abs(v - 0.034826) <= 1e-4 and per_call < 1e-3
    return ok, f"alpha_max={v:.6f} (target 0.034826 +/- 1e-4), {per_call * 1e6:.1f} us per call"


def check_2():
    start = time.perf_counter()
    lines, ok = [], True
    for delta in (0.1, 0.05):
        cfg = ExperimentConfig(
            {"kind": "synthetic", "preset": "fairness-like"}, [[0.5]], delta=delta, trials=500, k=2000, m=2000, seed=2
        )
        s = run_fwer_study(cfg)["studies"][0]
        tol = delta + 3 * math.sqrt(delta * (1 - delta) / 500)
        ok &= s["rate"] <= tol
        lines.append(f"delta={delta}: {s['violations']}/{s['trials']} = {s['rate']:.3f} <= {tol:.3f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 600
    return ok, "; ".join(lines) + f" ({elapsed:.1f}s)"


def check_3():
    rng = np.random.default_rng(3)
    alpha, draws, worst, ok = 0.1, 10**5, -1.0, True
    for m in (100, 5000):
        lhat = rng.binomial(m, alpha, size=draws) / m
        for bound in Bound:
            if bound is Bound.HOEFFDING:
                gap = np.maximum(alpha - lhat, 0.0)
                p = np.exp(-2.0 * m * gap * gap)
            else:
                p = hb_p_values(lhat, m, alpha)
            for u in (0.01, 0.05, 0.1, 0.2):
                limit = u + 3 * math.sqrt(u * (1 - u) / draws)
                frac = float(np.mean(p <= u))
                ok &= frac <= limit
                worst = max(worst, frac - limit)
    return ok, f"largest P(p<=u) minus allowance over 16 cells: {worst:+.4f} (must be <= 0)"


def check_4():
    rng = np.random.default_rng(4)
    bad = 0
    for _ in range(10_000):
        lhat, m, alpha = rng.random(), int(rng.integers(1, 10_000)), rng.uniform(0.001, 0.999)
        if hb_p_values(np.array([lhat]), m, alpha)[0] > hoeffding_p_value(lhat, m, alpha):
            bad += 1
    grid_bad = 0
    for alpha in (0.02, 0.05, 0.1, 0.3, 0.5):
        for delta in (0.01, 0.05, 0.1, 0.2):
            for m in (50, 200, 1000, 5000, 20000):
                if alpha_max(alpha, delta, m, "hb") < alpha_max(alpha, delta, m, "hoeffding"):
                    grid_bad += 1
    return bad == 0 and grid_bad == 0, f"p-value violations {bad}/10000, alpha_max violations {grid_bad}/100"


def check_5():
    rng = np.random.default_rng(5)
    worst = 0.0
    for case in range(1000):
        d = 2 + case % 2
        pts = rng.random((int(rng.integers(1, 7)), d))
        r = np.ones(d)
        worst = max(worst, abs(hypervolume(pts, r) - oracles.hypervolume_inclusion_exclusion(pts, r)))
    mc_fail = 0
    for case in range(50):
        d = 2 + case % 2
        front = pareto_front(map(tuple, rng.random((int(rng.integers(1, 7)), d))))
        r = np.ones(d)
        est, se = hypervolume_mc(front, r, 10**6, seed=case)
        mc_fail += abs(est - hypervolume(front, r)) > 3 * se
    ok = worst <= 1e-10 and mc_fail == 0
    return ok, f"max |exact - incl/excl| = {worst:.1e} over 1000 fronts; MC outside 3 SE on {mc_fail}/50 fronts"


def check_6():
    rng = np.random.default_rng(6)
    err = 0.0
    for _ in range(100):
        n, d = int(rng.integers(1, 11)), int(rng.integers(1, 4))
        x, y = rng.random((n, d)), rng.normal(size=n)
        p = KernelParams(tuple(rng.uniform(0.1, 2.0, d)), float(rng.uniform(0.3, 3)), float(rng.uniform(1e-4, 0.1)))
        q = rng.random((20, d))
        mean, var = GPModel.build(x, y, p).predict(q)
        mref, vref = oracles.gp_dense(x, y, q, p.length_scales, p.amplitude, p.noise_var)
        err = max(err, np.abs(mean - mref).max(), np.abs(var - vref).max())
    x, y = rng.random((10, 2)), rng.normal(size=10)
    interp = np.abs(GPModel.build(x, y, KernelParams((0.3, 0.3), 1.0, 1e-10)).predict(x)[0] - y).max()
    model = GPModel.build(x, y, KernelParams((0.2, 0.7), 1.3, 1e-3))
    min_var = model.predict(rng.uniform(-0.5, 1.5, (10_000, 2)))[1].min()
    ok = err <= 1e-8 and interp <= 1e-6 and min_var >= 0.0
    return ok, f"dense-oracle error {err:.1e}, interpolation error {interp:.1e}, min variance {min_var:.2e}"


def check_7():
    start = time.perf_counter()
    cfg = ExperimentConfig(
        PRUNING, [[0.1]], budget=20, init_size=10, methods=["guided", "random_lhs"], trials=30,
        k=2500, m=2500, seed=7, resample_validation=True,
    )
    report = run_experiment(cfg)
    s = {g["method"]: g["summary"] for g in report.groups}
    g, r = s["guided"], s["random_lhs"]
    elapsed = time.perf_counter() - start
    ok = g["free_mean"] is not None and r["free_mean"] is not None
    ok = ok and g["free_mean"] <= r["free_mean"] and g["in_region_rate"] >= 0.6 and elapsed < 900
    return ok, (
        f"free mean guided {g['free_mean']:.4f} vs random_lhs {r['free_mean']:.4f}; in-region guided "
        f"{g['in_region_rate']:.2f} vs random_lhs {r['in_region_rate']:.2f}; nulls {g['n_null']}/{r['n_null']} ({elapsed:.0f}s)"
    )


def check_8():
    cfg = ExperimentConfig(PRUNING, [[0.1]], budget=10, init_size=5, trials=30, k=2500, m=2500, seed=11, resample_validation=True)
    out = run_budget_sweep(cfg, [10, 50])
    small, large = out["per_trial"]["10"], out["per_trial"]["50"]
    pairs = [(a["free"], b["free"]) for a, b in zip(small, large) if a["free"] is not None and b["free"] is not None]
    wins = sum(b < a for a, b in pairs)
    losses = sum(b > a for a, b in pairs)
    p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
    m10 = np.mean([a for a, _ in pairs])
    m50 = np.mean([b for _, b in pairs])
    ok = m50 <= m10 and p < 0.05
    return ok, f"free mean N=50 {m50:.4f} vs N=10 {m10:.4f}; sign test {wins} wins / {losses} losses, p={p:.2g}"


def check_9():
    ok, lines = True, []
    for name, budget, init in (("fairness-like", 10, 5), ("pruning-like", 14, 6)):
        prob = get_problem(name)
        spec = RiskSpec(prob.default_alphas)
        region = region_of_interest(spec, 1000, 1000)
        bo = BOConfig(budget, init, seed=9)
        _, plain = generate_candidates("plain_hvi", prob, spec, region, bo, k=1000, val_seed=4)
        guided = []
        full = RegionOfInterest.full_space(spec.num_constrained, 1000, 1000, spec.bound)
        run_bo(prob, prob.space, spec, full, bo, n_samples=1000, data_seed=4, log_sink=guided.append)
        same = "\n".join(plain).encode() == "\n".join(guided).encode() and len(plain) == budget - init
        ok &= same
        lines.append(f"{name}: {len(plain)} iterations {'identical' if same else 'DIFFER'}")
    return ok, "; ".join(lines)


def check_10():
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for tag in ("a", "b"):
            out = Path(tmp) / tag
            cmd = [sys.executable, "-m", "certbo", "run", "--problem", "fairness-like", "--trials", "3", "--seed", "17", "--out", str(out)]
            proc = subprocess.run(cmd, capture_output=True, text=True)
            if proc.returncode != 0:
                return False, f"run exited {proc.returncode}: {proc.stderr.strip()}"
            outs.append((out / "results.json").read_bytes())
    same = outs[0] == outs[1]
    return same, f"results.json {'byte-identical' if same else 'differs'} ({len(outs[0])} bytes)"


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9, check_10]


def _report(n, ok, detail):
    print(f"ACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}: {detail}", flush=True)


@pytest.mark.parametrize("n", range(1, 11))
def test_acceptance(n, capsys):
    ok, detail = CHECKS[n - 1]()
    with capsys.disabled():
        print()
        _report(n, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    results = []
    for i, check in enumerate(CHECKS, 1):
        ok, detail = check()
        _report(i, ok, detail)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
