"""Experiment harness: methods, repeated trials, FWER studies, budget sweeps.

Every method shares the same certification stage; they differ only in how
the candidate configurations are generated.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from .core import ConfigIds, Configuration, EvalRecord, RiskSpec, SearchSpace, Split, derive_seed
from .guided_bo import BOAborted, BOConfig, _initial_unit_points, _snap, latin_hypercube, run_bo
from .objectives import ObjectiveError, ObjectiveProvider, SyntheticTradeoff, provider_from_descriptor
from .stats import RegionOfInterest, region_of_interest
from .testing import certify

log = logging.getLogger(__name__)

METHODS = ("guided", "uniform", "random_lhs", "plain_hvi")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    provider: dict
    alpha_grid: list[list[float]]
    delta: float = 0.1
    delta_prime: float = 1e-4
    bound: str = "hoeffding_bentkus"
    budget: int = 10
    init_size: int = 5
    methods: list[str] = field(default_factory=lambda: ["guided"])
    trials: int = 1
    k: int = 2000
    m: int = 2000
    test_size: int | None = None
    seed: int = 0
    jobs: int = 1
    resample_validation: bool = False
    candidate_pool_size: int = 4096
    perturbation_count: int = 256

    def validate(self) -> None:
        problems = []
        if self.trials < 1:
            problems.append("trials must be >= 1")
        if not self.alpha_grid:
            problems.append("at least one alpha vector is required")
        for m in self.methods:
            if m not in METHODS:
                problems.append(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if self.k < 2 or self.m < 2:
            problems.append("k and m must be >= 2")
        if self.init_size < 2 or self.budget < self.init_size:
            problems.append("need 2 <= init_size <= budget")
        try:
            for a in self.alpha_grid:
                self.risk_spec(a)
        except ValueError as exc:
            problems.append(str(exc))
        if problems:
            raise ConfigError("; ".join(problems))

    def risk_spec(self, alphas: Sequence[float]) -> RiskSpec:
        return RiskSpec(tuple(alphas), self.delta, self.delta_prime, self.bound)

    def bo_config(self, seed: int) -> BOConfig:
        return BOConfig(
            self.budget, self.init_size, seed, self.candidate_pool_size, self.perturbation_count
        )

    @property
    def n_test(self) -> int:
        return self.test_size if self.test_size is not None else self.m

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RunReport:
    config: dict
    groups: list[dict]
    rows: list[dict]

    def to_dict(self) -> dict:
        return {"config": self.config, "groups": self.groups, "rows": self.rows}

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(d["config"], d["groups"], d["rows"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=False)


# -- candidate generation ---------------------------------------------------------


def _int_root(n: int, dim: int) -> int:
    """Largest L with L**dim <= n."""
    level = max(1, int(round(n ** (1.0 / dim))))
    while level**dim > n:
        level -= 1
    while (level + 1) ** dim <= n:
        level += 1
    return level


def uniform_grid(space: SearchSpace, budget: int) -> np.ndarray:
    """Unit-box grid: ``budget`` evenly spaced points in 1-d, else the largest full grid within budget."""
    if space.dim == 1:
        return np.linspace(0.0, 1.0, budget)[:, None]
    levels = _int_root(budget, space.dim)
    axis = np.linspace(0.0, 1.0, levels) if levels > 1 else np.array([0.5])
    mesh = np.meshgrid(*([axis] * space.dim), indexing="ij")
    return np.column_stack([g.reshape(-1) for g in mesh])


def _evaluate_points(
    provider: ObjectiveProvider, space: SearchSpace, unit: np.ndarray, k: int, val_seed, ids: ConfigIds
) -> list[EvalRecord]:
    support = provider.finite_support
    taken: set[int] = set()
    records = []
    for u in unit:
        if support is not None:
            j = _snap(u, space.to_unit(support), taken)
            if j is None:
                break
            taken.add(j)
            cfg = ids.new(support[j])
        else:
            cfg = ids.new(space.from_unit(u))
        try:
            val = provider.evaluate(cfg, Split.VALIDATION, k, val_seed)
        except ObjectiveError as exc:
            raise BOAborted(f"evaluation of {cfg.id} failed: {exc}", records) from exc
        records.append(EvalRecord.from_samples(cfg, val, provenance=provider.name))
    return records


def generate_candidates(
    method: str,
    provider: ObjectiveProvider,
    spec: RiskSpec,
    region: RegionOfInterest,
    bo_config: BOConfig,
    *,
    k: int,
    val_seed,
) -> tuple[list[EvalRecord], list[str]]:
    """Search stage for ``method``; returns validation records and the iteration log."""
    space = provider.space
    ids = ConfigIds()
    lines: list[str] = []
    if method == "guided":
        recs = run_bo(provider, space, spec, region, bo_config, n_samples=k, data_seed=val_seed, ids=ids, log_sink=lines.append)
    elif method == "plain_hvi":
        full = RegionOfInterest.full_space(spec.num_constrained, region.k, region.m, region.bound)
        recs = run_bo(provider, space, spec, full, bo_config, n_samples=k, data_seed=val_seed, ids=ids, log_sink=lines.append)
    elif method == "uniform":
        recs = _evaluate_points(provider, space, uniform_grid(space, bo_config.budget), k, val_seed, ids)
    elif method == "random_lhs":
        rng = np.random.default_rng(derive_seed(bo_config.seed, "random-baseline"))
        if space.dim == 1:
            unit = rng.random((bo_config.budget, 1))
        else:
            unit = latin_hypercube(bo_config.budget, space.dim, rng)
        recs = _evaluate_points(provider, space, unit, k, val_seed, ids)
    else:
        raise ConfigError(f"unknown method {method!r}")
    return recs, lines


# -- trials ------------------------------------------------------------------------


def _seeds(cfg: ExperimentConfig, trial: int) -> dict:
    tag = (trial,) if cfg.resample_validation else ()
    return {
        "val": derive_seed(cfg.seed, "validation", *tag),
        "search": derive_seed(cfg.seed, "search", *tag),
        "trial": derive_seed(cfg.seed, "trial", trial),
    }


def _floats(v) -> list[float] | None:
    return None if v is None else [float(x) for x in v]


def _run_trial(
    cfg: ExperimentConfig,
    provider: ObjectiveProvider,
    method: str,
    alphas: list[float],
    trial: int,
    search: tuple[list[EvalRecord], RegionOfInterest] | None = None,
) -> dict:
    spec = cfg.risk_spec(alphas)
    seeds = _seeds(cfg, trial)
    row = {"method": method, "alphas": list(map(float, alphas)), "trial": trial, "status": "ok", "error": None}
    try:
        if search is None:
            region = region_of_interest(spec, cfg.k, cfg.m)
            records, _ = generate_candidates(
                method, provider, spec, region, cfg.bo_config(seeds["search"]), k=cfg.k, val_seed=seeds["val"]
            )
        else:
            records, region = search
        result = certify(records, provider, spec, cfg.k, cfg.m, data_seed=seeds["trial"], region=region)
    except (ObjectiveError, ValueError, np.linalg.LinAlgError) as exc:
        row.update(status="failed", error=str(exc))
        return row

    c = spec.num_constrained
    row.update(
        {
            "n_candidates": len(records),
            "n_pareto": len(result.ordering),
            "boundary": result.boundary,
            "degenerate": bool(region.degenerate),
            "selection": result.to_dict(),
            "chosen_id": None,
            "chosen_lambda": None,
            "val_means": None,
            "test_means": None,
            "true_means": None,
            "violated": False,
            "in_region": None,
        }
    )
    if result.chosen is None:
        return row
    chosen = result.chosen
    by_id = {r.config.id: r for r in result.candidates}
    try:
        test = provider.evaluate(chosen, Split.TEST, cfg.n_test, seeds["trial"])
        test_means = list(test.means())
    except ObjectiveError as exc:
        log.warning("no test evaluation for %s: %s", chosen.id, exc)
        test_means = None
    truth = provider.true_mean(chosen.values) if isinstance(provider, SyntheticTradeoff) else None
    judged = truth if truth is not None else test_means
    violated = bool(judged is not None and any(judged[i] > alphas[i] for i in range(c)))
    in_region = None
    if test_means is not None:
        in_region = bool(all(region.low[i] <= test_means[i] <= region.high[i] for i in range(c)))
    row.update(
        chosen_id=chosen.id,
        chosen_lambda=list(chosen.values),
        val_means=list(by_id[chosen.id].val_means),
        test_means=_floats(test_means),
        true_means=_floats(truth),
        violated=violated,
        in_region=in_region,
    )
    return row


def _mean_ci(values: Sequence[float]) -> tuple[float | None, float | None, float | None]:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return None, None, None
    mean = float(x.mean())
    half = 1.96 * float(x.std(ddof=1)) / math.sqrt(x.size) if x.size > 1 else 0.0
    return mean, mean - half, mean + half


def summarize(rows: Sequence[dict], num_constrained: int) -> dict:
    """Group aggregates.

    Denominators: null_rate and violation_rate over successful trials (a null
    selection never counts as a violation); free and constrained means over
    non-null trials with test losses.
    """
    ok = [r for r in rows if r["status"] == "ok"]
    chosen = [r for r in ok if r.get("chosen_id") is not None]
    tested = [r for r in chosen if r.get("test_means") is not None]
    n_ok = len(ok)
    viol = sum(1 for r in ok if r.get("violated"))
    free = _mean_ci([r["test_means"][num_constrained] for r in tested])
    cons = [_mean_ci([r["test_means"][i] for r in tested]) for i in range(num_constrained)]
    in_region = [r["in_region"] for r in tested if r.get("in_region") is not None]
    return {
        "n_trials": len(rows),
        "n_failed": len(rows) - n_ok,
        "n_null": n_ok - len(chosen),
        "null_rate": (n_ok - len(chosen)) / n_ok if n_ok else None,
        "n_violations": viol,
        "violation_rate": viol / n_ok if n_ok else None,
        "free_mean": free[0],
        "free_ci": [free[1], free[2]],
        "constrained_mean": [c[0] for c in cons],
        "constrained_ci": [[c[1], c[2]] for c in cons],
        "in_region_rate": (sum(in_region) / len(in_region)) if in_region else None,
    }


def _search_unit(cfg: ExperimentConfig, method: str, alphas: list[float]):
    provider = provider_from_descriptor(cfg.provider)
    spec = cfg.risk_spec(alphas)
    region = region_of_interest(spec, cfg.k, cfg.m)
    seeds = _seeds(cfg, 0)
    try:
        records, lines = generate_candidates(
            method, provider, spec, region, cfg.bo_config(seeds["search"]), k=cfg.k, val_seed=seeds["val"]
        )
    except ObjectiveError as exc:
        return None, region, [], str(exc)
    return records, region, lines, None


def _group_rows(cfg: ExperimentConfig, method: str, alphas: list[float]):
    """All trials of one (method, alpha) group with the shared validation-stage search."""
    provider = provider_from_descriptor(cfg.provider)
    records, region, lines, err = _search_unit(cfg, method, alphas)
    if err is not None:
        rows = [
            {"method": method, "alphas": list(map(float, alphas)), "trial": t, "status": "failed", "error": err}
            for t in range(cfg.trials)
        ]
        return rows, region, [], lines
    rows = [_run_trial(cfg, provider, method, alphas, t, (records, region)) for t in range(cfg.trials)]
    return rows, region, records, lines


def _single_trial(cfg: ExperimentConfig, method: str, alphas: list[float], trial: int) -> dict:
    return _run_trial(cfg, provider_from_descriptor(cfg.provider), method, alphas, trial)


def _record_dict(r: EvalRecord) -> dict:
    return {"id": r.config.id, "lambda": list(r.config.values), "val_means": list(r.val_means)}


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Run every (method, alpha) group for ``cfg.trials`` trials.

    With fixed validation data (the default) the search stage is identical
    across trials, so it runs once per group and only calibration and test
    draws change between trials.
    """
    cfg.validate()
    groups_spec = [(m, list(map(float, a))) for a in cfg.alpha_grid for m in cfg.methods]
    groups = []
    all_rows: list[dict] = []
    pool = ProcessPoolExecutor(cfg.jobs) if cfg.jobs > 1 else None
    try:
        if not cfg.resample_validation:
            if pool is not None:
                futs = [pool.submit(_group_rows, cfg, m, a) for m, a in groups_spec]
                results = [f.result() for f in futs]
            else:
                results = [_group_rows(cfg, m, a) for m, a in groups_spec]
            for (m, a), (rows, region, records, lines) in zip(groups_spec, results):
                groups.append(
                    {
                        "method": m,
                        "alphas": a,
                        "region": region.to_dict(),
                        "candidates": [_record_dict(r) for r in records],
                        "iteration_log": [json.loads(s) for s in lines],
                        "summary": summarize(rows, len(a)),
                    }
                )
                all_rows.extend(rows)
        else:
            tasks = [(m, a, t) for m, a in groups_spec for t in range(cfg.trials)]
            if pool is not None:
                futs = [pool.submit(_single_trial, cfg, m, a, t) for m, a, t in tasks]
                rows = [f.result() for f in futs]
            else:
                rows = [_single_trial(cfg, m, a, t) for m, a, t in tasks]
            rows.sort(key=lambda r: (groups_spec.index((r["method"], r["alphas"])), r["trial"]))
            for m, a in groups_spec:
                grows = [r for r in rows if r["method"] == m and r["alphas"] == a]
                region = region_of_interest(cfg.risk_spec(a), cfg.k, cfg.m)
                groups.append({"method": m, "alphas": a, "region": region.to_dict(), "summary": summarize(grows, len(a))})
            all_rows = rows
    finally:
        if pool is not None:
            pool.shutdown()
    conf = cfg.to_dict()
    conf.pop("jobs")  # worker count never changes results, so keep it out of the bytes
    return RunReport(conf, groups, all_rows)


def check_consistency(report: RunReport) -> bool:
    """Aggregates recomputed from the per-trial rows match the stored ones."""
    for g in report.groups:
        rows = [r for r in report.rows if r["method"] == g["method"] and r["alphas"] == g["alphas"]]
        if summarize(rows, len(g["alphas"])) != g["summary"]:
            return False
    return True


# -- studies -----------------------------------------------------------------------


def run_fwer_study(cfg: ExperimentConfig) -> dict:
    """Violation rate of the certified selection over repeated calibration draws."""
    provider = provider_from_descriptor(cfg.provider)
    if not isinstance(provider, SyntheticTradeoff):
        raise ConfigError("FWER studies need a synthetic provider with known true means")
    report = run_experiment(cfg)
    out = []
    for g in report.groups:
        s = g["summary"]
        n = s["n_trials"] - s["n_failed"]
        v = s["n_violations"]
        ci = binomtest(v, n).proportion_ci(method="exact") if n else None
        out.append(
            {
                "method": g["method"],
                "alphas": g["alphas"],
                "delta": cfg.delta,
                "trials": n,
                "selections": n - s["n_null"],
                "violations": v,
                "rate": v / n if n else None,
                "ci": None if ci is None else [float(ci.low), float(ci.high)],
                "tolerance": cfg.delta + 3.0 * math.sqrt(cfg.delta * (1.0 - cfg.delta) / max(n, 1)),
            }
        )
    return {"studies": out, "report": report.to_dict()}


def run_budget_sweep(cfg: ExperimentConfig, budgets: Sequence[int]) -> dict:
    """Repeat the experiment per budget with shared seeds."""
    budgets = list(budgets)
    if budgets != sorted(budgets):
        raise ConfigError("budgets must be ascending")
    table = []
    per_trial = {}
    for n in budgets:
        sub = replace(cfg, budget=n, init_size=min(cfg.init_size, n))
        report = run_experiment(sub)
        for g in report.groups:
            table.append({"budget": n, "method": g["method"], "alphas": g["alphas"], **g["summary"]})
        c = len(cfg.alpha_grid[0])
        per_trial[str(n)] = [
            {
                "method": r["method"],
                "alphas": r["alphas"],
                "trial": r["trial"],
                "free": None if not r.get("test_means") else r["test_means"][c],
            }
            for r in report.rows
        ]
    return {"budgets": budgets, "table": table, "per_trial": per_trial}


# -- output ------------------------------------------------------------------------


def csv_rows(report: RunReport) -> tuple[list[str], list[list]]:
    c = len(report.config["alpha_grid"][0]) if report.config.get("alpha_grid") else 1
    header = ["method", "alphas", "n_trials", "n_null", "null_rate", "violation_rate", "free_mean", "free_ci_low", "free_ci_high"]
    for i in range(c):
        header += [f"constrained_{i}_mean", f"constrained_{i}_ci_low", f"constrained_{i}_ci_high"]
    rows = []
    for g in report.groups:
        s = g["summary"]
        row = [g["method"], ";".join(repr(a) for a in g["alphas"]), s["n_trials"], s["n_null"], s["null_rate"],
               s["violation_rate"], s["free_mean"], *s["free_ci"]]
        for i in range(c):
            row += [s["constrained_mean"][i], *s["constrained_ci"][i]]
        rows.append(["" if v is None else v for v in row])
    return header, rows


def emit_results(report: RunReport, out_dir) -> list[Path]:
    """Write results.json (full report) and results.csv (one row per method and alpha)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    js = out / "results.json"
    js.write_text(report.to_json() + "\n")
    header, rows = csv_rows(report)
    cs = out / "results.csv"
    with open(cs, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return [js, cs]
