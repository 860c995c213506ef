"""Command-line entry point: ``certbo <subcommand> [flags]``.

A JSON config file supplies defaults; any flag given on the command line
overrides the matching key. Exit codes: 0 success, 2 config error,
3 provider error, 4 every trial ended with a null selection.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import ConfigIds, EvalRecord, Split
from .experiments import (
    METHODS,
    ConfigError,
    ExperimentConfig,
    emit_results,
    run_budget_sweep,
    run_experiment,
    run_fwer_study,
)
from .guided_bo import sample_initial_pool
from .objectives import ManifestError, ObjectiveError, get_problem, load_table_objective, provider_from_descriptor
from .pareto import ObjectivePoint, hypervolume, hypervolume_mc, pareto_front
from .testing import suggest_alpha_range

EXIT_OK, EXIT_CONFIG, EXIT_PROVIDER, EXIT_NULL = 0, 2, 3, 4

log = logging.getLogger("certbo")

# config-file aliases that mirror flag names
_ALIASES = {"alpha": "alpha_grid", "init": "init_size", "method": "methods"}


def _float_vector(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float vector: {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file; flags override its keys")
    p.add_argument("--problem", help="built-in synthetic problem name")
    p.add_argument("--manifest", type=Path, help="table-backed provider manifest")
    p.add_argument("--command", help="subprocess objective command line")
    p.add_argument("--lower", type=_float_vector, help="subprocess search-space lower corner")
    p.add_argument("--upper", type=_float_vector, help="subprocess search-space upper corner")
    p.add_argument("--constrained", type=int, help="number of constrained objectives (subprocess)")
    p.add_argument("--timeout-s", type=float, help="per-call timeout for subprocess objectives")
    p.add_argument("--alpha", type=_float_vector, action="append", help="risk levels a1[,a2...]; repeat for a grid")
    p.add_argument("--delta", type=float)
    p.add_argument("--delta-prime", type=float)
    p.add_argument("--bound", choices=["hoeffding", "hb"])
    p.add_argument("--budget", type=int)
    p.add_argument("--init", type=int)
    p.add_argument("--method", action="append", choices=METHODS, help="repeat to compare methods")
    p.add_argument("--trials", type=int)
    p.add_argument("--k", type=int, help="validation samples per configuration")
    p.add_argument("--m", type=int, help="calibration samples per configuration")
    p.add_argument("--test-size", type=int)
    p.add_argument("--resample-validation", action="store_true", default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", type=Path, default=Path("results"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="certbo", description="Testing-guided multi-objective BO with certification.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command_name", required=True)

    _add_common(sub.add_parser("run", help="run methods over repeated calibration/test draws"))
    _add_common(sub.add_parser("fwer", help="violation-rate study on a synthetic problem"))
    sweep = sub.add_parser("sweep", help="free-objective mean per evaluation budget")
    _add_common(sweep)
    sweep.add_argument("--budgets", type=lambda s: [int(v) for v in s.split(",")], required=True)

    hv = sub.add_parser("hv", help="hypervolume of a points file (CSV or JSON list of vectors)")
    hv.add_argument("points", type=Path)
    hv.add_argument("--ref", type=_float_vector, required=True)
    hv.add_argument("--mc", type=int, default=0, help="also report a Monte Carlo estimate with this many samples")
    hv.add_argument("--seed", type=int, default=0)

    sa = sub.add_parser("suggest-alpha", help="range of constrained validation losses over an initial pool")
    _add_common(sa)

    vm = sub.add_parser("validate-manifest", help="check a table-provider manifest")
    vm.add_argument("manifest", type=Path)
    return parser


def _load_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    out = {}
    for key, value in data.items():
        key = _ALIASES.get(key, key)
        if key == "alpha_grid" and value and not isinstance(value[0], list):
            value = [value]
        if key == "methods" and isinstance(value, str):
            value = [value]
        out[key] = value
    return out


def _provider_from_flags(args, base: dict | None) -> dict | None:
    if args.problem:
        return {"kind": "synthetic", "preset": args.problem}
    if args.manifest:
        return {"kind": "table", "manifest": str(args.manifest)}
    if args.command:
        if args.lower is None or args.upper is None:
            raise ConfigError("--command needs --lower and --upper")
        return {
            "kind": "subprocess",
            "command": args.command,
            "lower": args.lower,
            "upper": args.upper,
            "constrained": args.constrained or 1,
        }
    return base


def config_from_args(args) -> ExperimentConfig:
    """Merge the config file with command-line overrides."""
    data = _load_file(args.config)
    for key in ("problem", "manifest", "timeout_s"):
        if key in data:
            setattr(args, key, getattr(args, key) or data.pop(key))
    provider = _provider_from_flags(args, data.pop("provider", None))
    if provider is None:
        raise ConfigError("no objective provider: use --problem, --manifest, --command or a config 'provider'")
    provider = dict(provider)
    if args.timeout_s is not None:
        provider["timeout_s"] = args.timeout_s

    overrides = {
        "alpha_grid": args.alpha,
        "delta": args.delta,
        "delta_prime": args.delta_prime,
        "bound": args.bound,
        "budget": args.budget,
        "init_size": args.init,
        "methods": args.method,
        "trials": args.trials,
        "k": args.k,
        "m": args.m,
        "test_size": args.test_size,
        "resample_validation": args.resample_validation,
        "seed": args.seed,
        "jobs": args.jobs,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "alpha_grid" not in data:
        if provider.get("kind") == "synthetic" and "preset" in provider:
            try:
                data["alpha_grid"] = [list(get_problem(provider["preset"]).default_alphas)]
            except KeyError as exc:
                raise ConfigError(str(exc)) from exc
        else:
            raise ConfigError("no risk levels: pass --alpha")
    data["provider"] = provider
    cfg = ExperimentConfig.from_dict(data)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _check_provider(cfg: ExperimentConfig):
    try:
        provider = provider_from_descriptor(cfg.provider)
    except ManifestError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad provider descriptor: {exc}") from exc
    c = len(cfg.alpha_grid[0])
    if provider.n_objectives != c + 1:
        raise ConfigError(f"provider has {provider.n_objectives} objectives but {c} risk levels were given")
    return provider


def _outcome_code(rows: list[dict]) -> int:
    if rows and all(r["status"] == "failed" for r in rows):
        for r in rows:
            log.error("trial %s (%s) failed: %s", r["trial"], r["method"], r["error"])
        return EXIT_PROVIDER
    ok = [r for r in rows if r["status"] == "ok"]
    if ok and all(r.get("chosen_id") is None for r in ok):
        degenerate = any(r.get("degenerate") for r in ok)
        log.warning("every trial returned a null selection%s", " (degenerate region)" if degenerate else "")
        return EXIT_NULL
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = config_from_args(args)
    _check_provider(cfg)
    report = run_experiment(cfg)
    for path in emit_results(report, args.out):
        print(path)
    for g in report.groups:
        s = g["summary"]
        print(
            f"{g['method']:<11} alpha={g['alphas']} free_mean={s['free_mean']} "
            f"null_rate={s['null_rate']} violation_rate={s['violation_rate']}"
        )
    return _outcome_code(report.rows)


def _cmd_fwer(args) -> int:
    cfg = config_from_args(args)
    _check_provider(cfg)
    result = run_fwer_study(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "fwer.json"
    path.write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")
    print(path)
    for s in result["studies"]:
        print(
            f"{s['method']:<11} alpha={s['alphas']} delta={s['delta']} rate={s['rate']} "
            f"ci={s['ci']} tolerance={s['tolerance']:.4f}"
        )
    return _outcome_code(result["report"]["rows"])


def _cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    _check_provider(cfg)
    result = run_budget_sweep(cfg, args.budgets)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "sweep.json").write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")
    with open(args.out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["budget", "method", "alphas", "n_trials", "n_null", "free_mean", "free_ci_low", "free_ci_high"])
        for row in result["table"]:
            w.writerow(
                [row["budget"], row["method"], ";".join(map(repr, row["alphas"])), row["n_trials"], row["n_null"],
                 row["free_mean"], *row["free_ci"]]
            )
    for row in result["table"]:
        print(f"N={row['budget']:<4} {row['method']:<11} free_mean={row['free_mean']}")
    return EXIT_OK


def _read_points(path: Path) -> np.ndarray:
    text = path.read_text()
    if path.suffix == ".json":
        pts = np.asarray(json.loads(text), dtype=float)
    else:
        rows = [r for r in csv.reader(text.splitlines()) if r]
        try:
            pts = np.asarray([[float(v) for v in r] for r in rows], dtype=float)
        except ValueError:
            pts = np.asarray([[float(v) for v in r] for r in rows[1:]], dtype=float)  # header row
    if pts.ndim != 2:
        raise ConfigError("points must form a 2-d array")
    return pts


def _cmd_hv(args) -> int:
    try:
        pts = _read_points(args.points)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read points: {exc}") from exc
    ref = np.asarray(args.ref, dtype=float)
    if pts.shape[1] != len(ref):
        raise ConfigError(f"points have {pts.shape[1]} coordinates, reference has {len(ref)}")
    archive = pareto_front(ObjectivePoint(p) for p in pts)
    print(f"hypervolume {hypervolume(archive, ref):.12g}")
    if args.mc:
        est, se = hypervolume_mc(archive, ref, args.mc, args.seed)
        print(f"monte_carlo {est:.12g} se {se:.3g}")
    return EXIT_OK


def _cmd_suggest(args) -> int:
    cfg = config_from_args(args)
    provider = _check_provider(cfg)
    c = len(cfg.alpha_grid[0])
    ids = ConfigIds()
    records = []
    for conf in sample_initial_pool(provider.space, cfg.init_size, cfg.seed, ids):
        val = provider.evaluate(conf, Split.VALIDATION, cfg.k, cfg.seed)
        records.append(EvalRecord.from_samples(conf, val, provenance=provider.name))
    for i, (lo, hi) in enumerate(suggest_alpha_range(records, c)):
        print(f"objective_{i} {lo:.6g} {hi:.6g}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    table = load_table_objective(args.manifest)
    print(f"ok: {len(table.ids)} configurations, dim {table.dim}, {table.num_constrained} constrained")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "fwer": _cmd_fwer,
    "sweep": _cmd_sweep,
    "hv": _cmd_hv,
    "suggest-alpha": _cmd_suggest,
    "validate-manifest": _cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command_name](args)
    except ManifestError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_PROVIDER
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ObjectiveError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER


if __name__ == "__main__":
    sys.exit(main())
