"""Objective providers: synthetic trade-offs, table replay, subprocess plugins.

Every provider returns per-sample losses for a configuration on a named data
split. Objectives ``0..c-1`` are constrained and must be [0, 1]-valued; the
last objective is free.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Configuration, LossSamples, SearchSpace, Split, derive_seed

log = logging.getLogger(__name__)


class ObjectiveError(RuntimeError):
    """An objective could not be evaluated (bad output, timeout, missing data)."""


class ManifestError(ValueError):
    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _sample_seed(seed, split: Split, config_id: str) -> int:
    return derive_seed(seed, Split(split).value, config_id)


class ObjectiveProvider:
    """Base class; subclasses implement :meth:`evaluate`."""

    kind = "abstract"
    name = "objective"
    space: SearchSpace
    num_constrained: int

    @property
    def n_objectives(self) -> int:
        return self.num_constrained + 1

    @property
    def finite_support(self) -> np.ndarray | None:
        """Listed configurations for finite spaces, else None."""
        return None

    def evaluate(self, config: Configuration, split, n_samples: int, seed) -> LossSamples:
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError


def evaluate(provider: ObjectiveProvider, config: Configuration, split, n_samples: int, seed) -> LossSamples:
    return provider.evaluate(config, Split(split), n_samples, seed)


# -- synthetic -----------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticTradeoff(ObjectiveProvider):
    """Closed-form trade-off curves with Bernoulli sampling noise.

    Every true mean is a monotone function of ``s``, the average of the
    unit-scaled coordinates: ``clamp(base + gain * s**exponent, 0, 1)``.
    Constrained objectives are Bernoulli draws around their mean; ``noise``
    only selects how the free objective is sampled.
    """

    dim: int
    base: tuple[float, ...]
    gain: tuple[float, ...]
    exponent: tuple[float, ...]
    noise: str = "bernoulli"
    noise_sd: float = 0.1
    name: str = "synthetic"
    default_alphas: tuple[float, ...] = ()

    kind = "synthetic"

    def __post_init__(self):
        for attr in ("base", "gain", "exponent", "default_alphas"):
            object.__setattr__(self, attr, tuple(float(v) for v in getattr(self, attr)))
        d = len(self.base)
        if d < 2 or len(self.gain) != d or len(self.exponent) != d:
            raise ValueError("base, gain and exponent need one entry per objective (>= 2)")
        if any(e < 0 for e in self.exponent):
            raise ValueError("exponents must be >= 0")
        if self.noise not in ("bernoulli", "clipped_gaussian"):
            raise ValueError(f"unknown noise model {self.noise!r}")
        g_free = self.gain[-1]
        if g_free == 0 or any(g == 0 or (g > 0) == (g_free > 0) for g in self.gain[:-1]):
            raise ValueError("constrained and free gains must have opposite nonzero signs")

    @property
    def space(self) -> SearchSpace:
        return SearchSpace.unit(self.dim)

    @property
    def num_constrained(self) -> int:
        return len(self.base) - 1

    def true_mean(self, values) -> np.ndarray:
        u = self.space.to_unit(np.asarray(values, dtype=float))
        s = float(np.mean(u))
        return np.array(
            [min(max(b + g * s**e, 0.0), 1.0) for b, g, e in zip(self.base, self.gain, self.exponent)]
        )

    def evaluate(self, config: Configuration, split, n_samples: int, seed) -> LossSamples:
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        mu = self.true_mean(config.values)
        rng = np.random.default_rng(_sample_seed(seed, split, config.id))
        vecs = [(rng.random(n_samples) < p).astype(float) for p in mu[:-1]]
        if self.noise == "bernoulli":
            vecs.append((rng.random(n_samples) < mu[-1]).astype(float))
        else:
            vecs.append(np.clip(mu[-1] + self.noise_sd * rng.standard_normal(n_samples), 0.0, 1.0))
        return LossSamples(config.id, split, tuple(vecs))

    def descriptor(self) -> dict:
        return {
            "kind": "synthetic",
            "name": self.name,
            "dim": self.dim,
            "base": list(self.base),
            "gain": list(self.gain),
            "exponent": list(self.exponent),
            "noise": self.noise,
            "noise_sd": self.noise_sd,
        }


def true_mean(problem: SyntheticTradeoff, values) -> np.ndarray:
    return problem.true_mean(values)


_PRESETS = {
    "fairness-like": dict(dim=1, base=(0.1, 0.9), gain=(0.8, -0.8), exponent=(1.0, 2.0), default_alphas=(0.5,)),
    "robustness-like": dict(
        dim=1, base=(0.05, 0.8), gain=(0.4, -0.7), exponent=(3.0, 0.5), default_alphas=(0.15,)
    ),
    "selective-robustness-like": dict(
        dim=2,
        base=(0.05, 0.05, 0.9),
        gain=(0.5, 0.4, -0.8),
        exponent=(1.0, 1.5, 1.0),
        default_alphas=(0.3, 0.2),
    ),
    "pruning-like": dict(
        dim=3,
        base=(0.0, 1.0),
        gain=(0.8, -1.0),
        exponent=(2.0, 1.0),
        noise="clipped_gaussian",
        noise_sd=0.05,
        default_alphas=(0.1,),
    ),
}


def builtin_problems() -> dict[str, SyntheticTradeoff]:
    return {name: SyntheticTradeoff(name=name, **kw) for name, kw in _PRESETS.items()}


def get_problem(name: str) -> SyntheticTradeoff:
    problems = builtin_problems()
    if name not in problems:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(problems)}")
    return problems[name]


# -- table replay --------------------------------------------------------------


def _read_loss_csv(path: Path, n_objectives: int) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    expected = [f"objective_{i}" for i in range(n_objectives)]
    if [h.strip() for h in rows[0]] != expected:
        raise ValueError(f"{path}: header must be {','.join(expected)}")
    data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError(f"{path}: no sample rows")
    return data.T.copy()


def write_loss_csv(path, per_objective: Sequence[np.ndarray]) -> None:
    arr = np.column_stack([np.asarray(v, dtype=float) for v in per_objective])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"objective_{i}" for i in range(arr.shape[1])])
        for row in arr:
            w.writerow([repr(float(v)) for v in row])


@dataclass
class TableObjective(ObjectiveProvider):
    """Replays precomputed per-sample losses listed in a JSON manifest.

    When a test split is present, calibration and test draws for a trial are
    a seeded re-split of the pooled calibration+test samples, so repeated
    trials mimic fresh calibration/test partitions of the same data.
    """

    dim: int
    num_constrained: int
    ids: list[str]
    lambdas: np.ndarray
    losses: dict[str, dict[str, np.ndarray]]
    manifest_path: str = ""
    name: str = "table"
    kind = "table"

    @property
    def space(self) -> SearchSpace:
        lo = self.lambdas.min(axis=0)
        hi = self.lambdas.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        return SearchSpace(tuple(lo), tuple(hi))

    @property
    def finite_support(self) -> np.ndarray:
        return self.lambdas

    def _index(self, values) -> int:
        hits = np.nonzero(np.all(np.isclose(self.lambdas, np.asarray(values)[None, :], atol=1e-12), axis=1))[0]
        if hits.size == 0:
            raise ObjectiveError(f"configuration {list(values)} not listed in manifest")
        return int(hits[0])

    def split_size(self, split: Split) -> int | None:
        arr = self.losses[self.ids[0]].get(Split(split).value)
        return None if arr is None else arr.shape[1]

    def evaluate(self, config: Configuration, split, n_samples: int, seed) -> LossSamples:
        split = Split(split)
        data = self.losses[self.ids[self._index(config.values)]]
        if split is Split.VALIDATION or "test" not in data or seed is None:
            if split.value not in data:
                raise ObjectiveError(f"manifest has no {split.value} split")
            arr = data[split.value]
        else:
            pooled = np.concatenate([data["calibration"], data["test"]], axis=1)
            n_cal = data["calibration"].shape[1]
            perm = np.random.default_rng(derive_seed(seed, "table-resplit")).permutation(pooled.shape[1])
            idx = perm[:n_cal] if split is Split.CALIBRATION else perm[n_cal:]
            arr = pooled[:, idx]
        return LossSamples(config.id, split, tuple(arr))

    def descriptor(self) -> dict:
        return {"kind": "table", "manifest": self.manifest_path}


def load_table_objective(manifest_path) -> TableObjective:
    """Load and validate a manifest; raises ManifestError listing every problem."""
    path = Path(manifest_path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError([f"cannot read manifest: {exc}"]) from exc
    errors: list[str] = []
    dim, c = doc.get("dim"), doc.get("constrained")
    if not isinstance(dim, int) or dim < 1:
        errors.append("'dim' must be a positive integer")
    if not isinstance(c, int) or c < 1:
        errors.append("'constrained' must be a positive integer")
    configs = doc.get("configs")
    if not isinstance(configs, list) or not configs:
        errors.append("'configs' must be a nonempty list")
    if errors:
        raise ManifestError(errors)

    ids: list[str] = []
    lambdas = []
    losses: dict[str, dict[str, np.ndarray]] = {}
    sizes: dict[str, set[int]] = {}
    for n, entry in enumerate(configs):
        cid = str(entry.get("id", ""))
        if not cid:
            errors.append(f"config #{n}: missing id")
            continue
        if cid in losses:
            errors.append(f"duplicated config id {cid!r}")
            continue
        lam = entry.get("lambda")
        if not isinstance(lam, list) or len(lam) != dim:
            errors.append(f"config {cid}: 'lambda' must have {dim} entries")
            continue
        files = entry.get("losses") or {}
        if "validation" not in files or "calibration" not in files:
            errors.append(f"config {cid}: validation and calibration loss files are required")
            continue
        per_split = {}
        for split, rel in files.items():
            if split not in {s.value for s in Split}:
                errors.append(f"config {cid}: unknown split {split!r}")
                continue
            try:
                arr = _read_loss_csv(path.parent / rel, c + 1)
            except (OSError, ValueError) as exc:
                errors.append(f"config {cid}: {exc}")
                continue
            if not np.all(np.isfinite(arr)):
                errors.append(f"config {cid}: non-finite losses in {split}")
            bad = (arr[:c] < 0.0) | (arr[:c] > 1.0)
            if np.any(bad):
                errors.append(f"config {cid}: loss out of range in {split} (constrained values must lie in [0, 1])")
            sizes.setdefault(split, set()).add(arr.shape[1])
            per_split[split] = arr
        ids.append(cid)
        lambdas.append([float(v) for v in lam])
        losses[cid] = per_split
    for split, s in sizes.items():
        if len(s) > 1:
            errors.append(f"inconsistent {split} sample counts: {sorted(s)}")
    if errors:
        raise ManifestError(errors)
    return TableObjective(dim, c, ids, np.array(lambdas, dtype=float), losses, str(path), path.stem)


def write_manifest(directory, dim: int, constrained: int, entries: Sequence[dict]) -> Path:
    """Write a manifest plus CSVs. ``entries``: {"id", "lambda", "losses": {split: arrays}}."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    configs = []
    for e in entries:
        files = {}
        for split, vecs in e["losses"].items():
            name = f"{e['id']}_{split}.csv"
            write_loss_csv(out / name, vecs)
            files[split] = name
        configs.append({"id": e["id"], "lambda": list(map(float, e["lambda"])), "losses": files})
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps({"dim": dim, "constrained": constrained, "configs": configs}, indent=2))
    return manifest


# -- subprocess plugin ---------------------------------------------------------


def subprocess_evaluate(
    command: Sequence[str],
    values: Sequence[float],
    split,
    n_samples: int,
    seed: int,
    timeout_s: float = 3600.0,
    n_objectives: int | None = None,
    num_constrained: int | None = None,
    config_id: str = "",
) -> LossSamples:
    """Run one black-box evaluation through the JSON-lines child protocol."""
    request = {"lambda": [float(v) for v in values], "split": Split(split).value, "n_samples": n_samples, "seed": seed}
    try:
        proc = subprocess.run(
            list(command),
            input=json.dumps(request) + "\n",
            capture_output=True,
            text=True,
            timeout=timeout_s,
        )
    except subprocess.TimeoutExpired as exc:
        raise ObjectiveError(f"objective timed out after {timeout_s}s; stderr: {exc.stderr or ''}") from exc
    except OSError as exc:
        raise ObjectiveError(f"cannot start objective command: {exc}") from exc
    if proc.returncode != 0:
        raise ObjectiveError(f"objective exited with code {proc.returncode}; stderr: {proc.stderr.strip()}")
    line = next((ln for ln in proc.stdout.splitlines() if ln.strip()), "")
    try:
        reply = json.loads(line)
        losses = reply["losses"]
        vecs = tuple(np.asarray(v, dtype=float).reshape(-1) for v in losses)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ObjectiveError(f"malformed objective response {line[:200]!r}; stderr: {proc.stderr.strip()}") from exc
    if n_objectives is not None and len(vecs) != n_objectives:
        raise ObjectiveError(f"wrong arity: expected {n_objectives} loss arrays, got {len(vecs)}")
    if len({len(v) for v in vecs}) != 1:
        raise ObjectiveError("loss arrays differ in length")
    c = num_constrained if num_constrained is not None else len(vecs) - 1
    for i, v in enumerate(vecs):
        if not np.all(np.isfinite(v)):
            raise ObjectiveError(f"non-finite losses for objective {i}")
        if i < c and (v.min() < 0.0 or v.max() > 1.0):
            raise ObjectiveError(f"loss out of range for constrained objective {i}")
    return LossSamples(config_id, split, vecs)


@dataclass(frozen=True)
class SubprocessObjective(ObjectiveProvider):
    command: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    num_constrained: int = 1
    timeout_s: float = 3600.0
    name: str = "subprocess"
    kind = "subprocess"

    @property
    def space(self) -> SearchSpace:
        return SearchSpace(self.lower, self.upper)

    def evaluate(self, config: Configuration, split, n_samples: int, seed) -> LossSamples:
        return subprocess_evaluate(
            self.command,
            config.values,
            split,
            n_samples,
            _sample_seed(seed, split, config.id),
            self.timeout_s,
            n_objectives=self.n_objectives,
            num_constrained=self.num_constrained,
            config_id=config.id,
        )

    def descriptor(self) -> dict:
        return {
            "kind": "subprocess",
            "command": list(self.command),
            "lower": list(self.lower),
            "upper": list(self.upper),
            "constrained": self.num_constrained,
            "timeout_s": self.timeout_s,
        }


def provider_from_descriptor(desc: dict) -> ObjectiveProvider:
    kind = desc.get("kind", "synthetic")
    if kind == "synthetic":
        if "preset" in desc or ("name" in desc and "base" not in desc):
            return get_problem(desc.get("preset") or desc["name"])
        kw = {k: desc[k] for k in ("dim", "base", "gain", "exponent", "noise", "noise_sd", "name") if k in desc}
        return SyntheticTradeoff(**kw)
    if kind == "table":
        return load_table_objective(desc["manifest"])
    if kind == "subprocess":
        cmd = desc["command"]
        return SubprocessObjective(
            tuple(shlex.split(cmd) if isinstance(cmd, str) else cmd),
            tuple(desc["lower"]),
            tuple(desc["upper"]),
            int(desc.get("constrained", 1)),
            float(desc.get("timeout_s", 3600.0)),
        )
    raise ValueError(f"unknown provider kind {kind!r}")
