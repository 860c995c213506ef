"""Shared data model: search space, risk specification, evaluation records."""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class Bound(str, enum.Enum):
    HOEFFDING = "hoeffding"
    HOEFFDING_BENTKUS = "hoeffding_bentkus"

    @classmethod
    def parse(cls, value: "str | Bound") -> "Bound":
        if isinstance(value, Bound):
            return value
        aliases = {"hb": cls.HOEFFDING_BENTKUS, "hf": cls.HOEFFDING}
        if value in aliases:
            return aliases[value]
        return cls(value)


class Split(str, enum.Enum):
    VALIDATION = "validation"
    CALIBRATION = "calibration"
    TEST = "test"


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from an arbitrary tuple of ints/strings.

    Python's ``hash`` is salted per process, so a sha256 digest is used to
    keep draws identical across runs and worker processes.
    """
    digest = hashlib.sha256(repr(tuple(str(p) for p in parts)).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass(frozen=True)
class SearchSpace:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) == 0 or len(lo) != len(hi):
            raise ValueError("lower and upper must be nonempty and of equal length")
        if any(not a < b for a, b in zip(lo, hi)):
            raise ValueError("lower[j] < upper[j] required for every dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "SearchSpace":
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, values: Sequence[float]) -> bool:
        v = np.asarray(values, dtype=float)
        return v.shape == (self.dim,) and bool(
            np.all(v >= np.asarray(self.lower)) and np.all(v <= np.asarray(self.upper))
        )

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return np.clip(lo + np.asarray(u, dtype=float) * (hi - lo), lo, hi)


@dataclass(frozen=True)
class Configuration:
    values: tuple[float, ...]
    id: str

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class ConfigIds:
    """Hands out run-unique, content-independent configuration tokens."""

    def __init__(self, prefix: str = "c"):
        self.prefix = prefix
        self._next = 0

    def new(self, values: Sequence[float]) -> Configuration:
        cfg = Configuration(tuple(values), f"{self.prefix}{self._next:04d}")
        self._next += 1
        return cfg


@dataclass(frozen=True)
class RiskSpec:
    """Limits on the constrained objectives plus testing confidence levels.

    Objectives ``0..c-1`` are constrained by ``alphas``; objective ``c`` is the
    free objective, which is minimized but never tested.
    """

    alphas: tuple[float, ...]
    delta: float = 0.1
    delta_prime: float = 1e-4
    bound: Bound = Bound.HOEFFDING_BENTKUS

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        if len(alphas) < 1:
            raise ValueError("at least one constrained objective is required")
        if any(not 0.0 < a < 1.0 for a in alphas):
            raise ValueError("alphas must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not 0.0 < self.delta_prime < 1.0:
            raise ValueError("delta_prime must lie in (0, 1)")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "bound", Bound.parse(self.bound))

    @property
    def num_constrained(self) -> int:
        return len(self.alphas)

    @property
    def free_objective_index(self) -> int:
        return len(self.alphas)

    @property
    def n_objectives(self) -> int:
        return len(self.alphas) + 1


@dataclass(frozen=True)
class LossSamples:
    config_id: str
    split: Split
    per_objective: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "split", Split(self.split))
        vecs = tuple(np.asarray(v, dtype=float).reshape(-1) for v in self.per_objective)
        for v in vecs:
            v.setflags(write=False)
        object.__setattr__(self, "per_objective", vecs)

    @property
    def sample_count(self) -> int:
        counts = {len(v) for v in self.per_objective}
        if len(counts) != 1:
            raise ValueError(f"objective vectors disagree on sample count: {sorted(counts)}")
        return counts.pop()

    def means(self) -> tuple[float, ...]:
        return tuple(empirical_mean(v) for v in self.per_objective)


@dataclass(frozen=True)
class EvalRecord:
    config: Configuration
    val_means: tuple[float, ...]
    val_count: int
    cal_means: tuple[float, ...] | None = None
    cal_count: int | None = None
    provenance: str = ""

    @classmethod
    def from_samples(
        cls,
        config: Configuration,
        val: LossSamples,
        cal: LossSamples | None = None,
        provenance: str = "",
    ) -> "EvalRecord":
        return cls(
            config=config,
            val_means=val.means(),
            val_count=val.sample_count,
            cal_means=None if cal is None else cal.means(),
            cal_count=None if cal is None else cal.sample_count,
            provenance=provenance,
        )

    def with_calibration(self, cal: LossSamples) -> "EvalRecord":
        return EvalRecord(
            self.config, self.val_means, self.val_count, cal.means(), cal.sample_count, self.provenance
        )


def empirical_mean(samples) -> float:
    """Arithmetic mean with a fixed left-to-right summation order."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("empty sample set")
    # np.sum is pairwise; cumsum accumulates strictly left to right.
    return float(np.cumsum(x)[-1]) / x.size


def validate_record(
    record: EvalRecord,
    spec: RiskSpec,
    space: SearchSpace,
    samples: Sequence[LossSamples] = (),
) -> list[str]:
    """Return every violation found in ``record``; an empty list means ok."""
    errors: list[str] = []
    c = spec.num_constrained
    if not space.contains(record.config.values):
        errors.append(f"configuration outside space: {record.config.id}")
    for split, means in (("validation", record.val_means), ("calibration", record.cal_means)):
        if means is None:
            continue
        if len(means) != c + 1:
            errors.append(f"objective count mismatch on {split}: expected {c + 1}, got {len(means)}")
            continue
        if not all(math.isfinite(v) for v in means):
            errors.append(f"non-finite loss on {split}")
        for i, v in enumerate(means[:c]):
            if not 0.0 <= v <= 1.0:
                errors.append(f"loss out of range on {split} objective {i}: {v}")
    if record.val_count < 1:
        errors.append("sample count mismatch: validation count must be positive")
    if (record.cal_means is None) != (record.cal_count is None):
        errors.append("sample count mismatch: calibration means and count must appear together")
    for s in samples:
        if s.config_id != record.config.id:
            errors.append(f"samples belong to {s.config_id}, not {record.config.id}")
        counts = {len(v) for v in s.per_objective}
        if len(counts) != 1:
            errors.append(f"sample count mismatch within {s.split.value} samples")
            continue
        expected = record.val_count if s.split is Split.VALIDATION else record.cal_count
        if s.split is not Split.TEST and counts.pop() != expected:
            errors.append(f"sample count mismatch on {s.split.value}")
        for i, v in enumerate(s.per_objective[:c]):
            if v.size and (v.min() < 0.0 or v.max() > 1.0):
                errors.append(f"loss out of range in {s.split.value} samples, objective {i}")
    return errors


def split_sizes(records: Sequence[EvalRecord]) -> tuple[int, int | None]:
    """Common (validation, calibration) sample counts across ``records``."""
    if not records:
        raise ValueError("no records")
    ks = {r.val_count for r in records}
    ms = {r.cal_count for r in records}
    if len(ks) != 1:
        raise ValueError(f"inconsistent validation sample counts: {sorted(ks)}")
    if len(ms) != 1:
        raise ValueError(f"inconsistent calibration sample counts: {sorted(ms, key=str)}")
    return ks.pop(), ms.pop()
