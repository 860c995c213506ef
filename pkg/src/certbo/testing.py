"""Certification: Pareto filter, p-value ordering, fixed-sequence testing, selection.

The search stage only ever sees validation losses; this stage reads
calibration losses and nothing else after the ordering is fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ConfigIds, Configuration, EvalRecord, RiskSpec, SearchSpace, Split
from .guided_bo import BOConfig, run_bo
from .objectives import ObjectiveError, ObjectiveProvider
from .pareto import non_dominated_mask
from .stats import RegionOfInterest, p_value_for_record, region_of_interest

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TestRecord:
    __test__ = False  # not a pytest class

    config_id: str
    val_p: float
    cal_p: float | None = None
    rejected: bool = False


@dataclass(frozen=True)
class SelectionResult:
    chosen: Configuration | None
    valid_set: tuple[str, ...]
    ordering: tuple[str, ...]
    degenerate: bool = False
    tests: tuple[TestRecord, ...] = ()
    candidates: tuple[EvalRecord, ...] = ()
    region: RegionOfInterest | None = None

    @property
    def boundary(self) -> int:
        """Index J of the first non-rejected hypothesis (len(ordering) if none failed)."""
        return len(self.valid_set)

    def to_dict(self) -> dict:
        by_id = {r.config.id: r for r in self.candidates}
        rows = []
        for t in self.tests:
            r = by_id.get(t.config_id)
            rows.append(
                {
                    "id": t.config_id,
                    "lambda": None if r is None else list(r.config.values),
                    "val_p": t.val_p,
                    "cal_p": t.cal_p,
                    "rejected": t.rejected,
                    "val_means": None if r is None else list(r.val_means),
                    "cal_means": None if r is None or r.cal_means is None else list(r.cal_means),
                }
            )
        return {
            "region": None if self.region is None else self.region.to_dict(),
            "ordering": rows,
            "boundary": self.boundary,
            "valid_set": list(self.valid_set),
            "chosen": None
            if self.chosen is None
            else {"id": self.chosen.id, "lambda": list(self.chosen.values)},
            "degenerate": self.degenerate,
        }


def filter_pareto_candidates(records: Sequence[EvalRecord]) -> list[EvalRecord]:
    """Keep records whose validation mean vectors are non-dominated within the set."""
    if not records:
        return []
    mask = non_dominated_mask(np.array([r.val_means for r in records], dtype=float))
    return [r for r, keep in zip(records, mask) if keep]


def approximate_p_values(candidates: Sequence[EvalRecord], spec: RiskSpec, k: int) -> list[TestRecord]:
    return [TestRecord(r.config.id, p_value_for_record(r.val_means, spec, k)) for r in candidates]


def order_candidates(tests: Sequence[TestRecord], free_means: Sequence[float] | None = None) -> list[int]:
    """Indices sorted by ascending val_p, then free-objective mean, then id."""
    free = [0.0] * len(tests) if free_means is None else list(free_means)
    return sorted(range(len(tests)), key=lambda i: (tests[i].val_p, free[i], tests[i].config_id))


def fixed_sequence_test(ordering: Sequence, cal_p: Sequence[float], delta: float) -> list:
    """Longest prefix of ``ordering`` whose calibration p-values are all < delta."""
    valid = []
    for item, p in zip(ordering, cal_p):
        if not p < delta:
            break
        valid.append(item)
    return valid


def certify(
    records: Sequence[EvalRecord],
    objective: ObjectiveProvider,
    spec: RiskSpec,
    k: int,
    m: int,
    *,
    data_seed,
    region: RegionOfInterest | None = None,
) -> SelectionResult:
    """Filter, order, and test ``records``; calibration is evaluated lazily in test order."""
    c = spec.num_constrained
    cands = filter_pareto_candidates(records)
    val_tests = approximate_p_values(cands, spec, k)
    order = order_candidates(val_tests, [r.val_means[c] for r in cands])
    ordered = [cands[i] for i in order]
    ordered_tests = [val_tests[i] for i in order]

    tests: list[TestRecord] = []
    with_cal: list[EvalRecord] = []
    valid: list[EvalRecord] = []
    halted = False
    for rec, t in zip(ordered, ordered_tests):
        if halted:
            tests.append(t)
            with_cal.append(rec)
            continue
        cal = objective.evaluate(rec.config, Split.CALIBRATION, m, data_seed)
        rec = rec.with_calibration(cal)
        cal_p = p_value_for_record(rec.cal_means, spec, m)
        # stops on the first failure; later entries never influence the outcome
        ok = len(fixed_sequence_test([rec], [cal_p], spec.delta)) == 1
        tests.append(TestRecord(t.config_id, t.val_p, cal_p, ok))
        with_cal.append(rec)
        if ok:
            valid.append(rec)
        else:
            halted = True

    chosen = None
    if valid:
        best = min(valid, key=lambda r: (r.val_means[c], r.config.id))
        chosen = best.config
    return SelectionResult(
        chosen=chosen,
        valid_set=tuple(r.config.id for r in valid),
        ordering=tuple(r.config.id for r in ordered),
        degenerate=bool(region.degenerate) if region is not None else False,
        tests=tuple(tests),
        candidates=tuple(with_cal),
        region=region,
    )


def select(
    objective: ObjectiveProvider,
    space: SearchSpace,
    spec: RiskSpec,
    data_sizes: tuple[int, int],
    bo_config: BOConfig,
    *,
    val_seed,
    cal_seed,
    log_sink: Callable[[str], None] | None = None,
) -> SelectionResult:
    """Full pipeline: region, guided search on validation data, certification on calibration data."""
    k, m = data_sizes
    region = region_of_interest(spec, k, m)
    if region.degenerate:
        log.warning("region of interest is degenerate: %s", region)
    records = run_bo(objective, space, spec, region, bo_config, n_samples=k, data_seed=val_seed, log_sink=log_sink)
    return certify(records, objective, spec, k, m, data_seed=cal_seed, region=region)


def suggest_alpha_range(pool_records: Sequence[EvalRecord], num_constrained: int) -> list[tuple[float, float]]:
    """Per constrained objective, the [min, max] of validation means over the pool."""
    if not pool_records:
        raise ValueError("pool is empty")
    arr = np.array([r.val_means[:num_constrained] for r in pool_records], dtype=float)
    return [(float(lo), float(hi)) for lo, hi in zip(arr.min(axis=0), arr.max(axis=0))]
