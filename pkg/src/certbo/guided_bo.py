"""Bayesian optimization steered into the region of interest.

The acquisition is plain hypervolume improvement of the surrogate posterior
means; all steering happens through the reference point, whose constrained
coordinates sit on the region's upper edge and whose free coordinate is
pulled down to the free-objective value where the region's lower edge is
predicted to be crossed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ConfigIds, Configuration, EvalRecord, RiskSpec, SearchSpace, Split, derive_seed
from .objectives import ObjectiveError, ObjectiveProvider
from .pareto import ObjectivePoint, ParetoArchive, hvi_batch, pareto_front
from .stats import RegionOfInterest
from .surrogate import FitConfig, GPModel, fit_gp, posterior_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BOConfig:
    budget: int = 10
    init_size: int = 5
    seed: int = 0
    candidate_pool_size: int = 4096
    perturbation_count: int = 256
    perturbation_sigma: float = 0.05
    monotone_reference: bool = False

    def __post_init__(self):
        if self.init_size < 2:
            raise ValueError("init_size must be >= 2")
        if self.budget < self.init_size:
            raise ValueError("budget must be >= init_size")


@dataclass
class AcquisitionState:
    reference: np.ndarray
    archive: ParetoArchive
    models: list[GPModel]
    region: RegionOfInterest
    free_cap: float
    space: SearchSpace
    records: list[EvalRecord] = field(default_factory=list)
    low_region_free_min: float | None = None

    def predict(self, unit_points: np.ndarray) -> np.ndarray:
        """Posterior means; constrained coordinates clipped to the loss range [0, 1]."""
        g = posterior_batch(self.models, unit_points)
        c = len(self.region.high)
        g[:, :c] = np.clip(g[:, :c], 0.0, 1.0)
        return g


class BOAborted(ObjectiveError):
    """Objective failure mid-run; ``partial`` holds the records gathered so far."""

    def __init__(self, message: str, partial: list[EvalRecord]):
        super().__init__(message)
        self.partial = partial


def latin_hypercube(n_points: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-box LHS: every axis's n strata hit exactly once, jittered within."""
    strata = np.column_stack([rng.permutation(n_points) for _ in range(dim)])
    return (strata + rng.random((n_points, dim))) / n_points


def _initial_unit_points(dim: int, n0: int, seed) -> np.ndarray:
    if n0 < 2:
        raise ValueError("initial pool needs at least 2 points")
    rng = np.random.default_rng(derive_seed(seed, "initial-pool"))
    if dim == 1:
        return rng.random((n0, 1))
    return latin_hypercube(n0, dim, rng)


def sample_initial_pool(space: SearchSpace, n0: int, seed, ids: ConfigIds | None = None) -> list[Configuration]:
    """Uniform i.i.d. draws for one dimension, Latin hypercube otherwise."""
    ids = ids or ConfigIds()
    return [ids.new(space.from_unit(u)) for u in _initial_unit_points(space.dim, n0, seed)]


def initial_reference(region: RegionOfInterest, pool_records: Sequence[EvalRecord]) -> np.ndarray:
    if not pool_records:
        raise ValueError("initial pool is empty")
    c = len(region.high)
    free_max = max(r.val_means[c] for r in pool_records)
    return np.array([*region.high, free_max], dtype=float)


def update_reference_free_coord(
    state: AcquisitionState, candidate_points: np.ndarray, monotone: bool = False
) -> np.ndarray:
    """Tighten the free coordinate to the predicted free minimum below the region.

    Scans the candidate points plus every evaluated configuration and never
    exceeds the initialization cap. With ``monotone`` the value can only
    decrease across iterations; otherwise it is recomputed from the current
    surrogate each time, so one bad early fit cannot pin it down.
    """
    c = len(state.region.low)
    evaluated = np.array([state.space.to_unit(r.config.as_array()) for r in state.records]).reshape(
        -1, state.space.dim
    )
    pts = np.vstack([np.atleast_2d(candidate_points).reshape(-1, state.space.dim), evaluated])
    g = state.predict(pts)
    in_low = np.all(g[:, :c] < np.asarray(state.region.low), axis=1)
    ref = state.reference.copy()
    if not monotone:
        ref[c] = state.free_cap
    if np.any(in_low):
        low_min = float(g[in_low, c].min())
        state.low_region_free_min = low_min
        ref[c] = min(ref[c], low_min, state.free_cap)
    state.reference = ref
    return ref


def _candidate_pool(state: AcquisitionState, cfg: BOConfig, rng: np.random.Generator) -> np.ndarray:
    dim = state.space.dim
    pool = [latin_hypercube(cfg.candidate_pool_size, dim, rng)]
    owners = [o for o in state.archive.owners if o is not None]
    by_id = {r.config.id: r for r in state.records}
    anchors = np.array([state.space.to_unit(by_id[o].config.as_array()) for o in owners if o in by_id])
    if len(anchors) and cfg.perturbation_count > 0:
        pick = anchors[rng.integers(len(anchors), size=cfg.perturbation_count)]
        pool.append(np.clip(pick + cfg.perturbation_sigma * rng.standard_normal(pick.shape), 0.0, 1.0))
    return np.vstack(pool)


def _region_distance(g: np.ndarray, region: RegionOfInterest) -> np.ndarray:
    c = len(region.low)
    above = np.maximum(g[:, :c] - np.asarray(region.alpha_max), 0.0)
    below = np.maximum(np.asarray(region.low) - g[:, :c], 0.0)
    return (above**2 + below**2).sum(axis=1)


def propose_next(state: AcquisitionState, candidate_points: np.ndarray) -> tuple[int, np.ndarray, float, str]:
    """Pick the HVI-maximizing candidate.

    Returns (index, predicted objectives, acquisition value, rule). Ties go
    to the smallest predicted free objective. When no candidate improves the
    hypervolume, falls back to the candidate predicted closest to the region
    box [low, alpha_max] (rule "region-distance").
    """
    g = state.predict(candidate_points)
    c = len(state.region.low)
    scores = hvi_batch(g, state.archive, state.reference)
    if np.any(scores > 0.0):
        best = scores.max()
        tied = np.nonzero(scores == best)[0]
        idx = int(tied[np.argmin(g[tied, c])])
        return idx, g[idx], float(best), "hvi"
    dist = _region_distance(g, state.region)
    order = np.lexsort((g[:, c], dist))
    idx = int(order[0])
    return idx, g[idx], 0.0, "region-distance"


def _snap(unit_point: np.ndarray, support_unit: np.ndarray, taken: set[int]) -> int | None:
    d = np.linalg.norm(support_unit - unit_point[None, :], axis=1)
    for j in np.argsort(d, kind="stable"):
        if int(j) not in taken:
            return int(j)
    return None


def _fmt(v) -> list[float]:
    return [float(x) for x in np.asarray(v).reshape(-1)]


def run_bo(
    objective: ObjectiveProvider,
    space: SearchSpace,
    spec: RiskSpec,
    region: RegionOfInterest,
    bo_config: BOConfig,
    *,
    n_samples: int,
    data_seed,
    ids: ConfigIds | None = None,
    log_sink: Callable[[str], None] | None = None,
) -> list[EvalRecord]:
    """Run the guided BO loop and return every evaluated record (validation split only).

    ``log_sink`` receives one JSON line per iteration.
    """
    ids = ids or ConfigIds()
    c = spec.num_constrained
    if len(region.high) != c:
        raise ValueError("region dimension does not match the risk spec")
    rng = np.random.default_rng(derive_seed(bo_config.seed, "bo-candidates"))
    support = objective.finite_support
    support_unit = None if support is None else space.to_unit(support)
    taken: set[int] = set()

    def evaluate(cfg: Configuration, records: list[EvalRecord]) -> EvalRecord:
        try:
            val = objective.evaluate(cfg, Split.VALIDATION, n_samples, data_seed)
        except ObjectiveError as exc:
            raise BOAborted(f"evaluation of {cfg.id} failed: {exc}", list(records)) from exc
        if len(val.per_objective) != c + 1:
            raise BOAborted(f"{cfg.id}: expected {c + 1} objectives, got {len(val.per_objective)}", list(records))
        return EvalRecord.from_samples(cfg, val, provenance=objective.name)

    budget = bo_config.budget
    if support_unit is not None:
        budget = min(budget, len(support_unit))
    records: list[EvalRecord] = []
    for u in _initial_unit_points(space.dim, bo_config.init_size, bo_config.seed):
        if support_unit is not None:
            j = _snap(u, support_unit, taken)
            if j is None:
                break
            taken.add(j)
            cfg = ids.new(support[j])
        else:
            cfg = ids.new(space.from_unit(u))
        records.append(evaluate(cfg, records))

    ref = initial_reference(region, records)
    free_cap = float(ref[c])
    state = AcquisitionState(ref, ParetoArchive(), [], region, free_cap, space, records)

    for it in range(max(budget - len(records), 0)):
        x = np.array([space.to_unit(r.config.as_array()) for r in records])
        y = np.array([r.val_means for r in records])
        fit_seed = derive_seed(bo_config.seed, "gp-fit", it)
        state.models = [fit_gp(x, y[:, i], FitConfig(seed=derive_seed(fit_seed, i))) for i in range(c + 1)]
        cand = _candidate_pool(state, bo_config, rng)
        if support_unit is not None:
            free = [j for j in range(len(support_unit)) if j not in taken]
            cand = support_unit[free]
        update_reference_free_coord(state, cand, bo_config.monotone_reference)
        state.archive = pareto_front(ObjectivePoint(r.val_means, r.config.id) for r in records)
        idx, g, score, rule = propose_next(state, cand)
        if support_unit is not None:
            j = free[idx]
            taken.add(j)
            cfg = ids.new(support[j])
        else:
            cfg = ids.new(space.from_unit(cand[idx]))
        rec = evaluate(cfg, records)
        records.append(rec)
        if log_sink is not None:
            log_sink(
                json.dumps(
                    {
                        "iteration": it,
                        "reference": _fmt(state.reference),
                        "lambda": _fmt(cfg.values),
                        "config_id": cfg.id,
                        "predicted": _fmt(g),
                        "acquisition": score,
                        "rule": rule,
                        "realized": _fmt(rec.val_means),
                    }
                )
            )
    return records

