"""Dominance, Pareto fronts, exact hypervolume and hypervolume improvement.

Everything is minimization. Exact hypervolume is supported for up to four
objectives; beyond that the slicing cost grows too quickly to be useful.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_DIM = 4


@dataclass(frozen=True)
class ObjectivePoint:
    values: tuple[float, ...]
    owner: str | None = None

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not all(np.isfinite(vals)):
            raise ValueError(f"objective point has non-finite entries: {vals}")
        object.__setattr__(self, "values", vals)


def _as_point(p) -> ObjectivePoint:
    return p if isinstance(p, ObjectivePoint) else ObjectivePoint(tuple(p))


def dominates(u, v) -> bool:
    u, v = _as_point(u).values, _as_point(v).values
    if len(u) != len(v):
        raise ValueError(f"dimension mismatch: {len(u)} vs {len(v)}")
    return all(a <= b for a, b in zip(u, v)) and any(a < b for a, b in zip(u, v))


@dataclass
class ParetoArchive:
    """Mutually non-dominated set of objective points, insertion ordered."""

    points: list[ObjectivePoint] = field(default_factory=list)

    def insert(self, point) -> bool:
        """Add ``point`` unless it is dominated or duplicated; returns whether it was kept."""
        p = _as_point(point)
        for q in self.points:
            if q.values == p.values or dominates(q, p):
                return False
        self.points = [q for q in self.points if not dominates(p, q)]
        self.points.append(p)
        return True

    def as_array(self) -> np.ndarray:
        if not self.points:
            return np.empty((0, 0))
        return np.array([p.values for p in self.points], dtype=float)

    @property
    def owners(self) -> list[str | None]:
        return [p.owner for p in self.points]

    def __len__(self) -> int:
        return len(self.points)


def pareto_front(points: Iterable) -> ParetoArchive:
    """Non-dominated subset; duplicates collapse onto their first occurrence."""
    pts = [_as_point(p) for p in points]
    if not pts:
        return ParetoArchive()
    arr = np.array([p.values for p in pts], dtype=float)
    le = np.all(arr[:, None, :] <= arr[None, :, :], axis=2)
    lt = np.any(arr[:, None, :] < arr[None, :, :], axis=2)
    dominated = np.any(le & lt, axis=0)
    kept: list[ObjectivePoint] = []
    seen: set[tuple[float, ...]] = set()
    for p, dom in zip(pts, dominated):
        if dom or p.values in seen:
            continue
        seen.add(p.values)
        kept.append(p)
    return ParetoArchive(kept)


def non_dominated_mask(values: np.ndarray) -> np.ndarray:
    """Boolean mask of rows not dominated by any other row (duplicates all kept)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return np.zeros(len(arr), dtype=bool)
    le = np.all(arr[:, None, :] <= arr[None, :, :], axis=2)
    lt = np.any(arr[:, None, :] < arr[None, :, :], axis=2)
    return ~np.any(le & lt, axis=0)


def _points_array(archive) -> np.ndarray:
    if isinstance(archive, ParetoArchive):
        return archive.as_array()
    pts = [_as_point(p).values for p in archive]
    return np.array(pts, dtype=float) if pts else np.empty((0, 0))


def _check_dim(d: int) -> None:
    if not 1 <= d <= MAX_DIM:
        raise ValueError(f"exact hypervolume supports 1..{MAX_DIM} objectives, got {d}")


def _hv2d(pts: np.ndarray, r: np.ndarray) -> float:
    """Sort-and-sum of rectangles; ``pts`` already clipped to dominate ``r``."""
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    total, best_y = 0.0, r[1]
    xs, ys = pts[order, 0], pts[order, 1]
    for i in range(len(xs)):
        if ys[i] >= best_y:
            continue
        # rectangle from this x to the next strictly-better-y point's x
        total += (r[0] - xs[i]) * (best_y - ys[i])
        best_y = ys[i]
    return total


def _hv_slice(pts: np.ndarray, r: np.ndarray) -> float:
    """Recursive slicing over the sorted last coordinate."""
    d = pts.shape[1]
    if len(pts) == 0:
        return 0.0
    if d == 1:
        return float(r[0] - pts[:, 0].min())
    order = np.argsort(pts[:, -1], kind="stable")
    pts = pts[order]
    total = 0.0
    for j in range(len(pts)):
        upper = pts[j + 1, -1] if j + 1 < len(pts) else r[-1]
        height = upper - pts[j, -1]
        if height > 0.0:
            total += height * _hv_slice(pts[: j + 1, :-1], r[:-1])
    return total


def _clip_to_reference(pts: np.ndarray, r: np.ndarray) -> np.ndarray:
    if len(pts) == 0:
        return pts
    return pts[np.all(pts < r, axis=1)]


def hypervolume(archive, r: Sequence[float], method: str = "auto") -> float:
    """Exact Lebesgue measure of the region dominated by ``archive`` below ``r``.

    Points that do not strictly dominate ``r`` contribute nothing.
    ``method`` is "auto", "sweep" (d=2 only) or "slice".
    """
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("reference point must be finite")
    _check_dim(len(r))
    pts = _points_array(archive)
    if pts.size == 0:
        return 0.0
    if pts.shape[1] != len(r):
        raise ValueError(f"dimension mismatch: points {pts.shape[1]} vs reference {len(r)}")
    pts = _clip_to_reference(pts, r)
    if len(pts) == 0:
        return 0.0
    if method == "sweep" or (method == "auto" and len(r) == 2):
        if len(r) != 2:
            raise ValueError("sweep method is two-dimensional only")
        return float(_hv2d(pts, r))
    return float(_hv_slice(pts, r))


def hvi(candidate, archive, r: Sequence[float]) -> float:
    """Hypervolume gained by adding ``candidate`` to ``archive``."""
    c = np.asarray(_as_point(candidate).values, dtype=float)
    pts = _points_array(archive)
    gain = float(hvi_batch(c[None, :], pts, r)[0])
    return gain


def _dominated_in_box(lower: np.ndarray, pts: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Per row of ``lower``: volume of {z : lower <= z <= r} dominated by ``pts``."""
    n_cand, d = lower.shape
    if len(pts) == 0:
        return np.zeros(n_cand)
    if d == 1:
        reach = np.maximum(lower[:, 0], pts[:, 0].min())
        return np.maximum(r[0] - reach, 0.0)
    order = np.argsort(pts[:, -1], kind="stable")
    pts = pts[order]
    total = np.zeros(n_cand)
    for j in range(len(pts)):
        top = pts[j + 1, -1] if j + 1 < len(pts) else r[-1]
        top = min(top, r[-1])
        height = np.maximum(top - np.maximum(pts[j, -1], lower[:, -1]), 0.0)
        live = height > 0.0
        if np.any(live):
            total[live] += height[live] * _dominated_in_box(lower[live, :-1], pts[: j + 1, :-1], r[:-1])
    return total


def hvi_batch(candidates: np.ndarray, archive, r: Sequence[float]) -> np.ndarray:
    """Vectorized hypervolume improvement for many candidate points at once.

    Uses HVI(c) = vol([c, r]) - vol(part of [c, r] already dominated), which
    avoids recomputing the archive's hypervolume for each candidate.
    """
    r = np.asarray(r, dtype=float)
    _check_dim(len(r))
    cand = np.atleast_2d(np.asarray(candidates, dtype=float))
    if cand.shape[1] != len(r):
        raise ValueError(f"dimension mismatch: candidates {cand.shape[1]} vs reference {len(r)}")
    pts = _points_array(archive)
    pts = _clip_to_reference(pts, r) if pts.size else np.empty((0, len(r)))
    box = np.prod(np.maximum(r - cand, 0.0), axis=1)
    out = np.zeros(len(cand))
    live = box > 0.0
    if len(pts):
        # exact zero for weakly dominated candidates instead of rounding residue
        live &= ~np.any(np.all(pts[None, :, :] <= cand[:, None, :], axis=2), axis=1)
    if np.any(live):
        covered = _dominated_in_box(cand[live], pts, r)
        out[live] = np.maximum(box[live] - covered, 0.0)
    return out


def hypervolume_mc(archive, r: Sequence[float], n_samples: int = 100_000, seed=0) -> tuple[float, float]:
    """Monte Carlo hypervolume estimate and its standard error.

    Samples uniformly in the box between the componentwise minimum of the
    points and ``r``.
    """
    r = np.asarray(r, dtype=float)
    pts = _points_array(archive)
    if pts.size:
        pts = _clip_to_reference(pts, r)
    if len(pts) == 0:
        return 0.0, 0.0
    lo = pts.min(axis=0)
    vol = float(np.prod(r - lo))
    rng = np.random.default_rng(seed)
    hits = 0
    chunk = 50_000
    done = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        z = lo + rng.random((size, len(r))) * (r - lo)
        covered = np.any(np.all(pts[None, :, :] <= z[:, None, :], axis=2), axis=1)
        hits += int(covered.sum())
        done += size
    frac = hits / n_samples
    se = vol * np.sqrt(frac * (1.0 - frac) / n_samples)
    return vol * frac, float(se)
