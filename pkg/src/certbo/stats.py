"""Concentration-bound p-values, their inversion, and the region of interest.

All losses entering these functions are assumed bounded in [0, 1].
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .core import Bound, RiskSpec

log = logging.getLogger(__name__)

_BISECT_TOL = 1e-9
_BISECT_MAX_ITER = 200


def _check_p_args(lhat: float, m: int, alpha: float) -> None:
    if not 0.0 <= lhat <= 1.0:
        raise ValueError(f"lhat must lie in [0, 1], got {lhat}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")


def hoeffding_p_value(lhat: float, m: int, alpha: float) -> float:
    _check_p_args(lhat, m, alpha)
    gap = max(alpha - lhat, 0.0)
    return math.exp(-2.0 * m * gap * gap)


def h1(a: float, b: float) -> float:
    """Bernoulli KL divergence ``a log(a/b) + (1-a) log((1-a)/(1-b))``."""
    if not 0.0 < b < 1.0:
        raise ValueError(f"b must lie in (0, 1), got {b}")
    if not 0.0 <= a < 1.0:
        raise ValueError(f"a must lie in [0, 1), got {a}")
    first = 0.0 if a == 0.0 else a * math.log(a / b)
    return first + (1.0 - a) * math.log((1.0 - a) / (1.0 - b))


def _log_pmf(n: int, p: float, j: np.ndarray) -> np.ndarray:
    j = np.asarray(j, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = gammaln(n + 1.0) - gammaln(j + 1.0) - gammaln(n - j + 1.0)
        if p > 0.0:
            out = out + j * math.log(p)
        else:
            out = np.where(j == 0, out, -np.inf)
        if p < 1.0:
            out = out + (n - j) * math.log1p(-p)
        else:
            out = np.where(j == n, out, -np.inf)
    return out


def log_binom_cdf(j: int, n: int, p: float) -> float:
    """log P(Binom(n, p) <= j), summed in log space."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if j < 0:
        return -math.inf
    if j >= n:
        return 0.0
    terms = _log_pmf(n, p, np.arange(j + 1))
    top = terms.max()
    if not np.isfinite(top):
        return -math.inf
    return min(0.0, float(top + math.log(np.exp(terms - top).sum())))


def binom_cdf(j: int, n: int, p: float) -> float:
    return math.exp(log_binom_cdf(j, n, p))


@lru_cache(maxsize=256)
def _binom_tables(n: int, p: float) -> tuple[np.ndarray, np.ndarray]:
    """log P(X <= j) and log P(X > j) for j = 0..n."""
    lp = _log_pmf(n, p, np.arange(n + 1))
    log_cdf = np.logaddexp.accumulate(lp)
    log_sf = np.empty(n + 1)
    log_sf[-1] = -np.inf
    log_sf[:-1] = np.logaddexp.accumulate(lp[::-1])[::-1][1:]
    np.minimum(log_cdf, 0.0, out=log_cdf)
    log_cdf.setflags(write=False)
    log_sf.setflags(write=False)
    return log_cdf, log_sf


def _successes(lhat, m: int):
    # m*lhat is an integer up to rounding when lhat came from m samples;
    # a bare ceil would push count + 1e-13 to count + 1.
    return np.ceil(np.round(np.asarray(lhat, dtype=float) * m, 9))


def hb_p_values(lhat, m: int, alpha: float) -> np.ndarray:
    """Vectorized Hoeffding-Bentkus p-value over an array of empirical losses."""
    lhat = np.asarray(lhat, dtype=float)
    if np.any((lhat < 0.0) | (lhat > 1.0)):
        raise ValueError("lhat must lie in [0, 1]")
    _check_p_args(0.0, m, alpha)
    a = np.minimum(lhat, alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(a > 0.0, a * np.log(a / alpha), 0.0)
    kl = first + (1.0 - a) * np.log((1.0 - a) / (1.0 - alpha))
    log_hoeffding = -m * np.maximum(kl, 0.0)
    log_cdf, _ = _binom_tables(m, float(alpha))
    j = np.clip(_successes(lhat, m), 0, m).astype(int)
    log_bentkus = 1.0 + log_cdf[j]
    p = np.exp(np.minimum(log_hoeffding, log_bentkus))
    p = np.minimum(p, 1.0)
    return np.where(lhat >= alpha, 1.0, p)


def hb_p_value(lhat: float, m: int, alpha: float) -> float:
    _check_p_args(lhat, m, alpha)
    if lhat >= alpha:
        return 1.0
    a = min(lhat, alpha)
    log_hoeffding = -m * h1(a, alpha)
    log_bentkus = 1.0 + log_binom_cdf(int(_successes(lhat, m)), m, alpha)
    return min(1.0, math.exp(min(log_hoeffding, log_bentkus)))


def p_value(lhat: float, m: int, alpha: float, bound: Bound | str) -> float:
    bound = Bound.parse(bound)
    if bound is Bound.HOEFFDING:
        return hoeffding_p_value(lhat, m, alpha)
    return hb_p_value(lhat, m, alpha)


def is_certifiable(alpha: float, delta: float, m: int, bound: Bound | str) -> bool:
    """Whether a zero empirical loss on ``m`` samples can pass the level-delta test."""
    return p_value(0.0, m, alpha, bound) < delta


def alpha_max(alpha: float, delta: float, m: int, bound: Bound | str) -> float:
    """Largest empirical calibration loss that still rejects at level ``delta``.

    Returns 0.0 when even a zero loss cannot be certified; callers detect that
    case with :func:`is_certifiable`.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    bound = Bound.parse(bound)
    if bound is Bound.HOEFFDING:
        return max(0.0, alpha - math.sqrt(math.log(1.0 / delta) / (2.0 * m)))

    if not is_certifiable(alpha, delta, m, bound):
        log.warning("alpha=%g cannot be certified with m=%d at delta=%g", alpha, m, delta)
        return 0.0
    lo, hi = 0.0, alpha
    for _ in range(_BISECT_MAX_ITER):
        if hi - lo <= _BISECT_TOL:
            break
        mid = 0.5 * (lo + hi)
        if hb_p_value(mid, m, alpha) < delta:
            lo = mid
        else:
            hi = mid
    assert hb_p_value(lo, m, alpha) < delta
    return lo


@dataclass(frozen=True)
class RegionOfInterest:
    """Box of validation losses likely to sit at the testing threshold."""

    alpha_max: tuple[float, ...]
    low: tuple[float, ...]
    high: tuple[float, ...]
    bound: Bound
    k: int
    m: int
    degenerate: bool = False

    @classmethod
    def full_space(cls, c: int, k: int = 0, m: int = 0, bound: Bound = Bound.HOEFFDING_BENTKUS):
        """The whole [0, 1]^c box; turns guided search into plain HVI search."""
        return cls((1.0,) * c, (0.0,) * c, (1.0,) * c, Bound.parse(bound), k, m, False)

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple(h - l for l, h in zip(self.low, self.high))

    def to_dict(self) -> dict:
        return {
            "alpha_max": list(self.alpha_max),
            "low": list(self.low),
            "high": list(self.high),
            "bound": self.bound.value,
            "k": self.k,
            "m": self.m,
            "degenerate": self.degenerate,
        }


def _hb_interval(center: float, k: int, delta_prime: float) -> tuple[float, float]:
    log_cdf, log_sf = _binom_tables(k, float(center))
    thresh = math.log(delta_prime)
    below = np.nonzero(log_cdf <= thresh)[0]
    q_lo = int(below[-1]) if below.size else -1
    # P(X <= j) >= 1 - delta'  <=>  P(X > j) <= delta'
    q_hi = int(np.nonzero(log_sf <= thresh)[0][0])
    return max(q_lo, 0) / k, q_hi / k


def region_of_interest(spec: RiskSpec, k: int, m: int) -> RegionOfInterest:
    if k < 2 or m < 2:
        raise ValueError("k and m must both be >= 2")
    amax, lows, highs = [], [], []
    degenerate = False
    for a in spec.alphas:
        am = alpha_max(a, spec.delta, m, spec.bound)
        if not is_certifiable(a, spec.delta, m, spec.bound):
            degenerate = True
        if spec.bound is Bound.HOEFFDING:
            half = math.sqrt(math.log(1.0 / spec.delta_prime) / (2.0 * k))
            lo, hi = am - half, am + half
        else:
            lo, hi = _hb_interval(am, k, spec.delta_prime)
        lo = min(max(lo, 0.0), am)
        hi = max(min(hi, 1.0), am)
        amax.append(am)
        lows.append(lo)
        highs.append(hi)
    if any(h - l <= 0.0 for l, h in zip(lows, highs)):
        degenerate = True
    return RegionOfInterest(tuple(amax), tuple(lows), tuple(highs), spec.bound, k, m, degenerate)


def combined_p_value(per_constraint: Sequence[float]) -> float:
    if len(per_constraint) == 0:
        raise ValueError("no per-constraint p-values")
    for p in per_constraint:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value outside [0, 1]: {p}")
    return float(max(per_constraint))


def p_value_for_record(
    means: Sequence[float], spec: RiskSpec, n: int, bound: Bound | str | None = None
) -> float:
    """Combined p-value of H: some constrained loss exceeds its limit.

    ``means`` may include the free objective as a trailing entry; only the
    first ``c`` are tested.
    """
    bound = spec.bound if bound is None else Bound.parse(bound)
    c = spec.num_constrained
    if len(means) < c:
        raise ValueError(f"expected at least {c} constrained means, got {len(means)}")
    return combined_p_value([p_value(float(means[i]), n, spec.alphas[i], bound) for i in range(c)])
