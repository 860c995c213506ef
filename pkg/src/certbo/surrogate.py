"""Gaussian-process regression, one independent model per objective.

Inputs are expected in the unit box; targets are z-scored internally and the
standardization constants are carried on the fitted model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

LS_BOUNDS = (1e-2, 10.0)
AMP_BOUNDS = (1e-2, 10.0)
NOISE_BOUNDS = (1e-6, 1.0)
STD_FLOOR = 1e-12
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
_LOG_2PI = math.log(2.0 * math.pi)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class FactorizationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class KernelParams:
    length_scales: tuple[float, ...]
    amplitude: float
    noise_var: float

    def __post_init__(self):
        ls = tuple(float(v) for v in self.length_scales)
        if any(v <= 0 for v in ls) or self.amplitude <= 0 or self.noise_var <= 0:
            raise ValueError("kernel parameters must be positive")
        object.__setattr__(self, "length_scales", ls)

    def to_log(self) -> np.ndarray:
        return np.log([*self.length_scales, self.amplitude, self.noise_var])

    @classmethod
    def from_log(cls, theta: np.ndarray) -> "KernelParams":
        e = np.exp(theta)
        return cls(tuple(e[:-2]), float(e[-2]), float(e[-1]))


@dataclass(frozen=True)
class FitConfig:
    n_starts: int = 64
    golden_iters: int = 50
    sweeps: int = 2
    seed: int = 0


def kernel_matrix(a: np.ndarray, b: np.ndarray, params: KernelParams) -> np.ndarray:
    """Squared-exponential kernel with per-dimension length scales."""
    ls = np.asarray(params.length_scales)
    sa = np.atleast_2d(a) / ls
    sb = np.atleast_2d(b) / ls
    sq = (sa * sa).sum(1)[:, None] + (sb * sb).sum(1)[None, :] - 2.0 * sa @ sb.T
    return params.amplitude * np.exp(-0.5 * np.maximum(sq, 0.0))


def kernel_eval(a, b, params: KernelParams) -> float:
    diff = (np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) / np.asarray(params.length_scales)
    return float(params.amplitude * math.exp(-0.5 * float(diff @ diff)))


def _gram(x: np.ndarray, params: KernelParams) -> np.ndarray:
    k = kernel_matrix(x, x, params)
    k = 0.5 * (k + k.T)
    k[np.diag_indices_from(k)] += params.noise_var
    return k


def _cholesky(k: np.ndarray) -> tuple[np.ndarray, float]:
    eye = np.eye(len(k))
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(k + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(f"Cholesky failed even with jitter {JITTERS[-1]:g}")


def log_marginal_likelihood(inputs, targets, params: KernelParams) -> float:
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).reshape(-1)
    chol, _ = _cholesky(_gram(x, params))
    alpha = cho_solve((chol, True), y)
    return float(-0.5 * y @ alpha - np.log(np.diag(chol)).sum() - 0.5 * len(y) * _LOG_2PI)


@dataclass(frozen=True, eq=False)
class GPModel:
    train_inputs: np.ndarray
    train_targets: np.ndarray  # standardized
    params: KernelParams
    factor: np.ndarray  # lower Cholesky factor of K + noise I (+ jitter)
    alpha_weights: np.ndarray
    target_mean: float
    target_std: float
    jitter: float = 0.0

    @classmethod
    def build(cls, inputs, targets, params: KernelParams, standardize: bool = True) -> "GPModel":
        x = np.atleast_2d(np.asarray(inputs, dtype=float))
        y = np.asarray(targets, dtype=float).reshape(-1)
        if len(x) != len(y):
            raise ValueError("inputs and targets differ in length")
        if not np.all(np.isfinite(y)):
            raise ValueError("non-finite targets")
        mu, sd = (float(y.mean()), max(float(y.std()), STD_FLOOR)) if standardize else (0.0, 1.0)
        z = (y - mu) / sd
        chol, jitter = _cholesky(_gram(x, params))
        w = cho_solve((chol, True), z)
        for arr in (x, z, chol, w):
            arr.setflags(write=False)
        return cls(x, z, params, chol, w, mu, sd, jitter)

    def predict(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """De-standardized posterior mean and latent variance at each query row."""
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        ks = kernel_matrix(q, self.train_inputs, self.params)
        mean_z = ks @ self.alpha_weights
        v = solve_triangular(self.factor, ks.T, lower=True)
        var_z = self.params.amplitude - (v * v).sum(0)
        var_z = np.where((var_z < 0) & (var_z > -1e-10), 0.0, var_z)
        var_z = np.maximum(var_z, 0.0)
        return self.target_mean + self.target_std * mean_z, self.target_std**2 * var_z


def posterior(model: GPModel, query) -> tuple[float, float]:
    mean, var = model.predict(np.asarray(query, dtype=float)[None, :])
    return float(mean[0]), float(var[0])


def posterior_batch(models: Sequence[GPModel], query, n_objectives: int | None = None) -> np.ndarray:
    """Posterior means of every objective model; shape (d,) or (n_queries, d)."""
    if n_objectives is not None and len(models) != n_objectives:
        raise ValueError(f"expected {n_objectives} models, got {len(models)}")
    q = np.asarray(query, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    out = np.column_stack([m.predict(q)[0] for m in models])
    return out[0] if single else out


def _log_bounds(dim: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.log([LS_BOUNDS[0]] * dim + [AMP_BOUNDS[0], NOISE_BOUNDS[0]])
    hi = np.log([LS_BOUNDS[1]] * dim + [AMP_BOUNDS[1], NOISE_BOUNDS[1]])
    return lo, hi


def _neg_lml(theta: np.ndarray, sqdist: np.ndarray, z: np.ndarray) -> float:
    """Negative LML from pre-computed per-dimension squared differences."""
    dim = sqdist.shape[0]
    ls2 = np.exp(2.0 * theta[:dim])
    amp, noise = math.exp(theta[dim]), math.exp(theta[dim + 1])
    k = amp * np.exp(-0.5 * np.tensordot(1.0 / ls2, sqdist, axes=1))
    k[np.diag_indices_from(k)] += noise
    try:
        chol, _ = _cholesky(k)
    except FactorizationError:
        return math.inf
    alpha = cho_solve((chol, True), z)
    return float(0.5 * z @ alpha + np.log(np.diag(chol)).sum() + 0.5 * len(z) * _LOG_2PI)


def _golden_section(f, lo: float, hi: float, iters: int) -> tuple[float, float]:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def fit_gp(inputs, targets, fit_config: FitConfig = FitConfig()) -> GPModel:
    """Fit kernel hyperparameters by maximizing the log marginal likelihood.

    Multi-start random draws in log space pick a starting point, then each
    coordinate is refined in turn by a bounded golden-section line search.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).reshape(-1)
    if len(y) < 2:
        raise ValueError("need at least two training points")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite targets")
    mu, sd = float(y.mean()), max(float(y.std()), STD_FLOOR)
    z = (y - mu) / sd
    dim = x.shape[1]
    sqdist = (x.T[:, :, None] - x.T[:, None, :]) ** 2
    lo, hi = _log_bounds(dim)

    rng = np.random.default_rng(fit_config.seed)
    starts = lo + rng.random((fit_config.n_starts, len(lo))) * (hi - lo)
    scores = np.array([_neg_lml(t, sqdist, z) for t in starts])
    best = starts[int(np.argmin(scores))].copy()
    best_val = float(scores.min())
    if not math.isfinite(best_val):
        raise FactorizationError("no start point admitted a Cholesky factorization")

    for _ in range(fit_config.sweeps):
        for j in range(len(best)):
            trial = best.copy()

            def along(v, j=j, trial=trial):
                trial[j] = v
                return _neg_lml(trial, sqdist, z)

            v, fv = _golden_section(along, lo[j], hi[j], fit_config.golden_iters)
            if fv < best_val:
                best[j], best_val = v, fv

    params = KernelParams.from_log(best)
    return GPModel.build(x, y, params)
