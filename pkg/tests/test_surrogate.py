import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from certbo.surrogate import (
    FitConfig,
    GPModel,
    KernelParams,
    fit_gp,
    kernel_eval,
    kernel_matrix,
    log_marginal_likelihood,
    posterior,
    posterior_batch,
)


def random_params(rng, dim):
    return KernelParams(tuple(rng.uniform(0.1, 2.0, dim)), float(rng.uniform(0.3, 3.0)), float(rng.uniform(1e-4, 0.1)))


def test_kernel_examples():
    p = KernelParams((1.0,), 1.0, 1e-6)
    assert kernel_eval([0.3], [0.3], KernelParams((0.5,), 2.5, 1e-6)) == 2.5
    assert kernel_eval([0.0], [1.0], p) == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert kernel_eval([0.0], [100.0], p) == pytest.approx(0.0, abs=1e-300)


def test_kernel_matrix_matches_pairwise():
    rng = np.random.default_rng(0)
    a, b = rng.random((4, 3)), rng.random((5, 3))
    p = random_params(rng, 3)
    np.testing.assert_allclose(kernel_matrix(a, b, p), oracles.se_kernel(a, b, p.length_scales, p.amplitude), rtol=1e-12)


def test_params_validated():
    with pytest.raises(ValueError):
        KernelParams((0.0,), 1.0, 1e-3)
    p = KernelParams((0.2, 3.0), 1.5, 1e-3)
    q = KernelParams.from_log(p.to_log())
    np.testing.assert_allclose(q.length_scales, p.length_scales)


@pytest.mark.parametrize("seed", range(20))
def test_posterior_matches_dense_inverse(seed):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(2, 11), rng.integers(1, 4)
    x, y = rng.random((n, d)), rng.normal(size=n)
    p = random_params(rng, d)
    model = GPModel.build(x, y, p)
    q = rng.random((30, d))
    mean, var = model.predict(q)
    m_ref, v_ref = oracles.gp_dense(x, y, q, p.length_scales, p.amplitude, p.noise_var)
    np.testing.assert_allclose(mean, m_ref, atol=1e-8, rtol=0)
    np.testing.assert_allclose(var, v_ref, atol=1e-8, rtol=0)


def test_two_point_closed_form():
    x, y = np.array([[0.0], [0.5]]), np.array([1.0, 3.0])
    p = KernelParams((0.4,), 1.0, 0.01)
    model = GPModel.build(x, y, p, standardize=False)
    kx = math.exp(-0.5 * (0.5 / 0.4) ** 2)
    a, b = 1.0 + 0.01, kx
    det = a * a - b * b
    inv = np.array([[a, -b], [-b, a]]) / det
    q = 0.2
    ks = np.array([math.exp(-0.5 * (q / 0.4) ** 2), math.exp(-0.5 * ((q - 0.5) / 0.4) ** 2)])
    mean, var = posterior(model, np.array([q]))
    assert mean == pytest.approx(ks @ inv @ y, abs=1e-10)
    assert var == pytest.approx(1.0 - ks @ inv @ ks, abs=1e-10)


def test_noiseless_interpolation():
    rng = np.random.default_rng(3)
    x, y = rng.random((8, 2)), rng.normal(size=8)
    model = GPModel.build(x, y, KernelParams((0.3, 0.3), 1.0, 1e-10))
    np.testing.assert_allclose(model.predict(x)[0], y, atol=1e-6)


def test_prior_reversion_far_from_data():
    x, y = np.array([[0.1], [0.2], [0.3]]), np.array([1.0, 2.0, 4.0])
    p = KernelParams((0.1,), 2.0, 1e-3)
    model = GPModel.build(x, y, p)
    mean, var = posterior(model, np.array([50.0]))
    assert mean == pytest.approx(y.mean(), abs=1e-12)
    assert var == pytest.approx(2.0 * y.std() ** 2, rel=1e-12)


@given(st.integers(0, 10_000))
def test_variance_nonnegative(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    x = rng.random((int(rng.integers(2, 10)), d))
    model = GPModel.build(x, rng.normal(size=len(x)), random_params(rng, d))
    assert np.all(model.predict(rng.uniform(-1, 2, (200, d)))[1] >= 0.0)


def test_lml_scalar_case():
    p = KernelParams((1.0,), 0.7, 0.2)
    v, t = 0.9, 1.3
    want = -0.5 * t * t / v - 0.5 * math.log(v) - 0.5 * math.log(2 * math.pi)
    assert log_marginal_likelihood([[0.4]], [t], p) == pytest.approx(want, rel=1e-12)


def test_lml_matches_dense_determinant():
    rng = np.random.default_rng(11)
    x, y = rng.random((4, 2)), rng.normal(size=4)
    p = random_params(rng, 2)
    k = oracles.se_kernel(x, x, p.length_scales, p.amplitude) + p.noise_var * np.eye(4)
    want = -0.5 * y @ np.linalg.inv(k) @ y - 0.5 * np.log(np.linalg.det(k)) - 2 * math.log(2 * math.pi)
    assert log_marginal_likelihood(x, y, p) == pytest.approx(want, abs=1e-8)


def test_constant_targets_predict_constant():
    x = np.random.default_rng(1).random((6, 2))
    model = fit_gp(x, np.full(6, 0.37), FitConfig(n_starts=8))
    np.testing.assert_allclose(model.predict(np.random.default_rng(2).random((50, 2)))[0], 0.37, atol=1e-6)


def test_fit_beats_random_parameters_usually():
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.random((12, 2))
        true = KernelParams((0.3, 0.5), 1.0, 1e-3)
        k = kernel_matrix(x, x, true) + 1e-3 * np.eye(12)
        y = np.linalg.cholesky(k) @ rng.normal(size=12)
        model = fit_gp(x, y, FitConfig(seed=seed))
        z = (y - y.mean()) / y.std()
        fitted = log_marginal_likelihood(x, z, model.params)
        rand = log_marginal_likelihood(x, z, random_params(rng, 2))
        wins += fitted >= rand
    assert wins >= 19


def test_fit_is_deterministic():
    rng = np.random.default_rng(4)
    x, y = rng.random((7, 3)), rng.random(7)
    a, b = fit_gp(x, y, FitConfig(seed=9)), fit_gp(x, y, FitConfig(seed=9))
    assert a.params == b.params


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_gp([[0.1]], [1.0])
    with pytest.raises(ValueError):
        fit_gp([[0.1], [0.2]], [1.0, np.nan])


def test_posterior_batch_matches_single_calls():
    rng = np.random.default_rng(8)
    x = rng.random((5, 2))
    models = [GPModel.build(x, rng.normal(size=5), random_params(rng, 2)) for _ in range(3)]
    q = rng.random((7, 2))
    batch = posterior_batch(models, q, n_objectives=3)
    for i, row in enumerate(q):
        np.testing.assert_allclose(batch[i], [posterior(m, row)[0] for m in models], rtol=1e-12, atol=1e-14)
    with pytest.raises(ValueError):
        posterior_batch(models, q, n_objectives=2)
