import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from certbo.core import (
    Bound,
    ConfigIds,
    Configuration,
    EvalRecord,
    LossSamples,
    RiskSpec,
    SearchSpace,
    Split,
    derive_seed,
    empirical_mean,
    split_sizes,
    validate_record,
)


def test_empirical_mean_examples():
    assert empirical_mean([0, 0, 0, 0]) == 0.0
    assert empirical_mean([1, 0, 1, 0]) == 0.5


def test_empirical_mean_bernoulli_draws_against_exact_sum():
    x = (np.random.default_rng(7).random(5000) < 0.035).astype(float)
    exact = float(sum(Fraction(v) for v in x) / len(x))
    assert empirical_mean(x) == pytest.approx(exact, abs=1e-15)
    assert abs(empirical_mean(x) - 0.035) <= 0.01


def test_empirical_mean_empty():
    with pytest.raises(ValueError, match="empty"):
        empirical_mean([])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=200))
def test_empirical_mean_within_range(xs):
    m = empirical_mean(xs)
    assert min(xs) - 1e-12 <= m <= max(xs) + 1e-12


def test_bound_parse_aliases():
    assert Bound.parse("hb") is Bound.HOEFFDING_BENTKUS
    assert Bound.parse("hoeffding") is Bound.HOEFFDING
    with pytest.raises(ValueError):
        Bound.parse("chernoff")


def test_derive_seed_stable_and_distinct():
    assert derive_seed(1, "validation", "c0001") == derive_seed(1, "validation", "c0001")
    assert derive_seed(1, "validation", "c0001") != derive_seed(1, "calibration", "c0001")
    assert 0 <= derive_seed("x") < 2**63


def test_search_space_round_trip():
    space = SearchSpace((0.0, -1.0), (2.0, 1.0))
    x = np.array([0.5, 0.25])
    np.testing.assert_allclose(space.from_unit(space.to_unit(x)), x)
    assert space.contains([2.0, -1.0])
    assert not space.contains([2.1, 0.0])
    with pytest.raises(ValueError):
        SearchSpace((1.0,), (1.0,))


def test_risk_spec_validation():
    spec = RiskSpec((0.1, 0.2))
    assert spec.num_constrained == 2 and spec.free_objective_index == 2 and spec.n_objectives == 3
    assert spec.delta == 0.1 and spec.delta_prime == 1e-4
    for bad in [dict(alphas=()), dict(alphas=(1.0,)), dict(alphas=(0.1,), delta=0.0)]:
        with pytest.raises(ValueError):
            RiskSpec(**bad)


def _record(values=(0.5,), means=(0.2, 0.7), count=10):
    return EvalRecord(Configuration(values, "c0000"), means, count)


def test_validate_record_examples():
    spec, space = RiskSpec((0.3,)), SearchSpace.unit(1)
    assert validate_record(_record(), spec, space) == []
    errs = validate_record(_record(means=(1.3, 0.5)), spec, space)
    assert any("loss out of range" in e for e in errs)
    errs = validate_record(_record(values=(-0.1,)), spec, space)
    assert any("configuration outside space" in e for e in errs)


def test_validate_record_collects_every_error():
    spec, space = RiskSpec((0.3,)), SearchSpace.unit(1)
    rec = _record(values=(2.0,), means=(1.3, 0.5))
    samples = [LossSamples("c0000", Split.VALIDATION, ([0.0, 1.0], [0.5, 0.5]))]
    errs = validate_record(rec, spec, space, samples)
    assert len(errs) == 3
    assert any("sample count mismatch" in e for e in errs)


def test_split_sizes():
    cfg = Configuration((0.1,), "a")
    recs = [EvalRecord(cfg, (0.1, 0.2), 3618, (0.1, 0.2), 4522), EvalRecord(cfg, (0.1, 0.3), 3618, (0.2, 0.2), 4522)]
    assert split_sizes(recs) == (3618, 4522)
    assert split_sizes([EvalRecord(cfg, (0.1, 0.2), 10, (0.1, 0.2), 10)]) == (10, 10)
    with pytest.raises(ValueError):
        split_sizes([EvalRecord(cfg, (0.1, 0.2), 10), EvalRecord(cfg, (0.1, 0.2), 11)])


def test_config_ids_are_sequential_and_independent_of_values():
    ids = ConfigIds()
    a, b = ids.new([0.3]), ids.new([0.3])
    assert (a.id, b.id) == ("c0000", "c0001")


def test_loss_samples_are_read_only():
    s = LossSamples("c", "validation", ([0.0, 1.0], [0.5, 0.5]))
    assert s.sample_count == 2 and s.means() == (0.5, 0.5)
    with pytest.raises(ValueError):
        s.per_objective[0][0] = 1.0
    with pytest.raises(ValueError):
        LossSamples("c", "validation", ([0.0], [0.5, 0.5])).sample_count
