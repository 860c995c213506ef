import json
import sys
import textwrap

import numpy as np
import pytest

from certbo.core import Configuration, Split
from certbo.objectives import (
    ManifestError,
    ObjectiveError,
    SubprocessObjective,
    SyntheticTradeoff,
    builtin_problems,
    evaluate,
    get_problem,
    load_table_objective,
    provider_from_descriptor,
    subprocess_evaluate,
    true_mean,
    write_manifest,
)


def cfg(*values, cid="c0000"):
    return Configuration(tuple(values), cid)


# -- synthetic ---------------------------------------------------------------------


def test_true_mean_examples():
    prob = get_problem("fairness-like")
    np.testing.assert_allclose(true_mean(prob, [0.0]), [0.1, 0.9])
    np.testing.assert_allclose(true_mean(prob, [1.0]), [0.9, 0.1])


@pytest.mark.parametrize("name", sorted(builtin_problems()))
def test_true_mean_monotone_along_s(name):
    prob = get_problem(name)
    grid = np.linspace(0, 1, 201)
    mus = np.array([prob.true_mean(np.full(prob.dim, s)) for s in grid])
    c = prob.num_constrained
    assert np.all(np.diff(mus[:, :c], axis=0) >= -1e-15)
    assert np.all(np.diff(mus[:, c], axis=0) <= 1e-15)


@pytest.mark.parametrize("name", sorted(builtin_problems()))
def test_presets_straddle_their_default_alphas(name):
    prob = get_problem(name)
    lo, hi = prob.true_mean(np.zeros(prob.dim)), prob.true_mean(np.ones(prob.dim))
    for i, a in enumerate(prob.default_alphas):
        assert lo[i] < a < hi[i]


def test_catalog():
    assert get_problem("pruning-like").dim == 3
    assert get_problem("selective-robustness-like").num_constrained == 2
    with pytest.raises(KeyError):
        get_problem("imagenet")


def test_gain_signs_enforced():
    with pytest.raises(ValueError):
        SyntheticTradeoff(1, (0.1, 0.9), (0.5, 0.5), (1, 1))


def test_bernoulli_samples():
    prob = SyntheticTradeoff(1, (0.0, 0.5), (1.0, -0.5), (1.0, 1.0))
    zeros = evaluate(prob, cfg(0.0), Split.VALIDATION, 1000, seed=1)
    assert np.all(zeros.per_objective[0] == 0.0)
    big = evaluate(prob, cfg(0.0), Split.VALIDATION, 10**5, seed=2)
    assert abs(big.means()[1] - 0.5) <= 0.005
    again = evaluate(prob, cfg(0.0), Split.VALIDATION, 10**5, seed=2)
    assert all(np.array_equal(a, b) for a, b in zip(big.per_objective, again.per_objective))


def test_clipped_gaussian_free_objective():
    prob = get_problem("pruning-like")
    s = prob.evaluate(cfg(0.5, 0.5, 0.5), "validation", 5000, 3)
    free = s.per_objective[1]
    assert np.all((free >= 0) & (free <= 1)) and len(np.unique(free)) > 100
    assert set(np.unique(s.per_objective[0])) <= {0.0, 1.0}


def test_validation_and_calibration_draws_independent():
    prob = SyntheticTradeoff(1, (0.5, 0.5), (0.1, -0.1), (1.0, 1.0))
    c = cfg(0.0)
    val = [prob.evaluate(c, Split.VALIDATION, 1, seed).per_objective[0][0] for seed in range(10_000)]
    cal = [prob.evaluate(c, Split.CALIBRATION, 1, seed).per_objective[0][0] for seed in range(10_000)]
    assert abs(np.corrcoef(val, cal)[0, 1]) < 4 / np.sqrt(10_000)


def test_adding_configurations_does_not_perturb_draws():
    prob = get_problem("fairness-like")
    a = prob.evaluate(cfg(0.3, cid="c0002"), "validation", 50, 9)
    prob.evaluate(cfg(0.7, cid="c0003"), "validation", 50, 9)
    b = prob.evaluate(cfg(0.3, cid="c0002"), "validation", 50, 9)
    assert np.array_equal(a.per_objective[0], b.per_objective[0])


# -- table replay ---------------------------------------------------------------------


def _entries(n_cfg=3, k=100, m=100, test=0, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_cfg):
        losses = {
            "validation": [rng.integers(0, 2, k).astype(float), rng.random(k)],
            "calibration": [rng.integers(0, 2, m).astype(float), rng.random(m)],
        }
        if test:
            losses["test"] = [rng.integers(0, 2, test).astype(float), rng.random(test)]
        out.append({"id": f"cfg{i}", "lambda": [i / 10], "losses": losses})
    return out


def test_table_round_trip(tmp_path):
    entries = _entries()
    table = load_table_objective(write_manifest(tmp_path, 1, 1, entries))
    assert table.split_size(Split.VALIDATION) == 100 and table.split_size(Split.CALIBRATION) == 100
    for e in entries:
        for split in ("validation", "calibration"):
            got = table.evaluate(cfg(*e["lambda"]), split, 100, seed=None)
            for a, b in zip(got.per_objective, e["losses"][split]):
                assert np.array_equal(a, b)
    np.testing.assert_array_equal(table.finite_support, [[0.0], [0.1], [0.2]])


def test_table_resplits_calibration_and_test(tmp_path):
    table = load_table_objective(write_manifest(tmp_path, 1, 1, _entries(test=50)))
    c = cfg(0.1)
    cal, test = table.evaluate(c, "calibration", 100, 1), table.evaluate(c, "test", 50, 1)
    pooled = np.sort(np.concatenate([table.losses["cfg1"]["calibration"][1], table.losses["cfg1"]["test"][1]]))
    assert np.array_equal(np.sort(np.concatenate([cal.per_objective[1], test.per_objective[1]])), pooled)
    assert not np.array_equal(cal.per_objective[1], table.evaluate(c, "calibration", 100, 2).per_objective[1])


def test_table_rejects_bad_manifests(tmp_path):
    entries = _entries()
    entries[1]["losses"]["validation"][0][3] = 1.2
    with pytest.raises(ManifestError, match="loss out of range"):
        load_table_objective(write_manifest(tmp_path / "a", 1, 1, entries))
    dup = _entries()
    dup[2]["id"] = "cfg0"
    with pytest.raises(ManifestError, match="duplicated"):
        load_table_objective(write_manifest(tmp_path / "b", 1, 1, dup))
    uneven = _entries()
    uneven[0]["losses"]["calibration"] = [v[:90] for v in uneven[0]["losses"]["calibration"]]
    with pytest.raises(ManifestError, match="inconsistent"):
        load_table_objective(write_manifest(tmp_path / "c", 1, 1, uneven))


def test_table_unlisted_configuration(tmp_path):
    table = load_table_objective(write_manifest(tmp_path, 1, 1, _entries()))
    with pytest.raises(ObjectiveError):
        table.evaluate(cfg(0.55), "validation", 100, 0)


# -- subprocess plugin -----------------------------------------------------------------


def _stub(tmp_path, body):
    path = tmp_path / "stub.py"
    path.write_text(textwrap.dedent(body))
    return (sys.executable, str(path))


ZEROS = """
import json, sys
req = json.loads(sys.stdin.readline())
n = req["n_samples"]
print(json.dumps({"losses": [[0.0] * n, [0.0] * n]}))
"""


def test_subprocess_zero_stub(tmp_path):
    s = subprocess_evaluate(_stub(tmp_path, ZEROS), [0.5], "validation", 7, 1, n_objectives=2)
    assert s.sample_count == 7 and all(np.all(v == 0) for v in s.per_objective)


def test_subprocess_wrong_arity(tmp_path):
    cmd = _stub(tmp_path, """
        import json, sys
        req = json.loads(sys.stdin.readline())
        print(json.dumps({"losses": [[0.0] * req["n_samples"]]}))
    """)
    with pytest.raises(ObjectiveError, match="arity"):
        subprocess_evaluate(cmd, [0.5], "validation", 5, 1, n_objectives=2)


def test_subprocess_timeout(tmp_path):
    cmd = _stub(tmp_path, "import time\ntime.sleep(10)\n")
    with pytest.raises(ObjectiveError, match="timed out"):
        subprocess_evaluate(cmd, [0.5], "validation", 5, 1, timeout_s=0.5)


@pytest.mark.parametrize(
    "body, match",
    [
        ("import sys\nsys.exit(3)\n", "exited with code 3"),
        ("print('not json')\n", "malformed"),
        ("import json\nprint(json.dumps({'losses': [[1.5], [0.0]]}))\n", "out of range"),
    ],
)
def test_subprocess_failures(tmp_path, body, match):
    with pytest.raises(ObjectiveError, match=match):
        subprocess_evaluate(_stub(tmp_path, body), [0.5], "validation", 1, 1, n_objectives=2)


def test_subprocess_provider_from_descriptor(tmp_path):
    cmd = _stub(tmp_path, ZEROS)
    prov = provider_from_descriptor({"kind": "subprocess", "command": list(cmd), "lower": [0], "upper": [1], "timeout_s": 5})
    assert isinstance(prov, SubprocessObjective)
    assert prov.evaluate(cfg(0.2), "calibration", 3, 0).sample_count == 3


def test_descriptor_round_trip():
    prob = get_problem("robustness-like")
    again = provider_from_descriptor(prob.descriptor())
    assert np.array_equal(again.true_mean([0.3]), prob.true_mean([0.3]))
    with pytest.raises(ValueError):
        provider_from_descriptor({"kind": "magic"})
