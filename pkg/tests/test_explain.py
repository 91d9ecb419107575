import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from survkit.dataset import Dataset
from survkit.explain import (conditional_interactions, default_baseline, resolve_baseline, shap_exact,
                             shap_report, shap_sampled, write_beeswarm_csv, write_interactions_csv,
                             write_report_csv, write_report_json)


def _linear(beta):
    beta = np.asarray(beta, float)
    return lambda X: X @ beta


def _mlp(F, seed):
    rng = np.random.default_rng(seed)
    W1, b1, w2 = rng.normal(size=(F, 6)), rng.normal(size=6), rng.normal(size=6)
    return lambda X: np.tanh(X @ W1 + b1) @ w2


def test_additive_model_is_exact():
    beta = np.array([0.5, -1.0, 2.0])
    z, b = np.array([1.0, 2.0, -1.0]), np.array([0.2, 0.0, 0.5])
    np.testing.assert_allclose(shap_exact(_linear(beta), z, b), beta * (z - b), atol=1e-12)
    phi, _ = shap_sampled(_linear(beta), z, b, samples=3, seed=9)
    np.testing.assert_allclose(phi, beta * (z - b), atol=1e-12)


def test_baseline_point_gives_zero():
    z = np.array([0.3, -0.7, 1.1])
    assert np.all(shap_exact(_mlp(3, 0), z, z) == 0)


def test_product_split_evenly():
    phi = shap_exact(lambda X: X[:, 0] * X[:, 1], [1.0, 1.0], [0.0, 0.0])
    np.testing.assert_allclose(phi, [0.5, 0.5], atol=1e-15)


def test_too_many_features_for_exact():
    with pytest.raises(ValueError, match="shap_sampled"):
        shap_exact(lambda X: X.sum(1), np.zeros(21), np.zeros(21))
    with pytest.raises(ValueError):
        shap_sampled(lambda X: X.sum(1), np.zeros(3), np.zeros(3), samples=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 7))
def test_efficiency(seed, F):
    rng = np.random.default_rng(seed)
    g = _mlp(F, seed)
    z, b = rng.normal(size=F), rng.normal(size=F)
    phi = shap_exact(g, z, b)
    assert abs(phi.sum() - (g(z[None])[0] - g(b[None])[0])) < 1e-10


def test_symmetry_dummy_linearity():
    rng = np.random.default_rng(3)
    z, b = rng.normal(size=4), rng.normal(size=4)
    z[1], b[1] = z[0], b[0]
    g_sym = lambda X: np.tanh(X[:, 0] + X[:, 1]) * X[:, 2]
    phi = shap_exact(g_sym, z, b)
    assert phi[0] == pytest.approx(phi[1], abs=1e-12)
    assert phi[3] == 0.0  # ignored feature
    g1, g2 = _mlp(4, 1), _mlp(4, 2)
    both = shap_exact(lambda X: g1(X) + g2(X), z, b)
    np.testing.assert_allclose(both, shap_exact(g1, z, b) + shap_exact(g2, z, b), atol=1e-10)


def test_sampled_agrees_with_exact_within_error():
    ok = 0
    for trial in range(100):
        rng = np.random.default_rng(1000 + trial)
        g = _mlp(8, trial)
        z, b = rng.normal(size=8), rng.normal(size=8)
        exact = shap_exact(g, z, b)
        phi, se = shap_sampled(g, z, b, samples=400, seed=trial)
        ok += np.all(np.abs(phi - exact) <= 3 * se + 1e-12)
    assert ok >= 95


def test_sampled_is_deterministic():
    g = _mlp(5, 4)
    z, b = np.ones(5), np.zeros(5)
    a, b_ = shap_sampled(g, z, b, 20, seed=7), shap_sampled(g, z, b, 20, seed=7)
    assert np.array_equal(a[0], b_[0]) and np.array_equal(a[1], b_[1])


def _mixed(n=60, seed=0):
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.normal(2.0, 1.0, n), rng.integers(0, 2, n), rng.integers(0, 2, n)]).astype(float)
    return Dataset.from_arrays(X, rng.exponential(size=n), np.ones(n),
                               columns=("density", "night", "snowy"),
                               kinds=("continuous", "binary", "binary"))


def test_default_baseline_convention():
    ds = _mixed()
    assert default_baseline(ds) == {"density": "mean", "night": "zero", "snowy": "zero"}
    np.testing.assert_allclose(resolve_baseline(ds), [ds.X[:, 0].mean(), 0, 0])
    assert resolve_baseline(ds, {"density": 1.5})[0] == 1.5
    with pytest.raises(ValueError):
        resolve_baseline(ds, {"nope": 0})


def test_report_signs_follow_linear_coefficients():
    ds = _mixed(200, 1)
    beta = [-0.83, 0.32, -0.31]
    rep = shap_report(_linear(beta), ds)
    means = {r["feature"]: r["mean"] for r in rep.table}
    # binary columns: mean over the value-1 rows carries the coefficient sign
    for j in (1, 2):
        assert np.sign(means[ds.columns[j]]) == np.sign(beta[j])
    # continuous column is centred on its mean, so the sign shows in the slope
    assert means["density"] == pytest.approx(0.0, abs=1e-12)
    assert np.sign(np.cov(rep.phi[:, 0], ds.X[:, 0])[0, 1]) == np.sign(beta[0])
    # binary zeros contribute exactly zero and are left out
    assert np.all(rep.phi[~rep.included] == 0)
    night = [r for r in rep.table if r["feature"] == "night"][0]
    assert night["n"] == int(ds.X[:, 1].sum())
    assert [abs(r["mean"]) for r in rep.table] == sorted((abs(r["mean"]) for r in rep.table), reverse=True)


def test_uniformity_flag_arithmetic():
    ds = Dataset.from_arrays(np.array([[1.0], [1.0], [0.9]]), [1, 2, 3], [1, 1, 1])
    rep = shap_report(lambda X: X[:, 0], ds, baseline={"x0": 0.0})
    assert rep.table[0]["uniform"]
    ds = Dataset.from_arrays(np.array([[1.0], [-1.0], [0.1]]), [1, 2, 3], [1, 1, 1])
    rep = shap_report(lambda X: X[:, 0], ds, baseline={"x0": 0.0})
    assert not rep.table[0]["uniform"]


def test_all_zero_binary_warns_and_is_dropped():
    ds = _mixed(30, 2)
    X = np.array(ds.X)
    X[:, 2] = 0
    ds = Dataset.from_arrays(X, ds.duration, ds.event, columns=ds.columns, kinds=ds.kinds)
    with pytest.warns(UserWarning, match="snowy"):
        rep = shap_report(_linear([1, 1, 1]), ds)
    assert "snowy" not in [r["feature"] for r in rep.table]


def test_sampled_report_and_bad_method():
    ds = _mixed(10, 3)
    rep = shap_report(_mlp(3, 0), ds, method="sampled", samples=8, seed=1)
    assert rep.method.startswith("sampled") and rep.std_error.shape == rep.phi.shape
    with pytest.raises(ValueError):
        shap_report(_mlp(3, 0), ds, method="kernel")


def test_planted_interaction():
    rng = np.random.default_rng(4)
    n = 200
    X = rng.integers(0, 2, (n, 2)).astype(float)
    ds = Dataset.from_arrays(X, np.ones(n), np.ones(n), columns=("z1", "z2"), kinds=("binary", "binary"))
    rep = shap_report(lambda A: A[:, 0] + 2 * A[:, 0] * A[:, 1], ds)
    on = conditional_interactions(rep, ("z1", 1))
    assert on[0]["feature"] == "z2" and on[0]["mean"] == pytest.approx(1.0)  # half the product
    # under z1 = 0 every z2 attribution is zero, so nothing is uniform
    assert conditional_interactions(rep, ("z1", 0)) == []


def test_condition_always_true_matches_report():
    ds = _mixed(40, 5)
    X = np.array(ds.X)
    X[:, 1] = 1
    ds = Dataset.from_arrays(X, ds.duration, ds.event, columns=ds.columns, kinds=ds.kinds)
    rep = shap_report(_linear([0.5, 0.2, -0.4]), ds)
    rows = conditional_interactions(rep, ("night", 1))
    expected = [r for r in rep.table if r["feature"] != "night" and r["uniform"]]
    assert [(r["feature"], r["mean"], r["std"]) for r in rows] == \
        [(r["feature"], r["mean"], r["std"]) for r in expected]
    assert set(rows[0]) == {"condition", "feature", "mean", "std", "uniform", "n"}


def test_interaction_errors_and_threshold():
    ds = _mixed(40, 6)
    rep = shap_report(_linear([0.5, 0.2, -0.4]), ds)
    with pytest.raises(ValueError, match="no instances"):
        conditional_interactions(rep, ("night", 7))
    with pytest.raises(ValueError, match="at least"):
        conditional_interactions(rep, ("night", 1), min_count=1000)
    rows = conditional_interactions(rep, ("density", 1), threshold=2.0, min_count=1)
    assert all(r["condition"] == "density>=2" for r in rows)


def test_writers(tmp_path):
    ds = _mixed(15, 7)
    rep = shap_report(_linear([0.5, 0.2, -0.4]), ds)
    write_report_csv(rep, tmp_path / "s.csv")
    write_report_json(rep, tmp_path / "s.json")
    write_beeswarm_csv(rep, tmp_path / "b.csv")
    write_interactions_csv(conditional_interactions(rep, ("night", 1), min_count=1), tmp_path / "i.csv")
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert [r["feature"] for r in rows] == [r["feature"] for r in rep.table]
    assert json.loads((tmp_path / "s.json").read_text())["method"] == "exact"
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 1 + 15 * 3
    assert (tmp_path / "i.csv").read_text().startswith("condition,feature,mean,std,n")
