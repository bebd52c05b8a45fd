import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecomem.dataset import lag_matrix
from ecomem.diagnostics import MemoryFunction
from ecomem.memcore import filter_covariate
from ecomem.simulate import (
    CovariateGen,
    ShapeMismatch,
    SimScenario,
    WeightShape,
    canonical_scenario,
    forward_predictor,
    generate,
    score_recovery,
)
from ecomem.formula import parse_formula


def test_canonical_shape():
    sim = generate(canonical_scenario())
    ds = sim.dataset
    assert len(ds) == 120
    assert set(ds.columns) == {"y", "v1", "v2", "v3"}
    assert set(np.unique(ds.columns["v1"])) <= {0.0, 1.0}
    assert len(sim.truth["weights"]["v1"]) == 11
    assert len(sim.truth["weights"]["v2"]) == 7
    w1 = np.array(sim.truth["weights"]["v1"])
    assert np.argmax(w1) == 2
    w2 = np.array(sim.truth["weights"]["v2"])
    assert np.all(np.diff(w2) < 0)


def test_deterministic():
    a, b = generate(canonical_scenario(9)), generate(canonical_scenario(9))
    for c in a.dataset.columns:
        np.testing.assert_array_equal(a.dataset.columns[c], b.dataset.columns[c])
    c = generate(canonical_scenario(10))
    assert not np.array_equal(a.dataset.columns["v2"], c.dataset.columns["v2"])


def test_null_model_mean():
    sc = canonical_scenario(2)
    sc.beta = {k: 0.0 for k in sc.beta}
    sc.T = 4000
    y = generate(sc).dataset.columns["y"]
    se = np.sqrt(np.e / len(y))
    assert abs(y.mean() - np.e) < 4 * se


def test_degenerate_weights_equal_plain_glm():
    sc = canonical_scenario(4)
    for v in sc.memory:
        L = sc.memory[v].L
        sc.memory[v] = WeightShape(L=L, shape="custom", values=[1.0] + [0.0] * L)
    sim = generate(sc)
    nomem = canonical_scenario(4)
    nomem.memory = {}
    # same presample length keeps the random streams aligned
    nomem.memory = {"v1": WeightShape(L=10, shape="custom", values=[1.0] + [0.0] * 10)}
    other = generate(nomem)
    np.testing.assert_array_equal(sim.dataset.columns["y"], other.dataset.columns["y"])


def test_generator_reuses_engine_filter():
    rng = np.random.default_rng(0)
    x = rng.normal(size=40)
    w = WeightShape(L=5, shape="hump", peak=1.0).weights()
    terms = parse_formula("y ~ a").terms
    pred = forward_predictor(terms, {"a": x}, {"a": w}, 0.0, {"a": 1.0}, 5)
    np.testing.assert_array_equal(pred, filter_covariate(lag_matrix(x, 5, 5), w))


@settings(max_examples=40, deadline=None)
@given(
    L=st.integers(0, 15),
    shape=st.sampled_from(["uniform", "hump", "exp_decay"]),
    peak=st.floats(0, 10),
    rate=st.floats(0.01, 3),
)
def test_true_weights_on_simplex(L, shape, peak, rate):
    w = WeightShape(L=L, shape=shape, peak=peak, rate=rate, width=1.0).weights()
    assert w.shape == (L + 1,)
    assert abs(w.sum() - 1) < 1e-12 and np.all(w >= 0)


def test_binary_probability_checked():
    sc = canonical_scenario()
    sc.covariates["v1"] = CovariateGen(kind="binary", p=1.0)
    with pytest.raises(ValueError):
        generate(sc)


def test_scenario_json_round_trip(tmp_path):
    sc = canonical_scenario(5)
    p = tmp_path / "s.json"
    p.write_text(json.dumps(sc.to_dict()))
    assert SimScenario.load(p) == sc


@pytest.mark.parametrize("family", ["gaussian", "binomial"])
def test_other_families(family):
    sc = canonical_scenario(1)
    sc.family = family
    sim = generate(sc)
    if family == "binomial":
        y, n = sim.dataset.columns["y"], sim.dataset.columns["trials"]
        assert np.all((0 <= y) & (y <= n))


def _mf(mean, lower, upper):
    return MemoryFunction("a", np.asarray(mean, float), np.asarray(lower, float), np.asarray(upper, float), 0.99, 0.01)


def test_perfect_recovery():
    t = [0.5, 0.3, 0.2]
    r = score_recovery([_mf(t, t, t)], {"a": t})
    assert r.overall_mae == 0.0 and r.overall_coverage == 1.0


def test_band_covers_truth():
    r = score_recovery([_mf([0.05], [0.0], [0.1])], {"a": [0.05]})
    assert r.coverage["a"] == 1.0
    r = score_recovery([_mf([0.05], [0.06], [0.1])], {"a": [0.05]})
    assert r.coverage["a"] == 0.0


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        score_recovery([_mf([0.5, 0.5], [0, 0], [1, 1])], {"a": [1.0]})
