import math

import numpy as np
import pytest
from scipy.optimize import minimize

from crimelink.evidence import EvidenceTable
from crimelink.models import (
    BinScheme,
    ExternalScores,
    ModelError,
    SeparationError,
    check_separation,
    decision_threshold,
    drop_component,
    equal_frequency_cuts,
    fit_logistic,
    fit_naive_bayes,
    load_model,
    posterior_odds,
    save_model,
)
from crimelink.pairs import LINKED, UNLINKED, WeightedPair

from oracles import weighted_nll


def _problem(n=400, seed=0, names=("spatial", "prop")):
    rng = np.random.default_rng(seed)
    linked = rng.random(n) < 0.4
    spatial = rng.exponential(np.where(linked, 1.0, 5.0))
    prop = (rng.random(n) < np.where(linked, 0.8, 0.3)).astype(float)
    cols = {"spatial": spatial, "prop": prop}
    V = np.column_stack([cols[k] for k in names])
    w = np.where(linked, rng.uniform(0.05, 1.0, n), 1.0)
    pairs = [WeightedPair(f"a{k:04d}", f"b{k:04d}", LINKED if linked[k] else UNLINKED, float(w[k]))
             for k in range(n)]
    table = EvidenceTable(tuple(p.id_a for p in pairs), tuple(p.id_b for p in pairs), tuple(names), V)
    return pairs, table, linked, w


def test_binary_component_matches_smoothing_formula():
    pairs, table, linked, w = _problem(names=("prop",))
    for alpha in (0.0, 1.0, 3.5):
        m = fit_naive_bayes(pairs, table, alpha=alpha)
        x = table.values[:, 0]
        for level in (0, 1):
            l = w[linked & (x == level)].sum()
            u = w[~linked & (x == level)].sum()
            L, U = w[linked].sum(), w[~linked].sum()
            expected = math.log((l + alpha) / (L + 2 * alpha)) - math.log((u + alpha) / (U + 2 * alpha))
            assert m.components["prop"].log_bf[level] == pytest.approx(expected, rel=1e-12)


def test_continuous_bins_are_weighted_equal_frequency():
    pairs, table, _, w = _problem(n=2000)
    m = fit_naive_bayes(pairs, table, n_bins=10)
    comp = m.components["spatial"]
    idx = comp.assign(table.column("spatial"))
    mass = np.bincount(idx, weights=w, minlength=10) / w.sum()
    assert comp.bins.n_bins == 10
    assert np.all(np.abs(mass - 0.1) < 0.01)


def test_equal_frequency_cuts_edge_cases():
    assert equal_frequency_cuts([np.nan, np.nan], [1, 1], 4).size == 0
    assert equal_frequency_cuts([2.0, 2.0, 2.0], [1, 1, 1], 4).size == 0
    cuts = equal_frequency_cuts(np.arange(8.0), np.ones(8), 4)
    np.testing.assert_array_equal(cuts, [1.0, 3.0, 5.0])
    with pytest.warns(UserWarning):
        pairs, table, _, _ = _problem(n=10)
        fit_naive_bayes(pairs, table, n_bins=20)


def test_bins_assign_out_of_range_and_missing():
    b = BinScheme("v", (1.0, 2.0))
    assert b.assign([-5.0, 1.0, 1.5, 2.0, 9.0, np.nan]).tolist() == [0, 0, 1, 1, 2, -1]
    with pytest.raises(ModelError):
        BinScheme("v", (2.0, 1.0))


def test_missing_evidence_contributes_zero():
    pairs, table, _, _ = _problem()
    m = fit_naive_bayes(pairs, table)
    full = m.score({"spatial": 0.3, "prop": 1.0})
    assert m.score({"spatial": 0.3, "prop": None}) == pytest.approx(full - m.components["prop"].log_bf[1])
    assert m.score({"spatial": 0.3}) == m.score({"spatial": 0.3, "prop": math.nan})
    with pytest.raises(ModelError):
        m.score({"colour": 1.0})
    with pytest.raises(ModelError):
        m.score({"prop": 0.5})


def test_drop_component_leaves_others_untouched():
    pairs, table, _, _ = _problem()
    m = fit_naive_bayes(pairs, table)
    d = drop_component(m, "prop")
    assert d.variables == ("spatial",)
    assert d.components["spatial"] == m.components["spatial"]
    # evidence for a dropped variable is accepted and ignored
    assert d.score({"spatial": 1.0, "prop": 1.0}) == m.components["spatial"].scores([1.0])[0]
    with pytest.raises(ModelError):
        drop_component(d, "prop")


def test_fit_requires_both_classes():
    pairs, table, linked, _ = _problem()
    keep = np.flatnonzero(linked)
    with pytest.raises(ModelError):
        fit_naive_bayes([pairs[k] for k in keep], table.take(keep))
    with pytest.raises(ModelError):
        fit_naive_bayes(pairs[:-1], table)


def test_model_json_roundtrip(tmp_path):
    pairs, table, _, _ = _problem()
    nb = fit_naive_bayes(pairs, table)
    lr = fit_logistic(pairs, table)
    for m in (nb, lr):
        save_model(m, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        np.testing.assert_array_equal(back.score_table(table), m.score_table(table))
    (tmp_path / "bad.json").write_text('{"format": "other", "version": 1}')
    with pytest.raises(ModelError):
        load_model(tmp_path / "bad.json")


def test_logistic_matches_generic_optimiser():
    pairs, table, linked, w = _problem(n=150, seed=3)
    m = fit_logistic(pairs, table)
    X = np.column_stack([np.ones(len(table)), table.values])
    y = linked.astype(float)
    ref = minimize(weighted_nll, np.zeros(3), args=(X, y, w), method="BFGS", options={"gtol": 1e-9})
    np.testing.assert_allclose([m.intercept, *m.coefficients], ref.x, atol=1e-4)
    phi = math.log(w[linked].sum() / w[~linked].sum())
    assert m.phi == pytest.approx(phi)
    x = {"spatial": 2.0, "prop": 1.0}
    assert m.score(x) == pytest.approx(m.intercept + 2.0 * m.coefficients[0] + m.coefficients[1] - phi)
    assert m.summary()[0]["estimate"] == pytest.approx(m.beta0)


def test_logistic_separation_detected():
    X = np.array([[1, 0.0], [1, 1.0], [1, 2.0], [1, 3.0]])
    assert check_separation(X, [0, 0, 1, 1])
    assert not check_separation(X, [0, 1, 0, 1])
    pairs = [WeightedPair(f"a{k}", f"b{k}", LINKED if k >= 2 else UNLINKED, 1.0) for k in range(4)]
    table = EvidenceTable(tuple(p.id_a for p in pairs), tuple(p.id_b for p in pairs), ("v",), X[:, 1:])
    with pytest.raises(SeparationError):
        fit_logistic(pairs, table)


def test_logistic_missing_policies():
    pairs, table, _, _ = _problem(seed=4)
    vals = table.values.copy()
    vals[::7, 0] = np.nan
    holey = EvidenceTable(table.ids_a, table.ids_b, table.names, vals)
    cc = fit_logistic(pairs, holey)
    with pytest.raises(ModelError):
        cc.score({"spatial": None, "prop": 1.0})
    mean = fit_logistic(pairs, holey, missing="mean")
    fill = mean.means[0]
    assert mean.score({"spatial": None, "prop": 1.0}) == pytest.approx(mean.score({"spatial": fill, "prop": 1.0}))
    with pytest.raises(ModelError):
        fit_logistic(pairs, holey, missing="drop")


def test_external_scores(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("id_a,id_b,score\nb,a,1.5\n")
    ext = ExternalScores.read_csv(p)
    assert ext.lookup("a", "b") == 1.5 == ext.lookup("b", "a")
    with pytest.raises(ModelError):
        ext.lookup("a", "c")


def test_decision_rule():
    d = decision_threshold(99.0, 1.0, 3.0)
    assert d.bf_threshold == pytest.approx(33.0)
    assert d.link(math.log(33.0)) and not d.link(math.log(32.9))
    assert posterior_odds(math.log(10.0), 0.01) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        decision_threshold(0.0, 1.0, 1.0)
