import json
from dataclasses import replace

import numpy as np
import pytest

from crimelink.data import CrimeDataset, CrimeRecord
from crimelink.evidence import pair_evidence
from crimelink.models import drop_component, fit_naive_bayes
from crimelink.pairs import training_pairs
from crimelink.series import (
    CrimeSeries,
    RankedList,
    aggregate,
    cross_scores,
    identify_series,
    offender_histories,
    prioritize_suspects,
    series_from_truth,
    series_similarity,
)
from crimelink.synth import GeneratorConfig, generate


class MatrixScores:
    """Scores looked up from a fixed symmetric matrix indexed by dataset position."""

    def __init__(self, S, variables=()):
        self.S = np.asarray(S, dtype=float)
        self.variables = variables

    def pair_scores(self, ds, ia, ib, cfg=None):
        return self.S[np.asarray(ia), np.asarray(ib)]


def _world(n=25, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    S = A + A.T
    recs = tuple(CrimeRecord(f"c{k:02d}", 0, 0, 0, 0, {}, {f"O{k % 5}"} if k < 15 else ()) for k in range(n))
    return CrimeDataset(recs), MatrixScores(S), S


def test_series_validation():
    with pytest.raises(ValueError):
        CrimeSeries("s", ())
    with pytest.raises(ValueError):
        CrimeSeries("s", ("a", "a"))


def test_aggregate_rules():
    block = np.array([[1.0, 5.0], [3.0, -1.0]])
    assert aggregate(block, "single").tolist() == [3.0, 5.0]
    assert aggregate(block, "complete").tolist() == [1.0, -1.0]
    assert aggregate(block, "average").tolist() == [2.0, 2.0]
    with pytest.raises(ValueError):
        aggregate(block, "median")


def test_cross_scores_mask_self_pairs():
    ds, model, S = _world()
    block = cross_scores(ds, ["c00", "c01"], ["c01", "c02"], model, None)
    assert np.isnan(block[1, 0])
    assert block[0, 1] == S[0, 2]


def test_singleton_series_ranking_is_linkage_free():
    ds, model, _ = _world()
    c = CrimeSeries("x", ("c03",))
    ranked = [identify_series(c, ds, l, model).entries for l in ("single", "complete", "average")]
    assert ranked[0] == ranked[1] == ranked[2]
    assert len(ranked[0]) == len(ds) - 1


def test_growing_a_series_moves_single_and_complete_monotonically():
    ds, model, _ = _world(seed=1)
    small = CrimeSeries("x", ("c00", "c01"))
    big = CrimeSeries("x", ("c00", "c01", "c02"))
    for linkage, sign in (("single", 1), ("complete", -1)):
        a = dict(identify_series(small, ds, linkage, model).entries)
        b = dict(identify_series(big, ds, linkage, model).entries)
        assert all(sign * (b[k] - a[k]) >= 0 for k in b)


def test_series_similarity_matches_ranking():
    ds, model, S = _world()
    c = CrimeSeries("x", ("c00", "c04"))
    ranked = dict(identify_series(c, ds, "average", model).entries)
    assert series_similarity(c, "c09", ds, "average", model) == pytest.approx(ranked["c09"])
    other = CrimeSeries("y", ("c09", "c10"))
    assert series_similarity(c, other, ds, "complete", model) == S[np.ix_([0, 4], [9, 10])].min()
    with pytest.raises(ValueError):
        series_similarity(c, "c04", ds, "single", model)


def test_top_r_unsolved_only_and_sequential():
    ds, model, _ = _world()
    c = CrimeSeries("x", ("c00",))
    full = identify_series(c, ds, "average", model)
    assert identify_series(c, ds, "average", model, top_r=5).entries == full.entries[:5]
    unsolved = identify_series(c, ds, "average", model, unsolved_only=True)
    assert all(int(cid[1:]) >= 15 for cid in unsolved.ids)
    seq = identify_series(c, ds, "single", model, top_r=4, sequential=True)
    assert len(seq) == 4 and seq.entries[0] == full.entries[0]
    # single linkage: the next addition is the best candidate against the grown series
    grown = CrimeSeries("x", ("c00", seq.ids[0]))
    nxt = identify_series(grown, ds, "single", model).entries[0]
    assert seq.entries[1] == nxt


def test_ranked_list_helpers(tmp_path):
    r = RankedList.build(["b", "a", "c"], [1.0, 1.0, 3.0])
    assert r.ids == ["c", "a", "b"]  # ties broken by id
    assert r.rank_of("a") == 2 and r.rank_of("z") is None
    assert r.above(1.0).ids == ["c", "a", "b"] and r.above(1.5).ids == ["c"]
    r.write_json(tmp_path / "r.json", threshold=2.0, series="x")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["list_size"] == 1 and doc["series"] == "x"
    r.write_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[1] == "1,c,3.0"


def test_prioritize_suspects():
    ds, model, S = _world()
    history = offender_histories(ds.subset([f"c{k:02d}" for k in range(10)]))
    c = CrimeSeries("new", ("c20", "c21"))
    ranked = prioritize_suspects(c, history, ds, "complete", model)
    assert sorted(ranked.ids) == sorted(h.series_id for h in history)
    o1 = next(h for h in history if h.series_id == "O1")
    idx = [ds.index[x] for x in o1.crime_ids]
    assert dict(ranked.entries)["O1"] == S[np.ix_([20, 21], idx)].min()
    with pytest.raises(ValueError):
        prioritize_suspects(c, history, ds, "complete", MatrixScores(S, ("spatial", "temporal")))
    with pytest.raises(ValueError):
        prioritize_suspects(c, [], ds, "complete", model)


def test_series_from_truth():
    s = series_from_truth([("a", ["O2"]), ("b", ["O1", "O2"]), ("c", [])])
    assert [(x.series_id, x.crime_ids) for x in s] == [("O1", ("b",)), ("O2", ("a", "b"))]


def test_whole_week_time_shift_keeps_scores():
    # fit on separate data so no evaluated value sits exactly on a bin cut
    train = generate(replace(GeneratorConfig(), n_offenders=80, rng_seed=1))
    pairs = training_pairs(train)
    nb = fit_naive_bayes(pairs, pair_evidence(train, [(p.id_a, p.id_b) for p in pairs]))
    ds = generate(replace(GeneratorConfig(), n_offenders=80, rng_seed=2))
    shift = 24.0 * 7 * 10
    moved = CrimeDataset(
        tuple(replace(r, t_earliest=r.t_earliest + shift, t_latest=r.t_latest + shift) for r in ds),
        ds.category_schemas,
    )
    series = [s for s in offender_histories(ds) if len(s) >= 2][0]
    for linkage in ("single", "average"):
        a = identify_series(series, ds, linkage, nb)
        b = identify_series(series, moved, linkage, nb)
        np.testing.assert_allclose([s for _, s in a], [s for _, s in b], atol=1e-9)
        assert a.ids[:10] == b.ids[:10]
    no_time = drop_component(nb, "temporal")
    hist = offender_histories(ds)
    assert prioritize_suspects(series, [h for h in hist if h.series_id != series.series_id][:5],
                               ds, "single", no_time).ids
