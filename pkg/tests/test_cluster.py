import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import linkage as scipy_linkage

from crimelink.cluster import (
    Dendrogram,
    SimilarityMatrix,
    cluster,
    cut,
    load_dendrogram,
    partition_groups,
    read_lnk1,
    read_partition,
    save_dendrogram,
    write_lnk1,
    write_partition,
)

from oracles import brute_force_cluster


def _sim(n, seed=0, scale=3.0):
    rng = np.random.default_rng(seed)
    A = rng.normal(0, scale, (n, n))
    S = np.triu(A, 1) + np.triu(A, 1).T
    return SimilarityMatrix.from_square([f"c{i:03d}" for i in range(n)], S), S


def test_similarity_matrix_layout():
    sim, S = _sim(6)
    assert sim.get("c001", "c004") == S[1, 4] == sim.get("c004", "c001")
    sq = sim.square()
    assert np.all(np.diag(sq) == -np.inf)
    np.testing.assert_array_equal(sq[~np.eye(6, dtype=bool)], S[~np.eye(6, dtype=bool)])
    with pytest.raises(ValueError):
        SimilarityMatrix(("a", "b"), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        SimilarityMatrix(("a", "b"), np.array([np.nan]))


@pytest.mark.parametrize("method", ["single", "complete", "average"])
def test_heights_agree_with_scipy(method):
    sim, S = _sim(60, seed=1)
    d = cluster(sim, method)
    D = S.max() - sim.condensed  # distances as a decreasing map of similarity
    Z = scipy_linkage(D, method=method)
    np.testing.assert_allclose(np.sort(S.max() - d.scores), np.sort(Z[:, 2]), atol=1e-9)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10_000), st.sampled_from(["single", "complete", "average"]))
def test_against_brute_force(n, seed, method):
    rng = np.random.default_rng(seed)
    A = rng.integers(-2, 3, (n, n)).astype(float) if method != "average" else rng.normal(size=(n, n))
    S = np.triu(A, 1) + np.triu(A, 1).T
    d = cluster(SimilarityMatrix.from_square([str(i) for i in range(n)], S), method)
    ref = brute_force_cluster(S, method)
    assert [(m.a, m.b) for m in d.merges] == [(a, b) for a, b, _ in ref]
    np.testing.assert_allclose(d.scores, [v for *_, v in ref], rtol=1e-12, atol=1e-12)


def test_merge_bookkeeping():
    sim, _ = _sim(12, seed=2)
    d = cluster(sim, "average")
    assert [m.new_id for m in d.merges] == list(range(12, 23))
    assert d.merges[-1].size == 12
    assert all(m.a < m.b for m in d.merges)


def test_single_linkage_heights_monotone():
    sim, _ = _sim(40, seed=3)
    for method in ("single", "complete", "average"):
        assert np.all(np.diff(cluster(sim, method).scores) <= 1e-12)


def test_cut_thresholds():
    S = np.array([[0, 5, 1, 0], [5, 0, 2, 0], [1, 2, 0, 3], [0, 0, 3, 0]], dtype=float)
    sim = SimilarityMatrix.from_square(list("abcd"), S)
    d = cluster(sim, "single")
    assert [m.score for m in d.merges] == [5.0, 3.0, 2.0]
    assert cut(d, 5.0) == {"a": 0, "b": 0, "c": 1, "d": 2}
    assert cut(d, 3.0) == {"a": 0, "b": 0, "c": 1, "d": 1}
    assert len(set(cut(d, 2.0).values())) == 1
    assert len(set(cut(d, 6.0).values())) == 4
    assert partition_groups(cut(d, 3.0)) == [["a", "b"], ["c", "d"]]


def test_initial_partition_and_stop():
    sim, S = _sim(10, seed=4)
    init = {cid: (0 if i < 3 else i) for i, cid in enumerate(sim.ids)}
    d = cluster(sim, "complete", init=init)
    assert d.initial[0] == ("c000", "c001", "c002")
    assert len(d.merges) == 7
    # a seeded block behaves like one item with complete-linkage similarities
    R = np.zeros((8, 8))
    R[1:, 1:] = S[3:, 3:]
    R[0, 1:] = R[1:, 0] = S[:3, 3:].min(axis=0)
    ref = brute_force_cluster(R, "complete")
    assert [(m.a, m.b, m.score) for m in d.merges] == ref
    with pytest.raises(ValueError):
        cluster(sim, "complete", init={"c000": 0})
    stopped = cluster(sim, "average", stop=1.0)
    assert all(m.score >= 1.0 for m in stopped.merges)
    assert len(stopped.merges) < 9
    with pytest.raises(ValueError):
        cluster(sim, "ward")


def test_newick():
    S = np.array([[0, 5, 1], [5, 0, 2], [1, 2, 0]], dtype=float)
    d = cluster(SimilarityMatrix.from_square(["a", "b", "c d"], S), "single")
    assert d.to_newick() == "('c d',(a,b)5.0)2.0;"  # children in (id_a, id_b) order
    partial = cluster(SimilarityMatrix.from_square(["a", "b", "c"], S), "single", stop=3.0)
    assert partial.to_newick() == "(c,(a,b)5.0);"


def test_persistence(tmp_path):
    sim, _ = _sim(15, seed=5)
    d = cluster(sim, "average")
    save_dendrogram(d, tmp_path / "d.json")
    assert load_dendrogram(tmp_path / "d.json") == d
    p = cut(d, 0.0)
    write_partition(p, tmp_path / "p.csv")
    assert read_partition(tmp_path / "p.csv") == p
    assert Dendrogram.from_json(d.to_json()).topology() == d.topology()


def test_lnk1_roundtrip(tmp_path):
    sim, _ = _sim(20, seed=6)
    write_lnk1(sim, tmp_path / "s.lnk")
    raw = (tmp_path / "s.lnk").read_bytes()
    assert raw[:4] == b"LNK1" and int.from_bytes(raw[4:12], "little") == 20
    assert len(raw) == 12 + 4 * 190
    back = read_lnk1(tmp_path / "s.lnk", sim.ids)
    np.testing.assert_allclose(back.condensed, sim.condensed, rtol=1e-6)
    (tmp_path / "bad.lnk").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        read_lnk1(tmp_path / "bad.lnk")
    (tmp_path / "short.lnk").write_bytes(raw[:-4])
    with pytest.raises(ValueError):
        read_lnk1(tmp_path / "short.lnk")
    with pytest.raises(ValueError):
        read_lnk1(tmp_path / "s.lnk", ["a"])
