"""Agglomerative clustering of crimes with log Bayes factors as similarity."""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .data import CrimeDataset
from .evidence import TransformConfig

LINKAGES = ("single", "complete", "average")
LNK1_MAGIC = b"LNK1"

Partition = dict  # crime id -> dense cluster index


@dataclass(frozen=True)
class SimilarityMatrix:
    """Pairwise scores in condensed form (row-major upper triangle, i < j)."""

    ids: tuple[str, ...]
    condensed: np.ndarray

    def __post_init__(self):
        n = len(self.ids)
        if len(self.condensed) != n * (n - 1) // 2:
            raise ValueError("condensed length does not match the number of ids")
        if not np.all(np.isfinite(self.condensed)):
            raise ValueError("similarities must be finite")

    @property
    def n(self) -> int:
        return len(self.ids)

    def _pos(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        return self.n * i - i * (i + 1) // 2 + (j - i - 1)

    def get(self, a: str, b: str) -> float:
        idx = {c: k for k, c in enumerate(self.ids)}
        return float(self.condensed[self._pos(idx[a], idx[b])])

    def square(self, fill: float = -np.inf) -> np.ndarray:
        S = np.full((self.n, self.n), fill)
        iu = np.triu_indices(self.n, 1)
        S[iu] = self.condensed
        S[(iu[1], iu[0])] = self.condensed
        return S

    @classmethod
    def from_square(cls, ids: Sequence[str], S) -> "SimilarityMatrix":
        S = np.asarray(S, dtype=float)
        return cls(tuple(ids), S[np.triu_indices(len(ids), 1)].copy())

    def transform(self, fn) -> "SimilarityMatrix":
        return SimilarityMatrix(self.ids, np.asarray(fn(self.condensed), dtype=float))


def pairwise_similarities(
    ds: CrimeDataset,
    model,
    cfg: TransformConfig = TransformConfig(),
    block: int = 200_000,
) -> SimilarityMatrix:
    """Score all ``n(n-1)/2`` crime pairs of ``ds`` with ``model``."""
    n = len(ds)
    if n < 2:
        raise ValueError("need at least two crimes")
    ia, ib = np.triu_indices(n, 1)
    out = np.empty(len(ia))
    for s in range(0, len(ia), block):
        out[s:s + block] = model.pair_scores(ds, ia[s:s + block], ib[s:s + block], cfg)
    return SimilarityMatrix(tuple(ds.ids), out)


# ---------------------------------------------------------------------------
# dendrogram


@dataclass(frozen=True)
class Merge:
    a: int
    b: int
    score: float
    new_id: int
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge history.

    Starting clusters have ids ``0..len(initial)-1`` (singletons unless an
    initial partition was given); the k-th merge creates id
    ``len(initial) + k``.
    """

    ids: tuple[str, ...]
    initial: tuple[tuple[str, ...], ...]
    merges: tuple[Merge, ...]
    linkage: str

    @property
    def scores(self) -> np.ndarray:
        return np.array([m.score for m in self.merges])

    def topology(self) -> list[tuple[frozenset, frozenset]]:
        """Merges as (leaf set, leaf set) pairs, independent of id numbering."""
        members = [frozenset(c) for c in self.initial]
        out = []
        for m in self.merges:
            out.append((members[m.a], members[m.b]))
            members.append(members[m.a] | members[m.b])
        return out

    def to_json(self) -> dict:
        return {
            "linkage": self.linkage,
            "ids": list(self.ids),
            "initial": [list(c) for c in self.initial],
            "merges": [
                {"a": m.a, "b": m.b, "score": m.score, "new_id": m.new_id, "size": m.size}
                for m in self.merges
            ],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Dendrogram":
        return cls(
            tuple(doc["ids"]),
            tuple(tuple(c) for c in doc["initial"]),
            tuple(Merge(m["a"], m["b"], m["score"], m["new_id"], m["size"]) for m in doc["merges"]),
            doc["linkage"],
        )

    def to_newick(self) -> str:
        """Newick text; internal node labels carry the merge scores."""
        k0 = len(self.initial)
        children = {m.new_id: (m.a, m.b) for m in self.merges}
        labels = {m.new_id: repr(float(m.score)) for m in self.merges}
        used = {c for m in self.merges for c in (m.a, m.b)}
        roots = [c for c in range(k0 + len(self.merges)) if c not in used]

        def leaf_text(c: int) -> str:
            names = [_newick_name(x) for x in self.initial[c]]
            return names[0] if len(names) == 1 else "(" + ",".join(names) + ")init"

        out: dict[int, str] = {}
        for root in roots:
            stack = [(root, False)]
            while stack:
                node, expanded = stack.pop()
                if node < k0:
                    out[node] = leaf_text(node)
                elif expanded:
                    a, b = children[node]
                    out[node] = f"({out.pop(a)},{out.pop(b)}){labels[node]}"
                else:
                    stack.append((node, True))
                    a, b = children[node]
                    stack.append((b, False))
                    stack.append((a, False))
        if len(roots) == 1:
            return out[roots[0]] + ";"
        return "(" + ",".join(out[r] for r in roots) + ");"


def _newick_name(name: str) -> str:
    if any(ch in name for ch in " ()[]':;,"):
        return "'" + name.replace("'", "''") + "'"
    return name


def _initial_clusters(sim: SimilarityMatrix, init: Optional[Mapping[str, object]]):
    if init is None:
        return [(i,) for i in range(sim.n)]
    if set(init) != set(sim.ids):
        raise ValueError("initial partition must cover exactly the clustered ids")
    groups: dict[object, list[int]] = {}
    for k, cid in enumerate(sim.ids):
        groups.setdefault(init[cid], []).append(k)
    return sorted((tuple(g) for g in groups.values()), key=lambda g: g[0])


def _cluster_similarity(S: np.ndarray, starts, linkage: str) -> np.ndarray:
    m = len(starts)
    if all(len(g) == 1 for g in starts):
        idx = [g[0] for g in starts]
        C = S[np.ix_(idx, idx)].copy()
    else:
        C = np.empty((m, m))
        for i in range(m):
            for j in range(i + 1, m):
                block = S[np.ix_(starts[i], starts[j])]
                v = block.max() if linkage == "single" else block.min() if linkage == "complete" else block.mean()
                C[i, j] = C[j, i] = v
    np.fill_diagonal(C, -np.inf)
    return C


def cluster(
    sim: SimilarityMatrix,
    linkage: str = "average",
    init: Optional[Mapping[str, object]] = None,
    stop: Optional[float] = None,
) -> Dendrogram:
    """Greedy agglomeration, always merging the most similar pair of clusters.

    Between-cluster similarity is the maximum (single), minimum (complete)
    or size-weighted mean (average) of the crime-pair scores, kept up to date
    with Lance-Williams recurrences.  Ties go to the lowest ``(id_a, id_b)``.
    Merging stops early once the best available score drops below ``stop``.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    starts = _initial_clusters(sim, init)
    m = len(starts)
    C = _cluster_similarity(sim.square(), starts, linkage)
    ids = np.arange(m)
    sizes = np.array([len(g) for g in starts], dtype=float)
    active = np.ones(m, dtype=bool)
    best_val = np.full(m, -np.inf)
    best_slot = np.full(m, -1)

    def refresh(r: int) -> None:
        row = C[r]
        mx = row.max()
        if mx == -np.inf:
            best_val[r], best_slot[r] = -np.inf, -1
            return
        cand = np.flatnonzero(row == mx)
        best_val[r] = mx
        best_slot[r] = cand[np.argmin(ids[cand])]

    for r in range(m):
        refresh(r)

    merges = []
    next_id = m
    for _ in range(m - 1):
        rows = np.flatnonzero(active)
        mx = best_val[rows].max()
        if stop is not None and mx < stop:
            break
        rows = rows[best_val[rows] == mx]
        lo = np.minimum(ids[rows], ids[best_slot[rows]])
        hi = np.maximum(ids[rows], ids[best_slot[rows]])
        k = np.lexsort((hi, lo))[0]
        p = rows[k]
        q = best_slot[p]
        merges.append(Merge(int(lo[k]), int(hi[k]), float(mx), next_id, int(sizes[p] + sizes[q])))

        if linkage == "single":
            new = np.maximum(C[p], C[q])
        elif linkage == "complete":
            new = np.minimum(C[p], C[q])
        else:
            new = (sizes[p] * C[p] + sizes[q] * C[q]) / (sizes[p] + sizes[q])
        new[~active] = -np.inf
        new[p] = new[q] = -np.inf
        C[p, :] = new
        C[:, p] = new
        C[q, :] = -np.inf
        C[:, q] = -np.inf
        active[q] = False
        best_val[q], best_slot[q] = -np.inf, -1
        sizes[p] += sizes[q]
        ids[p] = next_id
        next_id += 1

        stale = np.flatnonzero(active & ((best_slot == p) | (best_slot == q)))
        for r in stale:
            refresh(r)
        refresh(p)
        # guard against rounding lifting the merged value above a row's best
        bumped = np.flatnonzero(active & (new > best_val))
        for r in bumped:
            best_val[r], best_slot[r] = new[r], p

    initial = tuple(tuple(sim.ids[i] for i in g) for g in starts)
    return Dendrogram(tuple(sim.ids), initial, tuple(merges), linkage)


def cut(d: Dendrogram, threshold: float) -> Partition:
    """Flat clusters formed by every merge scoring at least ``threshold``."""
    k0 = len(d.initial)
    parent = list(range(k0))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    rep = list(range(k0))  # cluster id -> a starting cluster inside it
    for mg in d.merges:
        if mg.score >= threshold:
            ra, rb = find(rep[mg.a]), find(rep[mg.b])
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        rep.append(rep[mg.a])
    start_of = {}
    for k, group in enumerate(d.initial):
        for cid in group:
            start_of[cid] = k
    label: dict[int, int] = {}
    out = {}
    for cid in d.ids:
        root = find(start_of[cid])
        out[cid] = label.setdefault(root, len(label))
    return out


def partition_groups(p: Mapping[str, int]) -> list[list[str]]:
    groups: dict[int, list[str]] = {}
    for cid, k in p.items():
        groups.setdefault(k, []).append(cid)
    return [groups[k] for k in sorted(groups)]


# ---------------------------------------------------------------------------
# persistence


def write_partition(p: Mapping[str, int], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["crime_id", "cluster_id"])
        for cid, k in p.items():
            w.writerow([cid, k])


def read_partition(path) -> Partition:
    with open(path, newline="") as fh:
        return {row["crime_id"]: int(row["cluster_id"]) for row in csv.DictReader(fh)}


def save_dendrogram(d: Dendrogram, path) -> None:
    with open(path, "w") as fh:
        json.dump(d.to_json(), fh)


def load_dendrogram(path) -> Dendrogram:
    with open(path) as fh:
        return Dendrogram.from_json(json.load(fh))


def write_lnk1(sim: SimilarityMatrix, path) -> None:
    """Binary layout: b"LNK1", n as uint64 LE, then the upper triangle as float32 LE."""
    with open(path, "wb") as fh:
        fh.write(LNK1_MAGIC)
        fh.write(struct.pack("<Q", sim.n))
        fh.write(sim.condensed.astype("<f4").tobytes())


def read_lnk1(path, ids: Optional[Sequence[str]] = None) -> SimilarityMatrix:
    with open(path, "rb") as fh:
        if fh.read(4) != LNK1_MAGIC:
            raise ValueError(f"{path}: not an LNK1 similarity file")
        (n,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f4")
    if len(data) != n * (n - 1) // 2:
        raise ValueError(f"{path}: truncated triangle")
    ids = tuple(ids) if ids is not None else tuple(str(i) for i in range(n))
    if len(ids) != n:
        raise ValueError("id count does not match the stored matrix")
    return SimilarityMatrix(ids, data.astype(float))


def expected_pair_count(n: int) -> int:
    return math.comb(n, 2)
