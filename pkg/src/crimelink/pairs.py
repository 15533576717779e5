"""Weighted linked/unlinked training pairs from solved crimes."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import CrimeDataset, solved_subset
from .evidence import TransformConfig, pair_evidence

LINKED = "linked"
UNLINKED = "unlinked"


@dataclass(frozen=True)
class WeightedPair:
    id_a: str
    id_b: str
    label: str
    weight: float = 1.0

    def __post_init__(self):
        if not self.id_a < self.id_b:
            raise ValueError(f"pair ids must satisfy id_a < id_b, got {self.id_a!r}, {self.id_b!r}")
        if self.label not in (LINKED, UNLINKED):
            raise ValueError(f"bad label {self.label!r}")
        if not 0 < self.weight <= 1:
            raise ValueError(f"weight must lie in (0, 1], got {self.weight}")
        if self.label == UNLINKED and self.weight != 1:
            raise ValueError("unlinked pairs carry weight 1")

    @property
    def linked(self) -> bool:
        return self.label == LINKED


@dataclass(frozen=True)
class CrimeGroup:
    group_id: int
    offender_ids: frozenset[str]
    crime_ids: frozenset[str]


def canonical(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


class _DisjointSet:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller id becomes the root so component labels are order-free
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def build_offender_graph(ds: CrimeDataset) -> list[CrimeGroup]:
    """Connected components of the co-offending graph, with their crimes.

    Groups are ordered by their smallest offender id.
    """
    dsu = _DisjointSet()
    for r in ds.records:
        offs = sorted(r.offenders)
        for o in offs:
            dsu.find(o)
        for o in offs[1:]:
            dsu.union(offs[0], o)
    offenders = defaultdict(set)
    crimes = defaultdict(set)
    for o in list(dsu.parent):
        offenders[dsu.find(o)].add(o)
    for r in ds.records:
        if not r.offenders:
            continue
        roots = {dsu.find(o) for o in r.offenders}
        assert len(roots) == 1, f"crime {r.id} spans several offender components"
        crimes[roots.pop()].add(r.id)
    roots = sorted(offenders, key=lambda root: min(offenders[root]))
    return [
        CrimeGroup(k, frozenset(offenders[root]), frozenset(crimes[root]))
        for k, root in enumerate(roots)
    ]


def offender_series(ds: CrimeDataset) -> dict[str, list[str]]:
    """Offender id -> ids of the crimes they were arrested for, in dataset order."""
    series = defaultdict(list)
    for r in ds.records:
        for o in r.offenders:
            series[o].append(r.id)
    return dict(sorted(series.items()))


def linked_pairs(ds: CrimeDataset) -> list[WeightedPair]:
    """All within-series pairs, each weighted 1/N for a series with N pairs.

    A pair shared by several series (co-offending) is kept once with the
    smallest of its weights.
    """
    weights: dict[tuple[str, str], float] = {}
    for crimes in offender_series(ds).values():
        n = len(crimes)
        if n < 2:
            continue
        w = 1.0 / (n * (n - 1) // 2)
        for i in range(n):
            for j in range(i + 1, n):
                key = canonical(crimes[i], crimes[j])
                if key not in weights or w < weights[key]:
                    weights[key] = w
    return [WeightedPair(a, b, LINKED, w) for (a, b), w in sorted(weights.items())]


def unlinked_pairs(groups: Sequence[CrimeGroup], k: int = 20, rng_seed: int = 0) -> list[WeightedPair]:
    """Cross-group pairs: ``k`` crimes from each group, each matched with a
    crime drawn uniformly from all other groups.  Duplicates are dropped."""
    groups = [g for g in groups if g.crime_ids]
    if len(groups) < 2:
        raise ValueError("need at least two crime groups to sample unlinked pairs")
    rng = np.random.default_rng(rng_seed)
    members = [sorted(g.crime_ids) for g in groups]
    everything = [c for m in members for c in m]
    owner = np.repeat(np.arange(len(members)), [len(m) for m in members])
    seen = set()
    out = []
    for gi, crimes in enumerate(members):
        outside = np.flatnonzero(owner != gi)
        picks = rng.integers(len(crimes), size=k)
        partners = outside[rng.integers(len(outside), size=k)]
        for p, q in zip(picks, partners):
            key = canonical(crimes[p], everything[q])
            if key not in seen:
                seen.add(key)
                out.append(WeightedPair(key[0], key[1], UNLINKED, 1.0))
    return out


def apply_time_window(
    pairs: Sequence[WeightedPair],
    ds: CrimeDataset,
    max_days: float = 365.0,
    cfg: TransformConfig = TransformConfig(),
) -> list[WeightedPair]:
    """Drop pairs whose expected elapsed time exceeds ``max_days``."""
    if math.isinf(max_days) or not pairs:
        return list(pairs)
    elapsed = expected_elapsed_days(pairs, ds, cfg)
    return [p for p, d in zip(pairs, elapsed) if d <= max_days]


def expected_elapsed_days(pairs, ds: CrimeDataset, cfg: TransformConfig = TransformConfig()) -> np.ndarray:
    tcfg = TransformConfig(cfg.mc_draws, cfg.rng_seed, ("temporal",), cfg.category_map)
    return pair_evidence(ds, [(p.id_a, p.id_b) for p in pairs], tcfg).column("temporal")


def training_pairs(
    ds: CrimeDataset,
    k: int = 20,
    max_days: float = 365.0,
    rng_seed: int = 0,
    cfg: TransformConfig = TransformConfig(),
) -> list[WeightedPair]:
    """Linked + unlinked pairs from the solved crimes of ``ds``, time-windowed."""
    solved = solved_subset(ds)
    pairs = linked_pairs(solved) + unlinked_pairs(build_offender_graph(solved), k, rng_seed)
    return apply_time_window(pairs, solved, max_days, cfg)


def write_pairs(pairs: Iterable[WeightedPair], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id_a", "id_b", "label", "weight"])
        for p in pairs:
            w.writerow([p.id_a, p.id_b, p.label, repr(p.weight)])


def read_pairs(path) -> list[WeightedPair]:
    with open(path, newline="") as fh:
        return [
            WeightedPair(row["id_a"], row["id_b"], row["label"], float(row["weight"]))
            for row in csv.DictReader(fh)
        ]


def pair_weights(pairs: Sequence[WeightedPair]) -> tuple[np.ndarray, np.ndarray]:
    """(is_linked bool array, weight array)."""
    return (
        np.array([p.linked for p in pairs], dtype=bool),
        np.array([p.weight for p in pairs], dtype=float),
    )

