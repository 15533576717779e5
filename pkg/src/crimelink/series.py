"""Crime-series identification and suspect prioritization."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import CrimeDataset
from .evidence import TransformConfig
from .pairs import offender_series

LINKAGES = ("single", "complete", "average")


@dataclass(frozen=True)
class CrimeSeries:
    series_id: str
    crime_ids: tuple[str, ...]
    offender_ids: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "crime_ids", tuple(self.crime_ids))
        object.__setattr__(self, "offender_ids", frozenset(self.offender_ids))
        if not self.crime_ids:
            raise ValueError("a crime series needs at least one crime")
        if len(set(self.crime_ids)) != len(self.crime_ids):
            raise ValueError(f"series {self.series_id}: repeated crime ids")

    def __len__(self) -> int:
        return len(self.crime_ids)


@dataclass(frozen=True)
class RankedList:
    """Candidates in descending score order; ties broken by candidate id."""

    entries: tuple[tuple[str, float], ...]

    @classmethod
    def build(cls, candidates: Sequence[str], scores) -> "RankedList":
        scores = np.asarray(scores, dtype=float)
        order = sorted(range(len(candidates)), key=lambda k: (-scores[k], candidates[k]))
        return cls(tuple((candidates[k], float(scores[k])) for k in order))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ids(self) -> list[str]:
        return [c for c, _ in self.entries]

    def top(self, r: int) -> "RankedList":
        return RankedList(self.entries[:r])

    def above(self, threshold: float) -> "RankedList":
        return RankedList(tuple(e for e in self.entries if e[1] >= threshold))

    def rank_of(self, candidate: str) -> Optional[int]:
        for k, (c, _) in enumerate(self.entries, start=1):
            if c == candidate:
                return k
        return None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "candidate_id", "score"])
            for k, (c, s) in enumerate(self.entries, start=1):
                w.writerow([k, c, repr(s)])

    def write_json(self, path, threshold: Optional[float] = None, **extra) -> None:
        shown = self.above(threshold) if threshold is not None else self
        doc = {
            "threshold": threshold,
            "list_size": len(shown),
            "entries": [
                {"rank": k, "candidate_id": c, "log_bf": s}
                for k, (c, s) in enumerate(shown.entries, start=1)
            ],
            **extra,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)


def aggregate(block: np.ndarray, linkage: str, axis: int = 0) -> np.ndarray:
    """Collapse a block of pair scores along ``axis`` under a linkage rule."""
    if linkage == "single":
        return block.max(axis=axis)
    if linkage == "complete":
        return block.min(axis=axis)
    if linkage == "average":
        return block.mean(axis=axis)
    raise ValueError(f"linkage must be one of {LINKAGES}")


def cross_scores(ds: CrimeDataset, rows: Sequence[str], cols: Sequence[str], model, cfg) -> np.ndarray:
    """(len(rows), len(cols)) matrix of pair log Bayes factors; NaN where a
    crime would be paired with itself."""
    idx = ds.index
    ri = np.array([idx[r] for r in rows], dtype=np.int64)
    ci = np.array([idx[c] for c in cols], dtype=np.int64)
    ia = np.repeat(ri, len(ci))
    ib = np.tile(ci, len(ri))
    out = np.full(len(ia), np.nan)
    ok = ia != ib
    if ok.any():
        out[ok] = model.pair_scores(ds, ia[ok], ib[ok], cfg)
    return out.reshape(len(rows), len(cols))


def series_similarity(
    c: CrimeSeries,
    candidate,
    ds: CrimeDataset,
    linkage: str,
    model,
    cfg: TransformConfig = TransformConfig(),
) -> float:
    """Linkage score between a series and a crime id or another series."""
    other = (candidate,) if isinstance(candidate, str) else tuple(candidate.crime_ids)
    if set(other) & set(c.crime_ids):
        raise ValueError("candidate overlaps the index series")
    block = cross_scores(ds, c.crime_ids, other, model, cfg)
    return float(aggregate(block.ravel(), linkage))


def identify_series(
    c: CrimeSeries,
    ds: CrimeDataset,
    linkage: str,
    model,
    cfg: TransformConfig = TransformConfig(),
    top_r: Optional[int] = None,
    unsolved_only: bool = False,
    sequential: bool = False,
) -> RankedList:
    """Rank every crime outside ``c`` by its linkage score to ``c``.

    With ``sequential=True`` the best candidate is absorbed into the series
    after each round and the remaining candidates rescored, for ``top_r``
    rounds; entries then record the score at which each crime was added.
    """
    members = set(c.crime_ids)
    candidates = [
        r.id for r in ds.records
        if r.id not in members and not (unsolved_only and r.solved)
    ]
    if not candidates:
        raise ValueError("no candidate crimes to rank")
    block = cross_scores(ds, c.crime_ids, candidates, model, cfg)
    if not sequential:
        ranked = RankedList.build(candidates, aggregate(block, linkage))
        return ranked.top(top_r) if top_r is not None else ranked

    rounds = len(candidates) if top_r is None else min(top_r, len(candidates))
    remaining = list(range(len(candidates)))
    rows = [block[k] for k in range(block.shape[0])]
    entries = []
    for _ in range(rounds):
        scores = aggregate(np.vstack(rows)[:, remaining], linkage)
        best = min(range(len(remaining)), key=lambda k: (-scores[k], candidates[remaining[k]]))
        chosen = remaining.pop(best)
        entries.append((candidates[chosen], float(scores[best])))
        new_row = np.zeros(len(candidates))
        if remaining:
            new_row[remaining] = cross_scores(
                ds, [candidates[chosen]], [candidates[k] for k in remaining], model, cfg
            )[0]
        rows.append(new_row)
    return RankedList(tuple(entries))


def offender_histories(ds: CrimeDataset) -> list[CrimeSeries]:
    """One series per offender of the solved crimes in ``ds``."""
    return [
        CrimeSeries(o, tuple(crimes), frozenset({o}))
        for o, crimes in offender_series(ds).items()
    ]


def prioritize_suspects(
    c: CrimeSeries,
    history: Sequence[CrimeSeries],
    ds: CrimeDataset,
    linkage: str,
    model,
    cfg: TransformConfig = TransformConfig(),
) -> RankedList:
    """Rank past offenders by the linkage score between their series and ``c``.

    ``model`` must not use elapsed time (drop it with
    :func:`~crimelink.models.drop_component` first); ``ds`` must contain the
    crimes of both ``c`` and the histories.
    """
    if not history:
        raise ValueError("empty suspect history")
    if "temporal" in getattr(model, "variables", ()):
        raise ValueError("suspect prioritization needs a model without the temporal component")
    pool = sorted({cid for h in history for cid in h.crime_ids})
    block = cross_scores(ds, c.crime_ids, pool, model, cfg)
    col = {cid: k for k, cid in enumerate(pool)}
    scores = []
    for h in history:
        sub = block[:, [col[cid] for cid in h.crime_ids]]
        scores.append(aggregate(sub.ravel(), linkage))
    return RankedList.build([h.series_id for h in history], scores)


def series_from_truth(truth: Iterable[tuple[str, Iterable[str]]]) -> list[CrimeSeries]:
    """Group (crime id, offender ids) pairs into per-offender series."""
    by_off: dict[str, list[str]] = {}
    for cid, offs in truth:
        for o in offs:
            by_off.setdefault(o, []).append(cid)
    return [CrimeSeries(o, tuple(c), frozenset({o})) for o, c in sorted(by_off.items())]
