"""Evaluation protocols: case linkage curves, series identification,
clustering quality and suspect prioritization operating tables."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .cluster import Dendrogram, cut
from .data import CrimeDataset, CrimeRecord
from .evidence import TransformConfig
from .pairs import build_offender_graph, canonical
from .series import CrimeSeries, aggregate, cross_scores, prioritize_suspects

LINKED, UNLINKED, UNKNOWN = "linked", "unlinked", "unknown"
DEFAULT_RANKS = (1, 5, 10, 25, 50)
STRATA = (("1", 1, 1), ("2-3", 2, 3), ("4+", 4, math.inf))


@dataclass(frozen=True)
class LabeledScore:
    id_a: str
    id_b: str
    score: float
    label: str


def pair_label(offenders_a: frozenset, offenders_b: frozenset) -> str:
    if not offenders_a or not offenders_b:
        return UNKNOWN
    return LINKED if offenders_a & offenders_b else UNLINKED


def labeled_scores(ds: CrimeDataset, ia, ib, scores) -> list[LabeledScore]:
    recs = ds.records
    return [
        LabeledScore(*canonical(recs[i].id, recs[j].id), float(s), pair_label(recs[i].offenders, recs[j].offenders))
        for i, j, s in zip(ia, ib, scores)
    ]


def _known(scores: Sequence[LabeledScore]):
    known = [s for s in scores if s.label != UNKNOWN]
    linked = np.array([s.label == LINKED for s in known], dtype=bool)
    if linked.all() or not linked.any():
        raise ValueError("both linked and unlinked pairs are required")
    return known, linked


# ---------------------------------------------------------------------------
# case linkage


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def rows(self) -> list[dict]:
        return [
            {"threshold": float(t), "fpr": float(f), "tpr": float(p)}
            for t, f, p in zip(self.thresholds, self.fpr, self.tpr)
        ]

    def tpr_at(self, fpr: float) -> float:
        return float(np.interp(fpr, self.fpr, self.tpr))


def roc_arrays(score, linked) -> RocCurve:
    """ROC over descending distinct thresholds (tied scores form one step)."""
    score = np.asarray(score, dtype=float)
    linked = np.asarray(linked, dtype=bool)
    P, N = linked.sum(), (~linked).sum()
    if P == 0 or N == 0:
        raise ValueError("both linked and unlinked pairs are required")
    order = np.argsort(-score, kind="stable")
    s, y = score[order], linked[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    tpr = np.r_[0.0, tp / P]
    fpr = np.r_[0.0, fp / N]
    thr = np.r_[np.inf, s[last]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, thr, auc)


def roc_curve(scores: Sequence[LabeledScore]) -> RocCurve:
    known, linked = _known(scores)
    return roc_arrays([s.score for s in known], linked)


def precision_curve(scores: Sequence[LabeledScore]) -> list[tuple[int, float]]:
    """Precision among the top-k pairs for every k (ties ordered by pair id)."""
    known, _ = _known(scores)
    ordered = sorted(known, key=lambda s: (-s.score, s.id_a, s.id_b))
    hits = np.cumsum([s.label == LINKED for s in ordered])
    k = np.arange(1, len(ordered) + 1)
    return [(int(a), float(b)) for a, b in zip(k, hits / k)]


# ---------------------------------------------------------------------------
# series identification


@dataclass(frozen=True)
class HoldOut:
    series_id: str
    held_out: str
    remaining: int
    linkage: str
    pool: str
    rank: int
    n_candidates: int


@dataclass
class SeriesIdResult:
    ranks: tuple[int, ...]
    holdouts: list[HoldOut] = field(default_factory=list)

    def p_rank(self, linkage: str, pool: str, lo: float = 1, hi: float = math.inf) -> dict:
        """Mean over series of the per-series fraction of held-out crimes in the top R."""
        per_series: dict[str, list[int]] = {}
        for h in self.holdouts:
            if h.linkage == linkage and h.pool == pool and lo <= h.remaining <= hi:
                per_series.setdefault(h.series_id, []).append(h.rank)
        out = {"n_series": len(per_series)}
        for r in self.ranks:
            fr = [np.mean(np.array(v) <= r) for v in per_series.values()]
            out[f"P rank {r}"] = float(np.mean(fr)) if fr else math.nan
        return out

    def table(self) -> list[dict]:
        rows = []
        linkages = list(dict.fromkeys(h.linkage for h in self.holdouts))
        pools = list(dict.fromkeys(h.pool for h in self.holdouts))
        for stratum, lo, hi in (("all", 1, math.inf), *STRATA):
            for linkage in linkages:
                for pool in pools:
                    rows.append({"stratum": stratum, "linkage": linkage, "pool": pool,
                                 **self.p_rank(linkage, pool, lo, hi)})
        return rows


def series_id_eval(
    series: Sequence[CrimeSeries],
    ds: CrimeDataset,
    linkages: Iterable[str],
    model,
    cfg: TransformConfig = TransformConfig(),
    ranks: Sequence[int] = DEFAULT_RANKS,
    pools: Sequence[str] = ("all", "solved"),
) -> SeriesIdResult:
    """Hold each member of each series out in turn and rank it against all
    crimes outside the remaining series (ties counted against it)."""
    linkages = [linkages] if isinstance(linkages, str) else list(linkages)
    ids = ds.ids
    solved = np.array([r.solved for r in ds.records], dtype=bool)
    result = SeriesIdResult(tuple(ranks))
    for s in series:
        if len(s) < 2:
            raise ValueError(f"series {s.series_id} has fewer than two crimes")
        block = cross_scores(ds, s.crime_ids, ids, model, cfg)
        col_of = ds.index
        member_cols = [col_of[c] for c in s.crime_ids]
        for h, held in enumerate(s.crime_ids):
            keep = [k for k in range(len(s)) if k != h]
            excluded = np.zeros(len(ids), dtype=bool)
            excluded[[member_cols[k] for k in keep]] = True
            for linkage in linkages:
                agg = aggregate(block[keep], linkage)
                target = agg[member_cols[h]]
                for pool in pools:
                    cand = ~excluded if pool == "all" else (~excluded & solved)
                    cand_scores = agg[cand]
                    rank = int(np.sum(cand_scores >= target))  # the held-out crime counts itself
                    result.holdouts.append(
                        HoldOut(s.series_id, held, len(keep), linkage, pool, rank, int(cand.sum()))
                    )
    return result


# ---------------------------------------------------------------------------
# clustering quality


def variation_of_information(p: Mapping[str, object], truth: Mapping[str, object]) -> float:
    """H(P|T) + H(T|P) in nats for two partitions of the same ids."""
    if set(p) != set(truth):
        raise ValueError("partitions cover different ids")
    if not p:
        return 0.0
    keys = list(p)
    _, pi = np.unique([str(p[k]) for k in keys], return_inverse=True)
    _, ti = np.unique([str(truth[k]) for k in keys], return_inverse=True)
    n = len(keys)
    table = np.zeros((pi.max() + 1, ti.max() + 1))
    np.add.at(table, (pi, ti), 1.0)
    r = table / n
    a = r.sum(axis=1, keepdims=True)
    b = r.sum(axis=0, keepdims=True)
    nz = r > 0
    vi = -np.sum(r[nz] * (np.log((r / a)[nz]) + np.log((r / b)[nz])))
    return float(max(vi, 0.0))


class PairLabels:
    """Ground truth for crime pairs: linked if the crimes share an offender,
    unknown if either crime is unsolved, unlinked otherwise."""

    def __init__(self, offenders: Mapping[str, frozenset]):
        self.offenders = dict(offenders)

    @classmethod
    def from_dataset(cls, ds: CrimeDataset) -> "PairLabels":
        return cls({r.id: r.offenders for r in ds.records})

    @cached_property
    def solved(self) -> list[str]:
        return [c for c, o in self.offenders.items() if o]

    @cached_property
    def linked(self) -> set[tuple[str, str]]:
        by_off: dict[str, list[str]] = {}
        for cid, offs in self.offenders.items():
            for o in offs:
                by_off.setdefault(o, []).append(cid)
        out = set()
        for crimes in by_off.values():
            for i in range(len(crimes)):
                for j in range(i + 1, len(crimes)):
                    out.add(canonical(crimes[i], crimes[j]))
        return out

    def totals(self) -> dict:
        n, ns = len(self.offenders), len(self.solved)
        n_linked = len(self.linked)
        return {
            "linked": n_linked,
            "unlinked": ns * (ns - 1) // 2 - n_linked,
            "unknown": n * (n - 1) // 2 - ns * (ns - 1) // 2,
        }

    def truth_partition(self) -> dict[str, int]:
        """Solved crimes grouped by co-offending component."""
        recs = tuple(CrimeRecord(c, 0.0, 0.0, 0.0, 0.0, {}, o) for c, o in self.offenders.items() if o)
        groups = build_offender_graph(CrimeDataset(recs))
        return {cid: g.group_id for g in groups for cid in g.crime_ids}


@dataclass(frozen=True)
class ClusterEvalRow:
    threshold: float
    n_clusters: int
    n_series: int
    linked_pairs_in_series: int
    unlinked_pairs_in_series: int
    unknown_pairs_in_series: int
    vi: float


def clustering_eval(d: Dendrogram, labels: PairLabels, thresholds: Iterable[float]) -> list[ClusterEvalRow]:
    truth = labels.truth_partition()
    solved = set(labels.solved)
    rows = []
    for t in thresholds:
        part = cut(d, t)
        sizes = Counter(part.values())
        solved_sizes = Counter(part[c] for c in solved)
        same = sum(k * (k - 1) // 2 for k in sizes.values())
        same_solved = sum(k * (k - 1) // 2 for k in solved_sizes.values())
        linked_in = sum(1 for a, b in labels.linked if part[a] == part[b])
        vi = variation_of_information({c: part[c] for c in truth}, truth)
        rows.append(ClusterEvalRow(
            float(t), len(sizes), sum(1 for k in sizes.values() if k >= 2),
            linked_in, same_solved - linked_in, same - same_solved, vi,
        ))
    return rows


# ---------------------------------------------------------------------------
# suspect prioritization


@dataclass(frozen=True)
class SuspectRow:
    threshold: float
    size_q1: float
    size_median: float
    size_mean: float
    size_q3: float
    conditional: float
    overall: float


@dataclass
class SuspectResult:
    rows: list[SuspectRow]
    coverage: float
    n_queries: int
    n_in_pool: int
    true_ranks: list[int]  # rank of the true offender, for queries whose offender is in the pool
    pool_size: int

    def rank_curve(self) -> list[tuple[int, float]]:
        """Proportion of in-pool offenders within the top-k suspects, k = 1..pool size."""
        ranks = np.sort(np.asarray(self.true_ranks))
        if len(ranks) == 0:
            return []
        k = np.arange(1, self.pool_size + 1)
        return [(int(a), float(b)) for a, b in zip(k, np.searchsorted(ranks, k, side="right") / len(ranks))]


def suspect_eval(
    queries: Sequence[CrimeSeries],
    history: Sequence[CrimeSeries],
    thresholds: Iterable[float],
    ds: CrimeDataset,
    linkage: str,
    model,
    cfg: TransformConfig = TransformConfig(),
) -> SuspectResult:
    """Operating table for suspect lists cut at log-BF thresholds.

    A query is a hit when one of its offenders' past series is on the list.
    ``conditional`` is the hit rate among queries whose offender is in the
    suspect pool; ``overall`` scales it by the fraction of such queries.
    """
    thresholds = list(thresholds)
    pool_offenders = {o for h in history for o in h.offender_ids}
    lists = []
    for q in queries:
        lists.append(prioritize_suspects(q, history, ds, linkage, model, cfg))
    owner = {h.series_id: h.offender_ids for h in history}
    in_pool = [bool(q.offender_ids & pool_offenders) for q in queries]
    coverage = float(np.mean(in_pool)) if queries else math.nan
    true_ranks = []
    for q, ranked, ok in zip(queries, lists, in_pool):
        if ok:
            true_ranks.append(min(k for k, (sid, _) in enumerate(ranked, start=1) if owner[sid] & q.offender_ids))
    rows = []
    for t in thresholds:
        sizes = np.array([sum(1 for _, s in r if s >= t) for r in lists], dtype=float)
        hits = [
            any(owner[sid] & q.offender_ids for sid, s in r if s >= t)
            for q, r, ok in zip(queries, lists, in_pool) if ok
        ]
        cond = float(np.mean(hits)) if hits else math.nan
        q1, med, q3 = np.percentile(sizes, [25, 50, 75]) if len(sizes) else (math.nan,) * 3
        rows.append(SuspectRow(float(t), float(q1), float(med), float(sizes.mean()) if len(sizes) else math.nan,
                               float(q3), cond, cond * coverage))
    return SuspectResult(rows, coverage, len(queries), int(sum(in_pool)), true_ranks, len(history))


# ---------------------------------------------------------------------------
# report writers


def write_csv(rows: Sequence, path, fields: Optional[Sequence[str]] = None) -> None:
    dicts = [r if isinstance(r, dict) else asdict(r) for r in rows]
    fields = list(fields or (dicts[0].keys() if dicts else []))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fields)
        w.writeheader()
        for r in dicts:
            w.writerow({k: _fmt(r.get(k)) for k in fields})


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
