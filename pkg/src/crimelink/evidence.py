"""Transformation of crime pairs into evidence variables.

Seven variables are built in: Euclidean distance (``spatial``, km), expected
elapsed time (``temporal``, days), expected circular time-of-day distance
(``tod``, hours in [0, 12]), expected circular day-of-week distance (``dow``,
days in [0, 3.5]) and three category match indicators (``prop``, ``poe``,
``moe``).  Missing inputs give NaN entries.

Censored event times are handled by Monte-Carlo: each crime's time is drawn
uniformly over its interval and the distances are averaged over the draws.
The uniforms come from a counter-based generator keyed on
``(rng_seed, lower id, higher id)`` so that a pair's value does not depend on
argument order, batch composition or how the work is partitioned.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from ._kernels import temporal_mc
from .data import CrimeDataset, CrimeRecord

VARIABLES = ("spatial", "temporal", "tod", "dow", "prop", "poe", "moe")
CONTINUOUS = frozenset({"spatial", "temporal", "tod", "dow"})
BINARY = frozenset({"prop", "poe", "moe"})
TEMPORAL = frozenset({"temporal", "tod", "dow"})

Evidence = dict  # variable name -> float, NaN = missing

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_CHUNK = 1 << 22  # max sampled values held at once


@dataclass(frozen=True)
class TransformConfig:
    mc_draws: int = 1000
    rng_seed: int = 0
    enabled_variables: tuple[str, ...] = VARIABLES
    # evidence variable -> dataset category name, for the match indicators
    category_map: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.mc_draws < 1:
            raise ValueError("mc_draws must be >= 1")
        object.__setattr__(self, "enabled_variables", tuple(self.enabled_variables))
        unknown = [v for v in self.enabled_variables if v not in VARIABLES]
        if unknown:
            raise ValueError(f"unknown evidence variables {unknown}")

    def category_for(self, var: str) -> str:
        return self.category_map.get(var, var)

    def to_json(self) -> dict:
        return {
            "mc_draws": self.mc_draws,
            "rng_seed": self.rng_seed,
            "enabled_variables": list(self.enabled_variables),
            "category_map": dict(self.category_map),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "TransformConfig":
        return cls(
            mc_draws=int(doc.get("mc_draws", 1000)),
            rng_seed=int(doc.get("rng_seed", 0)),
            enabled_variables=tuple(doc.get("enabled_variables", VARIABLES)),
            category_map=dict(doc.get("category_map", {})),
        )

    @classmethod
    def read(cls, path) -> "TransformConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class EvidenceTable:
    """Evidence for a batch of pairs: one row per pair, one column per variable."""

    ids_a: tuple[str, ...]
    ids_b: tuple[str, ...]
    names: tuple[str, ...]
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.ids_a)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def row(self, i: int) -> Evidence:
        return {n: float(v) for n, v in zip(self.names, self.values[i])}

    def take(self, rows) -> "EvidenceTable":
        rows = np.asarray(rows, dtype=np.int64)
        return EvidenceTable(
            tuple(self.ids_a[i] for i in rows),
            tuple(self.ids_b[i] for i in rows),
            self.names,
            self.values[rows],
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id_a", "id_b", *self.names])
            for a, b, row in zip(self.ids_a, self.ids_b, self.values):
                w.writerow([a, b, *("" if math.isnan(v) else repr(float(v)) for v in row)])

    @classmethod
    def read_csv(cls, path) -> "EvidenceTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            ids_a, ids_b, rows = [], [], []
            for rec in reader:
                ids_a.append(rec[0])
                ids_b.append(rec[1])
                rows.append([float(v) if v != "" else math.nan for v in rec[2:]])
        values = np.array(rows, dtype=float).reshape(len(rows), len(header) - 2)
        return cls(tuple(ids_a), tuple(ids_b), tuple(header[2:]), values)


# ---------------------------------------------------------------------------
# counter-based uniforms


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _id_hash(crime_id: str) -> int:
    return int.from_bytes(hashlib.blake2b(crime_id.encode(), digest_size=8).digest(), "little")


def pair_keys(lo_ids: Sequence[str], hi_ids: Sequence[str], seed: int) -> np.ndarray:
    """Per-pair stream keys; callers pass ids already in canonical order."""
    s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    lo = np.array([_id_hash(i) for i in lo_ids], dtype=np.uint64)
    hi = np.array([_id_hash(i) for i in hi_ids], dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(_mix(lo ^ (s + _GAMMA)) ^ hi)


def _uniforms(keys: np.ndarray, n_draws: int) -> tuple[np.ndarray, np.ndarray]:
    """Two (len(keys), n_draws) uniform blocks: one per crime of each pair."""
    with np.errstate(over="ignore"):
        step = np.arange(1, 2 * n_draws + 1, dtype=np.uint64) * _GAMMA
        z = _mix(keys[:, None] + step[None, :])
    u = (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
    return u[:, 0::2], u[:, 1::2]


# ---------------------------------------------------------------------------
# single-pair operations


def spatial_distance(a: CrimeRecord, b: CrimeRecord) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def _circular(d, period):
    return np.minimum(d, period - d)


def _wrap(v, period):
    return v - period * np.floor(v / period)


def _exact_diffs(ta, tb):
    return (
        np.abs(ta - tb) / 24.0,
        _circular(np.abs(_wrap(ta, 24.0) - _wrap(tb, 24.0)), 24.0),
        _circular(np.abs(_wrap(ta / 24.0, 7.0) - _wrap(tb / 24.0, 7.0)), 7.0),
    )


def _temporal_block(te_lo, tl_lo, te_hi, tl_hi, keys, n_draws):
    """Expected (elapsed days, tod hours, dow days) for aligned pair arrays.

    Pairs where both times are exact skip sampling.
    """
    out = np.empty((len(te_lo), 3))
    exact = (te_lo == tl_lo) & (te_hi == tl_hi)
    if exact.any():
        for k, v in enumerate(_exact_diffs(te_lo[exact], te_hi[exact])):
            out[exact, k] = v
    rows = np.flatnonzero(~exact)
    if len(rows):
        sampled = np.empty((len(rows), 3))
        temporal_mc(
            np.ascontiguousarray(te_lo[rows]), np.ascontiguousarray(tl_lo[rows]),
            np.ascontiguousarray(te_hi[rows]), np.ascontiguousarray(tl_hi[rows]),
            np.ascontiguousarray(keys[rows]), int(n_draws), sampled,
        )
        out[rows] = sampled
    return out


def _temporal_block_numpy(te_lo, tl_lo, te_hi, tl_hi, keys, n_draws):
    """Pure-numpy equivalent of :func:`_temporal_block` (always samples)."""
    out = np.empty((len(te_lo), 3))
    step = max(1, _CHUNK // (2 * n_draws))
    for start in range(0, len(te_lo), step):
        r = np.arange(start, min(start + step, len(te_lo)))
        u_lo, u_hi = _uniforms(keys[r], n_draws)
        ta = te_lo[r, None] + u_lo * (tl_lo - te_lo)[r, None]
        tb = te_hi[r, None] + u_hi * (tl_hi - te_hi)[r, None]
        for k, v in enumerate(_exact_diffs(ta, tb)):
            out[r, k] = v.mean(axis=1)
    return out


def _canonical(a: CrimeRecord, b: CrimeRecord):
    return (a, b) if a.id <= b.id else (b, a)


def expected_temporal_diffs(
    a: CrimeRecord, b: CrimeRecord, cfg: TransformConfig = TransformConfig()
) -> tuple[float, float, float]:
    """Expected (elapsed days, time-of-day hours, day-of-week days) between two crimes."""
    lo, hi = _canonical(a, b)
    keys = pair_keys([lo.id], [hi.id], cfg.rng_seed)
    arr = lambda v: np.array([v], dtype=float)  # noqa: E731
    out = _temporal_block(
        arr(lo.t_earliest), arr(lo.t_latest), arr(hi.t_earliest), arr(hi.t_latest),
        keys, cfg.mc_draws,
    )
    return float(out[0, 0]), float(out[0, 1]), float(out[0, 2])


def category_match(a: CrimeRecord, b: CrimeRecord, name: str) -> Optional[int]:
    """1 if both crimes share the level, 0 if they differ, None if either is missing."""
    if name not in a.categories and name not in b.categories:
        raise KeyError(f"unknown category {name!r}")
    va, vb = a.categories.get(name), b.categories.get(name)
    if va is None or vb is None:
        return None
    return int(va == vb)


def make_evidence(a: CrimeRecord, b: CrimeRecord, cfg: TransformConfig = TransformConfig()) -> Evidence:
    if a.id == b.id:
        raise ValueError("cannot compare a crime with itself")
    names = set(a.categories) | set(b.categories)
    schemas = {}
    for n in names:
        levels = {r.categories.get(n) for r in (a, b)} - {None}
        schemas[n] = tuple(sorted(levels))
    ds = CrimeDataset((a, b), schemas)
    table = evidence_table(ds, [0], [1], cfg)
    return table.row(0)


# ---------------------------------------------------------------------------
# batch evaluation


def _evidence_block(ds: CrimeDataset, ia: np.ndarray, ib: np.ndarray, cfg: TransformConfig) -> np.ndarray:
    cols = ds.columns
    ids = ds.ids
    ia = np.asarray(ia, dtype=np.int64)
    ib = np.asarray(ib, dtype=np.int64)
    id_arr = np.asarray(ids, dtype=object)
    swap = id_arr[ia] > id_arr[ib]
    lo = np.where(swap, ib, ia)
    hi = np.where(swap, ia, ib)

    out = np.full((len(ia), len(cfg.enabled_variables)), np.nan)
    want = {v: k for k, v in enumerate(cfg.enabled_variables)}
    if "spatial" in want:
        out[:, want["spatial"]] = np.hypot(cols["x"][lo] - cols["x"][hi], cols["y"][lo] - cols["y"][hi])
    if TEMPORAL & want.keys():
        keys = pair_keys([ids[i] for i in lo], [ids[i] for i in hi], cfg.rng_seed)
        t = _temporal_block(
            cols["t_earliest"][lo], cols["t_latest"][lo],
            cols["t_earliest"][hi], cols["t_latest"][hi],
            keys, cfg.mc_draws,
        )
        for k, name in enumerate(("temporal", "tod", "dow")):
            if name in want:
                out[:, want[name]] = t[:, k]
    for name in BINARY & want.keys():
        code = cols.get("cat:" + cfg.category_for(name))
        if code is None:
            continue  # category absent from the dataset: all missing
        ca, cb = code[lo], code[hi]
        match = (ca == cb).astype(float)
        match[(ca < 0) | (cb < 0)] = np.nan
        out[:, want[name]] = match
    return out


def evidence_table(
    ds: CrimeDataset,
    ia,
    ib,
    cfg: TransformConfig = TransformConfig(),
    workers: Optional[int] = None,
) -> EvidenceTable:
    """Evidence for the pairs ``(ds.records[ia[k]], ds.records[ib[k]])``.

    ``workers`` > 1 splits the pairs into blocks evaluated on a thread pool;
    the result is identical to the sequential one.
    """
    ia = np.asarray(ia, dtype=np.int64)
    ib = np.asarray(ib, dtype=np.int64)
    if np.any(ia == ib):
        raise ValueError("cannot compare a crime with itself")
    if workers and workers > 1 and len(ia) > 1:
        bounds = np.linspace(0, len(ia), workers + 1).astype(int)
        parts = [(ia[s:e], ib[s:e]) for s, e in zip(bounds[:-1], bounds[1:]) if e > s]
        with ThreadPoolExecutor(workers) as pool:
            blocks = list(pool.map(lambda p: _evidence_block(ds, p[0], p[1], cfg), parts))
        values = np.vstack(blocks)
    else:
        values = _evidence_block(ds, ia, ib, cfg)
    ids = ds.ids
    return EvidenceTable(
        tuple(ids[i] for i in ia), tuple(ids[i] for i in ib), cfg.enabled_variables, values
    )


def pair_evidence(ds: CrimeDataset, pairs: Sequence[tuple[str, str]], cfg: TransformConfig = TransformConfig(), workers=None) -> EvidenceTable:
    """Evidence for pairs given by crime id."""
    idx = ds.index
    ia = [idx[a] for a, _ in pairs]
    ib = [idx[b] for _, b in pairs]
    return evidence_table(ds, ia, ib, cfg, workers=workers)
