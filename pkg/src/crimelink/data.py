"""Crime records, datasets and CSV/JSON-schema ingestion."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np

log = logging.getLogger(__name__)

ROLES = ("id", "x", "y", "t_earliest", "t_latest", "offenders")
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class DataError(ValueError):
    """Raised for malformed input files or records that violate invariants."""

    def __init__(self, message: str, diagnostics: Optional[list[str]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


@dataclass(frozen=True)
class CrimeRecord:
    id: str
    x: float
    y: float
    t_earliest: float  # hours since epoch
    t_latest: float
    categories: Mapping[str, Optional[str]] = field(default_factory=dict)
    offenders: frozenset[str] = frozenset()

    def __post_init__(self):
        if not isinstance(self.offenders, frozenset):
            object.__setattr__(self, "offenders", frozenset(self.offenders))
        for name in ("x", "y"):
            v = getattr(self, name)
            # NaN marks a declared-missing coordinate; infinities are invalid
            if v is not None and math.isinf(v):
                raise DataError(f"crime {self.id}: coordinate {name} is not finite")
        if not (math.isfinite(self.t_earliest) and math.isfinite(self.t_latest)):
            raise DataError(f"crime {self.id}: time bounds must be finite")
        if self.t_earliest > self.t_latest:
            raise DataError(f"crime {self.id}: t_earliest > t_latest")

    @property
    def solved(self) -> bool:
        return bool(self.offenders)

    @property
    def exact_time(self) -> bool:
        return self.t_earliest == self.t_latest


@dataclass(frozen=True)
class CrimeDataset:
    """An immutable, ordered collection of crimes plus categorical schemas.

    ``category_schemas`` maps each categorical attribute to its admissible
    levels.  Column arrays used by the vectorised code paths are built lazily
    and cached.
    """

    records: tuple[CrimeRecord, ...]
    category_schemas: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(
            self,
            "category_schemas",
            {k: tuple(v) for k, v in self.category_schemas.items()},
        )
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise DataError(f"duplicate crime id {r.id!r}")
            seen.add(r.id)
            for name, value in r.categories.items():
                if value is None:
                    continue
                levels = self.category_schemas.get(name)
                if levels is None:
                    raise DataError(f"crime {r.id}: category {name!r} has no schema")
                if value not in levels:
                    raise DataError(f"crime {r.id}: unknown level {value!r} for {name!r}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[CrimeRecord]:
        return iter(self.records)

    def __getitem__(self, crime_id: str) -> CrimeRecord:
        return self.records[self.index[crime_id]]

    def __contains__(self, crime_id) -> bool:
        return crime_id in self.index

    @cached_property
    def index(self) -> dict[str, int]:
        return {r.id: i for i, r in enumerate(self.records)}

    @cached_property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    @cached_property
    def columns(self) -> dict[str, np.ndarray]:
        """Column-oriented view: coordinates, time bounds, category codes (-1 = missing)."""
        cols = {
            "x": np.array([np.nan if r.x is None else r.x for r in self.records], dtype=float),
            "y": np.array([np.nan if r.y is None else r.y for r in self.records], dtype=float),
            "t_earliest": np.array([r.t_earliest for r in self.records], dtype=float),
            "t_latest": np.array([r.t_latest for r in self.records], dtype=float),
        }
        for name, levels in self.category_schemas.items():
            code = {lvl: i for i, lvl in enumerate(levels)}
            cols["cat:" + name] = np.array(
                [code.get(r.categories.get(name), -1) for r in self.records], dtype=np.int64
            )
        return cols

    def subset(self, keep: Iterable[str]) -> "CrimeDataset":
        keep = set(keep)
        return CrimeDataset(tuple(r for r in self.records if r.id in keep), self.category_schemas)

    def filter(self, predicate) -> "CrimeDataset":
        return CrimeDataset(tuple(r for r in self.records if predicate(r)), self.category_schemas)


def solved_subset(ds: CrimeDataset) -> CrimeDataset:
    """Crimes with at least one arrested offender."""
    if all(r.solved for r in ds.records):
        return ds
    return ds.filter(lambda r: r.solved)


# ---------------------------------------------------------------------------
# ingestion


@dataclass(frozen=True)
class IngestSchema:
    """Column-role mapping for CSV ingestion.

    ``columns`` maps CSV column names to roles: ``id``, ``x``, ``y``,
    ``t_earliest``, ``t_latest``, ``offenders`` or ``category:<name>``.
    """

    columns: Mapping[str, str]
    levels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    time_format: str = "hours"  # "hours" or "iso"
    on_unknown_level: str = "skip"  # "skip" or "error"
    on_invalid_row: str = "skip"

    def __post_init__(self):
        if self.time_format not in ("hours", "iso"):
            raise DataError(f"time_format must be 'hours' or 'iso', got {self.time_format!r}")
        for policy in (self.on_unknown_level, self.on_invalid_row):
            if policy not in ("skip", "error"):
                raise DataError(f"row policy must be 'skip' or 'error', got {policy!r}")
        roles = list(self.columns.values())
        for role in roles:
            if role not in ROLES and not role.startswith("category:"):
                raise DataError(f"unknown column role {role!r}")
        for role in ("id", "t_earliest", "t_latest"):
            if roles.count(role) != 1:
                raise DataError(f"schema must map exactly one column to {role!r}")

    @property
    def category_names(self) -> list[str]:
        return [r.split(":", 1)[1] for r in self.columns.values() if r.startswith("category:")]

    def to_json(self) -> dict:
        return {
            "columns": dict(self.columns),
            "levels": {k: list(v) for k, v in self.levels.items()},
            "time_format": self.time_format,
            "on_unknown_level": self.on_unknown_level,
            "on_invalid_row": self.on_invalid_row,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "IngestSchema":
        return cls(
            columns=doc["columns"],
            levels={k: tuple(v) for k, v in doc.get("levels", {}).items()},
            time_format=doc.get("time_format", "hours"),
            on_unknown_level=doc.get("on_unknown_level", "skip"),
            on_invalid_row=doc.get("on_invalid_row", "skip"),
        )

    @classmethod
    def read(cls, path) -> "IngestSchema":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    @classmethod
    def default(cls, categories: Mapping[str, Iterable[str]]) -> "IngestSchema":
        cols = {r: r for r in ROLES}
        cols.update({name: f"category:{name}" for name in categories})
        return cls(columns=cols, levels={k: tuple(v) for k, v in categories.items()})


def default_schema_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".schema.json")


def _parse_time(text: str, fmt: str) -> float:
    if fmt == "hours":
        return float(text)
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return (ts - _EPOCH).total_seconds() / 3600.0


def _parse_float(text: str) -> float:
    return math.nan if text.strip() == "" else float(text)


def load_dataset(path, schema: Optional[IngestSchema] = None) -> CrimeDataset:
    """Read a crime CSV under ``schema`` (default: the ``.schema.json`` sidecar).

    Invalid rows are skipped with a logged diagnostic, or raise
    :class:`DataError` when the schema's row policy is ``"error"``.
    """
    path = Path(path)
    if schema is None:
        sidecar = default_schema_path(path)
        if not sidecar.exists():
            raise DataError(f"no schema given and sidecar {sidecar} not found")
        schema = IngestSchema.read(sidecar)
    if not path.exists():
        raise DataError(f"{path}: file not found")

    role_col = {}
    cat_cols = {}
    for col, role in schema.columns.items():
        if role.startswith("category:"):
            cat_cols[role.split(":", 1)[1]] = col
        else:
            role_col[role] = col
    levels = {name: tuple(schema.levels.get(name, ())) for name in cat_cols}
    infer_levels = {name for name, lv in levels.items() if not lv}
    inferred: dict[str, set] = {name: set() for name in infer_levels}

    records = []
    diagnostics = []
    seen = set()
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        missing_cols = [c for c in schema.columns if c not in (reader.fieldnames or [])]
        if missing_cols:
            raise DataError(f"{path}: missing columns {missing_cols}")
        for lineno, row in enumerate(reader, start=2):
            rid = (row[role_col["id"]] or "").strip()
            try:
                if not rid:
                    raise _RowProblem("empty id", schema.on_invalid_row)
                if rid in seen:
                    raise _RowProblem(f"duplicate id {rid!r}", schema.on_invalid_row)
                cats = {}
                for name, col in cat_cols.items():
                    value = (row[col] or "").strip()
                    if value == "":
                        cats[name] = None
                        continue
                    if name in infer_levels:
                        inferred[name].add(value)
                    elif value not in levels[name]:
                        raise _RowProblem(
                            f"unknown level {value!r} for category {name!r}", schema.on_unknown_level
                        )
                    cats[name] = value
                off_text = (row[role_col["offenders"]] or "").strip() if "offenders" in role_col else ""
                try:
                    rec = CrimeRecord(
                        id=rid,
                        x=_parse_float(row[role_col["x"]]) if "x" in role_col else math.nan,
                        y=_parse_float(row[role_col["y"]]) if "y" in role_col else math.nan,
                        t_earliest=_parse_time(row[role_col["t_earliest"]], schema.time_format),
                        t_latest=_parse_time(row[role_col["t_latest"]], schema.time_format),
                        categories=cats,
                        offenders=frozenset(o.strip() for o in off_text.split(";") if o.strip()),
                    )
                except (DataError, ValueError, TypeError) as exc:
                    raise _RowProblem(str(exc), schema.on_invalid_row) from exc
            except _RowProblem as exc:
                msg = f"line {lineno}, crime {rid or '?'}: {exc}"
                if exc.policy == "error":
                    raise DataError(msg, diagnostics + [msg]) from exc
                diagnostics.append(msg)
                continue
            seen.add(rid)
            records.append(rec)

    for msg in diagnostics:
        log.warning("skipped row: %s", msg)
    for name in infer_levels:
        levels[name] = tuple(sorted(inferred[name]))
    ds = CrimeDataset(tuple(records), levels)
    object.__setattr__(ds, "_diagnostics", diagnostics)
    return ds


class _RowProblem(Exception):
    def __init__(self, message: str, policy: str):
        super().__init__(message)
        self.policy = policy


def load_diagnostics(ds: CrimeDataset) -> list[str]:
    """Row-level messages recorded by :func:`load_dataset` for skipped rows."""
    return list(getattr(ds, "_diagnostics", []))


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def save_dataset(ds: CrimeDataset, path, schema_path=None) -> Path:
    """Write ``ds`` as CSV plus a JSON schema sidecar; returns the sidecar path."""
    path = Path(path)
    names = list(ds.category_schemas)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "t_earliest", "t_latest", *names, "offenders"])
        for r in ds.records:
            w.writerow(
                [r.id, _fmt(r.x), _fmt(r.y), repr(float(r.t_earliest)), repr(float(r.t_latest))]
                + [r.categories.get(n) or "" for n in names]
                + [";".join(sorted(r.offenders))]
            )
    schema = IngestSchema.default(ds.category_schemas)
    schema_path = Path(schema_path) if schema_path else default_schema_path(path)
    with open(schema_path, "w") as fh:
        json.dump(schema.to_json(), fh, indent=2)
    return schema_path


def read_truth(path) -> dict[str, frozenset[str]]:
    """Ground-truth sidecar: ``crime_id,offender_ids`` (semicolon separated)."""
    truth = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            truth[row["crime_id"]] = frozenset(o for o in row["offender_ids"].split(";") if o)
    return truth


def write_truth(truth: Mapping[str, frozenset[str]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["crime_id", "offender_ids"])
        for cid, offs in truth.items():
            w.writerow([cid, ";".join(sorted(offs))])
