"""Synthetic crime data with controllable offender consistency.

Each offender has a spatial anchor, an activity window, a preferred time of
day and weekday, and a categorical preference profile.  Their crimes scatter
around these preferences; ``sigma_series`` and ``concentration`` control how
consistent a series is, ``sigma_anchor`` how distinctive offenders are from
one another.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np

from .data import CrimeDataset, CrimeRecord

# crime series length frequencies 1, 2, 3, 4, 5+ (5+ spread over 5..10)
SERIES_LENGTH_COUNTS = (871, 99, 38, 13, 9, 6, 4, 3, 2, 2)
DEFAULT_LEVELS = {"prop": 34, "poe": 8, "moe": 16}


class ConfigError(ValueError):
    pass


def _normalised(counts) -> tuple[float, ...]:
    c = np.asarray(counts, dtype=float)
    return tuple(float(v) for v in c / c.sum())


@dataclass(frozen=True)
class GeneratorConfig:
    n_offenders: int = 500
    series_length_probs: tuple[float, ...] = _normalised(SERIES_LENGTH_COUNTS)  # P(length = 1, 2, ...)
    region: tuple[float, float, float, float] = (0.0, 40.0, 0.0, 40.0)  # xmin, xmax, ymin, ymax (km)
    n_hotspots: int = 8
    sigma_anchor: float = 6.0  # km, spread of offender anchors around hotspots
    sigma_series: float = 0.5  # km, spread of a series around its anchor
    category_levels: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_LEVELS))
    concentration: float = 20.0  # Dirichlet weight on an offender's favourite level
    background: float = 0.5  # Dirichlet weight on every level
    co_offend_prob: float = 0.6  # chance of joining a crew, and of each shared crime being joint
    exact_fraction: float = 0.26
    censor_mean_hours: float = 8.0
    span_days: float = 2190.0
    activity_days: float = 365.0
    tod_sd_hours: float = 2.0
    dow_consistency: float = 0.3
    unsolved_fraction: float = 0.3
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "series_length_probs", tuple(self.series_length_probs))
        object.__setattr__(self, "region", tuple(self.region))
        object.__setattr__(self, "category_levels", dict(self.category_levels))
        if self.n_offenders < 2:
            raise ConfigError("need at least two offenders")
        p = np.asarray(self.series_length_probs)
        if len(p) == 0 or np.any(p < 0) or not math.isclose(p.sum(), 1.0, rel_tol=1e-9):
            raise ConfigError("series_length_probs must be a normalised distribution")
        for name in ("sigma_anchor", "sigma_series", "censor_mean_hours", "tod_sd_hours",
                     "concentration", "background", "activity_days", "span_days"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("co_offend_prob", "exact_fraction", "dow_consistency", "unsolved_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        xmin, xmax, ymin, ymax = self.region
        if not (xmax > xmin and ymax > ymin):
            raise ConfigError("empty region")
        if self.activity_days >= self.span_days:
            raise ConfigError("study span is too short for the offender activity window")
        if any(k < 2 for k in self.category_levels.values()):
            raise ConfigError("each category needs at least two levels")

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["series_length_probs"] = list(self.series_length_probs)
        doc["region"] = list(self.region)
        doc["concentration"] = _num_out(self.concentration)
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "GeneratorConfig":
        doc = dict(doc)
        if "concentration" in doc:
            doc["concentration"] = float(doc["concentration"])
        for key in ("series_length_probs", "region"):
            if key in doc:
                doc[key] = tuple(doc[key])
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown generator options {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def read(cls, path) -> "GeneratorConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _num_out(v: float):
    return v if math.isfinite(v) else str(v)


def perfect_consistency(cfg: GeneratorConfig = GeneratorConfig()) -> GeneratorConfig:
    """The consistency limit: every series sits on its anchor with fixed
    categories and times of day, with no crews or hidden labels to blur it."""
    return replace(cfg, sigma_series=1e-6, concentration=math.inf, tod_sd_hours=1e-6,
                   dow_consistency=1.0, exact_fraction=1.0, co_offend_prob=0.0,
                   unsolved_fraction=0.0)


def _profile(rng, n_levels, popularity, cfg) -> np.ndarray:
    fav = rng.choice(n_levels, p=popularity)
    g = rng.gamma(cfg.background, size=n_levels)  # drawn even in the limit to keep streams aligned
    if math.isinf(cfg.concentration):
        p = np.zeros(n_levels)
        p[fav] = 1.0
        return p
    g[fav] += rng.gamma(cfg.concentration)
    return g / g.sum()


def generate(cfg: GeneratorConfig = GeneratorConfig()) -> CrimeDataset:
    """A fully labelled synthetic dataset (every crime carries its offenders)."""
    rng = np.random.default_rng(cfg.rng_seed)
    n = cfg.n_offenders
    xmin, xmax, ymin, ymax = cfg.region
    levels = {name: tuple(f"{name}{k:02d}" for k in range(k_levels))
              for name, k_levels in sorted(cfg.category_levels.items())}
    popularity = {name: rng.dirichlet(np.ones(len(lv))) for name, lv in levels.items()}

    hotspots = np.column_stack([rng.uniform(xmin, xmax, cfg.n_hotspots),
                                rng.uniform(ymin, ymax, cfg.n_hotspots)])
    home = rng.integers(cfg.n_hotspots, size=n)
    anchors = hotspots[home] + rng.normal(0.0, cfg.sigma_anchor, size=(n, 2))
    anchors[:, 0] = np.clip(anchors[:, 0], xmin, xmax)
    anchors[:, 1] = np.clip(anchors[:, 1], ymin, ymax)
    lengths = rng.choice(len(cfg.series_length_probs), p=cfg.series_length_probs, size=n) + 1
    starts = rng.uniform(0.0, cfg.span_days - cfg.activity_days, size=n)
    pref_hour = rng.uniform(0.0, 24.0, size=n)
    pref_dow = rng.integers(7, size=n)
    profiles = [{name: _profile(rng, len(lv), popularity[name], cfg) for name, lv in levels.items()}
                for _ in range(n)]

    # crews: each offender may be paired with its nearest unpaired neighbour
    partner = np.full(n, -1)
    order = rng.permutation(n)
    pair_draw = rng.random(n)
    for i in order:
        if partner[i] >= 0 or pair_draw[i] >= cfg.co_offend_prob:
            continue
        d = np.hypot(*(anchors - anchors[i]).T)
        d[i] = np.inf
        d[partner >= 0] = np.inf
        j = int(np.argmin(d))
        if math.isfinite(d[j]):
            partner[i], partner[j] = j, i

    events = []  # (t_hours, x, y, categories, offender set)
    for i in range(n):
        k = lengths[i]
        z = rng.normal(size=(k, 2))
        day_u = rng.random(k)
        hour_z = rng.normal(size=k)
        dow_u = rng.random(k)
        cat_u = {name: rng.random(k) for name in levels}
        joint_u = rng.random(k)
        for c in range(k):
            x = float(np.clip(anchors[i, 0] + cfg.sigma_series * z[c, 0], xmin, xmax))
            y = float(np.clip(anchors[i, 1] + cfg.sigma_series * z[c, 1], ymin, ymax))
            day = math.floor(starts[i] + day_u[c] * cfg.activity_days)
            if dow_u[c] < cfg.dow_consistency:
                day += (pref_dow[i] - day) % 7
            hour = (pref_hour[i] + cfg.tod_sd_hours * hour_z[c]) % 24.0
            cats = {}
            for name, lv in levels.items():
                cdf = np.cumsum(profiles[i][name])
                cats[name] = lv[min(int(np.searchsorted(cdf, cat_u[name][c] * cdf[-1], side="right")), len(lv) - 1)]
            events.append([day * 24.0 + hour, x, y, cats, {i}, joint_u[c], c])

    # joint crimes: crime c of the lower-indexed partner also counts as crime c
    # of the other, so both series keep their drawn lengths
    by_owner: dict[int, list[int]] = {}
    for e, ev in enumerate(events):
        by_owner.setdefault(next(iter(ev[4])), []).append(e)
    dropped = set()
    for i in range(n):
        j = partner[i]
        if j < 0 or i > j:
            continue
        shared = min(lengths[i], lengths[j])
        for c in range(shared):
            if events[by_owner[i][c]][5] < cfg.co_offend_prob:
                events[by_owner[i][c]][4] = {i, j}
                dropped.add(by_owner[j][c])

    width_u = rng.random(len(events))
    exact_u = rng.random(len(events))
    widths = rng.exponential(cfg.censor_mean_hours, size=len(events))
    kept = [e for e in range(len(events)) if e not in dropped]
    kept.sort(key=lambda e: (events[e][0], e))
    digits = max(5, len(str(len(kept))))
    records = []
    for rank, e in enumerate(kept, start=1):
        t, x, y, cats, offs = events[e][:5]
        if exact_u[e] < cfg.exact_fraction:
            lo = hi = t
        else:
            lo, hi = t - width_u[e] * widths[e], t + (1 - width_u[e]) * widths[e]
        records.append(CrimeRecord(
            f"C{rank:0{digits}d}", x, y, float(lo), float(hi), cats,
            frozenset(f"O{o:05d}" for o in offs),
        ))
    return CrimeDataset(tuple(records), levels)


def hide_labels(ds: CrimeDataset, fraction: float, rng_seed: int = 0):
    """Erase offenders from a random ``fraction`` of crimes.

    Returns the observed dataset and the ground truth (crime id -> offenders).
    """
    rng = np.random.default_rng([rng_seed, 7919])
    erase = rng.random(len(ds)) < fraction
    truth = {r.id: r.offenders for r in ds.records}
    observed = tuple(replace(r, offenders=frozenset()) if e else r for r, e in zip(ds.records, erase))
    return CrimeDataset(observed, ds.category_schemas), truth


def simulate(cfg: GeneratorConfig = GeneratorConfig()):
    """``generate`` followed by ``hide_labels`` with the configured unsolved fraction."""
    return hide_labels(generate(cfg), cfg.unsolved_fraction, cfg.rng_seed)


def split_train_test(ds: CrimeDataset, cutoff_time: float) -> tuple[CrimeDataset, CrimeDataset]:
    """Crimes starting before ``cutoff_time`` (hours) train; the rest test."""
    train = ds.filter(lambda r: r.t_earliest < cutoff_time)
    test = ds.filter(lambda r: r.t_earliest >= cutoff_time)
    if not len(train):
        raise ValueError("cutoff leaves the training period empty")
    if not len(test):
        raise ValueError("cutoff leaves the testing period empty")
    return train, test


def offender_overlap(train: CrimeDataset, test: CrimeDataset) -> dict:
    """How many test-period offenders also appear in the training period."""
    before = {o for r in train.records for o in r.offenders}
    after = {o for r in test.records for o in r.offenders}
    both = before & after
    return {
        "train_offenders": len(before),
        "test_offenders": len(after),
        "test_offenders_with_history": len(both),
        "coverage": len(both) / len(after) if after else math.nan,
    }


def series_lengths(ds: CrimeDataset) -> dict[str, int]:
    counts: dict[str, int] = {}
    for r in ds.records:
        for o in r.offenders:
            counts[o] = counts.get(o, 0) + 1
    return counts


def default_cutoff(cfg: GeneratorConfig) -> float:
    """Start of the final year of the study span, in hours."""
    return (cfg.span_days - 365.0) * 24.0
