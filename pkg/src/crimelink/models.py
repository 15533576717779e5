"""Bayes-factor models for pairwise case linkage.

Two estimators are provided: a naive Bayes model over discretised evidence
(the log Bayes factor is a sum of per-variable components) and a weighted
logistic regression whose linear predictor, minus the log prior odds of the
training sample, estimates the log Bayes factor.  :class:`ExternalScores`
lets log Bayes factors computed elsewhere pass through the same harness.

Every scorer exposes ``pair_scores(ds, ia, ib, cfg)`` returning the log
Bayes factor for the crime pairs ``(ia[k], ib[k])`` of ``ds``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .data import CrimeDataset
from .evidence import BINARY, CONTINUOUS, EvidenceTable, TransformConfig, evidence_table
from .pairs import WeightedPair, canonical, pair_weights

FORMAT_VERSION = 1


class ModelError(ValueError):
    pass


class SeparationError(ModelError):
    """The training classes are (quasi-)perfectly separated by the evidence."""


class ConvergenceError(ModelError):
    pass


# ---------------------------------------------------------------------------
# binning


@dataclass(frozen=True)
class BinScheme:
    """Interior cut points of an equal-frequency discretisation.

    Bin ``k`` holds values in ``(cut[k-1], cut[k]]``; values outside the
    training range fall into the first or last bin.
    """

    variable: str
    cut_points: tuple[float, ...]
    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        c = np.asarray(self.cut_points, dtype=float)
        if np.any(np.diff(c) <= 0):
            raise ModelError(f"{self.variable}: cut points must be strictly ascending")

    @property
    def n_bins(self) -> int:
        return len(self.cut_points) + 1

    def assign(self, values) -> np.ndarray:
        """Bin index per value; -1 for missing (NaN)."""
        v = np.asarray(values, dtype=float)
        idx = np.searchsorted(np.asarray(self.cut_points, dtype=float), v, side="left")
        return np.where(np.isnan(v), -1, idx)

    def edges(self) -> list[tuple[float, float]]:
        bounds = [self.lo, *self.cut_points, self.hi]
        return list(zip(bounds[:-1], bounds[1:]))


def equal_frequency_cuts(values, weights, n_bins: int) -> np.ndarray:
    """Interior cut points placing ~equal total weight in each of ``n_bins`` bins.

    The k-th cut is the smallest observed value whose cumulative weight
    reaches ``k/n_bins`` of the total.  Tied or degenerate cuts are merged,
    so fewer bins may result.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    keep = ~np.isnan(v)
    v, w = v[keep], w[keep]
    if len(v) == 0:
        return np.empty(0)
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    cum = np.cumsum(w)
    total = cum[-1]
    targets = total * np.arange(1, n_bins) / n_bins
    idx = np.minimum(np.searchsorted(cum, targets, side="left"), len(v) - 1)
    cuts = np.unique(v[idx])
    return cuts[cuts < v[-1]]


# ---------------------------------------------------------------------------
# naive Bayes


@dataclass(frozen=True)
class Component:
    """One variable's contribution: a log Bayes factor per bin."""

    variable: str
    kind: str  # "continuous" or "binary"
    log_bf: tuple[float, ...]
    linked_mass: tuple[float, ...]
    unlinked_mass: tuple[float, ...]
    bins: Optional[BinScheme] = None

    def assign(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if self.kind == "binary":
            if np.any(~np.isnan(v) & (v != 0) & (v != 1)):
                raise ModelError(f"{self.variable}: binary evidence must be 0 or 1")
            return np.where(np.isnan(v), -1, v).astype(np.int64)
        return self.bins.assign(v)

    def scores(self, values) -> np.ndarray:
        idx = self.assign(values)
        table = np.asarray(self.log_bf, dtype=float)
        return np.where(idx < 0, 0.0, table[np.maximum(idx, 0)])


def _variable_kind(name: str, column: np.ndarray, kinds: Optional[Mapping[str, str]]) -> str:
    if kinds and name in kinds:
        return kinds[name]
    if name in BINARY:
        return "binary"
    if name in CONTINUOUS:
        return "continuous"
    observed = column[~np.isnan(column)]
    return "binary" if np.isin(observed, (0.0, 1.0)).all() else "continuous"


def _component_from_masses(name, kind, l, u, alpha, bins=None) -> Component:
    K = len(l)
    L, U = l.sum(), u.sum()
    pl = (l + alpha) / (L + alpha * K)
    pu = (u + alpha) / (U + alpha * K)
    with np.errstate(divide="ignore"):
        log_bf = np.log(pl) - np.log(pu)
    return Component(name, kind, tuple(log_bf), tuple(pl), tuple(pu), bins)


@dataclass(frozen=True)
class NaiveBayesModel:
    components: Mapping[str, Component]
    alpha: float = 1.0
    n_bins: int = 20
    dropped: frozenset[str] = frozenset()

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(self.components)

    def component_scores(self, names: Sequence[str], values: np.ndarray) -> np.ndarray:
        """(n, n_model_variables) matrix of per-component log Bayes factors."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        unknown = [n for n in names if n not in self.components and n not in self.dropped]
        if unknown:
            raise ModelError(f"unknown evidence variables {unknown}")
        pos = {n: k for k, n in enumerate(names)}
        out = np.zeros((values.shape[0], len(self.components)))
        for j, (name, comp) in enumerate(self.components.items()):
            if name in pos:
                out[:, j] = comp.scores(values[:, pos[name]])
        return out

    def score_table(self, table: EvidenceTable) -> np.ndarray:
        return _sum_components(self.component_scores(table.names, table.values))

    def score(self, x: Mapping[str, float]) -> float:
        names = tuple(x)
        vals = np.array([[np.nan if x[n] is None else x[n] for n in names]], dtype=float)
        return float(_sum_components(self.component_scores(names, vals))[0])

    def pair_scores(self, ds: CrimeDataset, ia, ib, cfg: TransformConfig = TransformConfig()) -> np.ndarray:
        return self.score_table(evidence_table(ds, ia, ib, _restrict(cfg, self.variables)))

    def to_json(self) -> dict:
        comps = []
        for c in self.components.values():
            comps.append({
                "variable": c.variable,
                "kind": c.kind,
                "cut_points": list(c.bins.cut_points) if c.bins else None,
                "range": [c.bins.lo, c.bins.hi] if c.bins else None,
                "log_bf": list(c.log_bf),
                "linked_mass": list(c.linked_mass),
                "unlinked_mass": list(c.unlinked_mass),
            })
        return {
            "format": "crimelink.naive_bayes",
            "version": FORMAT_VERSION,
            "alpha": self.alpha,
            "n_bins": self.n_bins,
            "dropped": sorted(self.dropped),
            "components": comps,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "NaiveBayesModel":
        comps = {}
        for c in doc["components"]:
            bins = None
            if c["cut_points"] is not None:
                lo, hi = c["range"]
                bins = BinScheme(c["variable"], tuple(c["cut_points"]), lo, hi)
            comps[c["variable"]] = Component(
                c["variable"], c["kind"], tuple(c["log_bf"]),
                tuple(c["linked_mass"]), tuple(c["unlinked_mass"]), bins,
            )
        return cls(comps, doc["alpha"], doc["n_bins"], frozenset(doc.get("dropped", ())))

    def curves(self) -> list[dict]:
        """Rows (variable, bin, lower, upper, log_bf) for component plots."""
        rows = []
        for c in self.components.values():
            edges = c.bins.edges() if c.bins else [(0.0, 0.0), (1.0, 1.0)]
            for k, ((lo, hi), v) in enumerate(zip(edges, c.log_bf)):
                rows.append({"variable": c.variable, "bin": k, "lower": lo, "upper": hi, "log_bf": v})
        return rows


def _sum_components(comp: np.ndarray) -> np.ndarray:
    # left-to-right accumulation; the scalar and batch paths share it
    total = np.zeros(comp.shape[0])
    for j in range(comp.shape[1]):
        total = total + comp[:, j]
    return total


def _restrict(cfg: TransformConfig, variables) -> TransformConfig:
    wanted = tuple(v for v in cfg.enabled_variables if v in set(variables))
    return replace(cfg, enabled_variables=wanted)


def fit_naive_bayes(
    pairs: Sequence[WeightedPair],
    evidence: EvidenceTable,
    n_bins: int = 20,
    alpha: float = 1.0,
    kinds: Optional[Mapping[str, str]] = None,
) -> NaiveBayesModel:
    """Fit per-variable component Bayes factors from weighted training pairs.

    ``evidence`` row ``k`` must describe ``pairs[k]``.  Continuous variables
    are cut at weighted equal-frequency quantiles of the pooled sample;
    binary variables use their two levels.  Component k's Bayes factor is
    ``((l_k + a) / (L + aK)) / ((u_k + a) / (U + aK))``.
    """
    if len(pairs) != len(evidence):
        raise ModelError("pairs and evidence rows are not aligned")
    linked, w = pair_weights(pairs)
    if w[linked].sum() <= 0 or w[~linked].sum() <= 0:
        raise ModelError("both linked and unlinked pairs with positive weight are required")
    if alpha < 0:
        raise ModelError("alpha must be non-negative")

    comps = {}
    for j, name in enumerate(evidence.names):
        col = evidence.values[:, j]
        kind = _variable_kind(name, col, kinds)
        if kind == "binary":
            bins = None
            idx = np.where(np.isnan(col), -1, col).astype(np.int64)
            K = 2
        else:
            cuts = equal_frequency_cuts(col, w, n_bins)
            if len(cuts) + 1 < n_bins:
                warnings.warn(
                    f"{name}: only {len(cuts) + 1} distinct bins available (asked for {n_bins})",
                    stacklevel=2,
                )
            observed = col[~np.isnan(col)]
            lo, hi = (float(observed.min()), float(observed.max())) if len(observed) else (0.0, 0.0)
            bins = BinScheme(name, tuple(float(c) for c in cuts), lo, hi)
            idx = bins.assign(col)
            K = bins.n_bins
        ok = idx >= 0
        l = np.bincount(idx[ok & linked], weights=w[ok & linked], minlength=K)
        u = np.bincount(idx[ok & ~linked], weights=w[ok & ~linked], minlength=K)
        comps[name] = _component_from_masses(name, kind, l, u, alpha, bins)
    return NaiveBayesModel(comps, alpha, n_bins)


def score_naive_bayes(m: NaiveBayesModel, x: Mapping[str, float]) -> float:
    return m.score(x)


def drop_component(m: NaiveBayesModel, variable: str) -> NaiveBayesModel:
    """Remove one component; the remaining ones are untouched (no refit)."""
    if variable not in m.components:
        raise ModelError(f"model has no component {variable!r}")
    comps = {k: v for k, v in m.components.items() if k != variable}
    return replace(m, components=comps, dropped=m.dropped | {variable})


# ---------------------------------------------------------------------------
# logistic regression


def _sigmoid(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def log_likelihood(beta, X, y, w) -> float:
    eta = X @ beta
    return float(np.sum(w * (y * eta - np.logaddexp(0.0, eta))))


def gradient(beta, X, y, w) -> np.ndarray:
    return X.T @ (w * (y - _sigmoid(X @ beta)))


def information(beta, X, w) -> np.ndarray:
    mu = _sigmoid(X @ beta)
    return X.T @ ((w * mu * (1.0 - mu))[:, None] * X)


def check_separation(X, y, tol: float = 1e-7) -> bool:
    """True if some non-zero direction separates the classes (complete or quasi).

    Solves ``max sum_i s_i x_i.b`` subject to ``s_i x_i.b >= 0`` and
    ``|b| <= 1``; a positive optimum means the likelihood has no finite maximum.
    """
    s = np.where(np.asarray(y) > 0, 1.0, -1.0)
    A = s[:, None] * X
    res = linprog(
        -A.sum(axis=0), A_ub=-A, b_ub=np.zeros(len(A)),
        bounds=[(-1, 1)] * X.shape[1], method="highs",
    )
    if res.status != 0:
        return False
    return -res.fun > tol * max(1.0, np.abs(A).sum(axis=0).max())


@dataclass(frozen=True)
class LogisticModel:
    """Weighted logistic fit; ``intercept`` absorbs the log prior odds ``phi``."""

    names: tuple[str, ...]
    intercept: float
    coefficients: tuple[float, ...]
    phi: float
    std_errors: tuple[float, ...] = ()
    missing: str = "complete"  # or "mean"
    means: tuple[float, ...] = ()
    n_iter: int = 0

    @property
    def beta0(self) -> float:
        """Intercept of the log Bayes factor (fitted intercept minus phi)."""
        return self.intercept - self.phi

    @property
    def variables(self) -> tuple[str, ...]:
        return self.names

    def _design(self, names: Sequence[str], values: np.ndarray) -> np.ndarray:
        values = np.atleast_2d(np.asarray(values, dtype=float))
        pos = {n: k for k, n in enumerate(names)}
        unknown = [n for n in names if n not in self.names]
        if unknown:
            raise ModelError(f"unknown evidence variables {unknown}")
        cols = []
        for k, n in enumerate(self.names):
            col = values[:, pos[n]] if n in pos else np.full(values.shape[0], np.nan)
            if np.isnan(col).any():
                if self.missing != "mean":
                    raise ModelError(f"missing {n!r} evidence under the complete-case policy")
                col = np.where(np.isnan(col), self.means[k], col)
            cols.append(col)
        return np.column_stack(cols) if cols else np.empty((values.shape[0], 0))

    def linear_predictor(self, names, values) -> np.ndarray:
        return self.intercept + self._design(names, values) @ np.asarray(self.coefficients)

    def score_table(self, table: EvidenceTable) -> np.ndarray:
        return self.linear_predictor(table.names, table.values) - self.phi

    def score(self, x: Mapping[str, float]) -> float:
        names = tuple(x)
        vals = np.array([[np.nan if x[n] is None else x[n] for n in names]], dtype=float)
        return float(self.linear_predictor(names, vals)[0] - self.phi)

    def pair_scores(self, ds: CrimeDataset, ia, ib, cfg: TransformConfig = TransformConfig()) -> np.ndarray:
        return self.score_table(evidence_table(ds, ia, ib, _restrict(cfg, self.names)))

    def to_json(self) -> dict:
        return {
            "format": "crimelink.logistic",
            "version": FORMAT_VERSION,
            "names": list(self.names),
            "intercept": self.intercept,
            "coefficients": list(self.coefficients),
            "phi": self.phi,
            "std_errors": list(self.std_errors),
            "missing": self.missing,
            "means": list(self.means),
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "LogisticModel":
        return cls(
            tuple(doc["names"]), doc["intercept"], tuple(doc["coefficients"]), doc["phi"],
            tuple(doc.get("std_errors", ())), doc.get("missing", "complete"),
            tuple(doc.get("means", ())), doc.get("n_iter", 0),
        )

    def summary(self) -> list[dict]:
        """Estimate / SE / z rows, intercept first (reported on the log-BF scale)."""
        est = [self.beta0, *self.coefficients]
        labels = ["(Intercept)", *self.names]
        ses = list(self.std_errors) or [math.nan] * len(est)
        return [
            {"term": t, "estimate": e, "se": s, "z": e / s if s else math.nan}
            for t, e, s in zip(labels, est, ses)
        ]


def fit_logistic(
    pairs: Sequence[WeightedPair],
    evidence: EvidenceTable,
    max_iter: int = 50,
    tol: float = 1e-8,
    missing: str = "complete",
) -> LogisticModel:
    """Weighted maximum-likelihood logistic regression by IRLS (Newton steps)."""
    if len(pairs) != len(evidence):
        raise ModelError("pairs and evidence rows are not aligned")
    if missing not in ("complete", "mean"):
        raise ModelError(f"unknown missing policy {missing!r}")
    linked, w = pair_weights(pairs)
    V = evidence.values
    means = ()
    if missing == "complete":
        keep = ~np.isnan(V).any(axis=1)
        V, linked, w = V[keep], linked[keep], w[keep]
    else:
        means = tuple(float(np.nanmean(V[:, j])) if (~np.isnan(V[:, j])).any() else 0.0
                      for j in range(V.shape[1]))
        V = np.where(np.isnan(V), np.asarray(means)[None, :], V)
    if w[linked].sum() <= 0 or w[~linked].sum() <= 0:
        raise ModelError("both linked and unlinked pairs with positive weight are required")

    X = np.column_stack([np.ones(len(V)), V])
    y = linked.astype(float)
    if check_separation(X, y):
        raise SeparationError("evidence perfectly separates linked from unlinked pairs")

    beta = np.zeros(X.shape[1])
    for it in range(1, max_iter + 1):
        step = np.linalg.solve(information(beta, X, w), gradient(beta, X, y, w))
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    else:
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations")

    cov = np.linalg.inv(information(beta, X, w))
    se = np.sqrt(np.diag(cov))
    phi = math.log(w[linked].sum() / w[~linked].sum())
    return LogisticModel(
        tuple(evidence.names), float(beta[0]), tuple(float(b) for b in beta[1:]), phi,
        tuple(float(s) for s in se), missing, means, it,
    )


def score_logistic(m: LogisticModel, x: Mapping[str, float]) -> float:
    return m.score(x)


# ---------------------------------------------------------------------------
# externally computed scores


@dataclass(frozen=True)
class ExternalScores:
    """Log Bayes factors supplied per crime pair (e.g. from a third-party model)."""

    scores: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def lookup(self, a: str, b: str) -> float:
        try:
            return self.scores[canonical(a, b)]
        except KeyError:
            raise ModelError(f"no external score for pair ({a}, {b})") from None

    def pair_scores(self, ds: CrimeDataset, ia, ib, cfg: TransformConfig = TransformConfig()) -> np.ndarray:
        ids = ds.ids
        return np.array([self.lookup(ids[i], ids[j]) for i, j in zip(ia, ib)], dtype=float)

    @classmethod
    def read_csv(cls, path) -> "ExternalScores":
        scores = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                scores[canonical(row["id_a"], row["id_b"])] = float(row["score"])
        return cls(scores)


# ---------------------------------------------------------------------------
# decisions


def posterior_odds(log_bf: float, prior_odds: float) -> float:
    if prior_odds <= 0:
        raise ValueError("prior odds must be positive")
    return math.exp(log_bf) * prior_odds


@dataclass(frozen=True)
class LinkageDecision:
    bf_threshold: float

    def __post_init__(self):
        if not self.bf_threshold > 0:
            raise ValueError("Bayes factor threshold must be positive")

    @property
    def log_threshold(self) -> float:
        return math.log(self.bf_threshold)

    def link(self, log_bf: float) -> bool:
        return log_bf >= self.log_threshold


def decision_threshold(
    prior_odds_unlinked_to_linked: float, cost_false_link: float, cost_missed_link: float
) -> LinkageDecision:
    """Bayes-factor threshold minimising expected cost of the link decision."""
    if min(prior_odds_unlinked_to_linked, cost_false_link, cost_missed_link) <= 0:
        raise ValueError("prior odds and costs must be positive")
    return LinkageDecision(prior_odds_unlinked_to_linked * cost_false_link / cost_missed_link)


# ---------------------------------------------------------------------------
# persistence


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_json(), fh, indent=2)


def load_model(path):
    with open(path) as fh:
        doc = json.load(fh)
    fmt = doc.get("format")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelError(f"unsupported model version {doc.get('version')!r}")
    if fmt == "crimelink.naive_bayes":
        return NaiveBayesModel.from_json(doc)
    if fmt == "crimelink.logistic":
        return LogisticModel.from_json(doc)
    raise ModelError(f"unknown model format {fmt!r}")


def write_curves(model: NaiveBayesModel, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, ["variable", "bin", "lower", "upper", "log_bf"])
        w.writeheader()
        w.writerows(model.curves())
