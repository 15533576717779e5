"""End-to-end demo: simulate, fit, and write every evaluation report."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .cluster import cluster, pairwise_similarities, save_dendrogram
from .data import CrimeDataset, save_dataset, write_truth
from .evaluation import (
    PairLabels,
    clustering_eval,
    labeled_scores,
    precision_curve,
    roc_curve,
    series_id_eval,
    suspect_eval,
    write_csv,
    write_json,
)
from .evidence import TransformConfig, pair_evidence
from .models import (
    ModelError,
    drop_component,
    fit_logistic,
    fit_naive_bayes,
    save_model,
    write_curves,
)
from .pairs import training_pairs, write_pairs
from .series import LINKAGES, offender_histories
from .synth import GeneratorConfig, offender_overlap, simulate, split_train_test

CLUSTER_FIELDS = ["linkage", "threshold", "n_clusters", "n_series", "linked_pairs_in_series",
                  "unlinked_pairs_in_series", "unknown_pairs_in_series", "vi"]
SERIES_FIELDS = ["stratum", "linkage", "pool", "n_series"]
SUSPECT_STATS = [("size_q1", "list size 1st quartile"), ("size_median", "list size median"),
                 ("size_mean", "list size mean"), ("size_q3", "list size 3rd quartile"),
                 ("conditional", "P(offender in list | offender in pool)"),
                 ("overall", "P(offender in list)")]


@dataclass(frozen=True)
class PipelineConfig:
    generator: GeneratorConfig = GeneratorConfig()
    transform: TransformConfig = TransformConfig()
    cutoff_days: Optional[float] = None  # default: the final 365 days are the test period
    n_bins: int = 20
    alpha: float = 1.0
    k_unlinked: int = 20
    max_days: float = 365.0
    pairs_seed: int = 0
    linkages: tuple[str, ...] = LINKAGES
    cluster_thresholds: tuple[float, ...] = tuple(float(t) for t in range(11))
    ranks: tuple[int, ...] = (1, 5, 10, 25, 50)
    suspect_thresholds: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
    suspect_linkage: str = "single"

    def __post_init__(self):
        for name in ("linkages", "cluster_thresholds", "ranks", "suspect_thresholds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        bad = [l for l in (*self.linkages, self.suspect_linkage) if l not in LINKAGES]
        if bad:
            raise ValueError(f"unknown linkage {bad}")

    @property
    def cutoff_hours(self) -> float:
        days = self.generator.span_days - 365.0 if self.cutoff_days is None else self.cutoff_days
        return days * 24.0

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, generator=replace(self.generator, rng_seed=seed),
                       transform=replace(self.transform, rng_seed=seed), pairs_seed=seed)

    def to_json(self) -> dict:
        return {
            "generator": self.generator.to_json(),
            "transform": self.transform.to_json(),
            "cutoff_days": self.cutoff_days,
            "n_bins": self.n_bins,
            "alpha": self.alpha,
            "k_unlinked": self.k_unlinked,
            "max_days": self.max_days,
            "pairs_seed": self.pairs_seed,
            "linkages": list(self.linkages),
            "cluster_thresholds": list(self.cluster_thresholds),
            "ranks": list(self.ranks),
            "suspect_thresholds": list(self.suspect_thresholds),
            "suspect_linkage": self.suspect_linkage,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "PipelineConfig":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown pipeline options {sorted(unknown)}")
        if "generator" in doc:
            doc["generator"] = GeneratorConfig.from_json(doc["generator"])
        if "transform" in doc:
            doc["transform"] = TransformConfig.from_json(doc["transform"])
        return cls(**doc)


def config_hash(doc) -> str:
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, config: Mapping, seed, inputs: Sequence = (),
                   outputs: Sequence = (), root=None, extra: Optional[Mapping] = None) -> None:
    """Record what produced a set of artifacts.  Paths are stored relative to
    ``root`` (default: the manifest's directory) so relocated runs compare equal."""
    root = Path(root if root is not None else Path(path).parent)

    def entry(p):
        p = Path(p)
        try:
            name = os.path.relpath(p, root)
        except ValueError:
            name = str(p)
        return {"path": Path(name).as_posix(), "sha256": file_sha256(p)}

    doc = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "config_hash": config_hash(config),
        "inputs": [entry(p) for p in inputs],
        "outputs": [entry(p) for p in outputs],
    }
    if extra:
        doc.update(extra)
    write_json(doc, path)


def _roc_outputs(name, scores, out: Path, written: list) -> dict:
    roc = roc_curve(scores)
    write_csv(roc.rows(), out / f"roc_{name}.csv", ["fpr", "tpr", "threshold"])
    prec = precision_curve(scores)
    write_csv([{"n_examined": k, "precision": p} for k, p in prec],
              out / f"precision_{name}.csv", ["n_examined", "precision"])
    written += [out / f"roc_{name}.csv", out / f"precision_{name}.csv"]
    at100 = prec[min(100, len(prec)) - 1][1]
    return {"auc": roc.auc, "tpr_at_fpr_0.05": roc.tpr_at(0.05), "precision_at_100": at100}


def cluster_table(dendrograms: Mapping[str, object], labels: PairLabels, thresholds) -> list[dict]:
    """Rows per (linkage, threshold) followed by a totals row."""
    rows = []
    for linkage, d in dendrograms.items():
        for r in clustering_eval(d, labels, thresholds):
            rows.append({"linkage": linkage, **r.__dict__})
    t = labels.totals()
    rows.append({"linkage": "totals", "threshold": None, "n_clusters": None, "n_series": None,
                 "linked_pairs_in_series": t["linked"], "unlinked_pairs_in_series": t["unlinked"],
                 "unknown_pairs_in_series": t["unknown"], "vi": None})
    return rows


def suspect_table(result, thresholds) -> list[dict]:
    """Statistics as rows, one column per threshold."""
    rows = []
    for key, label in SUSPECT_STATS:
        row = {"statistic": label}
        for t, r in zip(thresholds, result.rows):
            row[_threshold_col(t)] = getattr(r, key)
        rows.append(row)
    return rows


def _threshold_col(t: float) -> str:
    return f"logBF>={t:g}"


def run_pipeline(cfg: PipelineConfig, out_dir) -> dict:
    """Run every stage on synthetic data and write the report bundle to ``out_dir``.

    Returns the summary dictionary also written as ``summary.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.transform
    written: list[Path] = []

    observed, truth = simulate(cfg.generator)
    train, test = split_train_test(observed, cfg.cutoff_hours)
    overlap = offender_overlap(train, test)
    save_dataset(train, out / "train.csv")
    save_dataset(test, out / "test.csv")
    write_truth({c: truth[c] for c in observed.ids}, out / "truth.csv")
    written += [out / "train.csv", out / "train.schema.json", out / "test.csv",
                out / "test.schema.json", out / "truth.csv"]

    pairs = training_pairs(train, cfg.k_unlinked, cfg.max_days, cfg.pairs_seed, tcfg)
    write_pairs(pairs, out / "training_pairs.csv")
    evidence = pair_evidence(train, [(p.id_a, p.id_b) for p in pairs], tcfg)
    nb = fit_naive_bayes(pairs, evidence, n_bins=cfg.n_bins, alpha=cfg.alpha)
    save_model(nb, out / "model_naive_bayes.json")
    write_curves(nb, out / "bf_curves.csv")
    written += [out / "training_pairs.csv", out / "model_naive_bayes.json", out / "bf_curves.csv"]
    models = {"naive_bayes": nb}
    logistic_status = "ok"
    try:
        lr = fit_logistic(pairs, evidence)
        save_model(lr, out / "model_logistic.json")
        written.append(out / "model_logistic.json")
        models["logistic"] = lr
    except ModelError as exc:
        logistic_status = f"{type(exc).__name__}: {exc}"

    # case linkage on the solved test pairs
    solved = test.filter(lambda r: r.solved)
    ia, ib = np.triu_indices(len(solved), 1)
    linkage_summary = {}
    for name, m in models.items():
        scored = labeled_scores(solved, ia, ib, m.pair_scores(solved, ia, ib, tcfg))
        linkage_summary[name] = _roc_outputs(name, scored, out, written)

    # clustering of every test crime under the naive Bayes scores
    sim = pairwise_similarities(test, nb, tcfg)
    dendrograms = {}
    for linkage in cfg.linkages:
        d = cluster(sim, linkage)
        save_dendrogram(d, out / f"dendrogram_{linkage}.json")
        written.append(out / f"dendrogram_{linkage}.json")
        dendrograms[linkage] = d
    labels = PairLabels.from_dataset(test)
    write_csv(cluster_table(dendrograms, labels, cfg.cluster_thresholds), out / "clustering.csv", CLUSTER_FIELDS)
    written.append(out / "clustering.csv")

    # series identification: hold-one-out over test series of two or more crimes
    series = [s for s in offender_histories(test) if len(s) >= 2]
    series_rows = []
    if series:
        res = series_id_eval(series, test, cfg.linkages, nb, tcfg, cfg.ranks)
        series_rows = res.table()
    fields = SERIES_FIELDS + [f"P rank {r}" for r in cfg.ranks]
    write_csv(series_rows, out / "series_identification.csv", fields)
    written.append(out / "series_identification.csv")

    # suspect prioritization: test series against training-period offenders
    history = offender_histories(train)
    queries = offender_histories(test)
    nb_notime = drop_component(nb, "temporal") if "temporal" in nb.variables else nb
    both = CrimeDataset(train.records + test.records, observed.category_schemas)
    suspects = {}
    curve_rows: dict[int, dict] = {}
    for linkage in cfg.linkages:
        res = suspect_eval(queries, history, cfg.suspect_thresholds, both, linkage, nb_notime, tcfg)
        suspects[linkage] = res
        for k, p in res.rank_curve():
            curve_rows.setdefault(k, {"list_size": k})[linkage] = p
    main = suspects.get(cfg.suspect_linkage) or suspect_eval(
        queries, history, cfg.suspect_thresholds, both, cfg.suspect_linkage, nb_notime, tcfg)
    write_csv(suspect_table(main, cfg.suspect_thresholds), out / "suspects.csv",
              ["statistic"] + [_threshold_col(t) for t in cfg.suspect_thresholds])
    write_csv([curve_rows[k] for k in sorted(curve_rows)], out / "suspect_rank_curve.csv",
              ["list_size", *cfg.linkages])
    written += [out / "suspects.csv", out / "suspect_rank_curve.csv"]

    summary = {
        "n_crimes": len(observed),
        "n_train": len(train),
        "n_test": len(test),
        "n_training_pairs": len(pairs),
        "n_linked_training_pairs": sum(p.linked for p in pairs),
        "split": overlap,
        "case_linkage": linkage_summary,
        "logistic_fit": logistic_status,
        "n_test_series": len(series),
        "pair_totals": labels.totals(),
        "suspects": {
            "linkage": cfg.suspect_linkage,
            "n_queries": main.n_queries,
            "n_in_pool": main.n_in_pool,
            "coverage": main.coverage,
            "pool_size": main.pool_size,
        },
    }
    write_json(summary, out / "summary.json")
    written.append(out / "summary.json")
    doc = cfg.to_json()
    write_manifest(out / "manifest.json", "pipeline", doc, cfg.generator.rng_seed, outputs=written, root=out)
    return summary


def case_linkage_auc(gen: GeneratorConfig, tcfg: TransformConfig = TransformConfig(),
                     cutoff_days: Optional[float] = None, n_bins: int = 20) -> float:
    """Naive Bayes AUC on the solved test-period pairs of one synthetic dataset."""
    cfg = PipelineConfig(generator=gen, transform=tcfg, cutoff_days=cutoff_days, n_bins=n_bins)
    observed, _ = simulate(gen)
    train, test = split_train_test(observed, cfg.cutoff_hours)
    pairs = training_pairs(train, cfg.k_unlinked, cfg.max_days, cfg.pairs_seed, tcfg)
    nb = fit_naive_bayes(pairs, pair_evidence(train, [(p.id_a, p.id_b) for p in pairs], tcfg), n_bins=n_bins)
    solved = test.filter(lambda r: r.solved)
    ia, ib = np.triu_indices(len(solved), 1)
    return roc_curve(labeled_scores(solved, ia, ib, nb.pair_scores(solved, ia, ib, tcfg))).auc
