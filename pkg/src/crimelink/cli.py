"""Command-line interface.

Every subcommand writes a manifest next to its primary output.  Relative
paths resolve against ``$CRIMELINK_DATA_DIR`` when it is set.  Exit status is
0 on success, 1 on a data or model error (with a JSON error report on
stderr) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cluster import (
    cluster,
    cut,
    load_dendrogram,
    pairwise_similarities,
    save_dendrogram,
    write_lnk1,
    write_partition,
)
from .data import CrimeDataset, DataError, load_dataset, read_truth, save_dataset, write_truth
from .evaluation import (
    PairLabels,
    labeled_scores,
    series_id_eval,
    suspect_eval,
    write_csv,
    write_json,
)
from .evidence import TransformConfig, evidence_table, pair_evidence
from .models import (
    ExternalScores,
    ModelError,
    NaiveBayesModel,
    drop_component,
    fit_logistic,
    fit_naive_bayes,
    load_model,
    save_model,
    write_curves,
)
from .pairs import read_pairs, training_pairs, write_pairs
from .pipeline import (
    CLUSTER_FIELDS,
    SERIES_FIELDS,
    PipelineConfig,
    _roc_outputs,
    cluster_table,
    run_pipeline,
    suspect_table,
    write_manifest,
)
from .series import LINKAGES, CrimeSeries, identify_series, offender_histories, prioritize_suspects
from .synth import GeneratorConfig, generate, hide_labels, offender_overlap, split_train_test

DATA_DIR_ENV = "CRIMELINK_DATA_DIR"
MODEL_CHOICES = ("naive-bayes", "logistic", "external-scores")
log = logging.getLogger("crimelink")


class UsageError(Exception):
    pass


def _path(p) -> Optional[Path]:
    if p is None:
        return None
    p = Path(p)
    base = os.environ.get(DATA_DIR_ENV)
    return p if p.is_absolute() or not base else Path(base) / p


def _manifest_for(out: Path) -> Path:
    return out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ids(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _transform_cfg(args) -> TransformConfig:
    cfg = TransformConfig.read(_path(args.transform_config)) if args.transform_config else TransformConfig()
    if args.mc_draws is not None:
        cfg = replace(cfg, mc_draws=args.mc_draws)
    if args.seed is not None:
        cfg = replace(cfg, rng_seed=args.seed)
    return cfg


def _load_scorer(args):
    """The model named by --model-file or --scores."""
    if getattr(args, "scores", None):
        return ExternalScores.read_csv(_path(args.scores))
    if getattr(args, "model_file", None):
        return load_model(_path(args.model_file))
    raise UsageError("give --model-file or --scores")


# ---------------------------------------------------------------------------
# subcommands; each returns (config dict, seed, inputs, outputs, manifest path)


def cmd_simulate(args):
    cfg = GeneratorConfig.read(_path(args.generator_config)) if args.generator_config else GeneratorConfig()
    overrides = {k: v for k, v in (("rng_seed", args.seed), ("n_offenders", args.n_offenders),
                                   ("sigma_series", args.sigma_series),
                                   ("unsolved_fraction", args.unsolved_fraction)) if v is not None}
    cfg = replace(cfg, **overrides)
    full = generate(cfg)
    observed, truth = (full, {r.id: r.offenders for r in full}) if args.full_labels else \
        hide_labels(full, cfg.unsolved_fraction, cfg.rng_seed)
    out = _path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    schema = save_dataset(observed, out)
    truth_path = _path(args.truth) if args.truth else out.with_name(out.stem + ".truth.csv")
    write_truth(truth, truth_path)
    return cfg.to_json(), cfg.rng_seed, [], [out, schema, truth_path], _manifest_for(out)


def cmd_split(args):
    ds = load_dataset(_path(args.data))
    train, test = split_train_test(ds, args.cutoff)
    out = _path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = [out / "train.csv", save_dataset(train, out / "train.csv"),
               out / "test.csv", save_dataset(test, out / "test.csv")]
    write_json(offender_overlap(train, test), out / "overlap.json")
    outputs.append(out / "overlap.json")
    return {"cutoff": args.cutoff}, None, [_path(args.data)], outputs, out / "manifest.json"


def cmd_pairs(args):
    ds = load_dataset(_path(args.data))
    tcfg = _transform_cfg(args)
    pairs = training_pairs(ds, args.k, args.max_days, args.seed or 0, tcfg)
    out = _path(args.out)
    write_pairs(pairs, out)
    cfg = {"k": args.k, "max_days": args.max_days, "transform": tcfg.to_json()}
    return cfg, args.seed or 0, [_path(args.data)], [out], _manifest_for(out)


def cmd_transform(args):
    ds = load_dataset(_path(args.data))
    tcfg = _transform_cfg(args)
    inputs = [_path(args.data)]
    if args.pairs:
        pairs = read_pairs(_path(args.pairs))
        table = pair_evidence(ds, [(p.id_a, p.id_b) for p in pairs], tcfg)
        inputs.append(_path(args.pairs))
    else:
        ia, ib = np.triu_indices(len(ds), 1)
        table = evidence_table(ds, ia, ib, tcfg)
    out = _path(args.out)
    table.to_csv(out)
    return tcfg.to_json(), tcfg.rng_seed, inputs, [out], _manifest_for(out)


def cmd_fit(args):
    if args.model == "external-scores":
        raise UsageError("external scores are read, not fitted; pass --scores to the scoring commands")
    ds = load_dataset(_path(args.data))
    tcfg = _transform_cfg(args)
    inputs = [_path(args.data)]
    if args.pairs:
        pairs = read_pairs(_path(args.pairs))
        inputs.append(_path(args.pairs))
    else:
        pairs = training_pairs(ds, args.k, args.max_days, args.seed or 0, tcfg)
    evidence = pair_evidence(ds, [(p.id_a, p.id_b) for p in pairs], tcfg)
    out = _path(args.out)
    outputs = [out]
    if args.model == "naive-bayes":
        model = fit_naive_bayes(pairs, evidence, n_bins=args.bins, alpha=args.alpha)
        save_model(model, out)
        curves = out.with_name(out.stem + ".curves.csv")
        write_curves(model, curves)
        outputs.append(curves)
    else:
        model = fit_logistic(pairs, evidence, missing=args.missing)
        save_model(model, out)
    cfg = {"model": args.model, "bins": args.bins, "alpha": args.alpha, "missing": args.missing,
           "k": args.k, "max_days": args.max_days, "transform": tcfg.to_json()}
    return cfg, tcfg.rng_seed, inputs, outputs, _manifest_for(out)


def cmd_score(args):
    ds = load_dataset(_path(args.data))
    model = _load_scorer(args)
    tcfg = _transform_cfg(args)
    if args.pairs:
        pairs = read_pairs(_path(args.pairs))
        idx = ds.index
        ia = np.array([idx[p.id_a] for p in pairs], dtype=np.int64)
        ib = np.array([idx[p.id_b] for p in pairs], dtype=np.int64)
    else:
        ia, ib = np.triu_indices(len(ds), 1)
    scores = model.pair_scores(ds, ia, ib, tcfg)
    ids = ds.ids
    out = _path(args.out)
    write_csv([{"id_a": ids[a], "id_b": ids[b], "score": float(s)} for a, b, s in zip(ia, ib, scores)],
              out, ["id_a", "id_b", "score"])
    return {"transform": tcfg.to_json()}, tcfg.rng_seed, _inputs(args), [out], _manifest_for(out)


def cmd_cluster(args):
    ds = load_dataset(_path(args.data))
    model = _load_scorer(args)
    tcfg = _transform_cfg(args)
    sim = pairwise_similarities(ds, model, tcfg)
    init = read_truth(_path(args.init)) if args.init else None
    if init is not None:
        init = {c: ";".join(sorted(o)) for c, o in init.items() if o and c in ds}
    d = cluster(sim, args.linkage, init=init, stop=args.stop)
    out = _path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = [out / "dendrogram.json", out / "dendrogram.nwk"]
    save_dendrogram(d, outputs[0])
    outputs[1].write_text(d.to_newick() + "\n")
    if args.cut is not None:
        write_partition(cut(d, args.cut), out / "partition.csv")
        outputs.append(out / "partition.csv")
    if args.lnk1:
        write_lnk1(sim, out / "similarity.lnk1")
        outputs.append(out / "similarity.lnk1")
    cfg = {"linkage": args.linkage, "cut": args.cut, "stop": args.stop, "transform": tcfg.to_json()}
    return cfg, tcfg.rng_seed, _inputs(args), outputs, out / "manifest.json"


def cmd_cut(args):
    d = load_dendrogram(_path(args.dendrogram))
    out = _path(args.out)
    write_partition(cut(d, args.threshold), out)
    return {"threshold": args.threshold}, None, [_path(args.dendrogram)], [out], _manifest_for(out)


def _ranked_outputs(ranked, out: Path, threshold) -> list[Path]:
    ranked.write_csv(out)
    js = out.with_suffix(".json")
    ranked.write_json(js, threshold)
    return [out, js]


def cmd_identify(args):
    ds = load_dataset(_path(args.data))
    model = _load_scorer(args)
    tcfg = _transform_cfg(args)
    series = CrimeSeries("query", _ids(args.series))
    missing = [c for c in series.crime_ids if c not in ds]
    if missing:
        raise DataError(f"series crimes not in the dataset: {missing}")
    ranked = identify_series(series, ds, args.linkage, model, tcfg, top_r=args.top,
                             unsolved_only=args.unsolved_only, sequential=args.sequential)
    out = _path(args.out)
    outputs = _ranked_outputs(ranked, out, args.threshold)
    cfg = {"series": list(series.crime_ids), "linkage": args.linkage, "top": args.top,
           "threshold": args.threshold, "transform": tcfg.to_json()}
    return cfg, tcfg.rng_seed, _inputs(args), outputs, _manifest_for(out)


def _without_time(model):
    if isinstance(model, NaiveBayesModel) and "temporal" in model.variables:
        return drop_component(model, "temporal")
    if "temporal" in getattr(model, "variables", ()):
        raise ModelError("suspect prioritization needs a model without elapsed time; refit without 'temporal'")
    return model


def _combined(a: CrimeDataset, b: CrimeDataset) -> CrimeDataset:
    schemas = {k: tuple(sorted(set(a.category_schemas.get(k, ())) | set(b.category_schemas.get(k, ()))))
               for k in set(a.category_schemas) | set(b.category_schemas)}
    return CrimeDataset(a.records + tuple(r for r in b.records if r.id not in a), schemas)


def cmd_prioritize(args):
    current = load_dataset(_path(args.data))
    past = load_dataset(_path(args.history))
    model = _without_time(_load_scorer(args))
    tcfg = _transform_cfg(args)
    series = CrimeSeries("query", _ids(args.series))
    history = offender_histories(past)
    ranked = prioritize_suspects(series, history, _combined(current, past), args.linkage, model, tcfg)
    out = _path(args.out)
    outputs = _ranked_outputs(ranked, out, args.threshold)
    cfg = {"series": list(series.crime_ids), "linkage": args.linkage, "threshold": args.threshold,
           "transform": tcfg.to_json()}
    return cfg, tcfg.rng_seed, _inputs(args) + [_path(args.history)], outputs, _manifest_for(out)


def cmd_eval_roc(args):
    ds = load_dataset(_path(args.data))
    model = _load_scorer(args)
    tcfg = _transform_cfg(args)
    solved = ds.filter(lambda r: r.solved)
    ia, ib = np.triu_indices(len(solved), 1)
    scored = labeled_scores(solved, ia, ib, model.pair_scores(solved, ia, ib, tcfg))
    out = _path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs: list[Path] = []
    summary = _roc_outputs(args.name, scored, out, outputs)
    write_json(summary, out / f"auc_{args.name}.json")
    outputs.append(out / f"auc_{args.name}.json")
    return {"transform": tcfg.to_json()}, tcfg.rng_seed, _inputs(args), outputs, out / "manifest.json"


def cmd_eval_series(args):
    ds = load_dataset(_path(args.data))
    model = _load_scorer(args)
    tcfg = _transform_cfg(args)
    series = [s for s in offender_histories(ds) if len(s) >= 2]
    if not series:
        raise DataError("no solved series with two or more crimes")
    ranks = [int(r) for r in _floats(args.ranks)]
    res = series_id_eval(series, ds, args.linkages, model, tcfg, ranks)
    out = _path(args.out)
    write_csv(res.table(), out, SERIES_FIELDS + [f"P rank {r}" for r in ranks])
    cfg = {"linkages": args.linkages, "ranks": ranks, "transform": tcfg.to_json()}
    return cfg, tcfg.rng_seed, _inputs(args), [out], _manifest_for(out)


def cmd_eval_cluster(args):
    ds = load_dataset(_path(args.data))
    labels = PairLabels.from_dataset(ds)
    dendrograms = {}
    for spec in args.dendrogram:
        name, _, path = spec.rpartition("=")
        d = load_dendrogram(_path(path))
        if set(d.ids) != set(ds.ids):
            raise DataError(f"dendrogram {path} does not cover the dataset's crimes")
        dendrograms[name or d.linkage] = d
    thresholds = _floats(args.thresholds)
    out = _path(args.out)
    write_csv(cluster_table(dendrograms, labels, thresholds), out, CLUSTER_FIELDS)
    inputs = [_path(args.data)] + [_path(s.rpartition("=")[2]) for s in args.dendrogram]
    return {"thresholds": thresholds}, None, inputs, [out], _manifest_for(out)


def cmd_eval_suspects(args):
    train = load_dataset(_path(args.history))
    test = load_dataset(_path(args.data))
    model = _without_time(_load_scorer(args))
    tcfg = _transform_cfg(args)
    thresholds = _floats(args.thresholds)
    res = suspect_eval(offender_histories(test), offender_histories(train), thresholds,
                       _combined(train, test), args.linkage, model, tcfg)
    out = _path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(suspect_table(res, thresholds), out / "suspects.csv",
              ["statistic"] + list(suspect_table(res, thresholds)[0])[1:])
    write_csv([{"list_size": k, "proportion": p} for k, p in res.rank_curve()],
              out / "suspect_rank_curve.csv", ["list_size", "proportion"])
    write_json({"coverage": res.coverage, "n_queries": res.n_queries, "n_in_pool": res.n_in_pool,
                "pool_size": res.pool_size, "linkage": args.linkage}, out / "suspects.json")
    outputs = [out / "suspects.csv", out / "suspect_rank_curve.csv", out / "suspects.json"]
    cfg = {"linkage": args.linkage, "thresholds": thresholds, "transform": tcfg.to_json()}
    return cfg, tcfg.rng_seed, _inputs(args) + [_path(args.history)], outputs, out / "manifest.json"


def cmd_pipeline(args):
    cfg = PipelineConfig.from_json(_load_json(args.config)) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = _path(args.out_dir)
    run_pipeline(cfg, out)
    return None


def _inputs(args) -> list[Path]:
    found = [_path(args.data)]
    for name in ("model_file", "scores", "pairs", "init"):
        v = getattr(args, name, None)
        if v:
            found.append(_path(v))
    return found


def _load_json(path) -> dict:
    with open(_path(path)) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# parser


def _common(p, data=True, transform=True, scorer=False):
    if data:
        p.add_argument("--data", required=True, help="dataset CSV (schema sidecar alongside)")
    if transform:
        p.add_argument("--transform-config", help="TransformConfig JSON")
        p.add_argument("--mc-draws", type=int, help="Monte Carlo draws for censored times (default 1000)")
        p.add_argument("--seed", type=int, help="random seed")
    if scorer:
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--model-file", help="fitted model JSON")
        g.add_argument("--scores", help="external pair scores CSV (id_a, id_b, score)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="crimelink",
        description="Bayesian case linkage, crime-series clustering and suspect prioritization.",
    )
    ap.add_argument("--config", help="JSON file of default option values for the subcommand")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="generate a synthetic dataset and its ground truth")
    p.add_argument("--generator-config", help="GeneratorConfig JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-offenders", type=int)
    p.add_argument("--sigma-series", type=float)
    p.add_argument("--unsolved-fraction", type=float)
    p.add_argument("--full-labels", action="store_true", help="keep every offender label")
    p.add_argument("--out", required=True, help="dataset CSV to write")
    p.add_argument("--truth", help="ground-truth CSV (default <out>.truth.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("split", help="split a dataset into training and testing periods")
    _common(p, transform=False)
    p.add_argument("--cutoff", type=float, required=True, help="cutoff time in hours")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("pairs", help="build weighted linked/unlinked training pairs")
    _common(p)
    p.add_argument("--k", type=int, default=20, help="unlinked samples per crime group")
    p.add_argument("--max-days", type=float, default=365.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("transform", help="compute pair evidence")
    _common(p)
    p.add_argument("--pairs", help="pairs CSV (default: every pair)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("fit", help="fit a Bayes factor model")
    _common(p)
    p.add_argument("--model", choices=MODEL_CHOICES, default="naive-bayes")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--missing", choices=("complete", "mean"), default="complete")
    p.add_argument("--pairs", help="training pairs CSV (default: built from --data)")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--max-days", type=float, default=365.0)
    p.add_argument("--out", required=True, help="model JSON to write")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="log Bayes factors for crime pairs")
    _common(p, scorer=True)
    p.add_argument("--pairs", help="pairs CSV (default: every pair)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("cluster", help="agglomerative clustering of all crimes")
    _common(p, scorer=True)
    p.add_argument("--linkage", choices=LINKAGES, default="average")
    p.add_argument("--cut", type=float, help="also write the partition at this log-BF")
    p.add_argument("--stop", type=float, help="stop merging below this log-BF")
    p.add_argument("--init", help="truth CSV; crimes sharing offenders start merged")
    p.add_argument("--lnk1", action="store_true", help="also write the binary similarity matrix")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("cut", help="cut a saved dendrogram at a log-BF threshold")
    p.add_argument("--dendrogram", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cut)

    p = sub.add_parser("identify", help="rank crimes against a crime series")
    _common(p, scorer=True)
    p.add_argument("--series", required=True, help="comma-separated crime ids")
    p.add_argument("--linkage", choices=LINKAGES, default="average")
    p.add_argument("--top", type=int)
    p.add_argument("--threshold", type=float, help="operating log-BF recorded in the JSON report")
    p.add_argument("--unsolved-only", action="store_true")
    p.add_argument("--sequential", action="store_true", help="grow the series one crime at a time")
    p.add_argument("--out", required=True, help="ranked list CSV (JSON written alongside)")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("prioritize", help="rank past offenders against a crime series")
    _common(p, scorer=True)
    p.add_argument("--history", required=True, help="dataset of past solved crimes")
    p.add_argument("--series", required=True, help="comma-separated crime ids in --data")
    p.add_argument("--linkage", choices=LINKAGES, default="single")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prioritize)

    p = sub.add_parser("eval-roc", help="ROC and precision curves on solved pairs")
    _common(p, scorer=True)
    p.add_argument("--name", default="model")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval_roc)

    p = sub.add_parser("eval-series", help="hold-one-out series identification table")
    _common(p, scorer=True)
    p.add_argument("--linkages", nargs="+", choices=LINKAGES, default=list(LINKAGES))
    p.add_argument("--ranks", default="1,5,10,25,50")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_series)

    p = sub.add_parser("eval-cluster", help="clustering table over cut thresholds")
    _common(p, transform=False)
    p.add_argument("--dendrogram", nargs="+", required=True, help="[name=]dendrogram.json")
    p.add_argument("--thresholds", default="0,1,2,3,4,5,6,7,8,9,10")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_cluster)

    p = sub.add_parser("eval-suspects", help="suspect prioritization operating table")
    _common(p, scorer=True)
    p.add_argument("--history", required=True, help="training-period dataset")
    p.add_argument("--linkage", choices=LINKAGES, default="single")
    p.add_argument("--thresholds", default="0,1,2,3,4,5")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval_suspects)

    p = sub.add_parser("pipeline", help="run the full synthetic demo and write a report")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pipeline)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    """Parse argv; values from --config fill in options not given on the command line."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if not a.startswith("-")), None)
    subparsers = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    if known.config and command in subparsers.choices and command != "pipeline":
        doc = {k.replace("-", "_"): v for k, v in _load_json(known.config).items()}
        sp = subparsers.choices[command]
        dests = {a.dest: a for a in sp._actions}
        unknown = sorted(set(doc) - set(dests))
        if unknown:
            raise UsageError(f"unknown options {unknown} in {known.config}")
        for dest in doc:
            dests[dest].required = False
        for group in sp._mutually_exclusive_groups:
            if any(a.dest in doc for a in group._group_actions):
                group.required = False
        sp.set_defaults(**doc)
    return ap.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(ap, argv)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"crimelink: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        result = args.func(args)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"crimelink: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ModelError, ValueError, KeyError, OSError) as exc:
        report = {"error": type(exc).__name__, "message": str(exc.args[0]) if exc.args else str(exc),
                  "command": args.command}
        if isinstance(exc, DataError) and exc.diagnostics:
            report["diagnostics"] = exc.diagnostics
        print(json.dumps(report, sort_keys=True), file=sys.stderr)
        return 1
    if result is not None:
        cfg, seed, inputs, outputs, manifest = result
        root = manifest.parent
        write_manifest(manifest, args.command, _clean(cfg), seed, inputs, outputs, root=root)
        log.info("wrote %s", manifest)
    return 0


def _clean(doc):
    if isinstance(doc, float) and not math.isfinite(doc):
        return str(doc)
    if isinstance(doc, dict):
        return {k: _clean(v) for k, v in doc.items()}
    if isinstance(doc, (list, tuple)):
        return [_clean(v) for v in doc]
    return doc


if __name__ == "__main__":
    sys.exit(main())
