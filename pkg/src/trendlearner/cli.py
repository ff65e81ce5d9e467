"""Command-line interface.

Exit codes: 0 success, 1 invalid input or data, 2 configuration error,
3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import load_dataset, save_dataset
from .errors import ConfigurationError, InvalidInputError, NoElbowError, TrendLearnerError
from .evaluation import ccdf, ci_halfwidth, evaluate_predictions, write_csv
from .experiment import ExperimentConfig, fold_indices, run_experiment, strategy_f1
from .ksc import ClusterModel, assign_clusters
from .online import MonitorParams
from .pipeline import TrendLearnerModel, baseline_predictors, extract_trends, learn_params, \
    predict_trendlearner, train_trendlearner
from .regression import evaluate_regression
from .synthetic import SyntheticConfig, generate_synthetic

log = logging.getLogger("trendlearner")

EXIT_OK, EXIT_INVALID, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3
STRATEGY_COLUMNS = ("p_only", "p_ertree", "ertree")


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _sibling(path, suffix):
    p = Path(path)
    return p.with_name(p.stem + suffix)


def cmd_synth(args):
    cfg = SyntheticConfig.from_dict(_read_json(args.config)) if args.config else SyntheticConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.count is not None:
        overrides["count"] = args.count
    manifest = generate_synthetic(cfg, **overrides)
    save_dataset(manifest, args.out)
    log.info("wrote %d objects to %s", len(manifest), args.out)


def cmd_extract(args):
    manifest = load_dataset(args.input)
    try:
        model = extract_trends(manifest.objects, k=args.k, k_max=args.k_max, seed=args.seed,
                               stability_tol=args.stability_tol, window=args.window)
    except NoElbowError as exc:
        write_csv(_sibling(args.out, "_beta_cv.csv"),
                  [{"k": k, "beta_cv": v} for k, v in sorted(exc.curve.items())], ["k", "beta_cv"])
        raise
    _write_json(args.out, model.to_dict())
    rows = [{"k": k, "beta_cv": "" if v is None else repr(float(v))} for k, v in sorted(model.beta_cv_curve.items())]
    write_csv(_sibling(args.out, "_beta_cv.csv"), rows, ["k", "beta_cv"])
    log.info("k = %d", model.k)


def cmd_learn_params(args):
    manifest = load_dataset(args.input)
    model = ClusterModel.from_dict(_read_json(args.trends))
    labels = _training_labels(manifest.objects, model)
    params = learn_params(manifest.objects, model, target=args.target_macro_f1, metric=args.metric,
                          gamma_max=args.gamma_max, labels=labels)
    _write_json(args.out, params.to_dict())


def _training_labels(objects, cluster_model):
    """Cluster labels stored in the model when it was fit on these objects, else nearest centroid."""
    ids = [o.object_id for o in objects]
    if cluster_model.object_ids and list(cluster_model.object_ids) == ids:
        return np.asarray(cluster_model.assignments)
    return assign_clusters(np.vstack([o.views for o in objects]), cluster_model.centroids)


def cmd_train(args):
    manifest = load_dataset(args.input)
    cluster_model = ClusterModel.from_dict(_read_json(args.trends))
    params = MonitorParams.from_dict(_read_json(args.params))
    labels = _training_labels(manifest.objects, cluster_model)
    model = train_trendlearner(manifest.objects, cluster_model, params, seed=args.seed, labels=labels,
                               n_min=args.n_min, M=args.trees)
    model.save(args.out)


def _prediction_rows(objects, model):
    pred = predict_trendlearner(objects, model)
    base = baseline_predictors(objects, model, pred)
    rows = []
    for i, obj in enumerate(objects):
        row = {"object_id": obj.object_id, "t": int(pred.t[i]), "label": int(pred.labels[i])}
        for name in STRATEGY_COLUMNS:
            row[name] = int(base[name][i]) if name in base else ""
        for c in range(model.k):
            row[f"p_class{c}"] = repr(float(pred.probs.probs[i, c]))
        row["decided"] = int(pred.probs.decided[i])
        rows.append(row)
    fields = ["object_id", "t", "label", *STRATEGY_COLUMNS] + [f"p_class{c}" for c in range(model.k)] + ["decided"]
    return rows, fields


def cmd_predict(args):
    manifest = load_dataset(args.input)
    model = TrendLearnerModel.load(args.model)
    rows, fields = _prediction_rows(manifest.objects, model)
    write_csv(args.out, rows, fields)


def _read_predictions(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_evaluate(args):
    manifest = load_dataset(args.truth)
    rows = _read_predictions(args.predictions)
    by_id = {o.object_id: o for o in manifest.objects}
    missing = [r["object_id"] for r in rows if r["object_id"] not in by_id]
    if missing:
        raise InvalidInputError(f"predictions for unknown objects: {', '.join(missing[:20])}")
    objects = [by_id[r["object_id"]] for r in rows]
    k = sum(1 for h in rows[0] if h.startswith("p_class")) if rows else 0
    if args.trends:
        cm = ClusterModel.from_dict(_read_json(args.trends))
        k = cm.k
        truth = assign_clusters(np.vstack([o.views for o in objects]), cm.centroids)
    else:
        if any(o.label is None for o in objects):
            raise InvalidInputError("truth objects carry no labels; pass --trends to label them by nearest centroid")
        truth = np.array([o.label for o in objects], dtype=np.int64)
    predicted = np.array([int(r["label"]) for r in rows], dtype=np.int64)
    t = np.array([int(r["t"]) for r in rows], dtype=np.int64)
    views = [o.views for o in objects]
    report = evaluate_predictions(truth, predicted, t, views, k)
    strategies = {"trendlearner": predicted}
    for name in STRATEGY_COLUMNS:
        if rows and rows[0].get(name, "") != "":
            strategies[name] = np.array([int(r[name]) for r in rows], dtype=np.int64)
    report.extra["strategies"] = {}
    for name, labels in strategies.items():
        micro, macro, covered = strategy_f1(truth, labels, k)
        report.extra["strategies"][name] = {"micro_f1": micro, "macro_f1": macro, "n": covered}
    report.to_json(args.out)

    ccdf_rows = [{"group": "correct", "ri": x, "ccdf": p} for x, p in ccdf(report.ri_correct)]
    ccdf_rows += [{"group": "incorrect", "ri": x, "ccdf": p} for x, p in ccdf(report.ri_incorrect)]
    write_csv(_sibling(args.out, "_ri_ccdf.csv"), ccdf_rows, ["group", "ri", "ccdf"])
    scatter = []
    for o, tt, tr, pr in zip(objects, t, truth, predicted):
        total = float(o.views.sum())
        ri = float(o.views[tt:].sum() / total) if total > 0 else ""
        scatter.append({"object_id": o.object_id, "total_views": total, "ri": ri, "correct": int(tr == pr)})
    write_csv(_sibling(args.out, "_scatter.csv"), scatter, ["object_id", "total_views", "ri", "correct"])


def _parse_deltas(text):
    try:
        deltas = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigurationError(f"invalid delta list {text!r}") from None
    if not deltas or min(deltas) < 0:
        raise ConfigurationError("deltas must be non-negative integers")
    return deltas


def cmd_regress(args):
    deltas = _parse_deltas(args.deltas)
    manifest = load_dataset(args.input)
    model = TrendLearnerModel.load(args.model)
    objects = manifest.objects
    pred = predict_trendlearner(objects, model)
    X = np.vstack([o.views for o in objects])
    per_fold = []
    for test_idx in fold_indices(len(objects), args.folds, args.seed):
        mask = np.ones(len(objects), dtype=bool)
        mask[test_idx] = False
        per_fold.append(evaluate_regression(
            X[mask], pred.labels[mask], pred.t[mask], X[test_idx], pred.labels[test_idx], pred.t[test_idx],
            deltas=deltas, n_examples=args.n_examples, seed=args.seed,
        ))
    rows = []
    for j, first in enumerate(per_fold[0]):
        means = np.array([f[j]["mean"] for f in per_fold], dtype=float)
        means = means[np.isfinite(means)]
        rows.append({
            "strategy": first["strategy"],
            "delta": first["delta"],
            "mean": repr(float(means.mean())) if means.size else "",
            "ci_halfwidth": repr(ci_halfwidth(means)) if means.size else "",
        })
    write_csv(args.out, rows, ["strategy", "delta", "mean", "ci_halfwidth"])


def cmd_run(args):
    manifest = load_dataset(args.input)
    config = ExperimentConfig(folds=args.folds, seed=args.seed, k=args.k, k_max=args.k_max,
                              target=args.target_macro_f1, regression=args.regression)
    results, summary = run_experiment(manifest.objects, config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "folds.csv", [dict(fold=i, **r["report"].csv_row()) for i, r in enumerate(results)])
    _write_json(out / "summary.json", {"config": config.to_dict(), "summary": summary})


def build_parser():
    p = argparse.ArgumentParser(prog="trendlearner", description="Early prediction of popularity trends.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--count", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract-trends", help="cluster training series into trends")
    s.add_argument("--input", required=True)
    s.add_argument("--k", type=int, help="fixed number of trends (default: chosen from beta_CV)")
    s.add_argument("--k-max", type=int, default=15)
    s.add_argument("--stability-tol", type=float, default=0.1)
    s.add_argument("--window", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("learn-params", help="learn per-class theta and gamma")
    s.add_argument("--input", required=True)
    s.add_argument("--trends", required=True)
    s.add_argument("--target-macro-f1", type=float, default=0.5)
    s.add_argument("--metric", choices=("macro", "micro"), default="macro")
    s.add_argument("--gamma-max", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_learn_params)

    s = sub.add_parser("train", help="train the trend classifier")
    s.add_argument("--input", required=True)
    s.add_argument("--trends", required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-min", type=int, help="minimum leaf split size (default: cross-validated)")
    s.add_argument("--trees", type=int, default=20)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predict trends and stopping windows")
    s.add_argument("--input", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="score predictions against ground truth")
    s.add_argument("--predictions", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--trends", help="label truth objects by nearest centroid of this trend model")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("regress", help="general vs. trend-specialized popularity regression")
    s.add_argument("--input", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--deltas", default="1,7,15")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--n-examples", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_regress)

    s = sub.add_parser("run", help="full k-fold experiment")
    s.add_argument("--input", required=True)
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--k-max", type=int, default=15)
    s.add_argument("--target-macro-f1", type=float, default=0.5)
    s.add_argument("--regression", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidInputError, NoElbowError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrendLearnerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
