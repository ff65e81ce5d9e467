"""Seeded k-fold protocol: extract trends, learn parameters, train, predict, evaluate."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError
from .evaluation import ci_halfwidth, evaluate_predictions, f1_scores
from .pipeline import ABSTAIN, baseline_predictors, extract_trends, learn_params, predict_trendlearner, \
    train_trendlearner, truth_labels
from .regression import DELTAS, evaluate_regression

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    folds: int = 5
    seed: int = 0
    # fixed number of trends; None selects it from beta_CV
    k: int | None = 4
    k_max: int = 15
    target: float = 0.5
    metric: str = "macro"
    n_min: int | None = None
    M: int = 20
    regression: bool = False
    deltas: tuple = DELTAS
    n_examples: int = 50

    def to_dict(self):
        return asdict(self)


def fold_indices(count, folds, seed):
    """Random partition of ``range(count)`` into ``folds`` test folds whose sizes differ by at most one."""
    if folds < 2 or folds > count:
        raise ConfigurationError(f"need 2 <= folds <= {count}")
    perm = np.random.default_rng(seed).permutation(count)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def strategy_f1(truth, labels, k):
    """Micro and macro F1 over the objects a strategy labeled (abstentions excluded)."""
    keep = labels != ABSTAIN
    if not keep.any():
        return 0.0, 0.0, 0
    micro, macro, _ = f1_scores(truth[keep], labels[keep], k)
    return micro, macro, int(keep.sum())


def run_fold(train, test, config, fold_seed):
    cluster_model = extract_trends(train, k=config.k, k_max=config.k_max, seed=fold_seed)
    params = learn_params(train, cluster_model, target=config.target, metric=config.metric)
    model = train_trendlearner(train, cluster_model, params, seed=fold_seed, n_min=config.n_min, M=config.M)
    pred = predict_trendlearner(test, model)
    truth = truth_labels(test, cluster_model)
    views = [o.views for o in test]
    report = evaluate_predictions(truth, pred.labels, pred.t, views, model.k)
    out = {"report": report, "model": model, "prediction": pred, "truth": truth}
    strategies = {"trendlearner": pred.labels, **baseline_predictors(test, model, pred)}
    scores = {}
    for name, labels in strategies.items():
        micro, macro, covered = strategy_f1(truth, labels, model.k)
        scores[name] = {"micro_f1": micro, "macro_f1": macro, "n": covered}
    report.extra["strategies"] = scores
    report.extra["params"] = params.to_dict()
    report.extra["fallback_classes"] = list(params.fallback)
    if config.regression:
        train_pred = predict_trendlearner(train, model)
        Xtr = np.vstack([o.views for o in train])
        Xte = np.vstack(views)
        out["regression"] = evaluate_regression(
            Xtr, train_pred.labels, train_pred.t, Xte, pred.labels, pred.t,
            deltas=config.deltas, n_examples=config.n_examples, seed=fold_seed,
        )
    return out


def run_experiment(objects, config=None):
    """Per-fold results plus a mean and 95% CI half-width summary over folds."""
    config = config or ExperimentConfig()
    objects = list(objects)
    seeds = np.random.SeedSequence(config.seed).generate_state(config.folds)
    folds = fold_indices(len(objects), config.folds, config.seed)
    results = []
    for f, test_idx in enumerate(folds):
        mask = np.ones(len(objects), dtype=bool)
        mask[test_idx] = False
        train = [objects[i] for i in np.flatnonzero(mask)]
        test = [objects[i] for i in test_idx]
        log.info("fold %d: %d train, %d test", f, len(train), len(test))
        results.append(run_fold(train, test, config, int(seeds[f])))
    return results, summarize(results)


def _mean_ci(values):
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=float)
    if v.size == 0:
        return {"mean": None, "ci_halfwidth": None}
    return {"mean": float(v.mean()), "ci_halfwidth": ci_halfwidth(v)}


def summarize(results):
    summary = {}
    for name in results[0]["report"].extra["strategies"]:
        for metric in ("micro_f1", "macro_f1"):
            summary[f"{name}.{metric}"] = _mean_ci(r["report"].extra["strategies"][name][metric] for r in results)
    summary["median_ri_correct"] = _mean_ci(
        float(np.median(r["report"].ri_correct)) if r["report"].ri_correct else None for r in results
    )
    summary["pearson"] = _mean_ci(r["report"].pearson for r in results)
    summary["spearman"] = _mean_ci(r["report"].spearman for r in results)
    if "regression" in results[0]:
        for row in results[0]["regression"]:
            key = f"mrse.{row['strategy']}.{row['delta']}"
            summary[key] = _mean_ci(
                next(x["mean"] for x in r["regression"] if x["strategy"] == row["strategy"]
                     and x["delta"] == row["delta"]) for r in results
            )
    return summary
