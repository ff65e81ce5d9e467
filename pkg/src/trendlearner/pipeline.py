"""Trend extraction plus TrendLearner training and prediction.

Training objects carry cluster labels from KSC. Per-class monitoring
parameters are learned from the training set, class membership
probabilities at each object's stopping window are concatenated with the
object features seen up to that window, and an extremely randomized trees
ensemble is trained on the result.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .ert import Forest, select_n_min, train_forest
from .errors import ConfigurationError, InvalidInputError
from .evaluation import f1_scores
from .features import OBJECT_FEATURES, categorical_columns, compute_object_features, feature_layout
from .ksc import ClusterModel, assign_clusters, beta_cv_curve, ksc_cluster, select_stable_k
from .online import MonitorParams, ProbabilityMatrix, multi_class_probs, probability_path

log = logging.getLogger(__name__)

BUNDLE_VERSION = 1
N_MIN_CANDIDATES = (1, 2, 4, 8, 16, 32)


def _views(objects):
    if len(objects) == 0:
        return np.zeros((0, 0))
    return np.vstack([o.views for o in objects])


def extract_trends(objects, k=None, k_max=15, seed=0, stability_tol=0.1, window=2):
    """Cluster the training objects' view series; choose k from beta_CV when not given."""
    X = _views(objects)
    ids = [o.object_id for o in objects]
    window_days = float(np.mean([o.window_days for o in objects]))
    curve = {}
    if k is None:
        curve, models = beta_cv_curve(X, k_max, seed=seed)
        k = select_stable_k(curve, stability_tol, window)
        model = models[k]
        model.object_ids = ids
        model.window_days = window_days
    else:
        model = ksc_cluster(X, k, seed=seed, object_ids=ids, window_days=window_days)
    model.beta_cv_curve = curve
    return model


def _one_vs_all_score(labels, predicted, i, metric):
    truth = (labels == i).astype(np.int64)
    pred = (predicted == i).astype(np.int64)
    micro, macro, _ = f1_scores(truth, pred, 2)
    return macro if metric == "macro" else micro


def learn_params(objects, cluster_model, target=0.5, metric="macro", gamma_max=None, labels=None):
    """Per-class minimum monitoring period (gamma) and confidence (theta).

    For each class, gamma is the smallest period at which one-against-all
    classification of the training set by the most probable class reaches
    ``target``; theta is the mean probability of that class over its own
    training members at that period. Classes that never reach the target
    fall back to ``gamma_max`` and are listed in ``MonitorParams.fallback``.
    """
    if metric not in ("macro", "micro"):
        raise ConfigurationError("metric must be 'macro' or 'micro'")
    X = _views(objects) if not isinstance(objects, np.ndarray) else objects
    labels = np.asarray(cluster_model.assignments if labels is None else labels)
    if labels.shape[0] != X.shape[0]:
        raise InvalidInputError("every training object needs a cluster label")
    k = cluster_model.k
    gamma_max = int(gamma_max or X.shape[1])
    path = probability_path(X, cluster_model.centroids, gamma_max)
    decided = np.any(path != 0.0, axis=2)
    predicted = np.where(decided, np.argmax(path, axis=2), -1)

    theta = np.zeros(k)
    gamma = np.full(k, gamma_max, dtype=np.int64)
    fallback = []
    for i in range(k):
        members = labels == i
        chosen = None
        for g in range(1, gamma_max + 1):
            if _one_vs_all_score(labels, predicted[:, g - 1], i, metric) >= target:
                chosen = g
                break
        if chosen is None:
            log.warning("class %d never reached %s F1 %.3f; using gamma_max", i, metric, target)
            fallback.append(i)
            chosen = gamma_max
        gamma[i] = chosen
        theta[i] = float(path[members, chosen - 1, i].mean()) if members.any() else 0.0
    return MonitorParams(theta=theta, gamma=gamma, gamma_max=gamma_max, fallback=fallback)


def combined_features(objects, probs):
    """Probability row followed by object features at each object's stopping window."""
    rows = []
    for obj, p, t in zip(objects, probs.probs, probs.t):
        rows.append(np.concatenate([p, compute_object_features(obj, int(t))]))
    k = probs.k
    return np.vstack(rows) if rows else np.zeros((0, k + len(OBJECT_FEATURES)))


@dataclass
class TrendLearnerModel:
    cluster_model: ClusterModel
    params: MonitorParams
    forest: Forest
    feature_layout: list
    # forests of the comparison strategies, keyed by name
    baselines: dict = field(default_factory=dict)

    @property
    def k(self):
        return self.cluster_model.k

    def to_dict(self):
        return {
            "version": BUNDLE_VERSION,
            "cluster_model": self.cluster_model.to_dict(),
            "params": self.params.to_dict(),
            "forest": self.forest.to_dict(),
            "feature_layout": list(self.feature_layout),
            "baselines": {name: f.to_dict() for name, f in sorted(self.baselines.items())},
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != BUNDLE_VERSION:
            raise InvalidInputError(f"unsupported model bundle version {doc.get('version')!r}")
        return cls(
            cluster_model=ClusterModel.from_dict(doc["cluster_model"]),
            params=MonitorParams.from_dict(doc["params"]),
            forest=Forest.from_dict(doc["forest"]),
            feature_layout=list(doc["feature_layout"]),
            baselines={name: Forest.from_dict(f) for name, f in doc.get("baselines", {}).items()},
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _fit_forest(X, y, k, seed, categorical, n_min, M):
    if n_min is None:
        folds = min(5, int(np.bincount(y).max()), X.shape[0])
        if folds >= 2:
            n_min = select_n_min(X, y, N_MIN_CANDIDATES, folds=folds, seed=seed, M=M, categorical=categorical)
        else:
            n_min = N_MIN_CANDIDATES[0]
    return train_forest(X, y, M=M, n_min=n_min, seed=seed, categorical=categorical, n_classes=k)


def train_trendlearner(objects, cluster_model, params, seed=0, labels=None, n_min=None, M=20, baselines=True):
    """Train the final ensemble on probabilities plus object features.

    With ``baselines`` set, the forests of the comparison strategies (object
    features only, probabilities only) are trained on the same rows.
    """
    y = np.asarray(cluster_model.assignments if labels is None else labels, dtype=np.int64)
    if y.shape[0] != len(objects):
        raise InvalidInputError("every training object needs a cluster label")
    k = cluster_model.k
    probs = multi_class_probs(_views(objects), cluster_model.centroids, params,
                              object_ids=[o.object_id for o in objects])
    F = combined_features(objects, probs)
    cat = categorical_columns(k)
    forest = _fit_forest(F, y, k, seed, cat, n_min, M)
    extra = {}
    if baselines:
        extra["ertree"] = _fit_forest(F[:, k:], y, k, seed, tuple(c - k for c in cat), n_min, M)
        decided = probs.decided
        if decided.sum() >= 2 and len(np.unique(y[decided])) >= 1:
            extra["p_ertree"] = _fit_forest(F[decided, :k], y[decided], k, seed, (), n_min, M)
    return TrendLearnerModel(
        cluster_model=cluster_model,
        params=params,
        forest=forest,
        feature_layout=feature_layout(k),
        baselines=extra,
    )


@dataclass
class Prediction:
    t: np.ndarray
    labels: np.ndarray
    probs: ProbabilityMatrix
    features: np.ndarray

    @property
    def object_ids(self):
        return self.probs.object_ids


def predict_trendlearner(objects, model):
    """Stopping window, predicted trend and probability rows for each object."""
    k = model.k
    ids = [o.object_id for o in objects]
    probs = multi_class_probs(_views(objects) if objects else [], model.cluster_model.centroids,
                              model.params, object_ids=ids)
    if not objects:
        return Prediction(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), probs, np.zeros((0, k)))
    F = combined_features(objects, probs)
    labels = model.forest.predict(F)
    return Prediction(t=probs.t.copy(), labels=labels, probs=probs, features=F)


ABSTAIN = -1


def baseline_predictors(objects, model, prediction=None):
    """Labels of the comparison strategies at the same stopping windows.

    ``p_only`` takes the most probable class and abstains (-1) on undecided
    rows; ``p_ertree`` is a forest on probabilities only and abstains on the
    same rows; ``ertree`` is a forest on object features only.
    """
    if prediction is None:
        prediction = predict_trendlearner(objects, model)
    k = model.k
    decided = prediction.probs.decided
    out = {"p_only": prediction.probs.argmax()}
    if "p_ertree" in model.baselines:
        lab = np.full(len(objects), ABSTAIN, dtype=np.int64)
        if decided.any():
            lab[decided] = model.baselines["p_ertree"].predict(prediction.features[decided, :k])
        out["p_ertree"] = lab
    if "ertree" in model.baselines:
        out["ertree"] = (
            model.baselines["ertree"].predict(prediction.features[:, k:])
            if len(objects) else np.zeros(0, dtype=np.int64)
        )
    return out


def truth_labels(objects, cluster_model):
    """Trend of each object's complete series: its nearest centroid."""
    return assign_clusters(_views(objects), cluster_model.centroids)
