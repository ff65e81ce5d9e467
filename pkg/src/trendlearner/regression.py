"""Popularity regression: linear (ML) and radial-basis augmented (MRBF) models.

Models predict the cumulative view count at window ``t_r + delta`` from the
per-window views of the first ``t_r`` windows. Weights minimize the relative
squared error through weighted least squares with weights ``1 / y^2``.
Specialized bundles hold one model per (predicted class, monitoring period)
bucket and fall back to the general model elsewhere.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, InvalidInputError, InvalidTargetError, RankDeficiencyError
from .evaluation import ci_halfwidth

log = logging.getLogger(__name__)

RIDGE_EPS = 1e-8
MIN_SAMPLES = 10
N_EXAMPLES = 50
SIGMA_GRID = tuple(2.0**p for p in range(-3, 4))
DELTAS = (1, 7, 15)
STRATEGIES = ("general_ml", "general_mrbf", "specialized_ml", "specialized_mrbf")


@dataclass
class RegressionModel:
    kind: str
    weights: np.ndarray
    intercept: float
    reference_windows: int
    delta: int
    rbf_examples: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    rbf_sigma: float = 1.0

    @property
    def n_features(self):
        return self.reference_windows + (self.rbf_examples.shape[0] if self.kind == "MRBF" else 0)

    def features(self, prefixes):
        P = np.atleast_2d(np.asarray(prefixes, dtype=float))
        if P.shape[1] != self.reference_windows:
            raise InvalidInputError(
                f"prefix length {P.shape[1]} differs from the model's {self.reference_windows} windows"
            )
        if self.kind != "MRBF" or self.rbf_examples.shape[0] == 0:
            return P
        return np.hstack([P, rbf_features(P, self.rbf_examples, self.rbf_sigma)])

    def predict(self, prefixes):
        return np.maximum(self.features(prefixes) @ self.weights + self.intercept, 0.0)

    def to_dict(self):
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "intercept": float(self.intercept),
            "reference_windows": int(self.reference_windows),
            "delta": int(self.delta),
            "rbf_examples": self.rbf_examples.tolist(),
            "rbf_sigma": float(self.rbf_sigma),
        }

    @classmethod
    def from_dict(cls, doc):
        ex = np.asarray(doc.get("rbf_examples", []), dtype=float)
        return cls(
            kind=doc["kind"],
            weights=np.asarray(doc["weights"], dtype=float),
            intercept=float(doc["intercept"]),
            reference_windows=int(doc["reference_windows"]),
            delta=int(doc["delta"]),
            rbf_examples=ex.reshape(-1, int(doc["reference_windows"])) if ex.size else np.zeros((0, 0)),
            rbf_sigma=float(doc.get("rbf_sigma", 1.0)),
        )


def predict_popularity(model, prefix):
    """Predicted cumulative popularity for one prefix, clamped below at 0."""
    prefix = np.asarray(prefix, dtype=float)
    if prefix.ndim != 1:
        raise InvalidInputError("prefix must be one-dimensional")
    return float(model.predict(prefix[None, :])[0])


def rbf_features(P, examples, sigma):
    d2 = ((P[:, None, :] - examples[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-d2 / (2.0 * sigma**2))


def _split(series, t_r, delta):
    X = np.atleast_2d(np.asarray(series, dtype=float))
    if t_r < 1 or delta < 0 or t_r + delta > X.shape[1]:
        raise InvalidInputError(f"need 1 <= t_r and t_r + delta <= {X.shape[1]}, got {t_r} + {delta}")
    y = X[:, : t_r + delta].sum(axis=1)
    if np.any(y <= 0):
        raise InvalidTargetError("cumulative popularity at the target window must be positive")
    return X[:, :t_r], y


def fit_relative(F, y, ridge=RIDGE_EPS):
    """Weights and intercept minimizing ``sum((F w + b) / y - 1)^2``.

    Rank-deficient systems raise unless ``ridge`` is set. The ridge term
    first penalizes only the intercept (so a constant column is absorbed by
    the feature weights) and then every coefficient if that is not enough.
    """
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    if F.shape[0] == 0:
        raise InsufficientDataError("no training samples")
    Z = np.hstack([F, np.ones((F.shape[0], 1))]) / y[:, None]
    ones = np.ones(F.shape[0])
    p = Z.shape[1]
    if np.linalg.matrix_rank(Z) == p:
        beta = np.linalg.lstsq(Z, ones, rcond=None)[0]
        return beta[:-1], float(beta[-1])
    if ridge is None:
        raise RankDeficiencyError("normal equations are singular; set a ridge term")
    A = Z.T @ Z
    rhs = Z.T @ ones
    lam = ridge * max(np.trace(A) / p, 1e-300)
    pen = np.zeros(p)
    pen[-1] = lam
    M = A + np.diag(pen)
    if np.linalg.matrix_rank(M) < p:
        M = A + lam * np.eye(p)
    beta = np.linalg.solve(M, rhs)
    return beta[:-1], float(beta[-1])


def train_ml(series, t_r, delta, ridge=RIDGE_EPS):
    P, y = _split(series, t_r, delta)
    w, b = fit_relative(P, y, ridge)
    return RegressionModel("ML", w, b, t_r, delta)


def _relative_error(pred, y):
    return (pred / y - 1.0) ** 2


def _pairwise_median(P, cap=400):
    Q = P[:cap]
    d = np.sqrt(((Q[:, None, :] - Q[None, :, :]) ** 2).sum(axis=2))
    iu = np.triu_indices(Q.shape[0], 1)
    med = float(np.median(d[iu])) if iu[0].size else 1.0
    return med if med > 0 else 1.0


def _fit_mrbf(P, y, examples, sigma, t_r, delta, ridge):
    F = np.hstack([P, rbf_features(P, examples, sigma)]) if examples.shape[0] else P
    w, b = fit_relative(F, y, ridge)
    return RegressionModel("MRBF", w, b, t_r, delta, examples, float(sigma))


def train_mrbf(series, t_r, delta, n_examples=N_EXAMPLES, seed=0, sigma=None, folds=5, ridge=RIDGE_EPS):
    """ML features plus Gaussian similarities to ``n_examples`` random training prefixes.

    Unless ``sigma`` is given it is chosen by ``folds``-fold cross-validation
    of the relative squared error over a geometric grid centered on the
    median pairwise prefix distance.
    """
    P, y = _split(series, t_r, delta)
    N = P.shape[0]
    if not 0 <= n_examples <= N:
        raise InvalidInputError(f"n_examples must lie in 0..{N}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(N, size=n_examples, replace=False)) if n_examples else np.zeros(0, dtype=int)
    examples = P[idx].copy() if n_examples else np.zeros((0, t_r))
    if sigma is None:
        sigma = _pairwise_median(P)
        if n_examples and N >= folds >= 2:
            sigma = _cv_sigma(P, y, examples, sigma, t_r, delta, folds, rng, ridge)
    return _fit_mrbf(P, y, examples, sigma, t_r, delta, ridge)


def _cv_sigma(P, y, examples, center, t_r, delta, folds, rng, ridge):
    order = rng.permutation(P.shape[0])
    parts = np.array_split(order, folds)
    best, best_err = center, np.inf
    for s in (center * g for g in SIGMA_GRID):
        err = 0.0
        for j in range(folds):
            test = parts[j]
            train = np.concatenate([parts[i] for i in range(folds) if i != j])
            try:
                m = _fit_mrbf(P[train], y[train], examples, s, t_r, delta, ridge)
            except RankDeficiencyError:
                err = np.inf
                break
            err += _relative_error(m.predict(P[test]), y[test]).sum()
        if err < best_err:
            best, best_err = s, err
    return float(best)


@dataclass
class SpecializedBundle:
    delta: int
    models: dict
    # general model per reference window, used for small buckets
    fallback: dict

    def model_for(self, label, t):
        return self.models.get((int(label), int(t))) or self.fallback[int(t)]


def _eligible(t, delta, n):
    return t + delta <= n


def train_specialized(series, labels, t, delta, kind="ML", min_samples=MIN_SAMPLES, n_examples=N_EXAMPLES,
                      seed=0, general=None, keys=None):
    """One model per (predicted class, t) bucket.

    The model of bucket (c, t) is fit at reference window t on every
    training series predicted as class c. Buckets whose class has fewer
    than ``min_samples`` series, or no more series than coefficients, use
    the general model trained on all series at that t. ``keys`` lists the
    buckets to build (default: those occurring in the training set); keys
    with ``t + delta`` beyond the series length are skipped.
    """
    X = np.atleast_2d(np.asarray(series, dtype=float))
    labels = np.asarray(labels, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    n = X.shape[1]
    general = {} if general is None else general
    if keys is None:
        keys = zip(labels, t)
    keys = sorted({(int(c), int(tt)) for c, tt in keys if 1 <= tt and _eligible(tt, delta, n)})
    models = {}
    for c, tt in keys:
        if tt not in general:
            general[tt] = _train(X, tt, delta, kind, n_examples, seed)
        members = np.flatnonzero(labels == c)
        ex = min(n_examples, members.size) if kind == "MRBF" else 0
        if members.size < max(min_samples, tt + ex + 2):
            continue
        try:
            models[(c, tt)] = _train(X[members], tt, delta, kind, ex, seed, ridge=None)
        except RankDeficiencyError:
            log.info("bucket (%d, %d) is rank deficient; using the general model", c, tt)
    return SpecializedBundle(delta=delta, models=models, fallback=general)


def _train(X, t_r, delta, kind, n_examples, seed, ridge=RIDGE_EPS):
    if kind == "ML":
        return train_ml(X, t_r, delta, ridge)
    if kind == "MRBF":
        return train_mrbf(X, t_r, delta, min(n_examples, X.shape[0]), seed, ridge=ridge)
    raise InvalidInputError(f"unknown model kind {kind!r}")


def evaluate_regression(train_series, train_labels, train_t, test_series, test_labels, test_t,
                        deltas=DELTAS, n_examples=N_EXAMPLES, seed=0, min_samples=MIN_SAMPLES,
                        strategies=STRATEGIES):
    """mRSE of every strategy and delta on the test objects.

    Each test object is predicted from its own first ``t`` windows; general
    strategies use a model trained on all training series at that ``t``.
    Returns rows with keys strategy, delta, mean, ci_halfwidth, n.
    """
    Xtr = np.atleast_2d(np.asarray(train_series, dtype=float))
    Xte = np.atleast_2d(np.asarray(test_series, dtype=float))
    test_labels = np.asarray(test_labels, dtype=np.int64)
    test_t = np.asarray(test_t, dtype=np.int64)
    n = Xte.shape[1]
    rows = []
    for delta in deltas:
        keep = np.flatnonzero(test_t + delta <= n)
        errs = {s: [] for s in strategies}
        for kind in ("ML", "MRBF"):
            names = [s for s in strategies if s.endswith(kind.lower())]
            if not names:
                continue
            keys = [(test_labels[i], test_t[i]) for i in keep]
            bundle = train_specialized(Xtr, train_labels, train_t, delta, kind, min_samples, n_examples, seed,
                                       keys=keys)
            general = bundle.fallback
            for i in keep:
                tt = int(test_t[i])
                if tt not in general:
                    general[tt] = _train(Xtr, tt, delta, kind, n_examples, seed)
                y = Xte[i, : tt + delta].sum()
                if y <= 0:
                    continue
                prefix = Xte[i, :tt]
                for s in names:
                    m = general[tt] if s.startswith("general") else bundle.model_for(test_labels[i], tt)
                    errs[s].append(_relative_error(predict_popularity(m, prefix), y))
        for s in strategies:
            e = np.asarray(errs[s])
            rows.append({
                "strategy": s,
                "delta": int(delta),
                "mean": float(e.mean()) if e.size else float("nan"),
                "ci_halfwidth": ci_halfwidth(e),
                "n": int(e.size),
            })
    return rows
