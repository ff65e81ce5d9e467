"""Online trend classification of popularity streams.

A stream prefix of ``t_r`` windows is scored against every trend centroid
by sliding it over all centroid windows of the same length and keeping the
best ``exp(-dist)``. Scores are normalized across classes into membership
probabilities, and an object is decided as soon as its most likely class
clears that class's confidence threshold after the class's minimum
monitoring period.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    InsufficientDataError,
    InvalidInputError,
    InvalidPeriodError,
    InvalidScoreError,
)
from .timeseries import PopStream, dist

log = logging.getLogger(__name__)


@dataclass
class MonitorParams:
    theta: np.ndarray
    gamma: np.ndarray
    gamma_max: int
    # classes whose gamma fell back to gamma_max because no value met the target
    fallback: list = field(default_factory=list)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=np.int64)
        self.gamma_max = int(self.gamma_max)
        if self.theta.shape != self.gamma.shape or self.theta.ndim != 1:
            raise ConfigurationError("theta and gamma must be vectors of equal length")
        if np.any((self.theta < 0) | (self.theta > 1)):
            raise ConfigurationError("theta values must lie in [0, 1]")
        if np.any(self.gamma < 1) or np.any(self.gamma > self.gamma_max):
            raise ConfigurationError("gamma values must lie in [1, gamma_max]")

    @property
    def k(self):
        return int(self.theta.shape[0])

    def to_dict(self):
        return {
            "theta": self.theta.tolist(),
            "gamma": self.gamma.tolist(),
            "gamma_max": self.gamma_max,
            "fallback": list(self.fallback),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["theta"], doc["gamma"], doc["gamma_max"], list(doc.get("fallback", [])))


@dataclass
class ProbabilityMatrix:
    probs: np.ndarray
    t: np.ndarray
    object_ids: list | None = None

    @property
    def decided(self):
        return np.any(self.probs != 0.0, axis=1)

    @property
    def k(self):
        return int(self.probs.shape[1])

    def __len__(self):
        return int(self.probs.shape[0])

    def argmax(self):
        """Most likely class per row, -1 for undecided rows."""
        labels = np.argmax(self.probs, axis=1) if len(self) else np.empty(0, dtype=np.int64)
        return np.where(self.decided, labels, -1)

    def to_csv(self, path):
        ids = self.object_ids or [str(i) for i in range(len(self))]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["object_id", "t"] + [f"p_class{i}" for i in range(self.k)] + ["decided"])
            for oid, t, row, dec in zip(ids, self.t, self.probs, self.decided):
                w.writerow([oid, int(t)] + [repr(float(p)) for p in row] + [int(dec)])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        k = sum(1 for h in header if h.startswith("p_class"))
        ids = [r[0] for r in body]
        t = np.array([int(r[1]) for r in body], dtype=np.int64)
        probs = np.array([[float(x) for x in r[2 : 2 + k]] for r in body]).reshape(len(body), k)
        return cls(probs=probs, t=t, object_ids=ids)


def _as_array(stream):
    if isinstance(stream, PopStream):
        return stream.observed
    return np.asarray(stream, dtype=float)


def normalize_probs(scores):
    """Scale non-negative scores to sum to one; all zeros stay all zeros."""
    s = np.asarray(scores, dtype=float)
    if np.any(s < 0):
        raise InvalidScoreError("scores must be non-negative")
    total = s.sum()
    if total == 0.0:
        return np.zeros_like(s)
    return s / total


def _slice_bank(centroid, t_r):
    """Unit-normalized rows: every length-``t_r`` window of the centroid under every rotation.

    Windows start at offsets ``0 .. len(centroid) - t_r - 1``.
    """
    c = np.asarray(centroid, dtype=float)
    starts = np.arange(c.size - t_r)
    windows = c[starts[:, None] + np.arange(t_r)[None, :]]
    rot = (np.arange(t_r)[None, :] - np.arange(t_r)[:, None]) % t_r
    bank = windows[:, rot].reshape(-1, t_r)
    norms = np.sqrt(np.einsum("ij,ij->i", bank, bank))
    nz = norms > 0
    bank[nz] /= norms[nz, None]
    return bank


def _unit_rows(P):
    norms = np.sqrt(np.einsum("ij,ij->i", P, P))
    live = norms > 0
    U = np.zeros_like(P)
    U[live] = P[live] / norms[live, None]
    return U, live


def align_scores(prefixes, centroid, t_r):
    """Vectorized :func:`align_score` for a batch of prefixes (rows of length >= t_r).

    All-zero prefixes score 0 (no shape information yet).
    """
    if t_r < 1:
        raise InvalidPeriodError(f"t_r must be >= 1, got {t_r}")
    P = np.atleast_2d(np.asarray(prefixes, dtype=float))
    if P.shape[1] < t_r:
        raise InsufficientDataError(f"prefixes have {P.shape[1]} windows, need {t_r}")
    P = P[:, :t_r]
    c = np.asarray(centroid, dtype=float)
    n = c.size
    if t_r <= n - 1:
        U, live = _unit_rows(P)
        cos = U @ _slice_bank(c, t_r).T
        best = np.max(cos * cos, axis=1)
        d = np.sqrt(np.clip(1.0 - best, 0.0, 1.0))
        return np.where(live, np.exp(-d), 0.0)
    # centroid shorter than the prefix: slide the centroid inside the prefix
    out = np.zeros(P.shape[0])
    for i, row in enumerate(P):
        best = 0.0
        for off in range(t_r - n + 1):
            window = row[off : off + n]
            if np.any(window != 0):
                best = max(best, float(np.exp(-dist(window, c).distance)))
        out[i] = best
    return out


def align_score(prefix, centroid, t_r):
    """Best unnormalized membership score of a stream prefix for one centroid.

    Returns ``max exp(-dist(prefix[:t_r], window))`` over the centroid
    windows of length ``t_r``; the value lies in ``(0, 1]`` for a non-zero
    prefix.
    """
    prefix = _as_array(prefix)
    if t_r < 1:
        raise InvalidPeriodError(f"t_r must be >= 1, got {t_r}")
    if prefix.size < t_r:
        raise InsufficientDataError(f"prefix has {prefix.size} windows, need {t_r}")
    return float(align_scores(prefix[None, :t_r], centroid, t_r)[0])


def class_probabilities(prefixes, centroids, t_r):
    """Normalized membership probabilities of each prefix at period ``t_r`` (rows x classes)."""
    P = np.atleast_2d(np.asarray(prefixes, dtype=float))
    scores = np.column_stack([align_scores(P, c, t_r) for c in centroids])
    totals = scores.sum(axis=1, keepdims=True)
    return np.divide(scores, totals, out=np.zeros_like(scores), where=totals > 0)


def probability_path(series, centroids, t_max):
    """Probabilities at every period ``1..t_max``; shape (objects, t_max, classes)."""
    X = np.atleast_2d(np.asarray(series, dtype=float))
    out = np.zeros((X.shape[0], t_max, len(centroids)))
    for t_r in range(1, t_max + 1):
        out[:, t_r - 1, :] = class_probabilities(X, centroids, t_r)
    return out


def whole_set_probabilities(prefixes, references, labels, k, t_r):
    """Membership probabilities using every labeled reference series instead of centroids.

    The class score is the sum over its members of the best-alignment
    ``exp(-dist)``, then scores are normalized across classes.
    """
    P = np.atleast_2d(np.asarray(prefixes, dtype=float))
    R = np.atleast_2d(np.asarray(references, dtype=float))
    labels = np.asarray(labels)
    scores = np.zeros((P.shape[0], k))
    for ref, lab in zip(R, labels):
        scores[:, lab] += align_scores(P, ref, t_r)
    totals = scores.sum(axis=1, keepdims=True)
    return np.divide(scores, totals, out=np.zeros_like(scores), where=totals > 0)


def per_class_prob(stream, centroids, class_index, theta_i, gamma_i, gamma_max):
    """Monitor one stream for one class until its probability reaches ``theta_i``.

    Returns ``(t_r, p)``; ``(gamma_max, 0.0)`` when the threshold is not met
    within ``gamma_max`` windows or before the stream runs out.
    """
    if gamma_i < 1 or gamma_i > gamma_max:
        raise ConfigurationError("need 1 <= gamma_i <= gamma_max")
    values = _as_array(stream)
    if values.size < gamma_i:
        raise InsufficientDataError(
            f"stream has {values.size} windows, fewer than the minimum period {gamma_i}"
        )
    for t_r in range(gamma_i, min(gamma_max, values.size) + 1):
        p = float(class_probabilities(values[None, :t_r], centroids, t_r)[0, class_index])
        if p >= theta_i:
            return t_r, p
    return gamma_max, 0.0


def _stack_streams(streams):
    arrays = [_as_array(s) for s in streams]
    length = max((a.size for a in arrays), default=0)
    X = np.zeros((len(arrays), length))
    lengths = np.zeros(len(arrays), dtype=np.int64)
    for i, a in enumerate(arrays):
        X[i, : a.size] = a
        lengths[i] = a.size
    return X, lengths


def multi_class_probs(streams, centroids, params, object_ids=None):
    """Decide, per stream, the earliest period at which a class can be stated.

    Starting at ``min(gamma)``, every still-undecided stream is scored
    against all centroids; it is decided at ``t_r`` when its top probability
    exceeds ``theta`` of that class and ``t_r >= gamma`` of that class.
    Undecided streams keep an all-zero row and ``t = gamma_max``.
    """
    C = np.atleast_2d(np.asarray(centroids, dtype=float))
    k = C.shape[0]
    if k < 2 or params.k != k:
        raise ConfigurationError(
            f"need >= 2 centroids matching theta/gamma, got {k} centroids and {params.k} parameters"
        )
    ids = list(object_ids) if object_ids is not None else [
        s.object_id if isinstance(s, PopStream) else str(i) for i, s in enumerate(streams)
    ]
    if len(streams) == 0:
        return ProbabilityMatrix(np.zeros((0, k)), np.zeros(0, dtype=np.int64), ids)
    X, lengths = _stack_streams(streams)
    m = X.shape[0]
    probs = np.zeros((m, k))
    t = np.full(m, params.gamma_max, dtype=np.int64)
    pending = np.ones(m, dtype=bool)
    t_r = int(params.gamma.min())
    while t_r <= params.gamma_max and pending.any():
        active = np.flatnonzero(pending & (lengths >= t_r))
        if active.size == 0:
            break
        p = class_probabilities(X[active, :t_r], C, t_r)
        maxc = np.argmax(p, axis=1)
        maxp = p[np.arange(active.size), maxc]
        ok = (maxp > params.theta[maxc]) & (t_r >= params.gamma[maxc])
        hit = active[ok]
        probs[hit] = p[ok]
        t[hit] = t_r
        pending[hit] = False
        t_r += 1
    return ProbabilityMatrix(probs=probs, t=t, object_ids=ids)


def shapelet_report(series, centroids, assignments):
    """Per-class radius ``beta_i`` (largest member distance to the centroid) and the
    fraction of non-members that fall within it."""
    X = np.atleast_2d(np.asarray(series, dtype=float))
    labels = np.asarray(assignments)
    rows = []
    for i, c in enumerate(centroids):
        d = np.array([dist(x, c).distance for x in X])
        members = labels == i
        beta = float(d[members].max()) if members.any() else 0.0
        others = ~members
        inside = float(np.mean(d[others] <= beta)) if others.any() else 0.0
        rows.append({"class": i, "beta": beta, "members": int(members.sum()), "nonmember_fraction_within": inside})
    return rows
