"""K-Spectral Centroid clustering and beta_CV based choice of k."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSeriesError,
    DivisionDegenerateError,
    EmptyClusterError,
    InvalidInputError,
    InvalidKError,
    NoElbowError,
)
from .timeseries import dist, dist_many, peak_fraction

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

# members are aligned against every one of them when the reference is unknown
_MULTISTART_LIMIT = 64

DEFAULT_N_INIT = 10


def _as_matrix(series):
    X = np.asarray(series, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("expected a non-empty list of equal-length series")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("series contain non-finite values")
    return X


def _check_nondegenerate(X):
    zero = np.flatnonzero(~np.any(X != 0.0, axis=1))
    if zero.size:
        raise DegenerateSeriesError(f"all-zero series at positions {zero[:10].tolist()}")


@dataclass
class ClusterModel:
    centroids: np.ndarray
    assignments: np.ndarray
    window_days: float = 1.0
    beta_cv_curve: dict = field(default_factory=dict)
    object_ids: list | None = None
    distortion_history: list = field(default_factory=list)
    converged: bool = True

    @property
    def k(self):
        return int(self.centroids.shape[0])

    @property
    def n(self):
        return int(self.centroids.shape[1])

    def to_dict(self):
        return {
            "version": FORMAT_VERSION,
            "k": self.k,
            "window_days": float(self.window_days),
            "centroids": self.centroids.tolist(),
            "beta_cv_curve": {str(k): v for k, v in sorted(self.beta_cv_curve.items())},
            "assignments": self.assignments.tolist(),
            "object_ids": self.object_ids,
            "distortion_history": list(self.distortion_history),
            "converged": bool(self.converged),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != FORMAT_VERSION:
            raise InvalidInputError(f"unsupported cluster model version {doc.get('version')!r}")
        centroids = np.asarray(doc["centroids"], dtype=float)
        if centroids.shape[0] != doc["k"]:
            raise InvalidInputError("centroid count does not match k")
        return cls(
            centroids=centroids,
            assignments=np.asarray(doc.get("assignments") or [], dtype=np.int64),
            window_days=float(doc.get("window_days", 1.0)),
            beta_cv_curve={int(k): v for k, v in doc.get("beta_cv_curve", {}).items()},
            object_ids=doc.get("object_ids"),
            distortion_history=list(doc.get("distortion_history", [])),
            converged=bool(doc.get("converged", True)),
        )


def distance_matrix(series, centroids):
    """``D[i, j] = dist(series[i], centroids[j]).distance``."""
    X = _as_matrix(series)
    C = np.atleast_2d(np.asarray(centroids, dtype=float))
    _check_nondegenerate(X)
    D = np.empty((X.shape[0], C.shape[0]))
    for j, c in enumerate(C):
        D[:, j] = dist_many(X, c)[0]
    return D


def assign_clusters(series, centroids):
    """Index of the nearest centroid for every series (ties go to the lowest index)."""
    C = np.atleast_2d(np.asarray(centroids, dtype=float))
    if C.shape[0] == 0:
        raise InvalidInputError("no centroids given")
    return np.argmin(distance_matrix(series, C), axis=1)


def _sign_fix(c):
    return -c if c.sum() < 0 else c


def _spectral_solve(aligned):
    norms = np.sqrt(np.einsum("ij,ij->i", aligned, aligned))
    U = aligned / norms[:, None]
    m, n = U.shape
    M = m * np.eye(n) - U.T @ U
    _, vecs = np.linalg.eigh(M)
    c = vecs[:, 0]
    return _sign_fix(c / np.linalg.norm(c))


def _align_to(X, c):
    _, q, _ = dist_many(X, c)
    # member ~ alpha * roll(c, q)  =>  roll(member, -q) ~ alpha * c
    n = X.shape[1]
    idx = (np.arange(n)[None, :] + q[:, None]) % n
    return X[np.arange(X.shape[0])[:, None], idx], q


def _refine(X, c, max_iter):
    shifts = None
    for _ in range(max_iter):
        aligned, q = _align_to(X, c)
        if shifts is not None and np.array_equal(q, shifts):
            break
        shifts = q
        c = _spectral_solve(aligned)
    return c


def _shift_table(X, c):
    """Squared distance of every member to every rolled copy of ``c``; columns are shifts -(n-1)..n-1."""
    n = X.shape[1]
    R = np.stack([np.roll(c, q) for q in range(-(n - 1), n)])
    U = X / np.linalg.norm(X, axis=1, keepdims=True)
    cos = U @ (R / np.linalg.norm(R, axis=1, keepdims=True)).T
    return np.maximum(1.0 - cos ** 2, 0.0)


def _polish(X, c, max_iter, gap=1e-3, tries=20):
    """Escape kinks where a member's best shift nearly ties another one.

    At such a point the alternating scheme is stationary but switching the
    member to the runner-up shift and re-solving can still lower the
    objective.
    """
    n = X.shape[1]
    obj = within_distortion(X, c)
    for _ in range(max_iter):
        D = _shift_table(X, c)
        q0 = np.argmin(D, axis=1)
        excess = D - D[np.arange(X.shape[0]), q0][:, None]
        excess[np.arange(X.shape[0]), q0] = np.inf
        rows, cols = np.nonzero(excess < gap)
        order = np.argsort(excess[rows, cols], kind="stable")[:tries]
        improved = False
        for r, col in zip(rows[order], cols[order]):
            q = q0.copy()
            q[r] = col
            aligned = np.stack([np.roll(X[d], -(q[d] - (n - 1))) for d in range(X.shape[0])])
            cand = _refine(X, _spectral_solve(aligned), max_iter)
            cand_obj = within_distortion(X, cand)
            if cand_obj < obj - 1e-13:
                c, obj, improved = cand, cand_obj, True
                break
        if not improved:
            break
    return c


def within_distortion(members, centroid):
    """Sum of squared distances from members to the centroid."""
    X = _as_matrix(members)
    return float(np.sum(dist_many(X, centroid)[0] ** 2))


def compute_centroid(members, reference=None, max_iter=50, polish=True):
    """Unit-norm minimizer of the summed squared distance to ``members``.

    Members are aligned (shifted) to the current estimate, the centroid is
    taken as the eigenvector with the smallest eigenvalue of
    ``sum_d (I - x_d x_d^T / ||x_d||^2)``, and the two steps alternate until
    the alignment no longer changes.

    Parameters
    ----------
    members : array_like, shape (m, n)
    reference : array_like, optional
        Starting estimate, typically the previous centroid of the cluster.
        Without one, the unaligned solution and (for small clusters) every
        member are tried as starting points and the best result is kept.
    """
    X = np.asarray(members, dtype=float)
    if X.size == 0:
        raise EmptyClusterError("cannot compute the centroid of an empty cluster")
    X = _as_matrix(X)
    _check_nondegenerate(X)
    if reference is not None and np.any(np.asarray(reference) != 0):
        return _refine(X, np.asarray(reference, dtype=float), max_iter)

    starts = [_spectral_solve(X)]
    if X.shape[0] <= _MULTISTART_LIMIT:
        starts.extend(X[j] / np.linalg.norm(X[j]) for j in range(X.shape[0]))
    best, best_obj = None, np.inf
    for s in starts:
        c = _refine(X, s, max_iter)
        obj = float(np.sum(dist_many(X, c)[0] ** 2))
        if obj < best_obj - 1e-15:
            best, best_obj = c, obj
    return _polish(X, best, max_iter) if polish else best


def _canonical_order(centroids):
    fractions = [peak_fraction(c) for c in centroids]
    return np.argsort(fractions, kind="stable")


def ksc_cluster(series, k, seed=0, max_iter=100, n_init=DEFAULT_N_INIT, object_ids=None, window_days=1.0):
    """Cluster series by shape with the K-Spectral Centroid algorithm.

    Each run starts from a uniformly random assignment and alternates
    centroid updates with nearest-centroid reassignment until no series
    changes cluster or ``max_iter`` iterations ran. ``n_init`` independent
    runs are made from seed-derived streams and the one with the lowest
    final distortion is kept. Clusters are returned ordered by ascending
    peak fraction of their centroid.
    """
    X = _as_matrix(series)
    N = X.shape[0]
    if not isinstance(k, (int, np.integer)) or k < 1 or k > N:
        raise InvalidKError(f"k must be in 1..{N}, got {k}")
    if n_init < 1:
        raise InvalidInputError("n_init must be >= 1")
    _check_nondegenerate(X)
    best = None
    for rng in (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_init)):
        run = _ksc_run(X, k, rng, max_iter)
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    C, labels, history, converged = best

    order = _canonical_order(C)
    remap = np.empty(k, dtype=np.int64)
    remap[order] = np.arange(k)
    return ClusterModel(
        centroids=C[order],
        assignments=remap[labels],
        window_days=window_days,
        object_ids=list(object_ids) if object_ids is not None else None,
        distortion_history=history,
        converged=converged,
    )


def _ksc_run(X, k, rng, max_iter):
    N = X.shape[0]
    labels = rng.integers(0, k, size=N)
    for j in range(k):
        if not np.any(labels == j):
            sizes = np.bincount(labels, minlength=k)
            donors = np.flatnonzero(labels == np.argmax(sizes))
            labels[rng.choice(donors)] = j

    centroids = [None] * k
    history = []
    converged = False
    for _ in range(max_iter):
        centroids = [compute_centroid(X[labels == j], reference=centroids[j], polish=False) for j in range(k)]
        D = np.column_stack([dist_many(X, c)[0] for c in centroids])
        new = np.argmin(D, axis=1)
        new = _repair_empty(new, D, centroids, X, k)
        history.append(float(np.sum(D[np.arange(N), new] ** 2)))
        if np.array_equal(new, labels):
            converged = True
            break
        labels = new
    if not converged:
        log.warning("KSC stopped after %d iterations without converging", max_iter)
        centroids = [compute_centroid(X[labels == j], reference=centroids[j]) for j in range(k)]
    return np.vstack(centroids), labels, history, converged


def _repair_empty(labels, D, centroids, X, k):
    labels = labels.copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        sizes = np.bincount(labels, minlength=k)
        own = D[np.arange(len(labels)), labels].copy()
        own[sizes[labels] <= 1] = -1.0
        far = int(np.argmax(own))
        labels[far] = j
        D[far, j] = 0.0
        centroids[j] = X[far] / np.linalg.norm(X[far])
    return labels


def _cv(values):
    values = np.asarray(values, dtype=float)
    mean = values.mean()
    if mean == 0.0:
        return 0.0
    return float(values.std() / mean)


def cluster_distances(series, model):
    """Intracluster (member to own centroid) and intercluster (centroid pair) distances."""
    X = _as_matrix(series)
    labels = np.asarray(model.assignments)
    if labels.shape[0] != X.shape[0]:
        raise InvalidInputError("assignments do not match the series")
    intra = np.empty(X.shape[0])
    for j, c in enumerate(model.centroids):
        mask = labels == j
        if np.any(mask):
            intra[mask] = dist_many(X[mask], c)[0]
    C = model.centroids
    inter = [dist(C[i], C[j]).distance for i in range(len(C)) for j in range(i + 1, len(C))]
    return intra, np.asarray(inter)


def beta_cv(series, model):
    """CV of intracluster distances divided by CV of intercluster distances."""
    if model.k < 2:
        raise InvalidKError("beta_CV needs at least two clusters")
    intra, inter = cluster_distances(series, model)
    cv_inter = _cv(inter)
    if cv_inter == 0.0:
        raise DivisionDegenerateError(
            f"intercluster distances have zero coefficient of variation (k={model.k})"
        )
    return _cv(intra) / cv_inter


def beta_cv_curve(series, k_max, seed=0, k_min=2):
    """beta_CV for every k in ``k_min..k_max``.

    Values that are undefined (zero intercluster CV, which is always the
    case for k = 2) are recorded as ``None``. Returns ``(curve, models)``.
    """
    curve, models = {}, {}
    for k in range(k_min, k_max + 1):
        model = ksc_cluster(series, k, seed=seed)
        models[k] = model
        try:
            curve[k] = beta_cv(series, model)
        except DivisionDegenerateError:
            curve[k] = None
    return curve, models


def _relative_change(prev, cur):
    if prev == 0.0:
        return 0.0 if cur == 0.0 else np.inf
    return abs(cur - prev) / abs(prev)


def select_stable_k(curve, stability_tol=0.1, window=2):
    """Smallest k from which beta_CV stays within ``stability_tol``.

    A candidate k qualifies when ``beta(k), ..., beta(k + window - 1)`` are
    all defined and each differs from its predecessor by less than
    ``stability_tol`` (relative). With the default ``window = 2`` this is a
    single step: beta barely moves when going from k to k + 1.
    """
    if window < 2:
        raise InvalidInputError("window must be >= 2")
    for k in sorted(curve):
        span = [curve.get(k + j) for j in range(window)]
        if (k + window - 1) not in curve:
            break
        if any(v is None for v in span):
            continue
        if all(_relative_change(a, b) < stability_tol for a, b in zip(span, span[1:])):
            return k
    raise NoElbowError(
        f"beta_CV never stabilized within tolerance {stability_tol}", curve
    )


def choose_k(series, k_max=15, stability_tol=0.1, window=2, seed=0):
    """Pick the number of clusters from the beta_CV curve over k = 2..k_max."""
    if k_max < 3:
        raise InvalidKError("k_max must be >= 3")
    curve, _ = beta_cv_curve(series, k_max, seed=seed)
    return select_stable_k(curve, stability_tol, window)
