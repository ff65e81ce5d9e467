"""Extremely randomized trees for classification.

Each node draws ``K`` candidate features without replacement and one random
cut per candidate (a uniform threshold inside the node's range for numeric
features, a random non-trivial bipartition of the observed codes for
categorical ones); the candidate with the largest information gain is
kept. Growth stops at pure nodes, nodes with at most ``n_min`` samples, or
nodes where every candidate-eligible feature is constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, InvalidInputError, InvalidTrainingSetError

FORMAT_VERSION = 1
MISSING = -1.0


def _entropy(counts):
    total = counts.sum(axis=-1, keepdims=True)
    p = np.divide(counts, total, out=np.zeros_like(counts, dtype=float), where=total > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(p > 0, np.log2(p), 0.0)
    return -(p * logs).sum(axis=-1)


@dataclass
class Node:
    # leaf when ``value`` is set
    value: np.ndarray | None = None
    feature: int = -1
    threshold: float = 0.0
    # categorical split: codes sent left
    left_codes: frozenset | None = None
    left: "Node | None" = None
    right: "Node | None" = None
    n_samples: int = 0
    gain: float = 0.0

    @property
    def is_leaf(self):
        return self.value is not None

    def goes_left(self, x):
        v = x[self.feature]
        if self.left_codes is not None:
            return int(v) in self.left_codes
        return v < self.threshold

    def to_dict(self):
        if self.is_leaf:
            return {"value": self.value.tolist(), "n": self.n_samples}
        doc = {
            "feature": self.feature,
            "n": self.n_samples,
            "gain": self.gain,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }
        if self.left_codes is not None:
            doc["left_codes"] = sorted(self.left_codes)
        else:
            doc["threshold"] = self.threshold
        return doc

    @classmethod
    def from_dict(cls, doc):
        if "value" in doc:
            return cls(value=np.asarray(doc["value"], dtype=float), n_samples=doc["n"])
        codes = doc.get("left_codes")
        return cls(
            feature=int(doc["feature"]),
            threshold=float(doc.get("threshold", 0.0)),
            left_codes=frozenset(int(c) for c in codes) if codes is not None else None,
            left=cls.from_dict(doc["left"]),
            right=cls.from_dict(doc["right"]),
            n_samples=int(doc["n"]),
            gain=float(doc.get("gain", 0.0)),
        )


def _validate_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidTrainingSetError("training set is empty")
    if y.shape != (X.shape[0],):
        raise InvalidTrainingSetError("X and y lengths differ")
    if np.any(y < 0):
        raise InvalidTrainingSetError("labels must be non-negative integers")
    if not np.all(np.isfinite(X)):
        raise InvalidTrainingSetError("features must be finite (encode missing values as -1)")
    return X, y.astype(np.int64)


class _Builder:
    def __init__(self, X, y, n_classes, K, n_min, categorical, rng):
        self.X = X
        self.y = y
        self.n_classes = n_classes
        self.K = min(K, X.shape[1])
        self.n_min = n_min
        self.categorical = categorical
        self.rng = rng

    def leaf(self, idx):
        counts = np.bincount(self.y[idx], minlength=self.n_classes).astype(float)
        return Node(value=counts / counts.sum(), n_samples=idx.size)

    def build(self, idx):
        y = self.y[idx]
        if idx.size <= self.n_min or np.all(y == y[0]):
            return self.leaf(idx)
        Xn = self.X[idx]
        lo = Xn.min(axis=0)
        hi = Xn.max(axis=0)
        usable = np.flatnonzero(hi > lo)
        if usable.size == 0:
            return self.leaf(idx)
        features = self.rng.choice(usable, size=min(self.K, usable.size), replace=False)
        parent = np.bincount(y, minlength=self.n_classes).astype(float)
        h_parent = float(_entropy(parent))
        best = None
        for f in features:
            col = Xn[:, f]
            if f in self.categorical:
                codes = np.unique(col.astype(np.int64))
                while True:
                    pick = self.rng.random(codes.size) < 0.5
                    if 0 < pick.sum() < codes.size:
                        break
                left_codes = frozenset(int(c) for c in codes[pick])
                mask = np.isin(col.astype(np.int64), codes[pick])
                cut = (None, left_codes)
            else:
                thr = float(self.rng.uniform(lo[f], hi[f]))
                if thr <= lo[f]:
                    thr = float(np.nextafter(lo[f], hi[f]))
                mask = col < thr
                cut = (thr, None)
            left = np.bincount(y[mask], minlength=self.n_classes).astype(float)
            right = parent - left
            nl, nr = left.sum(), right.sum()
            gain = h_parent - (nl * _entropy(left) + nr * _entropy(right)) / idx.size
            if best is None or gain > best[0]:
                best = (float(gain), int(f), cut, mask)
        gain, f, (thr, codes), mask = best
        node = Node(
            feature=f,
            threshold=thr if thr is not None else 0.0,
            left_codes=codes,
            n_samples=idx.size,
            gain=max(gain, 0.0),
        )
        node.left = self.build(idx[mask])
        node.right = self.build(idx[~mask])
        return node


@dataclass
class ExtraTree:
    root: Node
    n_features: int
    n_classes: int

    def predict_proba_one(self, x):
        node = self.root
        while not node.is_leaf:
            node = node.left if node.goes_left(x) else node.right
        return node.value

    def predict_proba(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.vstack([self.predict_proba_one(x) for x in X]) if len(X) else np.zeros((0, self.n_classes))

    def leaves(self):
        stack, out = [self.root], []
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out

    def internal_nodes(self):
        stack, out = [self.root], []
        while stack:
            node = stack.pop()
            if not node.is_leaf:
                out.append(node)
                stack.extend((node.right, node.left))
        return out


def build_extra_tree(X, y, K, n_min, seed, categorical=(), n_classes=None):
    """Grow one extremely randomized tree.

    Parameters
    ----------
    X : array_like, shape (m, p)
    y : array_like of int, shape (m,)
    K : int
        Number of candidate features drawn at each node.
    n_min : int
        Nodes with at most this many samples become leaves.
    seed : int or numpy Generator
    categorical : iterable of int
        Column indices holding small-integer category codes.
    """
    X, y = _validate_xy(X, y)
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    if n_min < 1:
        raise InvalidInputError("n_min must be >= 1")
    n_classes = int(n_classes if n_classes is not None else y.max() + 1)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    builder = _Builder(X, y, n_classes, int(K), int(n_min), frozenset(categorical), rng)
    return ExtraTree(root=builder.build(np.arange(X.shape[0])), n_features=X.shape[1], n_classes=n_classes)


def default_k(n_features):
    return max(1, int(round(math.sqrt(n_features))))


@dataclass
class Forest:
    trees: list
    n_features: int
    n_classes: int
    K: int
    n_min: int
    categorical: tuple = field(default_factory=tuple)
    seed: int | None = None

    @property
    def M(self):
        return len(self.trees)

    def predict_proba(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise InvalidInputError(
                f"expected {self.n_features} features, got {X.shape[1]}"
            )
        if X.shape[0] == 0:
            return np.zeros((0, self.n_classes))
        total = np.zeros((X.shape[0], self.n_classes))
        for tree in self.trees:
            total += tree.predict_proba(X)
        return total / len(self.trees)

    def predict(self, X):
        # argmax returns the first maximum, i.e. ties go to the lowest class
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self):
        return {
            "version": FORMAT_VERSION,
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "K": self.K,
            "n_min": self.n_min,
            "categorical": list(self.categorical),
            "seed": self.seed,
            "trees": [t.root.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != FORMAT_VERSION:
            raise InvalidInputError(f"unsupported forest version {doc.get('version')!r}")
        trees = [
            ExtraTree(Node.from_dict(t), int(doc["n_features"]), int(doc["n_classes"]))
            for t in doc["trees"]
        ]
        return cls(
            trees=trees,
            n_features=int(doc["n_features"]),
            n_classes=int(doc["n_classes"]),
            K=int(doc["K"]),
            n_min=int(doc["n_min"]),
            categorical=tuple(doc.get("categorical", ())),
            seed=doc.get("seed"),
        )


def train_forest(X, y, M=20, K=None, n_min=2, seed=0, categorical=(), n_classes=None):
    """Train ``M`` extremely randomized trees.

    Tree ``i`` draws from the ``i``-th child of ``SeedSequence(seed)``, so the
    first trees of a larger forest equal a smaller forest with the same seed.
    """
    X, y = _validate_xy(X, y)
    if M < 1:
        raise InvalidInputError("M must be >= 1")
    K = default_k(X.shape[1]) if K is None else int(K)
    n_classes = int(n_classes if n_classes is not None else y.max() + 1)
    children = np.random.SeedSequence(seed).spawn(M)
    trees = [
        build_extra_tree(X, y, K, n_min, np.random.default_rng(c), categorical, n_classes)
        for c in children
    ]
    return Forest(
        trees=trees,
        n_features=X.shape[1],
        n_classes=n_classes,
        K=K,
        n_min=int(n_min),
        categorical=tuple(sorted(categorical)),
        seed=seed,
    )


def predict_forest(forest, x):
    """Class-probability vector for one feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError("expected a single feature vector")
    return forest.predict_proba(x[None, :])[0]


def stratified_folds(y, folds, seed):
    """Fold index per sample; classes are dealt round-robin after a seeded shuffle."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    assignment = np.empty(y.shape[0], dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        assignment[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    return assignment


def select_n_min(X, y, candidates=(1, 2, 4, 8, 16, 32), folds=5, seed=0, M=20, K=None, categorical=()):
    """Cross-validated choice of the leaf smoothing size.

    Maximizes mean macro F1 over ``folds`` stratified folds of the training
    data; ties go to the larger ``n_min``.
    """
    from .evaluation import f1_scores

    X, y = _validate_xy(X, y)
    if folds < 2:
        raise InvalidInputError("folds must be >= 2")
    if X.shape[0] < folds:
        raise InsufficientDataError(f"{X.shape[0]} samples cannot fill {folds} folds")
    candidates = sorted(set(int(c) for c in candidates))
    if len(candidates) == 1:
        return candidates[0]
    n_classes = int(y.max() + 1)
    fold_of = stratified_folds(y, folds, seed)
    best_n, best_score = None, -np.inf
    for n_min in candidates:
        scores = []
        for f in range(folds):
            train, test = fold_of != f, fold_of == f
            forest = train_forest(
                X[train], y[train], M=M, K=K, n_min=n_min, seed=seed,
                categorical=categorical, n_classes=n_classes,
            )
            scores.append(f1_scores(y[test], forest.predict(X[test]), n_classes)[1])
        score = float(np.mean(scores))
        if score >= best_score:
            best_n, best_score = n_min, score
    return best_n
