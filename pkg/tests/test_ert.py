import json

import numpy as np
import pytest

from trendlearner.ert import (
    ExtraTree,
    Forest,
    Node,
    _entropy,
    build_extra_tree,
    default_k,
    predict_forest,
    select_n_min,
    stratified_folds,
    train_forest,
)
from trendlearner.errors import InsufficientDataError, InvalidInputError, InvalidTrainingSetError
from trendlearner.evaluation import f1_scores


def separable_2d(rng, m=200):
    X = rng.uniform(-1, 1, (m, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    return X, y


def walk(node, X, idx, out):
    out.append((node, idx))
    if not node.is_leaf:
        go = np.array([node.goes_left(x) for x in X[idx]], dtype=bool)
        walk(node.left, X, idx[go], out)
        walk(node.right, X, idx[~go], out)
    return out


def test_single_class_is_one_leaf():
    tree = build_extra_tree(np.arange(10.0)[:, None], np.full(10, 2), K=1, n_min=1, seed=0, n_classes=3)
    assert tree.root.is_leaf
    assert tree.root.value.tolist() == [0.0, 0.0, 1.0]


def test_n_min_at_least_size_gives_frequency_leaf():
    y = np.array([0, 0, 1, 2])
    tree = build_extra_tree(np.arange(4.0)[:, None], y, K=1, n_min=4, seed=0)
    assert tree.root.is_leaf
    assert np.allclose(tree.root.value, [0.5, 0.25, 0.25])


def test_one_dimensional_separable_split(rng):
    x = np.r_[rng.uniform(-3, 0, 20) - 1e-3, rng.uniform(1, 4, 20)]
    y = np.r_[np.zeros(20, int), np.ones(20, int)]
    tree = build_extra_tree(x[:, None], y, K=1, n_min=1, seed=5)
    assert np.array_equal(np.argmax(tree.predict_proba(x[:, None]), axis=1), y)


def test_empty_training_set():
    with pytest.raises(InvalidTrainingSetError):
        build_extra_tree(np.zeros((0, 2)), np.zeros(0, int), K=1, n_min=1, seed=0)


def test_tree_structure_invariants(rng):
    X, y = separable_2d(rng)
    X = np.c_[X, rng.integers(0, 5, len(X))]
    tree = build_extra_tree(X, y, K=2, n_min=3, seed=1, categorical=(2,))
    for node, idx in walk(tree.root, X, np.arange(len(X)), []):
        assert idx.size >= 1
        if node.is_leaf:
            assert np.all(node.value >= 0) and node.value.sum() == pytest.approx(1.0, abs=1e-12)
        else:
            assert idx.size > 3
            assert node.gain >= 0


def test_chosen_split_has_largest_gain_among_candidates():
    # replay the builder's random stream and score every candidate independently
    rng = np.random.default_rng(0)
    X = rng.random((40, 3))
    y = (X[:, 1] > 0.4).astype(int)
    tree = build_extra_tree(X, y, K=3, n_min=40 - 1, seed=np.random.default_rng(9))
    replay = np.random.default_rng(9)
    feats = replay.choice(np.arange(3), size=3, replace=False)
    gains = []
    parent = np.bincount(y, minlength=2).astype(float)
    for f in feats:
        thr = replay.uniform(X[:, f].min(), X[:, f].max())
        left = np.bincount(y[X[:, f] < thr], minlength=2).astype(float)
        right = parent - left
        gains.append(_entropy(parent) - (left.sum() * _entropy(left) + right.sum() * _entropy(right)) / 40)
    assert tree.root.gain == pytest.approx(max(gains))
    assert tree.root.feature == feats[int(np.argmax(gains))]


def test_forest_accuracy_on_separable_data(rng):
    X, y = separable_2d(rng, 400)
    forest = train_forest(X[:300], y[:300], M=20, K=default_k(2), n_min=2, seed=0)
    assert np.mean(forest.predict(X[:300]) == y[:300]) >= 0.95
    assert np.mean(forest.predict(X[300:]) == y[300:]) >= 0.9


def test_forest_determinism_prefix_stability_and_order_invariance(rng):
    X, y = separable_2d(rng)
    a = train_forest(X, y, M=10, seed=3)
    b = train_forest(X, y, M=10, seed=3)
    big = train_forest(X, y, M=15, seed=3)
    probe = rng.uniform(-1, 1, (50, 2))
    assert np.array_equal(a.predict_proba(probe), b.predict_proba(probe))
    for t1, t2 in zip(a.trees, big.trees):
        assert t1.root.to_dict() == t2.root.to_dict()
    shuffled = Forest(trees=a.trees[::-1], n_features=2, n_classes=2, K=a.K, n_min=a.n_min)
    assert np.allclose(shuffled.predict_proba(probe), a.predict_proba(probe), atol=1e-15)
    one = train_forest(X, y, M=1, seed=4)
    tree = build_extra_tree(X, y, one.K, one.n_min, np.random.default_rng(np.random.SeedSequence(4).spawn(1)[0]))
    assert np.array_equal(one.predict_proba(probe), tree.predict_proba(probe))


def test_tie_goes_to_lowest_class():
    leaf_a = Node(value=np.array([1.0, 0.0]), n_samples=1)
    leaf_b = Node(value=np.array([0.0, 1.0]), n_samples=1)
    f = Forest(trees=[ExtraTree(leaf_a, 1, 2), ExtraTree(leaf_b, 1, 2)], n_features=1, n_classes=2, K=1, n_min=1)
    assert predict_forest(f, [0.3]).tolist() == [0.5, 0.5]
    assert f.predict([[0.3]]).tolist() == [0]
    with pytest.raises(InvalidInputError):
        f.predict_proba([[0.3, 1.0]])


def test_forest_round_trip_is_exact(rng):
    X, y = separable_2d(rng)
    X = np.c_[X, rng.integers(0, 4, len(X))]
    f = train_forest(X, y, M=5, seed=2, categorical=(2,))
    back = Forest.from_dict(json.loads(json.dumps(f.to_dict())))
    probe = np.c_[rng.uniform(-1, 1, (40, 2)), rng.integers(0, 4, 40)]
    assert np.array_equal(back.predict_proba(probe), f.predict_proba(probe))


def test_select_n_min(rng):
    X, y = separable_2d(rng, 100)
    assert select_n_min(X, y, candidates=(8,)) == 8
    first = select_n_min(X, y, folds=3, seed=1, M=5)
    assert first == select_n_min(X, y, folds=3, seed=1, M=5)
    noise = rng.integers(0, 2, 100)
    assert select_n_min(X, noise, folds=3, seed=2, M=5) == select_n_min(X, noise, folds=3, seed=2, M=5)
    with pytest.raises(InsufficientDataError):
        select_n_min(X[:3], y[:3], folds=5)


def test_select_n_min_matches_cv_oracle(rng):
    X, y = separable_2d(rng, 60)
    cands = (1, 4, 16)
    folds = stratified_folds(y, 3, 0)
    scores = {}
    for c in cands:
        s = []
        for f in range(3):
            tr, te = folds != f, folds == f
            forest = train_forest(X[tr], y[tr], M=5, n_min=c, seed=0, n_classes=2)
            s.append(f1_scores(y[te], forest.predict(X[te]), 2)[1])
        scores[c] = np.mean(s)
    best = max(scores.values())
    expect = max(c for c in cands if scores[c] == best)
    assert select_n_min(X, y, cands, folds=3, seed=0, M=5) == expect


def test_stratified_folds_balance(rng):
    y = np.repeat([0, 1, 2], [10, 7, 5])
    f = stratified_folds(y, 5, 0)
    sizes = np.bincount(f, minlength=5)
    assert sizes.max() - sizes.min() <= 1
    for c in range(3):
        per = np.bincount(f[y == c], minlength=5)
        assert per.max() - per.min() <= 1
