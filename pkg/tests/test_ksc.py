import json

import numpy as np
import pytest
from scipy.optimize import minimize

from trendlearner.errors import DivisionDegenerateError, EmptyClusterError, InvalidKError, NoElbowError
from trendlearner.ksc import (
    ClusterModel,
    beta_cv,
    beta_cv_curve,
    choose_k,
    cluster_distances,
    compute_centroid,
    ksc_cluster,
    select_stable_k,
    within_distortion,
)
from trendlearner.synthetic import generate_synthetic
from trendlearner.timeseries import dist, peak_fraction, rolling_shift


def objective(members, c):
    return sum(dist(x, c).distance ** 2 for x in members)


def sphere_grid_oracle(members, steps=120):
    """Best unit vector in 3-D by grid search over the sphere, then local polish."""
    best, best_c = np.inf, None
    for th in np.linspace(0, np.pi, steps):
        for ph in np.linspace(0, 2 * np.pi, 2 * steps, endpoint=False):
            c = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
            v = objective(members, c)
            if v < best:
                best, best_c = v, c
    res = minimize(lambda v: objective(members, v / np.linalg.norm(v)), best_c, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    return min(best, res.fun)


def test_centroid_matches_grid_oracle():
    rng = np.random.default_rng(3)
    for _ in range(4):
        members = rng.random((6, 3)) + 0.05
        c = compute_centroid(members)
        assert np.linalg.norm(c) == pytest.approx(1.0)
        assert objective(members, c) == pytest.approx(sphere_grid_oracle(members), abs=1e-3)
        assert objective(members, c) <= sphere_grid_oracle(members) + 1e-9


def test_centroid_perturbation_never_improves():
    rng = np.random.default_rng(4)
    members = rng.random((20, 30)) + 0.01
    c = compute_centroid(members)
    base = within_distortion(members, c)
    for _ in range(50):
        v = c + 1e-2 * rng.standard_normal(c.size)
        v /= np.linalg.norm(v)
        assert within_distortion(members, v) >= base - 1e-8


def test_centroid_of_scaled_shifted_copies_is_the_template():
    t = np.array([0.0, 1.0, 5.0, 2.0, 1.0, 0.5])
    members = [c * rolling_shift(t, q) for c, q in [(1, 0), (3, 1), (0.5, -2), (7, 3)]]
    c = compute_centroid(members)
    assert dist(t, c).distance < 1e-9


def test_compute_centroid_empty():
    with pytest.raises(EmptyClusterError):
        compute_centroid(np.zeros((0, 5)))


def two_template_data(rng, per=15, n=24):
    a = np.zeros(n)
    a[2] = 10.0
    a[3] = 4.0
    b = np.linspace(1.0, 2.0, n)
    X, y = [], []
    for lab, t in enumerate((a, b)):
        for _ in range(per):
            X.append(rng.uniform(0.5, 20) * np.roll(t, rng.integers(0, 5)) * (1 + 0.02 * rng.standard_normal(n)))
            y.append(lab)
    return np.abs(np.array(X)), np.array(y)


def test_two_templates_separate_perfectly(rng):
    X, y = two_template_data(rng)
    m = ksc_cluster(X, 2, seed=1)
    for j in range(2):
        assert len(set(y[m.assignments == j])) == 1
    assert sorted(np.bincount(m.assignments)) == [15, 15]


def test_k_one_and_invalid_k(rng):
    X, _ = two_template_data(rng)
    m = ksc_cluster(X, 1)
    assert np.all(m.assignments == 0)
    with pytest.raises(InvalidKError):
        ksc_cluster(X, 0)
    with pytest.raises(InvalidKError):
        ksc_cluster(X, X.shape[0] + 1)


def test_determinism_and_distortion_monotone(rng):
    X, _ = two_template_data(rng, per=20)
    X = X + rng.random(X.shape)
    a = ksc_cluster(X, 3, seed=7, n_init=1)
    b = ksc_cluster(X, 3, seed=7, n_init=1)
    assert np.array_equal(a.assignments, b.assignments)
    assert np.array_equal(a.centroids, b.centroids)
    h = np.array(a.distortion_history)
    assert np.all(np.diff(h) <= 1e-9 * h[:-1])


def test_canonical_order_by_peak_fraction(rng):
    X, _ = two_template_data(rng)
    m = ksc_cluster(X, 2, seed=0)
    pf = [peak_fraction(c) for c in m.centroids]
    assert pf == sorted(pf)


def test_generator_label_fidelity_without_noise():
    ds = generate_synthetic(seed=0, count=200, noise=0.0)
    y = np.array(ds.labels)
    m = ksc_cluster(ds.views_matrix(), 4, seed=0)
    purity = sum(np.bincount(y[m.assignments == j]).max() for j in range(4)) / y.size
    assert purity == 1.0
    # the sharp-spike template ends up last in canonical order
    assert np.all(m.assignments[y == 3] == 3)


def cv_oracle(values):
    values = list(values)
    mean = sum(values) / len(values)
    if mean == 0:
        return 0.0
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return var ** 0.5 / mean


def test_beta_cv_matches_hand_rolled_oracle(rng):
    X = rng.random((12, 8)) + 0.1
    m = ksc_cluster(X, 3, seed=0)
    intra = [dist(x, m.centroids[l]).distance for x, l in zip(X, m.assignments)]
    inter = [dist(m.centroids[i], m.centroids[j]).distance for i in range(3) for j in range(i + 1, 3)]
    assert beta_cv(X, m) == pytest.approx(cv_oracle(intra) / cv_oracle(inter), rel=1e-12)
    ci, ce = cluster_distances(X, m)
    assert np.allclose(ci, intra) and np.allclose(ce, inter)


def test_beta_cv_zero_numerator_and_degenerate_cases():
    C = np.array([[1.0, 0, 0, 0], [0, 1.0, 2.0, 0], [1.0, 1, 1, 1]])
    C /= np.linalg.norm(C, axis=1, keepdims=True)
    X = np.vstack([C[0], C[0], C[1], C[1], C[2], C[2]])
    m = ClusterModel(centroids=C, assignments=np.array([0, 0, 1, 1, 2, 2]))
    assert beta_cv(X, m) == 0.0
    two = ClusterModel(centroids=C[:2], assignments=np.array([0, 0, 1, 1]))
    with pytest.raises(DivisionDegenerateError):
        beta_cv(X[:4], two)
    one = ClusterModel(centroids=C[:1], assignments=np.zeros(2, dtype=int))
    with pytest.raises(InvalidKError):
        beta_cv(X[:2], one)


def test_select_stable_k_rule():
    assert select_stable_k({2: None, 3: 2.4, 4: 1.8, 5: 1.75, 6: 1.2}) == 4
    assert select_stable_k({2: None, 3: 1.0, 4: 1.05, 5: 0.4}) == 3
    with pytest.raises(NoElbowError) as exc:
        select_stable_k({2: None, 3: 2.0, 4: 1.0, 5: 0.5})
    assert exc.value.curve[5] == 0.5
    with pytest.raises(NoElbowError):
        select_stable_k({3: 1.0, 4: 1.01, 5: 1.02}, stability_tol=0.0)
    # a longer window demands stability over more steps
    assert select_stable_k({3: 1.0, 4: 1.05, 5: 0.5, 6: 0.51, 7: 0.52}, window=3) == 5


def test_single_template_never_selects_two(rng):
    # beta_CV is undefined at k = 2, so a one-shape dataset cannot resolve to 2
    base = np.exp(-np.arange(24) / 3.0)
    X = np.abs(np.stack([rng.uniform(1, 9) * np.roll(base, rng.integers(0, 5)) for _ in range(30)])
               * (1 + 0.05 * rng.standard_normal((30, 24))))
    try:
        k = choose_k(X, k_max=6, seed=0)
    except NoElbowError as exc:
        assert exc.curve[2] is None
    else:
        assert k >= 3


def test_beta_cv_curve_marks_k2_undefined(rng):
    X, _ = two_template_data(rng, per=8)
    curve, models = beta_cv_curve(X, 4, seed=0)
    assert curve[2] is None
    assert set(models) == {2, 3, 4}
    assert all(curve[k] > 0 for k in (3, 4))


def test_cluster_model_round_trip(rng):
    X, _ = two_template_data(rng)
    m = ksc_cluster(X, 2, seed=0, object_ids=[f"o{i}" for i in range(len(X))], window_days=3.5)
    m.beta_cv_curve = {2: None, 3: 1.25}
    doc = json.loads(json.dumps(m.to_dict()))
    back = ClusterModel.from_dict(doc)
    assert np.array_equal(back.centroids, m.centroids)
    assert np.array_equal(back.assignments, m.assignments)
    assert back.beta_cv_curve == m.beta_cv_curve
    assert back.window_days == 3.5 and back.object_ids == m.object_ids
    assert back.distortion_history == m.distortion_history
    assert back.to_dict() == m.to_dict()
