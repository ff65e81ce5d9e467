import datetime as dt

import numpy as np
import pytest

from trendlearner.data import Referrer, UGCObject
from trendlearner.errors import InvalidPeriodError
from trendlearner.features import OBJECT_FEATURES, compute_object_features, earliest_referrer
from trendlearner.online import MonitorParams, class_probabilities
from trendlearner.pipeline import (
    ABSTAIN,
    TrendLearnerModel,
    baseline_predictors,
    extract_trends,
    learn_params,
    predict_trendlearner,
    train_trendlearner,
    truth_labels,
)
from trendlearner.synthetic import generate_synthetic

IDX = {name: i for i, name in enumerate(OBJECT_FEATURES)}


def make_obj(views, referrers=(), window_days=2.0):
    views = np.asarray(views, dtype=float)
    return UGCObject("o", dt.date(2010, 1, 1), 3, 300, window_days, views, views / 10, views / 5,
                     list(referrers))


def test_feature_examples():
    f = compute_object_features(make_obj([10, 10, 10, 10]), 4)
    assert f[IDX["views"]] == 40 and f[IDX["views_change_rate"]] == 0
    assert f[IDX["peak_fraction"]] == pytest.approx(0.25)
    assert compute_object_features(make_obj([0, 0, 100, 0]), 4)[IDX["peak_fraction"]] == 1.0
    f = compute_object_features(make_obj([5, 15, 40, 0]), 2)
    assert f[IDX["views"]] == 20 and f[IDX["views_change_rate"]] == 10
    assert f[IDX["referrer_first_date"]] == -1 and f[IDX["referrer_views"]] == -1
    with pytest.raises(InvalidPeriodError):
        compute_object_features(make_obj([1, 2]), 3)


def test_earliest_referrer_respects_the_monitoring_period():
    refs = [Referrer(1, dt.date(2010, 1, 8), 50.0), Referrer(2, dt.date(2010, 1, 3), 7.0)]
    o = make_obj(np.ones(10), refs, window_days=2.0)
    assert earliest_referrer(o, 1) is None
    assert earliest_referrer(o, 2).type == 2
    f = compute_object_features(o, 5)
    assert f[IDX["referrer_views"]] == 7.0


def test_features_are_causal(rng):
    ds = generate_synthetic(count=20, n=30, seed=2)
    for o in ds.objects:
        t = int(rng.integers(1, 30))
        cut = UGCObject(o.object_id, o.upload_date, o.category, o.age_days, o.window_days,
                        np.r_[o.views[:t], np.zeros(30 - t)], np.r_[o.comments[:t], np.zeros(30 - t)],
                        np.r_[o.favorites[:t], np.zeros(30 - t)], o.referrers)
        assert np.array_equal(compute_object_features(o, t), compute_object_features(cut, t))


@pytest.fixture(scope="module")
def trained():
    ds = generate_synthetic(count=160, n=30, seed=4)
    train, test = ds.objects[:120], ds.objects[120:]
    cm = extract_trends(train, k=4, seed=0)
    params = learn_params(train, cm, target=0.8)
    model = train_trendlearner(train, cm, params, seed=0, n_min=2, M=10)
    return train, test, model


def test_learn_params_shapes_and_zero_target():
    ds = generate_synthetic(count=60, n=30, seed=1)
    cm = extract_trends(ds.objects, k=3, seed=0)
    p = learn_params(ds.objects, cm, target=0.0)
    assert np.all(p.gamma == 1) and p.fallback == []
    strict = learn_params(ds.objects, cm, target=1.01)
    assert np.all(strict.gamma == 30) and strict.fallback == [0, 1, 2]


def test_feature_arity_and_layout(trained):
    _, test, model = trained
    pred = predict_trendlearner(test, model)
    assert pred.features.shape == (len(test), model.k + 13)
    assert model.feature_layout[:model.k] == [f"p_class{i}" for i in range(model.k)]


def test_prediction_determinism_and_bundle_round_trip(trained, tmp_path):
    train, test, model = trained
    again = train_trendlearner(train, model.cluster_model, model.params, seed=0, n_min=2, M=10)
    assert again.to_dict() == model.to_dict()
    path = tmp_path / "m.json"
    model.save(path)
    back = TrendLearnerModel.load(path)
    a, b = predict_trendlearner(test, model), predict_trendlearner(test, back)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.t, b.t)
    assert np.array_equal(a.probs.probs, b.probs.probs)


def test_every_object_gets_a_label(trained):
    _, test, model = trained
    pred = predict_trendlearner(test, model)
    assert pred.labels.shape == (len(test),)
    assert np.all((pred.labels >= 0) & (pred.labels < model.k))
    assert np.all((pred.t >= 1) & (pred.t <= model.params.gamma_max))
    undecided = ~pred.probs.decided
    assert np.all(pred.t[undecided] == model.params.gamma_max)
    assert np.all(pred.probs.probs[undecided] == 0)


def test_baselines_abstain_exactly_on_undecided_rows():
    ds = generate_synthetic(count=80, n=30, seed=6)
    cm = extract_trends(ds.objects, k=3, seed=0)
    # a confidence bar at the median top probability leaves some rows undecided
    top = class_probabilities(ds.views_matrix(), cm.centroids, 30).max(axis=1)
    bar = float(np.median(top))
    params = MonitorParams(theta=[bar] * 3, gamma=[30] * 3, gamma_max=30)
    model = train_trendlearner(ds.objects, cm, params, seed=0, n_min=2, M=5)
    pred = predict_trendlearner(ds.objects, model)
    base = baseline_predictors(ds.objects, model, pred)
    undecided = ~pred.probs.decided
    assert undecided.any() and (~undecided).any()
    assert np.array_equal(base["p_only"] == ABSTAIN, undecided)
    assert np.array_equal(base["p_ertree"] == ABSTAIN, undecided)
    assert np.all(base["ertree"] >= 0)


def test_empty_prediction(trained):
    _, _, model = trained
    pred = predict_trendlearner([], model)
    assert pred.labels.shape == (0,) and pred.t.shape == (0,)


def test_truth_is_nearest_centroid_of_training_members(trained):
    train, _, model = trained
    assert np.array_equal(truth_labels(train, model.cluster_model), model.cluster_model.assignments)


def test_unsupported_bundle_version(trained):
    doc = trained[2].to_dict()
    doc["version"] = 99
    with pytest.raises(ValueError):
        TrendLearnerModel.from_dict(doc)
