"""Per-object features available after a monitoring period."""
from __future__ import annotations

import numpy as np

from .data import days_since_epoch
from .errors import InvalidPeriodError
from .timeseries import peak_fraction

MISSING = -1.0

OBJECT_FEATURES = (
    "category",
    "upload_date",
    "age_days",
    "window_days",
    "referrer_first_date",
    "referrer_views",
    "views",
    "comments",
    "favorites",
    "views_change_rate",
    "comments_change_rate",
    "favorites_change_rate",
    "peak_fraction",
)
CATEGORICAL = ("category",)


def _change_rate(values):
    if values.size < 2:
        return 0.0
    return float(np.mean(np.diff(values)))


def earliest_referrer(obj, t_r):
    """Earliest referrer first seen within the first ``t_r`` windows, or None.

    A referrer counts when its first date falls before the end of window
    ``t_r``, i.e. less than ``t_r * window_days`` days after upload.
    """
    horizon = t_r * obj.window_days
    seen = [r for r in obj.referrers if (r.first_date - obj.upload_date).days < horizon]
    if not seen:
        return None
    return min(seen, key=lambda r: (r.first_date, -r.views, r.type))


def compute_object_features(obj, t_r):
    """Feature vector of ``obj`` using only windows ``1..t_r``; order follows ``OBJECT_FEATURES``."""
    if not 1 <= t_r <= obj.n:
        raise InvalidPeriodError(f"t_r must lie in 1..{obj.n}, got {t_r}")
    views = obj.views[:t_r]
    comments = obj.comments[:t_r]
    favorites = obj.favorites[:t_r]
    ref = earliest_referrer(obj, t_r)
    return np.array(
        [
            float(obj.category),
            days_since_epoch(obj.upload_date),
            float(obj.age_days),
            float(obj.window_days),
            days_since_epoch(ref.first_date) if ref is not None else MISSING,
            float(ref.views) if ref is not None else MISSING,
            float(views.sum()),
            float(comments.sum()),
            float(favorites.sum()),
            _change_rate(views),
            _change_rate(comments),
            _change_rate(favorites),
            peak_fraction(views),
        ]
    )


def feature_layout(k):
    return [f"p_class{i}" for i in range(k)] + list(OBJECT_FEATURES)


def categorical_columns(k):
    return tuple(k + OBJECT_FEATURES.index(name) for name in CATEGORICAL)
