"""Synthetic popularity traces following four labeled trend archetypes.

Templates:

* 0: sustained growth, no dominant peak (linear ramp)
* 1: single peak, slow exponential decay
* 2: single peak, fast exponential decay
* 3: sharp spike

Every series is rescaled to a log-normal total volume and perturbed by
multiplicative Gaussian noise truncated at zero. Categories and referrer
dates are drawn with a template-dependent bias so that object features
carry some (imperfect) information about the trend.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import DEFAULT_N, DatasetManifest, Referrer, UGCObject
from .errors import ConfigurationError

N_TEMPLATES = 4


@dataclass
class SyntheticConfig:
    weights: tuple = (0.25, 0.25, 0.25, 0.25)
    noise: float = 0.1
    count: int = 800
    seed: int = 0
    n: int = DEFAULT_N
    # growth of template 0 per window, relative to its first window
    growth_rate: tuple = (0.02, 0.08)
    # window index of the peak for templates 1-3
    peak_position: tuple = (0, 8)
    rise_width: float = 1.5
    # decay half-life in windows for templates 1, 2, 3
    half_life: tuple = (25.0, 4.0, 0.6)
    half_life_jitter: float = 0.2
    floor: float = 0.01
    # slowly varying log-scale modulation (AR(1) in log space)
    drift: float = 0.3
    drift_corr: float = 0.9
    volume_mu: float = 9.0
    volume_sigma: float = 1.5
    n_categories: int = 8
    # probability that an object's category is its template's preferred one
    category_skew: float = 0.6
    age_range: tuple = (100, 1200)
    start_date: str = "2008-01-01"
    upload_span_days: int = 1400
    max_referrers: int = 10

    def validate(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (N_TEMPLATES,) or np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-9):
            raise ConfigurationError(f"weights must be {N_TEMPLATES} non-negative numbers summing to 1")
        if self.count < 1:
            raise ConfigurationError("count must be >= 1")
        if self.noise < 0:
            raise ConfigurationError("noise must be non-negative")
        if self.n < 2:
            raise ConfigurationError("n must be >= 2")
        if len(self.half_life) != 3 or min(self.half_life) <= 0:
            raise ConfigurationError("half_life needs three positive values")
        if not 0 <= self.category_skew <= 1:
            raise ConfigurationError("category_skew must lie in [0, 1]")
        if self.age_range[0] < 1 or self.age_range[1] < self.age_range[0]:
            raise ConfigurationError("invalid age_range")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        doc = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        return cls(**doc)


def template_shape(template, n, rng, cfg):
    """Noise-free, unnormalized shape of one series."""
    i = np.arange(n, dtype=float)
    if template == 0:
        rate = rng.uniform(*cfg.growth_rate)
        return 1.0 + rate * i
    peak = rng.integers(cfg.peak_position[0], cfg.peak_position[1] + 1)
    hl = cfg.half_life[template - 1] * (1.0 + cfg.half_life_jitter * rng.uniform(-1, 1))
    after = np.exp(-(i - peak) * np.log(2.0) / hl)
    before = np.exp(-((i - peak) ** 2) / (2.0 * cfg.rise_width**2))
    shape = np.where(i >= peak, after, before)
    return np.maximum(shape, cfg.floor)


def _drift(n, sigma, corr, rng):
    if sigma == 0:
        return np.ones(n)
    eps = rng.standard_normal(n)
    z = np.empty(n)
    z[0] = eps[0]
    scale = np.sqrt(1.0 - corr**2)
    for i in range(1, n):
        z[i] = corr * z[i - 1] + scale * eps[i]
    return np.exp(sigma * z)


def _perturb(shape, noise, rng):
    if noise == 0:
        return shape
    return shape * np.maximum(1.0 + noise * rng.standard_normal(shape.shape), 0.0)


def generate_synthetic(config=None, **overrides):
    """Draw a labeled synthetic dataset.

    Same config (including seed) always yields a bit-identical dataset.
    """
    cfg = config if config is not None else SyntheticConfig()
    if overrides:
        cfg = SyntheticConfig(**{**asdict(cfg), **overrides})
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    weights = np.asarray(cfg.weights, dtype=float)
    weights = weights / weights.sum()
    start = dt.date.fromisoformat(cfg.start_date)
    preferred = [(2 * t) % cfg.n_categories for t in range(N_TEMPLATES)]

    objects = []
    for idx in range(cfg.count):
        template = int(rng.choice(N_TEMPLATES, p=weights))
        shape = template_shape(template, n, rng, cfg)
        volume = rng.lognormal(cfg.volume_mu, cfg.volume_sigma)
        shape = shape * _drift(n, cfg.drift, cfg.drift_corr, rng)
        views = _perturb(shape / shape.sum() * volume, cfg.noise, rng)
        views = np.maximum(views, 0.0)
        comment_rate = rng.uniform(0.001, 0.01)
        fav_rate = rng.uniform(0.002, 0.02)
        comments = _perturb(views * comment_rate, cfg.noise, rng)
        favorites = _perturb(views * fav_rate, cfg.noise, rng)

        if rng.random() < cfg.category_skew:
            category = preferred[template]
        else:
            category = int(rng.integers(cfg.n_categories))

        age = int(rng.integers(cfg.age_range[0], cfg.age_range[1] + 1))
        window_days = age / (n - 1)
        upload = start + dt.timedelta(days=int(rng.integers(cfg.upload_span_days)))
        peak_window = int(np.argmax(shape))

        referrers = []
        for _ in range(int(rng.integers(0, cfg.max_referrers + 1))):
            if template == 0:
                when = rng.uniform(0, n)
            else:
                when = max(0.0, peak_window + rng.exponential(2.0 + template))
            first = upload + dt.timedelta(days=int(when * window_days))
            ref_views = float(np.round(views.sum() * rng.uniform(0.001, 0.05)))
            referrers.append(Referrer(type=int(rng.integers(10)), first_date=first, views=ref_views))

        objects.append(
            UGCObject(
                object_id=f"syn-{cfg.seed}-{idx:05d}",
                upload_date=upload,
                category=int(category),
                age_days=age,
                window_days=float(window_days),
                views=views,
                comments=comments,
                favorites=favorites,
                referrers=referrers,
                label=template,
            )
        )
    return DatasetManifest(objects=objects, source="synthetic", seed=cfg.seed, n=n)
