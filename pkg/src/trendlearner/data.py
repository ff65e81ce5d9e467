"""UGC objects, dataset manifests and NDJSON persistence.

A dataset file holds one JSON document per line. An optional first line of
the form ``{"_manifest": {...}}`` carries the manifest metadata (source,
seed, n); every other line is one object::

    {"object_id": "v1", "upload_date": "2010-03-01", "category": 3,
     "age_days": 420, "window_days": 4.24, "views": [...100 numbers...],
     "comments": [...], "favorites": [...],
     "referrers": [{"type": 2, "first_date": "2010-03-04", "views": 120}],
     "label": 1}

``label`` is optional (ground truth for generated data).
"""
from __future__ import annotations

import datetime as dt
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetParseError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_N = 100
MIN_AGE_DAYS = 100
EPOCH = dt.date(1970, 1, 1)


def days_since_epoch(day):
    return float((day - EPOCH).days)


@dataclass(frozen=True)
class Referrer:
    type: int
    first_date: dt.date
    views: float


@dataclass(eq=False)
class UGCObject:
    object_id: str
    upload_date: dt.date
    category: int
    age_days: int
    window_days: float
    views: np.ndarray
    comments: np.ndarray
    favorites: np.ndarray
    referrers: list = field(default_factory=list)
    label: int | None = None

    def __post_init__(self):
        self.views = np.asarray(self.views, dtype=float)
        self.comments = np.asarray(self.comments, dtype=float)
        self.favorites = np.asarray(self.favorites, dtype=float)

    @property
    def n(self):
        return int(self.views.shape[0])

    def to_dict(self):
        doc = {
            "object_id": self.object_id,
            "upload_date": self.upload_date.isoformat(),
            "category": int(self.category),
            "age_days": int(self.age_days),
            "window_days": float(self.window_days),
            "views": self.views.tolist(),
            "comments": self.comments.tolist(),
            "favorites": self.favorites.tolist(),
            "referrers": [
                {"type": int(r.type), "first_date": r.first_date.isoformat(), "views": float(r.views)}
                for r in self.referrers
            ],
        }
        if self.label is not None:
            doc["label"] = int(self.label)
        return doc

    def __eq__(self, other):
        if not isinstance(other, UGCObject):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass
class DatasetManifest:
    objects: list
    source: str = "file"
    seed: int | None = None
    n: int = DEFAULT_N
    filtered: list = field(default_factory=list)

    def __len__(self):
        return len(self.objects)

    @property
    def labels(self):
        return [o.label for o in self.objects]

    def views_matrix(self):
        return np.vstack([o.views for o in self.objects]) if self.objects else np.empty((0, self.n))


def _parse_date(value, line, name):
    try:
        return dt.date.fromisoformat(value)
    except (TypeError, ValueError):
        raise DatasetParseError(f"expected an ISO date, got {value!r}", line, name) from None


def _require(doc, name, line):
    if name not in doc:
        raise DatasetParseError("missing field", line, name)
    return doc[name]


def _number_list(doc, name, line):
    values = _require(doc, name, line)
    if not isinstance(values, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
    ):
        raise DatasetParseError("expected a list of numbers", line, name)
    return np.asarray(values, dtype=float)


def object_from_dict(doc, line=None):
    if not isinstance(doc, dict):
        raise DatasetParseError("expected a JSON object", line)
    try:
        referrers = [
            Referrer(
                type=int(_require(r, "type", line)),
                first_date=_parse_date(_require(r, "first_date", line), line, "referrers.first_date"),
                views=float(_require(r, "views", line)),
            )
            for r in doc.get("referrers", [])
        ]
        label = doc.get("label")
        return UGCObject(
            object_id=str(_require(doc, "object_id", line)),
            upload_date=_parse_date(_require(doc, "upload_date", line), line, "upload_date"),
            category=int(_require(doc, "category", line)),
            age_days=int(_require(doc, "age_days", line)),
            window_days=float(_require(doc, "window_days", line)),
            views=_number_list(doc, "views", line),
            comments=_number_list(doc, "comments", line),
            favorites=_number_list(doc, "favorites", line),
            referrers=referrers,
            label=None if label is None else int(label),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DatasetParseError):
            raise
        raise DatasetParseError(str(exc), line) from None


def validate_objects(objects, n=DEFAULT_N, min_age=MIN_AGE_DAYS):
    """Split objects into kept and age-filtered ones; raise on malformed series.

    Returns ``(kept, filtered_ids)``.
    """
    bad = []
    for o in objects:
        series = (o.views, o.comments, o.favorites)
        if any(s.shape != (n,) for s in series):
            bad.append(o.object_id)
        elif any(np.any(s < 0) or not np.all(np.isfinite(s)) for s in series):
            bad.append(o.object_id)
        elif o.window_days <= 0:
            bad.append(o.object_id)
    if bad:
        raise ValidationError(
            f"{len(bad)} object(s) have series of the wrong length, negative values "
            f"or a non-positive window: {', '.join(bad[:20])}",
            bad,
        )
    kept = [o for o in objects if o.age_days >= min_age]
    filtered = [o.object_id for o in objects if o.age_days < min_age]
    if filtered:
        log.warning("dropped %d object(s) younger than %d days", len(filtered), min_age)
    return kept, filtered


def load_dataset(path, n=DEFAULT_N, min_age=MIN_AGE_DAYS):
    """Read and validate an NDJSON dataset."""
    path = Path(path)
    meta = {}
    objects = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(exc.msg, lineno) from None
            if isinstance(doc, dict) and "_manifest" in doc:
                meta = doc["_manifest"]
                continue
            objects.append(object_from_dict(doc, lineno))
    n = int(meta.get("n", n))
    kept, filtered = validate_objects(objects, n=n, min_age=min_age)
    return DatasetManifest(
        objects=kept,
        source=meta.get("source", "file"),
        seed=meta.get("seed"),
        n=n,
        filtered=filtered,
    )


def save_dataset(manifest, path):
    path = Path(path)
    with path.open("w") as fh:
        meta = {"source": manifest.source, "seed": manifest.seed, "n": manifest.n}
        fh.write(json.dumps({"_manifest": meta}) + "\n")
        for o in manifest.objects:
            fh.write(json.dumps(o.to_dict()) + "\n")
