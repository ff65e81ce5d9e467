"""Popularity series primitives and the scale/shift-invariant distance.

The distance between two series ``a`` and ``b`` of equal length ``n`` is

    min over q in (-n, n) and real alpha of ||a - alpha * roll(b, q)|| / ||a||

For a fixed shift the optimal scale has a closed form, so only the shift is
searched. Shifts are rolling, hence ``q`` and ``q - n`` describe the same
rotation; ties are broken toward the smaller ``|q|`` and then the smaller
``q``, which makes the reported shift deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateSeriesError, InvalidInputError, InvalidShiftError


@dataclass(frozen=True)
class Alignment:
    alpha: float
    q: int
    distance: float


class PopStream:
    """Append-only popularity observations of one object.

    Parameters
    ----------
    object_id : str
        Opaque identifier.
    observed : iterable of float, optional
        Observations already available.
    """

    def __init__(self, object_id, observed=()):
        self.object_id = object_id
        self._values: list[float] = []
        self.extend(observed)

    def append(self, value):
        value = float(value)
        if not np.isfinite(value) or value < 0:
            raise InvalidInputError(f"popularity must be a finite non-negative number, got {value}")
        self._values.append(value)

    def extend(self, values):
        for v in values:
            self.append(v)

    def __len__(self):
        return len(self._values)

    def prefix(self, t_r):
        """First ``t_r`` observations as a read-only array."""
        if t_r > len(self._values):
            raise InvalidInputError(
                f"stream {self.object_id!r} has {len(self._values)} observations, asked for {t_r}"
            )
        out = np.array(self._values[:t_r], dtype=float)
        out.flags.writeable = False
        return out

    @property
    def observed(self):
        return self.prefix(len(self._values))


def as_series(values, name="series"):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def rolling_shift(s, q):
    """Rotate ``s`` by ``q`` positions; elements pushed past the end wrap around.

    >>> rolling_shift([7, 8, 9], 1).tolist()
    [9.0, 7.0, 8.0]
    """
    s = as_series(s)
    q = int(q)
    if abs(q) >= s.size:
        raise InvalidShiftError(f"|q| must be < {s.size}, got {q}")
    return np.roll(s, q)


def optimal_alpha(target, candidate_shifted):
    """Scale minimizing ``||target - alpha * candidate_shifted||``."""
    target = as_series(target, "target")
    cand = as_series(candidate_shifted, "candidate")
    if target.size != cand.size:
        raise InvalidInputError("series lengths differ")
    denom = float(cand @ cand)
    if denom == 0.0:
        raise DegenerateSeriesError("candidate series is all zeros")
    return float(target @ cand) / denom


@lru_cache(maxsize=256)
def shift_order(n):
    """Canonical shift per distinct rotation, sorted by (|q|, q).

    Each of the ``n`` rotations reachable with ``q`` in ``(-n, n)`` appears
    once, represented by its preferred shift under the tie-break rule.
    """
    qs = sorted(range(-(n - 1), n), key=lambda q: (abs(q), q))
    seen = set()
    order = []
    for q in qs:
        r = q % n
        if r not in seen:
            seen.add(r)
            order.append(q)
    out = np.array(order, dtype=np.int64)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=256)
def _roll_index(n):
    qs = shift_order(n)
    idx = (np.arange(n)[None, :] - qs[:, None]) % n
    idx.flags.writeable = False
    return idx


def rolled_copies(b):
    """Matrix whose row ``j`` is ``roll(b, shift_order(n)[j])``."""
    b = np.asarray(b, dtype=float)
    return b[..., _roll_index(b.shape[-1])]


def dist(a, b):
    """Scale- and shift-invariant distance from ``a`` to ``b``.

    Returns an :class:`Alignment` with the minimizing scale and shift. An
    all-zero ``b`` yields distance 1 with ``alpha = 0``.

    >>> dist([1, 2, 3, 4], [2, 4, 6, 8]).alpha
    0.5
    """
    a = as_series(a, "a")
    b = as_series(b, "b")
    if a.size != b.size:
        raise InvalidInputError(f"series lengths differ: {a.size} vs {b.size}")
    a_norm = float(np.sqrt(a @ a))
    if a_norm == 0.0:
        raise DegenerateSeriesError("distance is undefined for an all-zero first series")
    bb = float(b @ b)
    if bb == 0.0:
        return Alignment(alpha=0.0, q=0, distance=1.0)
    rolls = rolled_copies(b)
    dots = rolls @ a
    # minimizing the residual == maximizing dot^2; argmax keeps the first (preferred) shift
    j = int(np.argmax(dots * dots))
    alpha = float(dots[j]) / bb
    resid = a - alpha * rolls[j]
    d = float(np.sqrt(resid @ resid)) / a_norm
    return Alignment(alpha=alpha, q=int(shift_order(a.size)[j]), distance=min(d, 1.0))


def dist_many(X, c):
    """Distances from every row of ``X`` to the single series ``c``.

    Returns ``(distances, shifts, alphas)`` with the same semantics as
    :func:`dist` applied row by row. Rows of ``X`` must be non-degenerate.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    c = np.asarray(c, dtype=float)
    n = c.size
    if X.shape[1] != n:
        raise InvalidInputError("series lengths differ")
    x_norm = np.sqrt(np.einsum("ij,ij->i", X, X))
    if np.any(x_norm == 0.0):
        raise DegenerateSeriesError("distance is undefined for an all-zero first series")
    cc = float(c @ c)
    if cc == 0.0:
        m = X.shape[0]
        return np.ones(m), np.zeros(m, dtype=np.int64), np.zeros(m)
    rolls = rolled_copies(c)
    dots = X @ rolls.T
    j = np.argmax(dots * dots, axis=1)
    best = dots[np.arange(X.shape[0]), j]
    alphas = best / cc
    resid = X - alphas[:, None] * rolls[j]
    d = np.sqrt(np.einsum("ij,ij->i", resid, resid)) / x_norm
    return np.minimum(d, 1.0), shift_order(n)[j], alphas


def peak_fraction(values):
    """Largest single-window value over the total (0 for an all-zero series)."""
    v = np.asarray(values, dtype=float)
    total = float(v.sum())
    if total <= 0.0:
        return 0.0
    return float(v.max()) / total
