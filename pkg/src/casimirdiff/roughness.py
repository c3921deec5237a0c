"""Additive roughness correction by averaging over local separations.

Heights ``h`` are measured from each body's mean surface towards the gap, so
a local separation is ``z + delta`` with ``delta = -(h_sphere + h_plate)``.
The corrected force is ``sum_k p_k F(z + delta_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError
from .lifshitz import ForceCurve

DEFAULT_BINS = 64
MAX_SUPPORT = 4096
REBIN_TO = 256


@dataclass(frozen=True, eq=False)
class HeightDistribution:
    """Discrete distribution of separation offsets (m), re-centred to zero mean."""

    offsets: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        p = np.atleast_1d(np.asarray(self.probabilities, dtype=float))
        if d.shape != p.shape or d.ndim != 1 or d.size == 0:
            raise DomainError("offsets and probabilities must be equally long 1-d arrays")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError("probabilities must be >= 0 and sum to 1")
        order = np.argsort(d, kind="stable")
        d, p = d[order], p[order]
        d = d - np.dot(p, d)
        object.__setattr__(self, "offsets", d)
        object.__setattr__(self, "probabilities", p)

    @property
    def mean(self) -> float:
        return float(np.dot(self.probabilities, self.offsets))

    @property
    def variance(self) -> float:
        return float(np.dot(self.probabilities, (self.offsets - self.mean) ** 2))

    def mirrored(self) -> "HeightDistribution":
        return HeightDistribution(-self.offsets, self.probabilities)

    @classmethod
    def delta(cls) -> "HeightDistribution":
        return cls(np.zeros(1), np.ones(1))


def _normalise(p):
    p = np.asarray(p, dtype=float)
    return p / p.sum()


def _bin_weighted(values, weights, bins: int):
    """Histogram with each bin represented by the weighted mean of its members."""
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.array([lo]), np.array([weights.sum()])
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, bins - 1)
    w = np.bincount(idx, weights=weights, minlength=bins)
    s = np.bincount(idx, weights=weights * values, minlength=bins)
    occupied = w > 0
    return s[occupied] / w[occupied], w[occupied]


def distribution_from_samples(heights, bin_count: int = DEFAULT_BINS) -> HeightDistribution:
    """Histogram of measured heights (m).

    Each occupied bin is represented by the mean of the samples falling in it,
    so the distribution keeps the sample mean exactly before re-centring.
    """
    h = np.asarray(heights, dtype=float).ravel()
    if h.size < 2:
        raise DomainError("need at least 2 height samples")
    if bin_count < 1:
        raise DomainError("bin_count must be >= 1")
    centres, w = _bin_weighted(h, np.ones_like(h), bin_count)
    return HeightDistribution(centres, _normalise(w))


def gaussian_distribution(sigma: float, points: int = 61, width: float = 5.0) -> HeightDistribution:
    """Discretised zero-mean Gaussian on ``+-width*sigma`` (variance rescaled to ``sigma**2``)."""
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    if sigma == 0:
        return HeightDistribution.delta()
    x = np.linspace(-width, width, points)
    p = _normalise(np.exp(-0.5 * x * x))
    x = x / np.sqrt(np.dot(p, x * x))
    return HeightDistribution(sigma * x, p)


def combine(sphere_dist: HeightDistribution, plate_dist: HeightDistribution,
            resolution: float = 1e-15) -> HeightDistribution:
    """Offset distribution ``delta = -(h_sphere + h_plate)`` of two independent surfaces.

    Offsets closer than ``resolution`` (m) are merged; supports larger than
    4096 points are re-binned to 256 bins.
    """
    d = -(sphere_dist.offsets[:, None] + plate_dist.offsets[None, :]).ravel()
    p = (sphere_dist.probabilities[:, None] * plate_dist.probabilities[None, :]).ravel()
    key = np.round(d / resolution).astype(np.int64)
    uniq, inv = np.unique(key, return_inverse=True)
    pw = np.bincount(inv, weights=p)
    dw = np.bincount(inv, weights=p * d) / np.where(pw > 0, pw, 1.0)
    keep = pw > 0
    dw, pw = dw[keep], pw[keep]
    if dw.size > MAX_SUPPORT:
        dw, pw = _bin_weighted(dw, pw, REBIN_TO)
    return HeightDistribution(dw, _normalise(pw))


def roughness_correct(
    force_fn: Callable[[np.ndarray], np.ndarray],
    grid,
    dist: HeightDistribution,
    base: ForceCurve | None = None,
) -> ForceCurve:
    """``F_rough(z_i) = sum_k p_k F(z_i + delta_k)``.

    ``force_fn`` maps an array of separations (m) to forces (N).  ``base``,
    if given, supplies metadata for the returned curve.

    Raises
    ------
    DomainError
        If some ``z_i + delta_k <= 0``.
    """
    z = np.asarray(grid, dtype=float)
    local = z[:, None] + dist.offsets[None, :]
    if np.any(local <= 0):
        i, k = np.argwhere(local <= 0)[0]
        raise DomainError(
            f"roughness offset {dist.offsets[k]:.4g} m closes the gap at z = {z[i]:.4g} m"
        )
    if dist.offsets.size == 1 and dist.offsets[0] == 0.0:
        values = np.asarray(force_fn(z), dtype=float)
    else:
        values = np.asarray(force_fn(local.ravel()), dtype=float).reshape(local.shape) @ dist.probabilities
    meta = dict(base.metadata) if base is not None else {}
    meta["roughness_applied"] = True
    meta["roughness_rms_m"] = float(np.sqrt(dist.variance))
    return ForceCurve(z.copy(), values, None, meta)


def required_span(grid, dist: HeightDistribution) -> tuple[float, float]:
    """Separation range a force table must cover for :func:`roughness_correct`."""
    z = np.asarray(grid, dtype=float)
    return float(z.min() + dist.offsets.min()), float(z.max() + dist.offsets.max())
