"""Reduction of repeated force scans and theory-experiment comparison.

Experimental quantities here are in nm and pN, the units force data are
recorded in; :class:`~casimirdiff.lifshitz.ForceCurve` objects stay in SI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st

from .errors import DomainError, GridMismatchError
from .lifshitz import ForceCurve

RULES = ("quadrature", "direct-sum", "dominant")
DEFAULT_CONFIDENCE = 0.95
DEFAULT_OPTICAL_FRACTION = 0.005


@dataclass(frozen=True, eq=False)
class RepeatedScans:
    """``N`` force scans (pN) sharing one separation grid (nm)."""

    z_nm: np.ndarray
    forces_pN: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z_nm, dtype=float)
        f = np.atleast_2d(np.asarray(self.forces_pN, dtype=float))
        if z.ndim != 1 or f.shape[1] != z.size:
            raise GridMismatchError("every scan must have one force per grid point")
        if f.shape[0] < 2:
            raise DomainError("need at least 2 repetitions")
        object.__setattr__(self, "z_nm", z)
        object.__setattr__(self, "forces_pN", f)

    @property
    def n(self) -> int:
        return self.forces_pN.shape[0]

    @classmethod
    def stack(cls, grids, rows) -> "RepeatedScans":
        """Stack scans recorded on different grids onto the first scan's grid (linear interpolation)."""
        grids = [np.asarray(g, dtype=float) for g in grids]
        ref = grids[0]
        out = []
        for g, r in zip(grids, rows):
            r = np.asarray(r, dtype=float)
            if g.shape == ref.shape and np.array_equal(g, ref):
                out.append(r)
                continue
            if ref[0] < g.min() or ref[-1] > g.max():
                raise GridMismatchError("scan does not cover the reference grid")
            order = np.argsort(g)
            out.append(np.interp(ref, g[order], r[order]))
        return cls(ref, np.array(out))


@dataclass(frozen=True, eq=False)
class ErrorBudget:
    random_pN: np.ndarray
    systematic_pN: float = 0.0
    theory_dz_nm: float = 0.0
    optical_fraction: float = DEFAULT_OPTICAL_FRACTION

    def __post_init__(self):
        if np.any(np.asarray(self.random_pN) < 0) or self.systematic_pN < 0 or self.theory_dz_nm < 0 \
                or self.optical_fraction < 0:
            raise DomainError("error budget components must be >= 0")


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    z_nm: np.ndarray
    half_width_pN: np.ndarray
    confidence: float = DEFAULT_CONFIDENCE
    rule: str = "quadrature"

    def __post_init__(self):
        if np.any(np.asarray(self.half_width_pN) < 0):
            raise DomainError("band half-width must be >= 0")


def mean_curve(scans: RepeatedScans) -> ForceCurve:
    """Pointwise mean of the repetitions, as a ForceCurve in SI units."""
    return ForceCurve(scans.z_nm * 1e-9, scans.forces_pN.mean(axis=0) * 1e-12, None,
                      {"source": "mean of repeated scans", "repetitions": scans.n})


def t_quantile(confidence: float, dof: int) -> float:
    return float(_st.t.ppf(0.5 + confidence / 2.0, dof))


def student_t_random_error(scans: RepeatedScans, confidence: float = DEFAULT_CONFIDENCE) -> np.ndarray:
    """Half-width ``t_{(1+c)/2, N-1} s / sqrt(N)`` of the mean at every grid point (pN)."""
    if scans.n < 2:
        raise DomainError("need at least 2 repetitions")
    s = scans.forces_pN.std(axis=0, ddof=1)
    return t_quantile(confidence, scans.n - 1) * s / math.sqrt(scans.n)


def _combine(a, b, rule: str):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if rule == "quadrature":
        return np.hypot(a, b)
    if rule == "direct-sum":
        return a + b
    if rule == "dominant":
        return np.maximum(a, b)
    raise DomainError(f"unknown combination rule {rule!r}; choose from {', '.join(RULES)}")


def combine_random_systematic(random, systematic, rule: str = "dominant"):
    """Total experimental error from random and systematic parts.

    ``dominant`` keeps the larger part (a small systematic error is absorbed by
    the random one), ``quadrature`` adds in quadrature, ``direct-sum`` adds.
    """
    out = _combine(random, systematic, rule)
    return float(out) if out.ndim == 0 else out


def theory_error(
    curve: ForceCurve,
    dz_nm: float,
    optical_fraction: float = DEFAULT_OPTICAL_FRACTION,
) -> np.ndarray:
    """Theoretical error (pN): ``|dF/dz| dz`` and ``optical_fraction |F|`` in quadrature.

    The slope is taken numerically (second-order finite differences) on the
    curve's own grid, which must have at least 3 points and no step larger
    than 25% of the local separation.
    """
    if dz_nm < 0 or optical_fraction < 0:
        raise DomainError("error inputs must be >= 0")
    z, F = curve.z, curve.force
    if z.size < 3:
        raise DomainError("need at least 3 grid points for a slope")
    if np.any(np.diff(z) / z[:-1] > 0.25):
        raise DomainError("grid too coarse for a numerical slope")
    slope = np.gradient(F, z, edge_order=2)
    return np.hypot(np.abs(slope) * dz_nm * 1e-9, optical_fraction * np.abs(F)) * 1e12


def confidence_band(theory_err, expt_err, z_nm=None, rule: str = "quadrature",
                    confidence: float = DEFAULT_CONFIDENCE) -> ConfidenceBand:
    """Half-width of the band for theory-minus-experiment differences."""
    t, e = np.asarray(theory_err, dtype=float), np.asarray(expt_err, dtype=float)
    if t.shape != e.shape:
        raise GridMismatchError("theory and experiment errors are on different grids")
    z = np.arange(t.size, dtype=float) if z_nm is None else np.asarray(z_nm, dtype=float)
    if z.shape != t.shape:
        raise GridMismatchError("z grid does not match the errors")
    return ConfidenceBand(z, _combine(t, e, rule), confidence, rule)


@dataclass
class ConsistencyReport:
    fraction_inside: float
    worst_z_nm: float
    worst_excess_pN: float
    consistent: bool
    threshold: float

    def as_dict(self) -> dict:
        return dict(fraction_inside=self.fraction_inside, worst_z_nm=self.worst_z_nm,
                    worst_excess_pN=self.worst_excess_pN, consistent=self.consistent,
                    threshold=self.threshold)


def _same_grid(a_nm, b_nm):
    if a_nm.shape != b_nm.shape or not np.allclose(a_nm, b_nm, rtol=0, atol=1e-6):
        raise GridMismatchError("curves must share one grid")


def consistency_report(theory: ForceCurve, experiment: ForceCurve, band: ConfidenceBand,
                       threshold: float = 0.95) -> ConsistencyReport:
    """Fraction of points with ``|F_theor - F_expt| <= Xi`` and the worst point."""
    _same_grid(theory.z_nm, experiment.z_nm)
    _same_grid(theory.z_nm, band.z_nm)
    diff = np.abs(theory.force_pN - experiment.force_pN)
    excess = diff - band.half_width_pN
    frac = float(np.mean(excess <= 0))
    i = int(np.argmax(excess))
    return ConsistencyReport(frac, float(theory.z_nm[i]), float(excess[i]), frac >= threshold, threshold)


@dataclass
class DifferenceSignificance:
    z_nm: np.ndarray
    difference_pN: np.ndarray
    error_pN: np.ndarray
    significant: np.ndarray
    z_range_nm: tuple[float, float] | None


def difference_significance(mean_a_pN, err_a_pN, mean_b_pN, err_b_pN, z_nm) -> DifferenceSignificance:
    """``b - a`` with quadrature errors and the longest contiguous run where ``|diff| > error``."""
    arrays = [np.atleast_1d(np.asarray(x, dtype=float)) for x in (mean_a_pN, err_a_pN, mean_b_pN, err_b_pN, z_nm)]
    if len({a.shape for a in arrays}) != 1:
        raise GridMismatchError("all inputs must share one grid")
    a, ea, b, eb, z = arrays
    diff = b - a
    err = np.hypot(ea, eb)
    sig = np.abs(diff) > err
    best, best_len, start = None, 0, None
    for i, s in enumerate(np.append(sig, False)):
        if s and start is None:
            start = i
        elif not s and start is not None:
            if i - start > best_len:
                best, best_len = (start, i - 1), i - start
            start = None
    z_range = None if best is None else (float(z[best[0]]), float(z[best[1]]))
    return DifferenceSignificance(z, diff, err, sig, z_range)


def synthetic_scans(curve: ForceCurve, n: int, sigma_pN, rng: np.random.Generator) -> RepeatedScans:
    """``n`` noisy copies of a force curve (Gaussian noise, pN); output is synthetic data."""
    sigma = np.broadcast_to(np.asarray(sigma_pN, dtype=float), curve.z.shape)
    noise = rng.normal(0.0, 1.0, size=(n, curve.z.size)) * sigma
    return RepeatedScans(curve.z_nm, curve.force_pN[None, :] + noise)
