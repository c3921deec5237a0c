"""Zero-temperature Lifshitz force between a sphere and a plate.

The proximity-force form of the Lifshitz formula is

    F(z) = hbar R / (2 pi) int_0^inf k dk int_0^inf dxi
           sum_{TM,TE} ln[1 - r1 r2 exp(-2 z q)],     q**2 = k**2 + xi**2 / c**2.

With the dimensionless variables ``w = 2 z xi / c`` and ``y = 2 z q`` it
becomes

    F(z) = hbar c R / (16 pi z**3) int_0^inf dw int_w^inf y dy
           sum ln[1 - r1 r2 exp(-y)],

which is what :func:`lifshitz_force` integrates (outer ``w``, inner ``y``)
with the nested adaptive Gauss-Kronrod scheme of :mod:`casimirdiff.quadrature`.
Forces are signed: negative means attraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as _sc
from scipy.interpolate import CubicSpline

from . import quadrature
from .errors import ConvergenceError, DomainError, GridMismatchError
from .materials import PermittivityModel

HBAR = _sc.hbar
C = _sc.c

# Initial subdivisions; the adaptive scheme refines from here.
_OUTER_BREAKS = (0.0, 1e-3, 1e-2, 0.05, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0)
_INNER_OFFSETS = (0.0, 0.25, 1.0, 3.0, 8.0, 20.0)


@dataclass(frozen=True, eq=False)
class SpherePlateGeometry:
    radius: float
    separations: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.separations, dtype=float))
        if not self.radius > 0:
            raise DomainError("sphere radius must be > 0")
        if z.ndim != 1 or z.size == 0 or np.any(z <= 0):
            raise DomainError("separations must be a non-empty list of positive values")
        if np.any(np.diff(z) <= 0):
            raise DomainError("separations must be strictly ascending")
        object.__setattr__(self, "separations", z)

    @property
    def beyond_pfa(self) -> bool:
        """True when the largest separation exceeds 1% of the radius."""
        return bool(self.separations[-1] / self.radius > 0.01)


@dataclass(frozen=True)
class QuadratureSpec:
    relative_tolerance: float = 1e-6
    xi_cutoff_factor: float = 50.0
    y_cutoff: float = 60.0
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not 0 < self.relative_tolerance <= 1e-2:
            raise DomainError("relative tolerance must lie in (0, 1e-2]")
        if not (self.xi_cutoff_factor > 10 and self.y_cutoff > 10):
            raise DomainError("integration cutoffs must exceed 10")
        if self.max_subdivisions < 16:
            raise DomainError("max_subdivisions must be >= 16")


@dataclass(eq=False)
class ForceCurve:
    """Signed forces (N) on a separation grid (m), with optional errors (N)."""

    z: np.ndarray
    force: np.ndarray
    error: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.force = np.asarray(self.force, dtype=float)
        if self.z.shape != self.force.shape or self.z.ndim != 1:
            raise GridMismatchError("z and force grids must be 1-d and of equal length")
        if self.error is not None:
            self.error = np.asarray(self.error, dtype=float)
            if self.error.shape != self.z.shape:
                raise GridMismatchError("error grid must match z grid")

    def __len__(self) -> int:
        return self.z.size

    @property
    def z_nm(self) -> np.ndarray:
        return self.z * 1e9

    @property
    def force_pN(self) -> np.ndarray:
        return self.force * 1e12

    def at(self, z: float) -> float:
        """Force at one grid separation (nearest grid point must match to 1 pm)."""
        i = int(np.argmin(np.abs(self.z - z)))
        if abs(self.z[i] - z) > 1e-12:
            raise GridMismatchError(f"z = {z:g} m is not on the grid")
        return float(self.force[i])

    def interpolator(self):
        """Cubic spline of ``log|F|`` against ``log z``; returns signed forces.

        Only valid inside the grid span and for curves of one sign.
        """
        if np.any(self.force == 0) or abs(np.sign(self.force).sum()) != self.force.size:
            raise DomainError("interpolator needs a curve of one strict sign")
        sign = float(np.sign(self.force[0]))
        spline = CubicSpline(np.log(self.z), np.log(np.abs(self.force)))
        lo, hi = self.z[0], self.z[-1]

        def force_fn(z):
            z = np.asarray(z, dtype=float)
            if np.any(z < lo * (1 - 1e-12)) or np.any(z > hi * (1 + 1e-12)):
                raise DomainError(f"separation outside interpolation range [{lo:g}, {hi:g}] m")
            return sign * np.exp(spline(np.log(z)))

        return force_fn


# --------------------------------------------------------------------------
# reflection coefficients


def _check_eps(eps):
    eps = np.asarray(eps, dtype=float)
    if np.any(eps < 1):
        raise DomainError("eps(i xi) must be >= 1 on the imaginary axis")
    return eps


def reflection_tm(eps, xi, kperp):
    """TM (parallel) Fresnel coefficient ``(eps q - k) / (eps q + k)`` at imaginary frequency."""
    eps = _check_eps(eps)
    xi, kperp = np.asarray(xi, float), np.asarray(kperp, float)
    if np.any((xi == 0) & (kperp == 0)):
        raise DomainError("xi and k_perp cannot both vanish")
    q = np.sqrt(kperp**2 + (xi / C) ** 2)
    k = np.sqrt(kperp**2 + eps * (xi / C) ** 2)
    with np.errstate(invalid="ignore"):
        # (eps q - k)(eps q + k) = (eps - 1)((eps + 1) q**2 - xi**2/c**2)
        r = (eps - 1) * ((eps + 1) * q**2 - (xi / C) ** 2) / (eps * q + k) ** 2
    r = np.where(np.isinf(eps), 1.0, r)
    return float(r) if r.ndim == 0 else r


def reflection_te(eps, xi, kperp):
    """TE (perpendicular) Fresnel coefficient ``(q - k) / (q + k)`` at imaginary frequency."""
    eps = _check_eps(eps)
    xi, kperp = np.asarray(xi, float), np.asarray(kperp, float)
    if np.any((xi == 0) & (kperp == 0)):
        raise DomainError("xi and k_perp cannot both vanish")
    q = np.sqrt(kperp**2 + (xi / C) ** 2)
    k = np.sqrt(kperp**2 + eps * (xi / C) ** 2)
    with np.errstate(invalid="ignore"):
        r = -(eps - 1) * (xi / C) ** 2 / (q + k) ** 2
    r = np.where(np.isinf(eps) & (xi > 0), -1.0, r)
    return float(r) if r.ndim == 0 else r


def _log_terms(y, w, e1, e2):
    """``y * sum ln(1 - r1 r2 e^-y)`` in the dimensionless variables."""
    w2 = w * w
    s1 = np.sqrt(y * y + (e1 - 1) * w2)
    s2 = np.sqrt(y * y + (e2 - 1) * w2)
    tm1 = (e1 - 1) * ((e1 + 1) * y * y - w2) / (e1 * y + s1) ** 2
    tm2 = (e2 - 1) * ((e2 + 1) * y * y - w2) / (e2 * y + s2) ** 2
    te1 = (e1 - 1) * w2 / (y + s1) ** 2
    te2 = (e2 - 1) * w2 / (y + s2) ** 2
    damp = np.exp(-y)
    return y * (np.log1p(-tm1 * tm2 * damp) + np.log1p(-te1 * te2 * damp))


def _dimensionless_integral(z, sphere, plate, quad: QuadratureSpec):
    w_max = min(quad.xi_cutoff_factor, quad.y_cutoff)
    y_max = quad.y_cutoff
    rtol = quad.relative_tolerance
    outer_bp = np.array([b for b in _OUTER_BREAKS if b < w_max] + [w_max])
    outer_bp = np.broadcast_to(outer_bp, (z.size, outer_bp.size))
    offsets = np.array(_INNER_OFFSETS + (y_max,))

    def outer(w, owner):
        xi = w * (C / (2.0 * z[owner]))[:, None]
        e1 = sphere.eval(xi).ravel()
        e2 = plate.eval(xi).ravel()
        wf = w.ravel()
        bp = np.minimum(wf[:, None] + offsets[None, :], y_max)

        def inner(y, j):
            return _log_terms(y, wf[j][:, None], e1[j][:, None], e2[j][:, None])

        val, _ = quadrature.integrate_many(
            inner, bp, rtol=0.1 * rtol, atol=1e-3 * rtol, max_intervals=quad.max_subdivisions
        )
        return val.reshape(w.shape)

    return quadrature.integrate_many(outer, outer_bp, rtol=rtol, atol=0.0, max_intervals=quad.max_subdivisions)


def lifshitz_force(
    geom: SpherePlateGeometry,
    sphere_model: PermittivityModel,
    plate_model: PermittivityModel,
    quad: QuadratureSpec | None = None,
    chunk_size: int = 8,
) -> ForceCurve:
    """Sphere-plate Lifshitz force at every grid separation.

    Grid points are processed ``chunk_size`` at a time; each point is refined
    independently, so the result does not depend on the chunking.

    Raises
    ------
    ConvergenceError
        If a grid point misses the tolerance within ``max_subdivisions``;
        ``where`` is that separation in metres.
    """
    quad = quad or QuadratureSpec()
    z = geom.separations
    J = np.empty_like(z)
    J_err = np.empty_like(z)
    for start in range(0, z.size, chunk_size):
        zc = z[start:start + chunk_size]
        try:
            J[start:start + chunk_size], J_err[start:start + chunk_size] = _dimensionless_integral(
                zc, sphere_model, plate_model, quad
            )
        except ConvergenceError as exc:
            where = float(zc[exc.where]) if isinstance(exc.where, (int, np.integer)) and exc.where < zc.size else None
            raise ConvergenceError(
                f"Lifshitz integral did not converge near z = {where if where is not None else zc[0]:.4g} m: {exc}",
                achieved_error=exc.achieved_error,
                where=where if where is not None else float(zc[0]),
            ) from exc
    prefactor = HBAR * C * geom.radius / (16.0 * math.pi * z**3)
    meta = {
        "sphere_model": sphere_model.label,
        "plate_model": plate_model.label,
        "radius_m": geom.radius,
        "quadrature": quad,
        "roughness_applied": False,
        "beyond_pfa_range": geom.beyond_pfa,
        "quadrature_error_N": prefactor * J_err,
    }
    return ForceCurve(z.copy(), prefactor * J, None, meta)


def ideal_metal_force(R: float, z):
    """Perfect-reflector limit ``-pi**3 hbar c R / (360 z**3)``."""
    if R < 0:
        raise DomainError("radius must be >= 0")
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DomainError("separation must be > 0")
    out = -(math.pi**3) * HBAR * C * R / (360.0 * z**3)
    return float(out) if out.ndim == 0 else out


def difference_force(curve_b: ForceCurve, curve_a: ForceCurve) -> ForceCurve:
    """Pointwise ``F_b - F_a``.

    On differing grids, ``curve_a`` is linearly interpolated onto the points of
    ``curve_b`` that lie inside both grids.  Errors add in quadrature.
    """
    if curve_b.z.shape == curve_a.z.shape and np.array_equal(curve_b.z, curve_a.z):
        z, fb, fa = curve_b.z, curve_b.force, curve_a.force
        eb = curve_b.error
        ea = curve_a.error
    else:
        lo = max(curve_b.z[0], curve_a.z[0])
        hi = min(curve_b.z[-1], curve_a.z[-1])
        sel = (curve_b.z >= lo) & (curve_b.z <= hi)
        if lo > hi or not sel.any():
            raise GridMismatchError("force curves have disjoint separation grids")
        z = curve_b.z[sel]
        fb = curve_b.force[sel]
        fa = np.interp(z, curve_a.z, curve_a.force)
        eb = None if curve_b.error is None else curve_b.error[sel]
        ea = None if curve_a.error is None else np.interp(z, curve_a.z, curve_a.error)
    err = None
    if eb is not None or ea is not None:
        err = np.hypot(0.0 if eb is None else eb, 0.0 if ea is None else ea)
    meta = {
        "difference": f"{curve_b.metadata.get('plate_model', 'b')} - {curve_a.metadata.get('plate_model', 'a')}",
        "roughness_applied": bool(curve_b.metadata.get("roughness_applied")) and bool(
            curve_a.metadata.get("roughness_applied")),
    }
    return ForceCurve(z.copy(), fb - fa, err, meta)
