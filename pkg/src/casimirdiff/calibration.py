"""Electrostatic calibration of a sphere-plate force microscope.

Conventions
-----------
* Separations and piezo positions in nm, the sphere radius in m, forces in N.
* Forces are signed like everywhere in the package: the electrostatic force
  is ``-X(z) (V - V0)**2`` (attractive), so the deflection signal of an
  attractive force is negative.
* The true separation is ``z = z_piezo + m S_def + z0`` and the deflection
  signal is ``S_def = F / km + S0(z)``.  ``w = z_piezo + m S_def = z - z0`` is
  the separation relative to contact, computable from data once ``m`` is
  known.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import constants as _sc
from scipy import optimize, stats
from scipy.interpolate import CubicSpline

from .errors import ConvergenceError, DomainError, FitError, InstabilityError

EPS0 = _sc.epsilon_0

SERIES_RTOL = 1e-12
SERIES_MAX_TERMS = 1_000_000


# --------------------------------------------------------------------------
# sphere-plate capacitance force coefficient


def _alpha(z, R):
    x = np.asarray(z, dtype=float) / R
    # arccosh(1 + x) without cancellation for small x
    return np.log1p(x + np.sqrt(x * (2.0 + x)))


def _series_one(alpha: float) -> float:
    n_terms = int(math.ceil(48.0 / alpha)) + 16
    while True:
        if n_terms > SERIES_MAX_TERMS:
            raise ConvergenceError(
                f"capacitance series needs more than {SERIES_MAX_TERMS} terms (alpha = {alpha:.3g})",
                where=alpha,
            )
        n = np.arange(1, n_terms + 1, dtype=float)
        na = n * alpha
        terms = (n / np.tanh(na) - 1.0 / math.tanh(alpha)) / np.sinh(na)
        total = terms.sum()
        if abs(terms[-1]) <= SERIES_RTOL * abs(total):
            return float(total)
        n_terms *= 2


def coulomb_coefficient_X(z, R: float):
    """Force coefficient ``X`` (N/V^2) of a sphere of radius ``R`` at gap ``z`` (both m).

    ``X = 2 pi eps0 sum_{n>=1} [n coth(n a) - coth a] / sinh(n a)`` with
    ``cosh a = 1 + z/R``, so that ``X > 0`` and the (attractive) force is
    ``-X (V - V0)**2``.  Summation stops once a term is below 1e-12 of the
    running total.  Requires ``0 < z/R < 0.1``.
    """
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if R <= 0:
        raise DomainError("sphere radius must be > 0")
    if np.any(z_arr <= 0) or np.any(z_arr / R >= 0.1):
        raise DomainError("capacitance series needs 0 < z/R < 0.1")
    alpha = _alpha(z_arr, R)
    out = np.array([_series_one(a) for a in alpha]) * 2.0 * math.pi * EPS0
    return float(out[0]) if np.ndim(z) == 0 else out


def leading_order_X(z, R: float):
    """Small-gap limit ``pi eps0 R / z``."""
    return math.pi * EPS0 * R / np.asarray(z, dtype=float)


@functools.lru_cache(maxsize=16)
def _x_table(R: float, z_min: float, z_max: float, per_decade: int):
    n = int(math.ceil(per_decade * math.log10(z_max / z_min))) + 1
    z = np.logspace(math.log10(z_min), math.log10(z_max), n)
    return CubicSpline(np.log(z), np.log(coulomb_coefficient_X(z, R)))


class CoulombTable:
    """Spline of the exact series in log-log form, for fast repeated evaluation.

    Relative interpolation error is below 1e-10 on ``[z_min, z_max]``
    (checked against :func:`coulomb_coefficient_X` in the tests).
    """

    def __init__(self, R: float, z_min: float = 1e-9, z_max: float | None = None, per_decade: int = 200):
        z_max = min(0.099 * R, 1e-5) if z_max is None else z_max
        self.R, self.z_min, self.z_max = R, z_min, z_max
        self._spline = _x_table(float(R), float(z_min), float(z_max), per_decade)
        self._dspline = self._spline.derivative()

    def _check(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < self.z_min * (1 - 1e-12)) or np.any(z > self.z_max * (1 + 1e-12)):
            raise DomainError(f"separation outside tabulated range [{self.z_min:g}, {self.z_max:g}] m")
        return z

    def __call__(self, z):
        z = self._check(z)
        return np.exp(self._spline(np.log(z)))

    def with_derivative(self, z):
        z = self._check(z)
        lz = np.log(z)
        x = np.exp(self._spline(lz))
        return x, x * self._dspline(lz) / z


# --------------------------------------------------------------------------
# forward model


@dataclass(frozen=True)
class CalibrationParams:
    """Generator parameters: V0 (V), km (N per unit), z0 (nm), m (nm per unit)."""

    V0: float
    km: float
    z0_nm: float
    m_nm: float
    offset: float | Callable = 0.0

    def offset_at(self, z_nm):
        if callable(self.offset):
            return np.asarray(self.offset(z_nm), dtype=float)
        return np.full_like(np.asarray(z_nm, dtype=float), float(self.offset))


def electrostatic_force(z, R: float, V, V0: float, table: CoulombTable | None = None):
    """Signed (attractive, negative) sphere-plate force ``-X(z) (V - V0)**2`` in N."""
    X = table(z) if table is not None else coulomb_coefficient_X(z, R)
    return -X * (np.asarray(V, dtype=float) - V0) ** 2


def forward_deflection(
    params: CalibrationParams,
    R: float,
    V: float,
    z_piezo_nm,
    casimir_fn: Callable | None = None,
    table: CoulombTable | None = None,
    tol_nm: float = 1e-9,
    max_iter: int = 100,
    return_separation: bool = False,
):
    """Deflection signal for piezo positions ``z_piezo_nm`` at applied voltage ``V``.

    Solves ``z = z_piezo + m S(z) + z0`` with
    ``S(z) = -X(z) (V - V0)**2 / km + S0(z) [+ F_C(z) / km]`` by Newton
    iteration started on the far side of the root, which converges
    monotonically onto the stable branch.  ``casimir_fn`` maps separations in
    m to signed forces in N.

    Raises
    ------
    InstabilityError
        When no stable equilibrium exists (jump to contact).
    """
    table = table or CoulombTable(R)
    zp = np.asarray(z_piezo_nm, dtype=float)
    dv2 = (V - params.V0) ** 2
    m, km = params.m_nm, params.km
    h = 1e-3  # nm, for numerical derivatives of the offset terms

    def extra(z_nm):
        out = params.offset_at(z_nm)
        if casimir_fn is not None:
            out = out + np.asarray(casimir_fn(z_nm * 1e-9)) / km
        return out

    varying = casimir_fn is not None or callable(params.offset)

    def signal(z_nm):
        X, dX = table.with_derivative(z_nm * 1e-9)
        s = -X * dv2 / km + extra(z_nm)
        ds = -dX * 1e-9 * dv2 / km
        if varying:
            ds = ds + (extra(z_nm + h) - extra(z_nm - h)) / (2 * h)
        return s, ds

    z = zp + params.z0_nm
    if np.any(z * 1e-9 < table.z_min):
        raise InstabilityError("piezo position leaves no gap even without deflection", where=float(zp.min()))
    for _ in range(max_iter):
        s, ds = signal(z)
        g = z - zp - params.z0_nm - m * s
        dg = 1.0 - m * ds
        if np.any(dg <= 0):
            bad = zp[np.argmax(dg <= 0)]
            raise InstabilityError(
                f"no stable equilibrium at z_piezo = {bad:.4g} nm (jump to contact)", where=float(bad))
        step = g / dg
        z_new = z - step
        if np.any(z_new * 1e-9 < table.z_min):
            bad = zp[np.argmax(z_new * 1e-9 < table.z_min)]
            raise InstabilityError(
                f"separation collapses at z_piezo = {bad:.4g} nm (jump to contact)", where=float(bad))
        z = z_new
        if np.all(np.abs(step) < tol_nm):
            s, _ = signal(z)
            return (s, z) if return_separation else s
    raise InstabilityError("deflection iteration did not settle", achieved_error=float(np.max(np.abs(step))))


# --------------------------------------------------------------------------
# data containers


@dataclass(frozen=True, eq=False)
class ScanRecord:
    """One voltage sweep: deflection signal against piezo position (nm)."""

    voltage: float
    z_piezo: np.ndarray
    signal: np.ndarray

    def __post_init__(self):
        zp = np.asarray(self.z_piezo, dtype=float)
        s = np.asarray(self.signal, dtype=float)
        if zp.shape != s.shape or zp.ndim != 1:
            raise DomainError("z_piezo and signal must be equally long 1-d arrays")
        if zp.size < 10:
            raise DomainError("a scan needs at least 10 samples")
        d = np.diff(zp)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise DomainError("z_piezo must be strictly monotone within a scan")
        object.__setattr__(self, "z_piezo", zp)
        object.__setattr__(self, "signal", s)

    def relative_separation(self, m_nm: float) -> np.ndarray:
        return self.z_piezo + m_nm * self.signal


@dataclass(frozen=True)
class ContactPoint:
    voltage: float
    signal: float
    z_piezo: float


@dataclass
class ParabolaFit:
    """Per-grid-point fits of ``S = C (V - V0)**2 + S0``."""

    w_nm: np.ndarray
    curvature: np.ndarray
    curvature_se: np.ndarray
    v0: np.ndarray
    v0_se: np.ndarray
    offset: np.ndarray
    residuals: np.ndarray
    dof: int


@dataclass
class Estimate:
    value: float
    error: float  # half-width at the stated confidence

    def __post_init__(self):
        self.value, self.error = float(self.value), float(self.error)

    def __iter__(self):
        return iter((self.value, self.error))


@dataclass
class CalibrationResult:
    V0: Estimate
    km: Estimate
    z0_nm: Estimate
    m_nm: Estimate
    confidence: float
    fit_range_nm: tuple[float, float]
    z_nm: np.ndarray
    v0_series: np.ndarray
    v0_series_se: np.ndarray
    offset_series: np.ndarray
    curvature: np.ndarray
    n_voltages: int
    offset_mode: str = "cofit"
    extra: dict = field(default_factory=dict)

    @property
    def v0_series_std(self) -> float:
        return float(np.std(self.v0_series, ddof=1)) if self.v0_series.size > 1 else 0.0


# --------------------------------------------------------------------------
# fitting


def resample_scans(scans: Sequence[ScanRecord], w_grid_nm, m_nm: float) -> np.ndarray:
    """Deflection of every scan interpolated (cubic) onto the relative-separation grid."""
    w_grid = np.asarray(w_grid_nm, dtype=float)
    out = np.empty((len(scans), w_grid.size))
    for i, sc in enumerate(scans):
        w = sc.relative_separation(m_nm)
        order = np.argsort(w)
        w, s = w[order], sc.signal[order]
        if np.any(np.diff(w) <= 0):
            raise FitError(f"scan at V = {sc.voltage:g} V is not monotone in z_piezo + m S")
        if w_grid[0] < w[0] or w_grid[-1] > w[-1]:
            raise FitError(
                f"scan at V = {sc.voltage:g} V covers [{w[0]:.1f}, {w[-1]:.1f}] nm, "
                f"grid needs [{w_grid[0]:.1f}, {w_grid[-1]:.1f}] nm")
        out[i] = CubicSpline(w, s)(w_grid)
    return out


def fit_parabola_per_z(scans: Sequence[ScanRecord], w_grid_nm, m_nm: float, pooled: bool = True) -> ParabolaFit:
    """Least-squares parabola in ``V`` at every point of a common separation grid.

    The grid is in ``w = z_piezo + m S_def`` (nm), i.e. the separation minus
    ``z0``.  Standard errors come from the residual variance, pooled over the
    grid by default (the signal noise does not depend on separation).
    """
    volts = np.array([s.voltage for s in scans], dtype=float)
    if np.unique(volts).size < 3:
        raise FitError("need at least 3 distinct voltages for a parabola fit")
    w_grid = np.asarray(w_grid_nm, dtype=float)
    S = resample_scans(scans, w_grid, m_nm)

    A = np.column_stack([volts**2, volts, np.ones_like(volts)])
    coef, *_ = np.linalg.lstsq(A, S, rcond=None)
    resid = S - A @ coef
    dof = volts.size - 3
    cov_unit = np.linalg.inv(A.T @ A)
    sigma2 = (resid**2).sum(axis=0) / dof if dof > 0 else np.zeros(w_grid.size)
    if pooled:
        sigma2 = np.full_like(sigma2, sigma2.mean())

    a, b, c = coef
    v0 = -b / (2 * a)
    offset = c - b * b / (4 * a)
    # delta method for V0 = -b / (2a)
    g_a, g_b = b / (2 * a * a), -1.0 / (2 * a)
    var_v0 = sigma2 * (g_a**2 * cov_unit[0, 0] + 2 * g_a * g_b * cov_unit[0, 1] + g_b**2 * cov_unit[1, 1])
    return ParabolaFit(
        w_nm=w_grid,
        curvature=a,
        curvature_se=np.sqrt(sigma2 * cov_unit[0, 0]),
        v0=v0,
        v0_se=np.sqrt(var_v0),
        offset=offset,
        residuals=resid,
        dof=dof,
    )


def _fit_curvature(pf: ParabolaFit, R: float, table: CoulombTable, guess=None):
    """Fit ``C(w) = -X(w + z0) / km`` for (km, z0)."""
    w, C = pf.w_nm, pf.curvature
    if guess is None:
        # leading order: -1/C = km (w + z0) / (pi eps0 R)
        slope, icpt = np.polyfit(w, -1.0 / C, 1)
        km0 = slope * math.pi * EPS0 * R * 1e9
        guess = (km0, icpt / slope)
    km0, z00 = guess
    se = pf.curvature_se
    weighted = bool(np.all(se > 1e-12 * np.abs(C)))
    sig = se if weighted else np.abs(C)

    def resid(p):
        km_s, z0 = p
        z_m = (w + z0) * 1e-9
        if np.any(z_m < table.z_min):
            return np.full_like(C, 1e6)
        return (C + table(z_m) / (km_s * km0)) / sig

    sol = optimize.least_squares(resid, x0=[1.0, z00], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                 max_nfev=2000)
    if not sol.success:
        raise FitError(f"curvature fit did not converge: {sol.message}")
    J = sol.jac
    dof = max(C.size - 2, 1)
    chi2 = float(np.sum(sol.fun**2))
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular curvature-fit Jacobian") from exc
    cov = cov * (chi2 / dof if weighted else 0.0)
    km_s, z0 = sol.x
    km = km_s * km0
    return km, math.sqrt(cov[0, 0]) * abs(km0), z0, math.sqrt(cov[1, 1]), dof


def extract_calibration(
    scans: Sequence[ScanRecord],
    fit_range_nm: tuple[float, float],
    R: float,
    m_nm: float | Estimate,
    grid_step_nm: float = 10.0,
    confidence: float = 0.95,
    offset_mode: str = "cofit",
    offset_fn: Callable | None = None,
) -> CalibrationResult:
    """Extract ``V0``, ``km`` and ``z0`` from a set of voltage sweeps.

    At every point of a common grid in ``w = z - z0`` the signal is fitted by
    a parabola in ``V`` (``fit_parabola_per_z``); the curvatures restricted
    to ``fit_range_nm`` (true separations) are then fitted by
    ``-X(w + z0) / km``.  The grid is placed twice: once with ``z0 = 0`` and
    once with the fitted ``z0``.

    ``offset_mode="cofit"`` leaves ``S0(z)`` free at every grid point;
    ``"subtract"`` first removes ``offset_fn(z_nm)`` (an independent offset
    measurement, in deflection units) and still reports the residual offset.

    Errors are half-widths at ``confidence`` from the fit covariances.
    """
    if offset_mode not in ("cofit", "subtract"):
        raise FitError(f"unknown offset mode {offset_mode!r}")
    if offset_mode == "subtract" and offset_fn is None:
        raise FitError("offset_mode='subtract' needs offset_fn")
    m_est = m_nm if isinstance(m_nm, Estimate) else Estimate(float(m_nm), 0.0)
    z_lo, z_hi = fit_range_nm
    if not z_hi > z_lo:
        raise FitError("empty fit range")

    w_cover = [(sc.relative_separation(m_est.value).min(), sc.relative_separation(m_est.value).max())
               for sc in scans]
    w_min = max(c[0] for c in w_cover)
    w_max = min(c[1] for c in w_cover)
    table = CoulombTable(R)

    z0 = 0.0
    guess = None
    # cofit: the second pass only re-places the grid.  subtract: the offset is
    # evaluated at w + z0, so iterate until z0 settles.
    passes = 2 if offset_mode == "cofit" else 30
    for i in range(passes):
        z0_prev = z0
        lo = max(z_lo - z0, w_min)
        hi = min(z_hi - z0, w_max)
        if hi - lo < 3 * grid_step_nm:
            raise FitError(f"fit range [{z_lo}, {z_hi}] nm excludes (almost) all scan data")
        grid = np.arange(lo, hi + 1e-9, grid_step_nm)
        grid = grid[grid <= hi]
        if offset_mode == "subtract":
            shifted = []
            for sc in scans:
                s0 = offset_fn(sc.relative_separation(m_est.value) + z0)
                # keep w = z_piezo + m S unchanged while removing S0 from the signal
                shifted.append(ScanRecord(sc.voltage, sc.z_piezo + m_est.value * s0, sc.signal - s0))
            pf = fit_parabola_per_z(shifted, grid, m_est.value)
        else:
            pf = fit_parabola_per_z(scans, grid, m_est.value)
        km, km_se, z0, z0_se, dof = _fit_curvature(pf, R, table, guess)
        guess = (km, z0)
        if offset_mode == "subtract" and i > 0 and abs(z0 - z0_prev) < 1e-9:
            break
    else:
        if offset_mode == "subtract":
            raise FitError("z0 did not settle while subtracting the offset")

    q_fit = stats.t.ppf(0.5 + confidence / 2, dof)
    wts = np.where(pf.v0_se > 0, 1.0 / np.maximum(pf.v0_se, 1e-300) ** 2, 0.0)
    if np.all(wts > 0):
        v0 = float(np.sum(wts * pf.v0) / wts.sum())
        v0_se = float(1.0 / math.sqrt(wts.sum()))
    else:
        v0, v0_se = float(np.mean(pf.v0)), 0.0
    q_v0 = stats.t.ppf(0.5 + confidence / 2, pf.dof) if pf.dof > 0 else 0.0

    return CalibrationResult(
        V0=Estimate(v0, q_v0 * v0_se),
        km=Estimate(km, q_fit * km_se),
        z0_nm=Estimate(z0, q_fit * z0_se),
        m_nm=m_est,
        confidence=confidence,
        fit_range_nm=(float(z_lo), float(z_hi)),
        z_nm=pf.w_nm + z0,
        v0_series=pf.v0,
        v0_series_se=pf.v0_se,
        offset_series=pf.offset,
        curvature=pf.curvature,
        n_voltages=len(scans),
        offset_mode=offset_mode,
        extra={"parabola_dof": pf.dof, "curvature_dof": dof, "grid_step_nm": grid_step_nm},
    )


def estimate_deflection_coefficient(contacts: Sequence[ContactPoint], confidence: float = 0.95) -> Estimate:
    """Deflection coefficient ``m`` from the shift of the contact position with voltage.

    At contact ``z_piezo = z_c - z0 - m S``, so a straight-line fit of the
    contact piezo position against the contact signal has slope ``-m``.
    """
    if len({c.voltage for c in contacts}) < 2:
        raise FitError("need contact positions at two or more voltages")
    s = np.array([c.signal for c in contacts], dtype=float)
    zp = np.array([c.z_piezo for c in contacts], dtype=float)
    if np.ptp(s) <= 1e-9 * np.abs(s).max():
        raise FitError("contact signals do not vary with voltage; m is undetermined")
    res = stats.linregress(s, zp)
    dof = s.size - 2
    err = stats.t.ppf(0.5 + confidence / 2, dof) * res.stderr if dof > 0 else 0.0
    return Estimate(-float(res.slope), float(err))


def offset_comparison(result: CalibrationResult, casimir_fn: Callable, km: float | None = None) -> np.ndarray:
    """Difference between fitted offsets ``S0(z)`` and ``F_C(z) / km`` on the result grid."""
    km = result.km.value if km is None else km
    return result.offset_series - np.asarray(casimir_fn(result.z_nm * 1e-9)) / km


# --------------------------------------------------------------------------
# synthetic sweeps


def jump_to_contact_piezo(
    params: CalibrationParams,
    R: float,
    V: float,
    casimir_fn: Callable | None = None,
    table: CoulombTable | None = None,
    z_search_nm: tuple[float, float] = (2.0, 5000.0),
) -> float:
    """Piezo position (nm) below which no stable equilibrium exists at voltage ``V``.

    The stability margin ``1 - m dS/dz`` grows with ``z``; its root ``z*``
    marks the jump point, mapped back through ``z_piezo = z - z0 - m S(z)``.
    Returns ``-inf`` when the margin is positive over the whole search range.
    """
    table = table or CoulombTable(R)
    dv2 = (V - params.V0) ** 2
    m, km, h = params.m_nm, params.km, 1e-3
    lo = max(z_search_nm[0], table.z_min * 1e9 * (1 + 1e-9) + h)
    hi = min(z_search_nm[1], table.z_max * 1e9 * (1 - 1e-9) - h)

    def extra(z_nm):
        out = params.offset_at(z_nm)
        if casimir_fn is not None:
            out = out + np.asarray(casimir_fn(z_nm * 1e-9)) / km
        return out

    def signal(z_nm):
        return float(-table(z_nm * 1e-9) * dv2 / km + extra(np.asarray(z_nm)))

    def margin(z_nm):
        X, dX = table.with_derivative(z_nm * 1e-9)
        ds = -dX * 1e-9 * dv2 / km + (extra(np.asarray(z_nm + h)) - extra(np.asarray(z_nm - h))) / (2 * h)
        return float(1.0 - m * ds)

    if margin(lo) > 0:
        return -math.inf
    if margin(hi) <= 0:
        raise InstabilityError(f"no stable equilibrium below {hi:g} nm at V = {V:g} V", where=hi)
    z_star = optimize.brentq(margin, lo, hi, xtol=1e-9)
    return z_star - params.z0_nm - m * signal(z_star)



def simulate_sweeps(
    params: CalibrationParams,
    R: float,
    voltages,
    z_piezo_nm,
    casimir_fn: Callable | None = None,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[ScanRecord]:
    """Noiseless forward sweeps plus optional Gaussian signal noise (``rng`` required then)."""
    table = CoulombTable(R)
    scans = []
    for V in voltages:
        s = forward_deflection(params, R, float(V), z_piezo_nm, casimir_fn, table)
        if noise > 0:
            if rng is None:
                raise DomainError("noisy simulation needs an explicit random generator")
            s = s + rng.normal(0.0, noise, size=s.shape)
        scans.append(ScanRecord(float(V), np.asarray(z_piezo_nm, float), s))
    return scans


def add_noise(scans: Sequence[ScanRecord], noise: float, rng: np.random.Generator) -> list[ScanRecord]:
    return [ScanRecord(sc.voltage, sc.z_piezo, sc.signal + rng.normal(0.0, noise, sc.signal.shape))
            for sc in scans]


def simulate_contacts(
    params: CalibrationParams,
    R: float,
    voltages,
    contact_gap_nm: float = 5.0,
    noise_signal: float = 0.0,
    noise_z_nm: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[ContactPoint]:
    """Contact positions: the sphere touches at a residual (roughness) gap ``contact_gap_nm``."""
    table = CoulombTable(R)
    out = []
    for V in voltages:
        s = float(electrostatic_force(contact_gap_nm * 1e-9, R, V, params.V0, table)) / params.km
        zp = contact_gap_nm - params.z0_nm - params.m_nm * s
        if noise_signal > 0 or noise_z_nm > 0:
            if rng is None:
                raise DomainError("noisy simulation needs an explicit random generator")
            s += rng.normal(0.0, noise_signal) if noise_signal > 0 else 0.0
            zp += rng.normal(0.0, noise_z_nm) if noise_z_nm > 0 else 0.0
        out.append(ContactPoint(float(V), s, zp))
    return out
