"""Vectorised, globally adaptive Gauss-Kronrod (7/15) quadrature.

Many independent one-dimensional integrals ("owners") are refined together so
that the integrand is always evaluated on large numpy batches.  Each owner is
refined using only its own error estimates, so the value returned for an owner
does not depend on which other owners share the batch.

Nested (double) integrals are built by calling :func:`integrate_many` from
inside an outer integrand.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConvergenceError

# Kronrod abscissae on [0, 1) (descending) and weights, from QUADPACK qk15.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
# Gauss weights belonging to _XGK[1], _XGK[3], _XGK[5], _XGK[7].
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]
GAUSS_WEIGHTS[[9, 11, 13]] = _WG[2::-1]

Integrand = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _rule(f: Integrand, lo: np.ndarray, hi: np.ndarray, owner: np.ndarray):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * NODES[None, :]
    fx = f(x, owner)
    # Row-wise reductions (not BLAS) keep each row's result independent of
    # the batch it is evaluated in.
    kronrod = half * (fx * KRONROD_WEIGHTS).sum(axis=1)
    gauss = half * (fx * GAUSS_WEIGHTS).sum(axis=1)
    return kronrod, np.abs(kronrod - gauss)


def integrate_many(
    f: Integrand,
    breakpoints: np.ndarray,
    rtol: float = 1e-6,
    atol: float = 0.0,
    max_intervals: int = 2000,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``n`` functions at once.

    Parameters
    ----------
    f : callable
        ``f(x, owner)`` with ``x`` of shape ``(r, 15)`` and ``owner`` of shape
        ``(r,)`` (the integral index each row belongs to); returns values of
        shape ``(r, 15)``.
    breakpoints : ndarray, shape (n, p)
        Initial subdivision of each integral; row ``i`` runs from
        ``breakpoints[i, 0]`` to ``breakpoints[i, -1]``.  Rows must be
        non-decreasing; zero-length pieces are dropped.
    rtol, atol : float
        Owner ``i`` is converged when its summed error estimate is at most
        ``max(atol, rtol * |I_i|)``.
    max_intervals : int
        Per-owner limit on the number of subintervals.

    Returns
    -------
    values, errors : ndarray, shape (n,)

    Raises
    ------
    ConvergenceError
        If any owner would exceed ``max_intervals``; ``where`` is the index of
        the worst owner.
    """
    bp = np.atleast_2d(np.asarray(breakpoints, dtype=float))
    n = bp.shape[0]
    lo = bp[:, :-1].ravel()
    hi = bp[:, 1:].ravel()
    owner = np.repeat(np.arange(n), bp.shape[1] - 1)
    keep = hi > lo
    lo, hi, owner = lo[keep], hi[keep], owner[keep]

    val, err = _rule(f, lo, hi, owner)
    while True:
        total = np.bincount(owner, weights=val, minlength=n)
        total_err = np.bincount(owner, weights=err, minlength=n)
        tol = np.maximum(atol, rtol * np.abs(total))
        open_owner = total_err > tol
        if not open_owner.any():
            return total, total_err

        count = np.bincount(owner, minlength=n)
        # Split every interval whose error exceeds its owner's fair share; at
        # least one such interval exists for every unconverged owner.
        share = tol[owner] / count[owner]
        split = open_owner[owner] & (err > share)
        n_split = np.bincount(owner[split], minlength=n)
        over = open_owner & (count + n_split > max_intervals)
        if over.any():
            worst = int(np.argmax(np.where(over, total_err / np.maximum(tol, 1e-300), -np.inf)))
            raise ConvergenceError(
                f"adaptive quadrature exceeded {max_intervals} subintervals "
                f"(integral #{worst}: estimate {total[worst]:.6g}, "
                f"error {total_err[worst]:.3g})",
                achieved_error=float(total_err[worst]),
                where=worst,
            )

        s_lo, s_hi, s_owner = lo[split], hi[split], owner[split]
        s_mid = 0.5 * (s_lo + s_hi)
        new_lo = np.concatenate([s_lo, s_mid])
        new_hi = np.concatenate([s_mid, s_hi])
        new_owner = np.concatenate([s_owner, s_owner])
        new_val, new_err = _rule(f, new_lo, new_hi, new_owner)

        stay = ~split
        lo = np.concatenate([lo[stay], new_lo])
        hi = np.concatenate([hi[stay], new_hi])
        owner = np.concatenate([owner[stay], new_owner])
        val = np.concatenate([val[stay], new_val])
        err = np.concatenate([err[stay], new_err])


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    rtol: float = 1e-6,
    atol: float = 0.0,
    points=(),
    max_intervals: int = 2000,
) -> tuple[float, float]:
    """Adaptive integral of a scalar-valued vectorised ``f`` over ``[a, b]``."""
    inner = sorted(p for p in points if a < p < b)
    bp = np.array([[a, *inner, b]], dtype=float)
    val, err = integrate_many(lambda x, _o: f(x), bp, rtol, atol, max_intervals)
    return float(val[0]), float(err[0])
