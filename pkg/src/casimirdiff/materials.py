"""Dielectric permittivities along the imaginary frequency axis.

All frequencies are angular frequencies in rad/s.  Photon energies in eV are
accepted at ingestion only and converted with :func:`ev_to_rad_s`.

Models are small immutable objects with a vectorised ``eval(xi)`` method that
returns the real permittivity ``eps(i xi) >= 1``:

* :class:`OscillatorSet` -- sum of Lorentz oscillators,
* :class:`Drude` -- free-carrier term ``wp**2 / (xi (xi + gamma))``,
* :class:`Plasma` -- dissipationless limit ``wp**2 / xi**2``,
* :class:`Tabulated` -- samples obtained from optical data by
  :func:`kk_transform`,
* :class:`Sum` -- ``1 + sum(eps_i - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import constants as _sc

from . import quadrature
from .errors import CatalogLookupError, ConvergenceError, DataFormatError, DomainError

CONSTANTS: Mapping[str, float] = {
    "e": _sc.e,
    "epsilon_0": _sc.epsilon_0,
    "m_e": _sc.m_e,
    "hbar": _sc.hbar,
    "c": _sc.c,
}


def ev_to_rad_s(energy_ev):
    """Photon energy in eV -> angular frequency in rad/s."""
    return np.asarray(energy_ev, dtype=float) * CONSTANTS["e"] / CONSTANTS["hbar"]


def rad_s_to_ev(omega):
    return np.asarray(omega, dtype=float) * CONSTANTS["hbar"] / CONSTANTS["e"]


# --------------------------------------------------------------------------
# carriers


@dataclass(frozen=True)
class CarrierSpec:
    """Free-carrier description of a doped semiconductor (SI units).

    ``carrier_density`` in m^-3, ``resistivity`` in ohm m.
    """

    carrier_density: float
    effective_mass_ratio: float
    resistivity: float

    def __post_init__(self):
        if not self.carrier_density >= 0:
            raise DomainError("carrier density must be >= 0")
        if not self.effective_mass_ratio > 0:
            raise DomainError("effective mass ratio must be > 0")
        if not self.resistivity > 0:
            raise DomainError("resistivity must be > 0")

    @classmethod
    def from_lab_units(cls, density_cm3: float, effective_mass_ratio: float, resistivity_ohm_cm: float):
        """Build from cm^-3 and ohm cm, the units carrier data is usually quoted in."""
        return cls(density_cm3 * 1e6, effective_mass_ratio, resistivity_ohm_cm * 1e-2)


@dataclass(frozen=True)
class DrudeTerm:
    plasma_frequency: float
    relaxation: float

    def __post_init__(self):
        if not self.plasma_frequency >= 0:
            raise DomainError("plasma frequency must be >= 0")
        if self.plasma_frequency > 0 and not self.relaxation > 0:
            raise DomainError("relaxation must be > 0 when plasma frequency > 0")


def drude_from_carriers(spec: CarrierSpec) -> DrudeTerm:
    """Plasma frequency and relaxation parameter of free carriers.

    ``wp = e sqrt(n) / sqrt(eps0 m*)`` and ``gamma = eps0 rho wp**2``.
    Without carriers both vanish.
    """
    if spec.carrier_density == 0:
        return DrudeTerm(0.0, 0.0)
    e, eps0, m_e = CONSTANTS["e"], CONSTANTS["epsilon_0"], CONSTANTS["m_e"]
    wp = e * math.sqrt(spec.carrier_density) / math.sqrt(eps0 * spec.effective_mass_ratio * m_e)
    return DrudeTerm(wp, eps0 * spec.resistivity * wp**2)


# --------------------------------------------------------------------------
# models


def _as_xi(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if np.any(~np.isfinite(xi)) and not np.all(np.isposinf(xi[~np.isfinite(xi)])):
        raise DomainError("xi must be a real frequency")
    if np.any(xi < 0):
        raise DomainError("xi must be >= 0 on the imaginary axis")
    return xi


class PermittivityModel:
    """Base class; subclasses implement :meth:`susceptibility` (``eps - 1``)."""

    label: str = "model"

    def susceptibility(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def has_drude(self) -> bool:
        return False

    def eval(self, xi):
        xi = _as_xi(xi)
        return 1.0 + self.susceptibility(xi)

    def __call__(self, xi):
        return self.eval(xi)

    def __add__(self, other: "PermittivityModel") -> "Sum":
        return Sum((self, other))


@dataclass(frozen=True)
class Oscillator:
    strength: float
    resonance: float
    damping: float = 0.0

    def __post_init__(self):
        if self.strength < 0 or self.resonance <= 0 or self.damping < 0:
            raise DomainError("oscillator needs strength >= 0, resonance > 0, damping >= 0")


@dataclass(frozen=True)
class OscillatorSet(PermittivityModel):
    """``eps(i xi) = 1 + sum_j s_j w_j**2 / (w_j**2 + xi**2 + g_j xi)``."""

    oscillators: tuple[Oscillator, ...]
    label: str = "oscillators"

    def susceptibility(self, xi):
        out = np.zeros_like(xi, dtype=float)
        for osc in self.oscillators:
            w2 = osc.resonance**2
            out = out + osc.strength * w2 / (w2 + xi * xi + osc.damping * xi)
        return out

    @property
    def static_value(self) -> float:
        return 1.0 + sum(o.strength for o in self.oscillators)


@dataclass(frozen=True)
class Drude(PermittivityModel):
    term: DrudeTerm
    label: str = "drude"

    @property
    def has_drude(self) -> bool:
        return self.term.plasma_frequency > 0

    def susceptibility(self, xi):
        wp, g = self.term.plasma_frequency, self.term.relaxation
        if wp == 0:
            return np.zeros_like(xi, dtype=float)
        if np.any(xi == 0):
            raise DomainError("Drude term diverges at xi = 0; evaluate at xi > 0")
        return wp * wp / (xi * (xi + g))


@dataclass(frozen=True)
class Plasma(PermittivityModel):
    """Dissipationless plasma model, the ``gamma -> 0`` limit of :class:`Drude`."""

    plasma_frequency: float
    label: str = "plasma"

    @property
    def has_drude(self) -> bool:
        return self.plasma_frequency > 0

    def susceptibility(self, xi):
        if np.any(xi == 0):
            raise DomainError("plasma term diverges at xi = 0; evaluate at xi > 0")
        return (self.plasma_frequency / xi) ** 2


@dataclass(frozen=True, eq=False)
class Tabulated(PermittivityModel):
    """``eps(i xi)`` known on a positive ascending grid.

    Interpolation is linear in ``log(eps - 1)`` versus ``log xi``.  Above the
    grid the last segment's power law is continued (at least as steep as
    ``xi**-2``); below it the value is held constant (low-frequency policy
    ``"zero"``) or the first segment's power law is continued (``"drude"``).
    """

    xi_grid: np.ndarray
    values: np.ndarray
    low_policy: str = "zero"
    label: str = "tabulated"
    source_label: str = ""

    def __post_init__(self):
        xi = np.asarray(self.xi_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if xi.ndim != 1 or xi.shape != v.shape or xi.size < 2:
            raise DomainError("tabulated model needs matching 1-d grids of >= 2 points")
        if np.any(xi <= 0) or np.any(np.diff(xi) <= 0):
            raise DomainError("xi grid must be positive and strictly ascending")
        if np.any(v < 1) or np.any(~np.isfinite(v)):
            raise DomainError("tabulated eps(i xi) must be finite and >= 1")
        object.__setattr__(self, "xi_grid", xi)
        object.__setattr__(self, "values", v)

    @property
    def has_drude(self) -> bool:
        return self.low_policy == "drude"

    def susceptibility(self, xi):
        chi = np.maximum(self.values - 1.0, 1e-300)
        lx, lc = np.log(self.xi_grid), np.log(chi)
        out = np.empty_like(xi, dtype=float)
        inside = (xi >= self.xi_grid[0]) & (xi <= self.xi_grid[-1])
        out[inside] = np.exp(np.interp(np.log(xi[inside]), lx, lc))

        high = xi > self.xi_grid[-1]
        if high.any():
            slope = min((lc[-1] - lc[-2]) / (lx[-1] - lx[-2]), -2.0)
            with np.errstate(divide="ignore"):
                out[high] = chi[-1] * np.exp(slope * (np.log(xi[high]) - lx[-1]))

        low = xi < self.xi_grid[0]
        if low.any():
            if self.low_policy == "drude":
                if np.any(xi[low] == 0):
                    raise DomainError("tabulated model with Drude-like tail diverges at xi = 0")
                slope = min((lc[1] - lc[0]) / (lx[1] - lx[0]), 0.0)
                out[low] = chi[0] * np.exp(slope * (np.log(xi[low]) - lx[0]))
            else:
                out[low] = chi[0]
        return np.where(out <= 1e-300, 0.0, out)


@dataclass(frozen=True)
class Sum(PermittivityModel):
    parts: tuple[PermittivityModel, ...]
    label: str = "sum"

    @property
    def has_drude(self) -> bool:
        return any(p.has_drude for p in self.parts)

    def susceptibility(self, xi):
        out = np.zeros_like(xi, dtype=float)
        for p in self.parts:
            out = out + p.susceptibility(xi)
        return out


def eps_imag_axis(model: PermittivityModel, xi):
    """Evaluate ``eps(i xi)``; scalar in, scalar out."""
    out = model.eval(xi)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# optical data and dispersion relation


@dataclass(frozen=True, eq=False)
class OpticalDataTable:
    """Complex refractive index ``n + i k`` tabulated against photon energy (eV)."""

    photon_energy: np.ndarray
    n_index: np.ndarray
    k_index: np.ndarray
    source_label: str = ""

    def __post_init__(self):
        e = np.asarray(self.photon_energy, dtype=float)
        n = np.asarray(self.n_index, dtype=float)
        k = np.asarray(self.k_index, dtype=float)
        if e.ndim != 1 or not (e.shape == n.shape == k.shape):
            raise DataFormatError("optical table columns must be 1-d and equally long")
        if e.size < 2:
            raise DataFormatError("optical table needs at least 2 rows")
        if np.any(np.diff(e) <= 0) or e[0] <= 0:
            raise DataFormatError("photon energies must be positive and strictly increasing")
        if np.any(n <= 0) or np.any(k < 0):
            raise DataFormatError("need n > 0 and k >= 0 in every row")
        object.__setattr__(self, "photon_energy", e)
        object.__setattr__(self, "n_index", n)
        object.__setattr__(self, "k_index", k)

    @property
    def omega(self) -> np.ndarray:
        return ev_to_rad_s(self.photon_energy)

    @classmethod
    def from_permittivity(cls, energy_ev, eps, source_label: str = "") -> "OpticalDataTable":
        """Build a table from complex ``eps(omega)`` (``Im eps >= 0``) samples."""
        nk = np.sqrt(np.asarray(eps, dtype=complex))
        return cls(np.asarray(energy_ev, float), nk.real, np.abs(nk.imag), source_label)


def read_optical_table(path) -> OpticalDataTable:
    """Read ``energy_eV n k`` rows (comma or whitespace separated, '#' comments)."""
    rows = []
    path = Path(path)
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 3:
            raise DataFormatError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            # a single header row of column names is tolerated
            if rows:
                raise DataFormatError(f"{path}:{lineno}: non-numeric row") from None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    a = np.array(rows)
    return OpticalDataTable(a[:, 0], a[:, 1], a[:, 2], source_label=path.name)


def _interp_loglog(x, xp, fp):
    """Piecewise log-log interpolation; segments touching a zero fall back to linear-in-log-x."""
    lx, lxp = np.log(x), np.log(xp)
    idx = np.clip(np.searchsorted(lxp, lx) - 1, 0, len(xp) - 2)
    t = (lx - lxp[idx]) / (lxp[idx + 1] - lxp[idx])
    f0, f1 = fp[idx], fp[idx + 1]
    pos = (f0 > 0) & (f1 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        geo = np.exp(np.log(np.where(pos, f0, 1.0)) * (1 - t) + np.log(np.where(pos, f1, 1.0)) * t)
    return np.where(pos, geo, f0 * (1 - t) + f1 * t)


def _high_tail_integral(a: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """``int_a^inf dw / (w**2 (w**2 + xi**2))`` without cancellation for ``xi << a``."""
    t = xi / a
    small = t < 1e-2
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = (1.0 / a - np.arctan(t) / xi) / xi**2
    t2 = t * t
    series = (1.0 / 3 - t2 / 5 + t2 * t2 / 7 - t2**3 / 9) / a**3
    return np.where(small, series, exact)


def kk_transform(
    table: OpticalDataTable,
    xi_grid,
    low_policy: str = "zero",
    rtol: float = 1e-6,
    max_intervals: int = 4000,
) -> Tabulated:
    """Imaginary-axis permittivity from tabulated ``n, k`` by the dispersion relation.

    ``eps(i xi) = 1 + (2/pi) int_0^inf w eps''(w) / (w**2 + xi**2) dw`` with
    ``eps'' = 2 n k``.  Inside the table ``n`` and ``k`` are interpolated
    log-log and the integral is taken over ``u = ln w`` with breakpoints at
    every table row.  Outside the table the tails are integrated in closed
    form: ``eps''`` decays as ``w**-3`` above the last row; below the first
    row it is either zero (``low_policy="zero"``) or follows the Drude-like
    ``eps'' w = const`` (``low_policy="drude"``).

    Raises
    ------
    ConvergenceError
        When the quadrature for some ``xi`` misses ``rtol``; ``where`` holds
        that ``xi``.
    """
    if low_policy not in ("zero", "drude"):
        raise DomainError(f"unknown low-frequency policy {low_policy!r}")
    xi = np.asarray(xi_grid, dtype=float)
    if xi.ndim != 1 or xi.size < 2 or np.any(xi <= 0) or np.any(np.diff(xi) <= 0):
        raise DomainError("xi grid must be positive, ascending, with >= 2 points")

    w = table.omega
    n_idx, k_idx = table.n_index, table.k_index
    eps2_tab = 2.0 * n_idx * k_idx
    u_nodes = np.log(w)

    def integrand(u, owner):
        om = np.exp(u)
        n = _interp_loglog(om, w, n_idx)
        k = _interp_loglog(om, w, k_idx)
        x2 = xi[owner][:, None] ** 2
        return om * om * (2.0 * n * k) / (om * om + x2)

    bp = np.broadcast_to(u_nodes, (xi.size, u_nodes.size))
    scale = 1.0 + float(np.max(eps2_tab))
    try:
        body, _ = quadrature.integrate_many(
            integrand, bp, rtol=rtol, atol=rtol * 1e-3 * scale / xi.size, max_intervals=max_intervals
        )
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"dispersion integral did not converge at xi = {xi[exc.where]:.4g} rad/s "
            f"(achieved error {exc.achieved_error:.3g})",
            achieved_error=exc.achieved_error,
            where=float(xi[exc.where]),
        ) from exc

    # tails in closed form
    w_hi, b = w[-1], eps2_tab[-1] * w[-1] ** 3
    high = b * _high_tail_integral(np.full_like(xi, w_hi), xi)
    if low_policy == "drude":
        low = eps2_tab[0] * w[0] * np.arctan(w[0] / xi) / xi
    else:
        low = np.zeros_like(xi)

    values = 1.0 + (2.0 / np.pi) * (body + high + low)
    return Tabulated(xi, values, low_policy=low_policy, label=f"kk[{table.source_label}]",
                     source_label=table.source_label)


# --------------------------------------------------------------------------
# catalog

GOLD_WP_EV = 9.0
GOLD_GAMMA_EV = 0.035

# Intrinsic silicon: a dominant UV electronic oscillator plus a weak core-level
# oscillator; static permittivity 1 + 10.625 + 0.035 = 11.66.
SI_OSCILLATORS = (
    Oscillator(10.625, 6.6e15, 0.0),
    Oscillator(0.035, ev_to_rad_s(100.0).item(), 0.0),
)

SAMPLE_A_CARRIERS = CarrierSpec.from_lab_units(1.2e16, 0.26, 0.43)
SAMPLE_B_CARRIERS = CarrierSpec.from_lab_units(3.2e20, 0.26, 6.7e-4)


def gold_surrogate(wp_ev: float = GOLD_WP_EV, gamma_ev: float = GOLD_GAMMA_EV) -> Drude:
    return Drude(DrudeTerm(ev_to_rad_s(wp_ev).item(), ev_to_rad_s(gamma_ev).item()), label="gold_surrogate")


def si_intrinsic_surrogate() -> OscillatorSet:
    return OscillatorSet(SI_OSCILLATORS, label="si_intrinsic_surrogate")


def doped(base: PermittivityModel, carriers: CarrierSpec, label: str | None = None) -> PermittivityModel:
    """Add the free-carrier Drude term of ``carriers`` to ``base``."""
    term = drude_from_carriers(carriers)
    if term.plasma_frequency == 0:
        return base
    return Sum((base, Drude(term, label="drude")), label=label or f"{base.label}+drude")


def ideal_metal(wp_ev: float = 1e5) -> Plasma:
    """Plasma model stiff enough to stand in for a perfect reflector."""
    return Plasma(ev_to_rad_s(wp_ev).item(), label=f"plasma_{wp_ev:g}eV")


def builtin_models(**overrides) -> dict[str, PermittivityModel]:
    """Named catalog of surrogate permittivities.

    Keyword overrides: ``gold_wp_ev``, ``gold_gamma_ev``.
    """
    gold = gold_surrogate(overrides.get("gold_wp_ev", GOLD_WP_EV), overrides.get("gold_gamma_ev", GOLD_GAMMA_EV))
    si = si_intrinsic_surrogate()
    return {
        "gold_surrogate": gold,
        "si_intrinsic_surrogate": si,
        "si_doped_b": doped(si, SAMPLE_B_CARRIERS, label="si_doped_b"),
        "ideal_metal": ideal_metal(),
    }


def get_model(name: str, **overrides) -> PermittivityModel:
    catalog = builtin_models(**overrides)
    try:
        return catalog[name]
    except KeyError:
        raise CatalogLookupError(
            f"unknown permittivity model {name!r}; known: {', '.join(sorted(catalog))}"
        ) from None


def log_grid(start: float, stop: float, per_decade: int = 20) -> np.ndarray:
    n = int(round(per_decade * math.log10(stop / start))) + 1
    return np.logspace(math.log10(start), math.log10(stop), max(n, 2))


__all__ = [
    "CONSTANTS", "CarrierSpec", "DrudeTerm", "Drude", "Plasma", "Oscillator", "OscillatorSet",
    "Tabulated", "Sum", "PermittivityModel", "OpticalDataTable", "drude_from_carriers",
    "eps_imag_axis", "kk_transform", "builtin_models", "get_model", "read_optical_table",
    "gold_surrogate", "si_intrinsic_surrogate", "doped", "ideal_metal", "ev_to_rad_s",
    "rad_s_to_ev", "log_grid", "SAMPLE_A_CARRIERS", "SAMPLE_B_CARRIERS",
]
