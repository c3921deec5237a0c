"""Command implementations shared by the command line front end and the tests.

Each ``cmd_*`` function takes a resolved :class:`RunConfig` and an output
directory, writes its files there and returns their paths.  Every file
starts with a comment block holding the configuration hash, units, rule
choices and whether the data are synthetic, and contains nothing that
varies between runs with the same configuration and seed.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (
    CalibrationParams,
    CoulombTable,
    Estimate,
    ScanRecord,
    estimate_deflection_coefficient,
    extract_calibration,
    forward_deflection,
    jump_to_contact_piezo,
    simulate_contacts,
)
from .config import RunConfig
from .errors import ConfigError, DomainError, GridMismatchError
from .fileio import (
    is_synthetic,
    read_force_curve,
    read_manifest,
    read_repeated_scans,
    read_topography,
    write_contacts,
    write_force_curve,
    write_manifest,
    write_repeated_scans,
    write_scan,
    write_table,
)
from .lifshitz import ForceCurve, QuadratureSpec, SpherePlateGeometry, lifshitz_force
from .materials import (
    CarrierSpec,
    PermittivityModel,
    doped,
    get_model,
    kk_transform,
    log_grid,
    read_optical_table,
)
from .roughness import HeightDistribution, combine, gaussian_distribution, required_span, roughness_correct
from .stats import (
    combine_random_systematic,
    confidence_band,
    consistency_report,
    mean_curve,
    student_t_random_error,
    synthetic_scans,
    theory_error,
)

FORCE_UNITS = "z_nm in nm; F_pN in pN (signed, negative = attractive); absF_pN = |F| in pN"
KK_GRID = (1e11, 1e19)  # rad/s, imaginary-axis grid for file-based optical tables


# --------------------------------------------------------------------------
# building blocks


def header(cfg: RunConfig, command: str, units: str, synthetic: bool = False, **extra) -> dict:
    st = cfg["statistics"]
    out = {
        "tool": f"casimirdiff {__version__}",
        "command": command,
        "config_hash": cfg.digest,
        "preset": cfg["run"]["preset"],
        "units": units,
        "rules": f"combine={st['combine_rule']}; band={st['band_rule']}; confidence={st['confidence']:g}",
        "synthetic": "true" if synthetic else "false",
    }
    out.update({k: v for k, v in extra.items() if v is not None})
    return out


def build_model(spec: str, cfg: RunConfig) -> PermittivityModel:
    """Catalog name or ``file:<path>`` optical table (dispersion-transformed)."""
    mat = cfg["materials"]
    if spec.startswith("file:"):
        table = read_optical_table(spec[5:])
        return kk_transform(table, log_grid(*KK_GRID, 20), low_policy=mat["kk_low_policy"])
    return get_model(spec, gold_wp_ev=mat["gold_wp_ev"], gold_gamma_ev=mat["gold_gamma_ev"])


def plate_model(cfg: RunConfig) -> PermittivityModel:
    mat = cfg["materials"]
    base = build_model(mat["plate"], cfg)
    n = mat["plate_carrier_density_cm3"]
    if n > 0:
        spec = CarrierSpec.from_lab_units(n, mat["plate_effective_mass_ratio"], mat["plate_resistivity_ohm_cm"])
        base = doped(base, spec)
    return base


def quadrature_spec(cfg: RunConfig) -> QuadratureSpec:
    return QuadratureSpec(**cfg["quadrature"])


def roughness_distribution(cfg: RunConfig) -> HeightDistribution | None:
    r = cfg["roughness"]
    if not r["enabled"]:
        return None
    if r["sphere_file"] or r["plate_file"]:
        sph = read_topography(r["sphere_file"], r["bin_count"]) if r["sphere_file"] else HeightDistribution.delta()
        pla = read_topography(r["plate_file"], r["bin_count"]) if r["plate_file"] else HeightDistribution.delta()
        return combine(sph, pla)
    if r["sigma_nm"] > 0:
        return gaussian_distribution(r["sigma_nm"] * 1e-9)
    raise ConfigError("roughness enabled but neither topography files nor sigma_nm given")


def theory_curve(cfg: RunConfig, z: np.ndarray | None = None) -> ForceCurve:
    """Lifshitz force on ``z`` (default: the config grid), roughness-corrected if enabled."""
    z = cfg.z_grid_m() if z is None else np.asarray(z, dtype=float)
    sphere = build_model(cfg["materials"]["sphere"], cfg)
    plate = plate_model(cfg)
    quad = quadrature_spec(cfg)
    dist = roughness_distribution(cfg)
    curve = lifshitz_force(SpherePlateGeometry(cfg.radius_m, z), sphere, plate, quad)
    if dist is None:
        return curve
    lo, hi = required_span(z, dist)
    if lo <= 0:
        raise DomainError(f"roughness offsets of {-dist.offsets.min():.3g} m close the gap at the grid start")
    aux_z = log_grid(lo * (1 - 1e-9), hi * (1 + 1e-9), 100)
    aux = lifshitz_force(SpherePlateGeometry(cfg.radius_m, aux_z), sphere, plate, quad)
    out = roughness_correct(aux.interpolator(), z, dist, base=curve)
    out.metadata["quadrature_error_N"] = curve.metadata["quadrature_error_N"]
    return out


def _casimir_fn(cfg: RunConfig, lo_nm: float, hi_nm: float):
    """Unroughened Lifshitz force as a smooth function of separation (m), for simulation and offsets."""
    sphere = build_model(cfg["materials"]["sphere"], cfg)
    aux_z = log_grid(lo_nm * 1e-9, hi_nm * 1e-9, 20)
    return lifshitz_force(SpherePlateGeometry(cfg.radius_m, aux_z), sphere, plate_model(cfg),
                          quadrature_spec(cfg)).interpolator()


def _out_dir(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(path: Path, head: dict, items: dict) -> Path:
    lines = [f"# {k}: {v}" for k, v in head.items()]
    lines += [f"{k}: {v}" for k, v in items.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def _fmt(x: float) -> str:
    return f"{x:.10g}"


# --------------------------------------------------------------------------
# commands


def cmd_permittivity(cfg: RunConfig, out) -> Path:
    """``xi_rad_s,eps_gold,eps_si_a,eps_si_b`` on a log grid 1e13 to 1e18 rad/s."""
    mat = cfg["materials"]
    xi = log_grid(1e13, 1e18, 20)
    cols = [xi] + [build_model(mat[k], cfg).eval(xi) for k in ("sphere", "si_a", "si_b")]
    head = header(cfg, "permittivity", "xi_rad_s in rad/s; eps dimensionless, eps(i xi)",
                  models=f"gold={mat['sphere']}; si_a={mat['si_a']}; si_b={mat['si_b']}")
    return write_table(_out_dir(out) / "permittivity.csv", ["xi_rad_s", "eps_gold", "eps_si_a", "eps_si_b"],
                       cols, head, digits=17)


def cmd_force(cfg: RunConfig, out) -> Path:
    curve = theory_curve(cfg)
    head = header(cfg, "force", FORCE_UNITS,
                  models=f"sphere={cfg['materials']['sphere']}; plate={cfg['materials']['plate']}",
                  radius_um=_fmt(cfg["geometry"]["radius_um"]),
                  roughness=("applied, rms %.4g nm" % (curve.metadata["roughness_rms_m"] * 1e9))
                  if curve.metadata.get("roughness_applied") else "not applied",
                  beyond_pfa="true" if curve.metadata.get("beyond_pfa_range") else None)
    return write_force_curve(_out_dir(out) / "force.csv", curve, head, magnitude=cfg["output"]["magnitude_column"])


def common_grid(cfg_a: RunConfig, cfg_b: RunConfig) -> np.ndarray:
    """Points of the first grid that lie inside the second one's range."""
    if not math.isclose(cfg_a.radius_m, cfg_b.radius_m, rel_tol=1e-12):
        raise ConfigError("difference needs the same sphere radius in both configurations")
    za, zb = cfg_a.z_grid_m(), cfg_b.z_grid_m()
    sel = (za >= zb[0] * (1 - 1e-12)) & (za <= zb[-1] * (1 + 1e-12))
    if sel.sum() < 2:
        raise GridMismatchError("separation grids of the two configurations do not overlap")
    return za[sel]


def cmd_difference(cfg_a: RunConfig, cfg_b: RunConfig, out) -> Path:
    """``F_b - F_a`` on the common grid."""
    z = common_grid(cfg_a, cfg_b)
    fa = theory_curve(cfg_a, z).force_pN
    fb = theory_curve(cfg_b, z).force_pN
    head = header(cfg_a, "difference", "z_nm in nm; forces in pN (signed, negative = attractive)",
                  config_b_hash=cfg_b.digest,
                  plates=f"a={cfg_a['materials']['plate']}; b={cfg_b['materials']['plate']}",
                  grid="grid of configuration a restricted to the overlap with b")
    d = fb - fa
    return write_table(_out_dir(out) / "difference.csv", ["z_nm", "F_a_pN", "F_b_pN", "dF_pN", "absdF_pN"],
                       [z * 1e9, fa, fb, d, np.abs(d)], head)


def cmd_calibrate(cfg: RunConfig, out) -> tuple[Path, Path]:
    cal = cfg["calibration"]
    if not cal["scans"]:
        raise ConfigError("calibration.scans (manifest file or directory) is required")
    scans, contacts = read_manifest(cal["scans"])
    conf = cfg["statistics"]["confidence"]
    if contacts:
        m = estimate_deflection_coefficient(contacts, conf)
        m_source = f"contact positions ({len(contacts)})"
    elif cal["m_nm_per_unit"] is not None:
        m = Estimate(cal["m_nm_per_unit"], 0.0)
        m_source = "configuration"
    else:
        raise ConfigError("no contact positions and no calibration.m_nm_per_unit")
    offset_fn = None
    if cal["offset_mode"] == "subtract":
        fc = _casimir_fn(cfg, 20.0, cal["fit_z_max_nm"] * 1.5)
        km = cal["km_nN_per_unit"] * 1e-9
        offset_fn = lambda z_nm: fc(np.asarray(z_nm) * 1e-9) / km  # noqa: E731
    res = extract_calibration(scans, (cal["fit_z_min_nm"], cal["fit_z_max_nm"]), cfg.radius_m, m,
                              cal["grid_step_nm"], conf, cal["offset_mode"], offset_fn)
    synthetic = is_synthetic(cal["scans"])
    head = header(cfg, "calibrate", "V0 in V; km in nN per deflection unit; z0 and m in nm (m per unit)",
                  synthetic, offset_mode=res.offset_mode)
    items = {
        "n_voltages": res.n_voltages,
        "fit_range_nm": f"{res.fit_range_nm[0]:g}..{res.fit_range_nm[1]:g}",
        "m_source": m_source,
        "V0_V": f"{_fmt(res.V0.value)} +- {_fmt(res.V0.error)}",
        "km_nN_per_unit": f"{_fmt(res.km.value * 1e9)} +- {_fmt(res.km.error * 1e9)}",
        "z0_nm": f"{_fmt(res.z0_nm.value)} +- {_fmt(res.z0_nm.error)}",
        "m_nm_per_unit": f"{_fmt(res.m_nm.value)} +- {_fmt(res.m_nm.error)}",
        "V0_series_std_V": _fmt(res.v0_series_std),
    }
    out = _out_dir(out)
    report = _write_report(out / "calibration.txt", head, items)
    series = write_table(out / "calibration_series.csv",
                         ["z_nm", "V0_V", "V0_se_V", "S0_offset", "curvature_per_V2"],
                         [res.z_nm, res.v0_series, res.v0_series_se, res.offset_series, res.curvature],
                         header(cfg, "calibrate", "z_nm in nm; V0 in V; S0 in deflection units; "
                                "curvature in deflection units per V^2", synthetic), digits=10)
    return report, series


def cmd_compare(cfg: RunConfig, out) -> tuple[Path, Path]:
    st = cfg["statistics"]
    if not (st["theory_file"] and st["scans_file"]):
        raise ConfigError("compare needs statistics.theory_file and statistics.scans_file")
    theory_in = read_force_curve(st["theory_file"])
    scans = read_repeated_scans(st["scans_file"])
    z = scans.z_nm * 1e-9
    if theory_in.z.shape == z.shape and np.allclose(theory_in.z, z, rtol=0, atol=1e-15):
        theory = ForceCurve(z, theory_in.force)
    else:
        if z[0] < theory_in.z[0] * (1 - 1e-9) or z[-1] > theory_in.z[-1] * (1 + 1e-9):
            raise GridMismatchError("theory curve does not cover the scan grid")
        theory = ForceCurve(z, theory_in.interpolator()(np.clip(z, theory_in.z[0], theory_in.z[-1])))
    mean = mean_curve(scans)
    rand = student_t_random_error(scans, st["confidence"])
    expt = combine_random_systematic(rand, st["systematic_pN"], st["combine_rule"])
    expt = np.broadcast_to(np.asarray(expt, dtype=float), z.shape)
    terr = theory_error(theory, st["theory_dz_nm"], st["optical_fraction"])
    band = confidence_band(terr, expt, scans.z_nm, st["band_rule"], st["confidence"])
    rep = consistency_report(theory, mean, band, st["consistency_threshold"])
    synthetic = is_synthetic(st["scans_file"]) or is_synthetic(st["theory_file"])
    head = header(cfg, "compare", "z_nm in nm; forces and errors in pN", synthetic,
                  repetitions=scans.n, systematic_pN=_fmt(st["systematic_pN"]),
                  theory_dz_nm=_fmt(st["theory_dz_nm"]), optical_fraction=_fmt(st["optical_fraction"]))
    out = _out_dir(out)
    table = write_table(
        out / "compare_band.csv",
        ["z_nm", "F_theor_pN", "F_expt_pN", "diff_pN", "random_pN", "expt_err_pN", "theory_err_pN", "band_pN"],
        [scans.z_nm, theory.force_pN, mean.force_pN, theory.force_pN - mean.force_pN, rand, expt, terr,
         band.half_width_pN],
        head)
    items = {
        "points": z.size,
        "fraction_inside": _fmt(rep.fraction_inside),
        "threshold": _fmt(rep.threshold),
        "consistent": "true" if rep.consistent else "false",
        "worst_z_nm": _fmt(rep.worst_z_nm),
        "worst_excess_pN": _fmt(rep.worst_excess_pN),
    }
    report = _write_report(out / "compare_report.txt", head, items)
    return report, table


def simulation_params(cfg: RunConfig) -> CalibrationParams:
    cal = cfg["calibration"]
    if cal["m_nm_per_unit"] is None:
        raise ConfigError("simulation needs calibration.m_nm_per_unit")
    return CalibrationParams(cal["v0_V"], cal["km_nN_per_unit"] * 1e-9, cal["z0_nm"], cal["m_nm_per_unit"])


def cmd_simulate(cfg: RunConfig, out, seed: int | None = None) -> dict[str, Path]:
    """Seeded synthetic experiment: calibration sweeps, contact positions and repeated force scans.

    Each sweep stops 2 nm (piezo) short of the jump to contact.
    """
    seed = cfg["run"]["seed"] if seed is None else seed
    sweep_ss, contact_ss, force_ss = np.random.SeedSequence(seed).spawn(3)
    cal, st = cfg["calibration"], cfg["statistics"]
    params = simulation_params(cfg)
    R = cfg.radius_m
    if cal["voltage_count"] < 3:
        raise ConfigError("calibration.voltage_count must be >= 3")
    voltages = np.linspace(cal["v_min_V"], cal["v_max_V"], cal["voltage_count"])
    n_zp = int(math.floor((cal["z_piezo_max_nm"] - cal["z_piezo_min_nm"]) / cal["z_piezo_step_nm"] + 1e-9)) + 1
    zp = cal["z_piezo_min_nm"] + cal["z_piezo_step_nm"] * np.arange(n_zp)
    hi_nm = cal["z_piezo_max_nm"] + cal["z0_nm"] + 100.0
    casimir = _casimir_fn(cfg, 20.0, hi_nm * 1.05) if cal["casimir_offset"] else None
    table = CoulombTable(R)
    rng = np.random.default_rng(sweep_ss)

    out = _out_dir(out)
    sweep_dir = out / "sweeps"
    sweep_dir.mkdir(exist_ok=True)
    files = []
    for i, V in enumerate(voltages):
        limit = jump_to_contact_piezo(params, R, float(V), casimir, table, (25.0, hi_nm))
        zpi = zp[zp > limit + 2.0]
        if zpi.size < 10:
            raise DomainError(f"sweep at V = {V:.4g} V keeps fewer than 10 stable samples")
        s = forward_deflection(params, R, float(V), zpi, casimir, table)
        if cal["noise_signal"] > 0:
            s = s + rng.normal(0.0, cal["noise_signal"], s.shape)
        name = f"scan_{i + 1:03d}.csv"
        write_scan(sweep_dir / name, ScanRecord(float(V), zpi, s),
                   header(cfg, "simulate", "z_piezo_nm in nm; S_def in deflection units; V in volts", True,
                          seed=seed, noise_signal=_fmt(cal["noise_signal"])))
        files.append(name)
    contacts = simulate_contacts(params, R, voltages, cal["contact_gap_nm"], cal["noise_signal"],
                                 cal["contact_noise_nm"], np.random.default_rng(contact_ss))
    write_contacts(sweep_dir / "contacts.csv", contacts,
                   header(cfg, "simulate", "V in volts; S_def in deflection units; z_piezo_nm in nm", True, seed=seed))
    manifest = write_manifest(sweep_dir / "manifest.txt", files, "contacts.csv",
                              header(cfg, "simulate", "file list", True, seed=seed))

    theory = theory_curve(cfg)
    theory_path = write_force_curve(out / "theory.csv", theory, header(cfg, "simulate", FORCE_UNITS, True, seed=seed,
                                                       contents="noiseless theory behind the synthetic scans"),
                                    magnitude=cfg["output"]["magnitude_column"])
    reps = synthetic_scans(theory, st["repetitions"], st["noise_pN"], np.random.default_rng(force_ss))
    scans_path = write_repeated_scans(out / "force_scans.csv", reps,
                                      header(cfg, "simulate", "z_nm in nm; F_pN_rep<k> in pN (signed)", True,
                                             seed=seed, noise_pN=_fmt(st["noise_pN"])))
    return {"manifest": manifest, "theory": theory_path, "force_scans": scans_path}
