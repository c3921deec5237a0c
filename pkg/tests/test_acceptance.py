"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL ...`` line (shown with
``-s`` and repeated in the terminal summary) before asserting.
"""

import math
import time

import mpmath as mp
import numpy as np
import pytest
from scipy import constants as sc
from scipy.optimize import brentq

from casimirdiff import calibration as C
from casimirdiff import cli
from casimirdiff import lifshitz as L
from casimirdiff import materials as M
from casimirdiff import roughness as Rg
from casimirdiff import stats as S
from casimirdiff.fileio import is_synthetic
from conftest import ACCEPTANCE_LINES, R_SPHERE


def report(n: int, ok: bool, detail: str):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# 1 -------------------------------------------------------------------------


def test_criterion_1_ideal_metal_limit():
    z = np.array([60, 80, 100, 150, 200]) * 1e-9
    metal = M.ideal_metal()
    t0 = time.perf_counter()
    curve = L.lifshitz_force(L.SpherePlateGeometry(R_SPHERE, z), metal, metal)
    elapsed = time.perf_counter() - t0
    exact = -math.pi**3 * sc.hbar * sc.c * R_SPHERE / (360 * z**3)
    dev = np.max(np.abs(curve.force / exact - 1))
    report(1, dev < 2e-3 and elapsed < 10,
           f"ideal metal: max rel. deviation {dev:.2e} (tol 2e-3), {elapsed:.2f} s (limit 10 s)")


# 2 -------------------------------------------------------------------------


def test_criterion_2_drude_parameters():
    d = M.drude_from_carriers(M.CarrierSpec.from_lab_units(3.2e20, 0.26, 6.7e-4))
    wp_dev = abs(d.plasma_frequency / 2.0e15 - 1)
    g_dev = abs(d.relaxation / 2.4e14 - 1)
    report(2, wp_dev < 0.05 and g_dev < 0.05,
           f"sample b: wp = {d.plasma_frequency:.4g} rad/s ({wp_dev:.1%} off), "
           f"gamma = {d.relaxation:.4g} rad/s ({g_dev:.1%} off), tol 5%")


# 3 -------------------------------------------------------------------------


def test_criterion_3_force_magnitudes():
    cat = M.builtin_models()
    gold = cat["gold_surrogate"]
    z = np.linspace(60e-9, 150e-9, 400)
    t0 = time.perf_counter()
    fa = L.lifshitz_force(L.SpherePlateGeometry(R_SPHERE, z), gold, cat["si_intrinsic_surrogate"])
    elapsed = time.perf_counter() - t0
    fb = L.lifshitz_force(L.SpherePlateGeometry(R_SPHERE, np.array([70e-9])), gold, cat["si_doped_b"])
    a60 = abs(fa.force[0]) * 1e12
    b70 = abs(fb.force[0]) * 1e12
    ok = 300 <= a60 <= 500 and 210 <= b70 <= 350 and elapsed < 60
    report(3, ok, f"|F_a(60 nm)| = {a60:.1f} pN in [300, 500], |F_b(70 nm)| = {b70:.1f} pN in [210, 350], "
                  f"400-point curve {elapsed:.2f} s (limit 60 s)")


# 4 -------------------------------------------------------------------------


def test_criterion_4_difference_force():
    cat = M.builtin_models()
    gold = cat["gold_surrogate"]
    geom = L.SpherePlateGeometry(R_SPHERE, np.arange(70, 151, 1.0) * 1e-9)
    diff = L.difference_force(L.lifshitz_force(geom, gold, cat["si_doped_b"]),
                              L.lifshitz_force(geom, gold, cat["si_intrinsic_surrogate"]))
    mag = np.abs(diff.force_pN)
    monotone = bool(np.all(np.diff(mag) < 0))
    report(4, 10 <= mag[0] <= 24 and monotone,
           f"|F_b - F_a|(70 nm) = {mag[0]:.2f} pN in [10, 24], strictly decreasing over 70-150 nm: {monotone}")


# 5 -------------------------------------------------------------------------


def test_criterion_5_roughness_consistency():
    cat = M.builtin_models()
    z = M.log_grid(25e-9, 200e-9, 100)
    f = L.lifshitz_force(L.SpherePlateGeometry(R_SPHERE, z), cat["gold_surrogate"],
                         cat["si_intrinsic_surrogate"]).interpolator()

    def correction(sigma, at):
        rough = Rg.roughness_correct(f, np.array([at]), Rg.gaussian_distribution(sigma))
        return rough.force[0] / f(np.array([at]))[0] - 1

    sigma = brentq(lambda s: correction(s, 60e-9) - 0.036, 0.5e-9, 6e-9, xtol=1e-15)
    c100 = correction(sigma, 100e-9)

    # toy power law F = -z^-3 with two-point offsets +-10%
    toy = lambda x: -np.asarray(x) ** -3.0  # noqa: E731
    zt = 100e-9
    dist = Rg.HeightDistribution(np.array([-0.1 * zt, 0.1 * zt]), np.array([0.5, 0.5]))
    got = Rg.roughness_correct(toy, np.array([zt]), dist).force[0]
    want = -0.5 * ((0.9 * zt) ** -3 + (1.1 * zt) ** -3)
    toy_dev = abs(got / want - 1)

    ok = 0.009 <= c100 <= 0.019 and toy_dev <= 1e-6
    report(5, ok, f"sigma = {sigma * 1e9:.3f} nm gives 3.6% at 60 nm and {c100:.2%} at 100 nm "
                  f"(window [0.9%, 1.9%]); toy power law rel. deviation {toy_dev:.1e} (tol 1e-6)")


# 6 -------------------------------------------------------------------------

PRESETS = {
    "sample_a": (C.CalibrationParams(-0.341, 1.646e-9, 32.4, 47.8), np.linspace(-0.712, -0.008, 29), 200.0, 300.0),
    "sample_b": (C.CalibrationParams(-0.337, 1.700e-9, 32.3, 47.9), np.linspace(-0.611, -0.008, 25), 60.0, 100.0),
}


def _stable_sweeps(params, volts, zp_min, table):
    """Sweeps that stop 2 nm short of the jump to contact."""
    zp = np.arange(zp_min, 2700.0, 1.0)
    out = []
    for V in volts:
        zpi = zp[zp > C.jump_to_contact_piezo(params, R_SPHERE, V, table=table) + 2.0]
        out.append(C.ScanRecord(V, zpi, C.forward_deflection(params, R_SPHERE, V, zpi, table=table)))
    return out


def _estimates(res):
    return [res.V0, res.km, res.z0_nm, res.m_nm]


def test_criterion_6_calibration_round_trip():
    t0 = time.perf_counter()
    table = C.CoulombTable(R_SPHERE)
    worst = 0.0
    for params, volts, zp_min, fit_lo in PRESETS.values():
        scans = _stable_sweeps(params, volts, zp_min, table)
        m = C.estimate_deflection_coefficient(C.simulate_contacts(params, R_SPHERE, volts))
        res = C.extract_calibration(scans, (fit_lo, 2500.0), R_SPHERE, m)
        truth = [params.V0, params.km, params.z0_nm, params.m_nm]
        worst = max(worst, *(abs(e.value / t - 1) for e, t in zip(_estimates(res), truth)))

    # noisy coverage, sample a
    params, volts, zp_min, fit_lo = PRESETS["sample_a"]
    base = _stable_sweeps(params, volts, zp_min, table)
    scale = np.mean([abs(c.signal) for c in C.simulate_contacts(params, R_SPHERE, volts)])
    truth = np.array([params.V0, params.km, params.z0_nm, params.m_nm])
    hits = np.zeros(4)
    reps = 500
    for child in np.random.SeedSequence(2024).spawn(reps):
        rng = np.random.default_rng(child)
        noisy = C.add_noise(base, 0.002, rng)
        contacts = C.simulate_contacts(params, R_SPHERE, volts, noise_signal=0.004 * scale, rng=rng)
        res = C.extract_calibration(noisy, (fit_lo, 2500.0), R_SPHERE, C.estimate_deflection_coefficient(contacts))
        hits += [abs(e.value - t) <= e.error for e, t in zip(_estimates(res), truth)]
    cover = hits / reps
    elapsed = time.perf_counter() - t0

    ok = worst <= 1e-6 and np.all(np.abs(cover - 0.95) <= 0.03) and elapsed < 120
    report(6, ok, f"noiseless worst rel. error {worst:.1e} (tol 1e-6); coverage V0/km/z0/m = "
                  f"{'/'.join(f'{c:.3f}' for c in cover)} (95% +- 3%, {reps} reps); {elapsed:.1f} s (limit 120 s)")


# 7 -------------------------------------------------------------------------


def _t_oracle(p, nu):
    """Student-t quantile by root finding on the regularised incomplete beta function (mpmath)."""
    mp.mp.dps = 30

    def cdf(t):
        x = nu / (nu + t * t)
        tail = mp.betainc(nu / 2.0, 0.5, 0, x, regularized=True) / 2
        return 1 - tail if t > 0 else tail

    return float(mp.findroot(lambda t: cdf(t) - p, 2.0))


def test_criterion_7_statistics():
    q = S.t_quantile(0.95, 39)
    q_dev = abs(q - _t_oracle(0.975, 39))

    z = np.arange(60, 151, 1.0)
    theory = L.ForceCurve(z * 1e-9, -1e-29 / (z * 1e-9) ** 3)
    terr = S.theory_error(theory, 0.0, 0.0)
    cover = []
    for seed in range(200):
        scans = S.synthetic_scans(theory, 40, 10.0, np.random.default_rng(seed))
        band = S.confidence_band(terr, S.student_t_random_error(scans), z)
        cover.append(S.consistency_report(theory, S.mean_curve(scans), band).fraction_inside)
    cov = float(np.mean(cover))

    rng = np.random.default_rng(7)
    a, b = rng.uniform(0, 100, (2, 1000)) * 10.0 ** rng.uniform(-6, 6, (2, 1000))
    order_ok = bool(np.all(S.combine_random_systematic(a, b, "quadrature")
                           <= S.combine_random_systematic(a, b, "direct-sum")))

    report(7, q_dev < 1e-3 and cov >= 0.92 and order_ok,
           f"t(0.975, 39) = {q:.6f}, oracle deviation {q_dev:.1e} (tol 1e-3); band coverage {cov:.3f} (>= 0.92, "
           f"200 seeds); quadrature <= direct-sum in 1000/1000 cases: {order_ok}")


# 8 -------------------------------------------------------------------------


def test_criterion_8_synthetic_flagging(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\npreset = sample_a\n[geometry]\nz_max_nm = 80\n"
                   f"[calibration]\nscans = {tmp_path}/sim/sweeps/manifest.txt\n"
                   f"[statistics]\ntheory_file = {tmp_path}/sim/theory.csv\n"
                   f"scans_file = {tmp_path}/sim/force_scans.csv\n")
    gen = tmp_path / "gen.ini"
    gen.write_text("[run]\npreset = sample_a\n[geometry]\nz_max_nm = 80\n")
    codes = [cli.main(["simulate", "--config", str(gen), "--out", str(tmp_path / "sim"), "--seed", "3"])]
    for cmd in ("calibrate", "compare"):
        codes.append(cli.main([cmd, "--config", str(cfg), "--out", str(tmp_path / cmd)]))
    files = sorted(p for p in tmp_path.rglob("*") if p.is_file() and p.suffix in (".csv", ".txt"))
    flagged = [p for p in files if is_synthetic(p)]
    unflagged = [str(p.relative_to(tmp_path)) for p in files if p not in flagged]
    ok = codes == [0, 0, 0] and not unflagged and len(files) >= 29 + 4 + 2 + 2
    report(8, ok, f"simulate/calibrate/compare wrote {len(files)} files, {len(flagged)} flagged synthetic"
                  + (f"; unflagged: {', '.join(unflagged)}" if unflagged else ""))
