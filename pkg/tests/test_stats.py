import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from casimirdiff import stats as S
from casimirdiff.errors import DomainError, GridMismatchError
from casimirdiff.lifshitz import ForceCurve

Z = np.linspace(60, 150, 91)


def t_oracle(p, nu):
    """Student-t quantile by root-finding on the regularized incomplete beta (mpmath)."""
    mp.mp.dps = 30

    def cdf(t):
        x = nu / (nu + t * t)
        tail = mp.betainc(nu / 2.0, 0.5, 0, x, regularized=True) / 2
        return 1 - tail if t > 0 else tail

    return float(mp.findroot(lambda t: cdf(t) - p, 2.0))


def _curve(A=-3e-32, z_nm=Z):
    z = z_nm * 1e-9
    return ForceCurve(z, A * z**-3)


# --------------------------------------------------------------------------
# reductions


def test_mean_of_identical_rows():
    row = np.sin(Z)
    m = S.mean_curve(S.RepeatedScans(Z, np.tile(row, (5, 1))))
    np.testing.assert_allclose(m.force_pN, row, rtol=1e-15)
    np.testing.assert_allclose(m.z_nm, Z, rtol=1e-15)


def test_mean_of_opposite_rows():
    row = np.cos(Z)
    assert np.all(S.mean_curve(S.RepeatedScans(Z, np.array([row, -row]))).force == 0)


def test_mean_within_t_interval_on_average():
    truth = _curve()
    frac = []
    for seed in range(200):
        scans = S.synthetic_scans(truth, 40, 12.0, np.random.default_rng(seed))
        err = S.student_t_random_error(scans)
        frac.append(np.mean(np.abs(S.mean_curve(scans).force_pN - truth.force_pN) <= err))
    assert np.mean(frac) == pytest.approx(0.95, abs=0.01)


def test_repetition_count():
    with pytest.raises(DomainError):
        S.RepeatedScans(Z, np.zeros((1, Z.size)))
    with pytest.raises(GridMismatchError):
        S.RepeatedScans(Z, np.zeros((3, Z.size - 1)))


def test_stack_interpolates_onto_first_grid():
    g1 = np.linspace(60, 100, 41)
    g2 = np.linspace(59.5, 100.5, 83)
    rs = S.RepeatedScans.stack([g1, g2], [2 * g1, 2 * g2])
    np.testing.assert_allclose(rs.forces_pN, np.tile(2 * g1, (2, 1)), rtol=1e-14)
    with pytest.raises(GridMismatchError):
        S.RepeatedScans.stack([g1, g1[5:]], [g1, g1[5:]])


# --------------------------------------------------------------------------
# random error


def test_t_quantile_against_oracle():
    assert S.t_quantile(0.95, 39) == pytest.approx(t_oracle(0.975, 39), abs=1e-3)
    assert S.t_quantile(0.95, 39) == pytest.approx(2.0227, abs=1e-3)


@given(st.integers(1, 200), st.floats(0.5, 0.999))
def test_t_quantile_property(nu, conf):
    assert S.t_quantile(conf, nu) == pytest.approx(t_oracle(0.5 + conf / 2, nu), rel=1e-6)


def test_zero_variance_zero_error():
    scans = S.RepeatedScans(Z, np.tile(Z, (40, 1)))
    assert np.all(S.student_t_random_error(scans) == 0)


def test_random_error_magnitude():
    rng = np.random.default_rng(0)
    errs = [S.student_t_random_error(S.synthetic_scans(_curve(), 40, 12.0, rng)).mean() for _ in range(50)]
    expected = S.t_quantile(0.95, 39) * 12.0 / math.sqrt(40)
    assert expected == pytest.approx(3.8, abs=0.05)
    assert np.mean(errs) == pytest.approx(expected, rel=0.02)


def test_error_scales_as_inverse_root_n():
    rng = np.random.default_rng(1)
    sigma = 5.0
    for n in (10, 40):
        vals = []
        for _ in range(400):
            e = S.student_t_random_error(S.synthetic_scans(_curve(), n, sigma, rng))
            vals.append(np.mean((e / S.t_quantile(0.95, n - 1)) ** 2) * n)
        assert np.mean(vals) == pytest.approx(sigma**2, rel=0.03)


# --------------------------------------------------------------------------
# combination rules


def test_dominant_rule_example():
    assert S.combine_random_systematic(8.0, 1.2, "dominant") == 8.0


@pytest.mark.parametrize("rule", S.RULES)
def test_zero_systematic(rule):
    r = np.array([1.0, 4.0, 8.0])
    np.testing.assert_array_equal(S.combine_random_systematic(r, 0.0, rule), r)


def test_quadrature_345():
    assert S.combine_random_systematic(3.0, 4.0, "quadrature") == pytest.approx(5.0, rel=1e-15)


def test_unknown_rule():
    with pytest.raises(DomainError):
        S.combine_random_systematic(1.0, 1.0, "median")


@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(0, 10), st.sampled_from(S.RULES))
def test_rules_symmetric_and_monotone(a, b, d, rule):
    assert S.combine_random_systematic(a, b, rule) == S.combine_random_systematic(b, a, rule)
    assert S.combine_random_systematic(a + d, b, rule) >= S.combine_random_systematic(a, b, rule)


def test_quadrature_never_exceeds_direct_sum():
    rng = np.random.default_rng(42)
    a, b = rng.exponential(10.0, (2, 1000))
    q = S.confidence_band(a, b, rule="quadrature").half_width_pN
    d = S.confidence_band(a, b, rule="direct-sum").half_width_pN
    assert np.all(q <= d)


# --------------------------------------------------------------------------
# theory error and bands


def test_theory_error_zero_inputs():
    assert np.all(S.theory_error(_curve(), 0.0, 0.0) == 0)


def test_theory_error_power_law_slope():
    fine = np.arange(60.0, 150.0, 0.17)
    c = _curve(z_nm=fine)
    got = S.theory_error(c, 1.0, 0.0)
    # second-order differences: truncation ~ (10/3) (h/z)**2, larger on the one-sided edge stencils
    np.testing.assert_allclose(got, 3 * np.abs(c.force_pN) * 1.0 / fine, rtol=1e-4)


def test_theory_error_at_60nm(curves):
    a, _ = curves
    frac = S.theory_error(a, 1.0, 0.005)[0] / abs(a.force_pN[0])
    assert frac == pytest.approx(0.049, abs=0.015)


def test_theory_error_grid_checks():
    with pytest.raises(DomainError):
        S.theory_error(_curve(z_nm=np.array([60.0, 70.0])), 1.0)
    with pytest.raises(DomainError):
        S.theory_error(_curve(z_nm=np.array([60.0, 70.0, 100.0])), 1.0)
    with pytest.raises(DomainError):
        S.theory_error(_curve(), -1.0)


def test_band_examples():
    assert S.confidence_band([19.6], [8.0]).half_width_pN[0] == pytest.approx(math.hypot(19.6, 8.0))
    assert S.confidence_band([19.6], [8.0]).half_width_pN[0] == pytest.approx(21.2, abs=0.05)
    assert S.confidence_band([19.6], [8.0], rule="direct-sum").half_width_pN[0] == pytest.approx(27.6)
    for rule in S.RULES:
        assert S.confidence_band([0.0], [8.0], rule=rule).half_width_pN[0] == 8.0
        assert S.confidence_band([5.0], [0.0], rule=rule).half_width_pN[0] == 5.0
    with pytest.raises(GridMismatchError):
        S.confidence_band([1.0, 2.0], [1.0])


def test_error_budget_invariants():
    with pytest.raises(DomainError):
        S.ErrorBudget(np.array([-1.0]))
    with pytest.raises(DomainError):
        S.ConfidenceBand(Z, -np.ones_like(Z))


# --------------------------------------------------------------------------
# consistency and significance


def test_consistency_trivial_cases():
    th = _curve()
    band = S.ConfidenceBand(Z, np.full(Z.size, 5.0))
    assert S.consistency_report(th, th, band).fraction_inside == 1.0
    off = ForceCurve(th.z, th.force + 10e-12)
    rep = S.consistency_report(th, off, band)
    assert rep.fraction_inside == 0.0 and not rep.consistent
    assert rep.worst_excess_pN == pytest.approx(5.0)


def test_consistency_fraction_with_half_band_noise():
    th = _curve()
    xi = 4.0
    band = S.ConfidenceBand(Z, np.full(Z.size, xi))
    fr = []
    for seed in range(200):
        noise = np.random.default_rng(seed).normal(0, xi / 2, Z.size)
        fr.append(S.consistency_report(th, ForceCurve(th.z, th.force + noise * 1e-12), band).fraction_inside)
    assert np.mean(fr) == pytest.approx(0.95, abs=0.03)


def test_band_coverage_monte_carlo():
    """Band from the t-error of 40 scans (plus theory error) covers the truth at >= 92% of points."""
    th = _curve()
    terr = S.theory_error(th, 0.0, 0.0)
    cover = []
    for seed in range(200):
        scans = S.synthetic_scans(th, 40, 10.0, np.random.default_rng(seed))
        expt = S.combine_random_systematic(S.student_t_random_error(scans), 0.0, "dominant")
        band = S.confidence_band(terr, expt, Z)
        cover.append(S.consistency_report(th, S.mean_curve(scans), band).fraction_inside)
    assert np.mean(cover) >= 0.92


def test_consistency_grid_check():
    th = _curve()
    with pytest.raises(GridMismatchError):
        S.consistency_report(th, _curve(z_nm=Z + 1), S.ConfidenceBand(Z, np.ones_like(Z)))


def test_significance_examples():
    z = np.array([70.0, 80.0, 90.0])
    same = S.difference_significance([1, 2, 3], [1, 1, 1], [1, 2, 3], [1, 1, 1], z)
    assert same.z_range_nm is None
    sig = S.difference_significance([-256.0], [5.0], [-273.0], [4.9], [70.0])
    assert sig.significant[0] and sig.error_pN[0] == pytest.approx(7.0, abs=0.01)
    tie = S.difference_significance([0.0], [3.0], [5.0], [4.0], [70.0])
    assert not tie.significant[0] and tie.z_range_nm is None


def test_significance_longest_run():
    z = np.arange(60.0, 130.0, 10.0)
    a = np.zeros(7)
    b = np.array([5, 0, 5, 5, 5, 0, 5], float)
    res = S.difference_significance(a, np.ones(7), b, np.ones(7), z)
    assert res.z_range_nm == (80.0, 100.0)
    with pytest.raises(GridMismatchError):
        S.difference_significance(a, np.ones(7), b[:3], np.ones(3), z)


def test_synthetic_noise_level():
    scans = S.synthetic_scans(_curve(), 110, 7.5, np.random.default_rng(9))
    resid = scans.forces_pN - _curve().force_pN
    assert resid.size >= 10_000
    assert resid.std() == pytest.approx(7.5, rel=0.05)
