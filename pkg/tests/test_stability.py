import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gstab.ambiguity import AmbiguitySet, BangBang, Extremes, generate_scenarios, sample_paths
from gstab.bihari import BihariTransform, StabilityModulus, constant_collection, psi
from gstab.kernel import (CoefficientBounds, DomainError, Linear, LogLipschitz, PiecewiseConstant, Power,
                          WeightProfile)
from gstab.msde import PairedRun, linear_drift, simulate_pair, zero_coefficients
from gstab.stability import (SaturatingFamily, Verdict, amplification, amplification_factor, asymptotics_probe,
                             certify, propagate_partition, saturating_drift, saturation_endpoint,
                             saturation_residual)

W1 = WeightProfile(PiecewiseConstant.constant(1.0, 0, 1), PiecewiseConstant.constant(0.0, 0, 1))


def _modulus(kernel=Linear(1.0), bounds=CoefficientBounds(c_b=1.0), C1=4.0, weights=W1):
    cc = constant_collection(bounds, weights, 4.0, 1.0, 0.0, 1.0, C1=C1)
    return StabilityModulus.from_collection(BihariTransform(kernel), cc)


def _gamma_one(C1, kernel=Linear(1.0)):
    return StabilityModulus(BihariTransform(kernel), C1=C1, gamma=PiecewiseConstant.constant(1.0, 0.0, 1.0))


def _ensemble(steps=64, paths=40, seed=0):
    fam = generate_scenarios(AmbiguitySet(0.8, 1.2), [Extremes(), BangBang(1)], np.linspace(0, 1, 5))
    return sample_paths(fam, paths, seed, np.linspace(0, 1, steps + 1))


# -- certificates ------------------------------------------------------------------


def test_equal_data_certified():
    run = simulate_pair(linear_drift(), 0.3, 0.3, _ensemble())
    cert = certify(run, _modulus())
    assert cert.verdict is Verdict.CERTIFIED
    assert np.all(cert.u == 0) and np.all(cert.bound == 0)


def test_zero_coefficients_margin_three():
    m = _modulus(bounds=CoefficientBounds())
    run = simulate_pair(zero_coefficients(), 1.0, 0.0, _ensemble())
    cert = certify(run, m)
    assert cert.verdict is Verdict.CERTIFIED
    np.testing.assert_array_equal(cert.bound, 4.0)
    np.testing.assert_array_equal(cert.margin, 3.0)


def test_linear_drift_certified_with_closed_form_bound():
    run = simulate_pair(linear_drift(), 1.0, 0.0, _ensemble(steps=256))
    cert = certify(run, _modulus())
    assert cert.verdict is Verdict.CERTIFIED
    # Gamma = 1, so the bound at s is 4 e^{4 s}
    np.testing.assert_allclose(cert.bound, 4 * np.exp(4 * run.grid), rtol=1e-13)
    assert run.pointwise[-1] == pytest.approx(math.exp(-2), rel=5e-3)
    assert cert.bound[-1] >= psi(_modulus().with_shift(0.0), 1.0)


def test_bound_curve_nondecreasing():
    m = _modulus(kernel=LogLipschitz(1.0), bounds=CoefficientBounds(c_b=0.5, c_g=0.1))
    run = simulate_pair(linear_drift(), 0.2, 0.0, _ensemble())
    cert = certify(run, m)
    assert np.all(np.diff(cert.bound) >= 0)


def test_violation_detected():
    run = simulate_pair(linear_drift(-1.0), 1.0, 0.0, _ensemble())
    cert = certify(run, _modulus(C1=0.5))
    assert cert.verdict is Verdict.VIOLATED


def test_single_path_violation_is_inconclusive():
    run = simulate_pair(linear_drift(-1.0), 1.0, 0.0, _ensemble(paths=1))
    assert certify(run, _modulus(C1=0.5)).verdict is Verdict.INCONCLUSIVE


def test_partition_cap_enforced():
    # flat deviation curve inside tolerance of the direct bound, but above C1^N
    grid = np.array([0.0, 0.5, 1.0])
    ones = np.ones(3)
    run = PairedRun(grid=grid, u=ones, u_stderr=0.05 * ones, argmax_scenario=np.zeros(3, int),
                    scenario_means=ones[None, :], scenario_stderr=0.05 * ones[None, :], pointwise=ones,
                    pointwise_stderr=0.05 * ones, initial_gap=1.0, initial_gap_stderr=0.0, n_scenarios=1,
                    n_paths=100, seed=0, X_T=np.zeros((1, 1)), Y_T=np.zeros((1, 1)))
    m = StabilityModulus(BihariTransform(Linear(1.0)), C1=0.9, gamma=PiecewiseConstant.constant(0.0, 0, 1))
    assert certify(run, m).verdict is Verdict.CERTIFIED
    tight = certify(run, m, partition=np.linspace(0, 1, 5))
    assert tight.partition.product_bound == pytest.approx(0.9**4)
    assert tight.verdict is Verdict.VIOLATED
    assert "u(T) exceeds the partition product bound" in tight.notes


def test_certificate_export():
    run = simulate_pair(linear_drift(), 1.0, 0.5, _ensemble())
    cert = certify(run, _modulus(), partition=np.linspace(0, 1, 3))
    rows = list(cert.csv_rows())
    assert len(rows) == len(run.grid) and len(rows[0]) == len(cert.CSV_COLUMNS)
    d = cert.to_dict()
    assert d["verdict"] == "Certified" and d["family_size"] == 8
    assert d["partition"]["product_bound"] >= d["direct_bound"]


def test_certify_grid_mismatch():
    run = simulate_pair(linear_drift(), 1.0, 0.5, _ensemble())
    short = StabilityModulus(BihariTransform(Linear(1.0)), gamma=PiecewiseConstant.constant(1.0, 0.0, 0.5))
    with pytest.raises(DomainError):
        certify(run, short)
    with pytest.raises(DomainError):
        certify(run, StabilityModulus(BihariTransform(Linear(1.0))))


# -- amplification -------------------------------------------------------------------


def test_zero_gamma_gives_C1():
    m = StabilityModulus(BihariTransform(Power(1.0, 2.0)), C1=3.0, gamma=PiecewiseConstant.constant(0.0, 0, 1))
    prof = amplification(m, [0.1, 0.5, 1.0])
    np.testing.assert_allclose(prof.lambdas, 3.0, rtol=1e-14)


def test_linear_amplification_closed_form():
    deltas = np.linspace(0.05, 1.0, 20)
    prof = amplification(_gamma_one(4.0), deltas)
    np.testing.assert_allclose(prof.lambdas, 4 * np.exp(4 * deltas), rtol=1e-12)
    assert prof.contraction_horizon is None and prof.min_lambda > 1


def test_linear_ratio_constant_over_u_grid():
    m = _gamma_one(4.0).window(0.2, 0.3)
    ratios = [psi(m, u) / u for u in np.geomspace(1e-8, 1e4, 50)]
    np.testing.assert_allclose(ratios, 4 * math.exp(4 * 0.3), rtol=1e-13)


def test_contraction_with_small_C1():
    deltas = np.linspace(0.1, 2.0, 20)
    prof = amplification(_gamma_one(0.5), [d for d in deltas if d <= 1.0])
    # 0.5 e^{0.5 delta} < 1 iff delta < 2 log 2
    assert prof.contraction_horizon == pytest.approx(1.0)
    assert np.all(prof.lambdas < 1)


def test_tau_grid_relaxation_matches_breakpoint_search():
    gamma = PiecewiseConstant([0.0, 0.3, 0.6, 1.0], [1.0, 5.0, 0.5])
    m = StabilityModulus(BihariTransform(Linear(1.0)), C1=1.0, gamma=gamma)
    exact = amplification_factor(m, 0.25)
    fine = amplification_factor(m, 0.25, tau_grid=np.linspace(0, 0.75, 751))
    assert exact.lam == pytest.approx(fine.lam, rel=1e-12)
    assert exact.lam == pytest.approx(math.exp(0.25 * 5.0), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.0, 3.0), min_size=1, max_size=4), st.sampled_from([Linear(1.0), Power(1.0, 2.0),
                                                                               LogLipschitz(1.0)]))
def test_lambda_monotone_and_at_least_C1(values, kernel):
    gamma = PiecewiseConstant(np.linspace(0, 1, len(values) + 1), values)
    m = StabilityModulus(BihariTransform(kernel), C1=2.0, gamma=gamma)
    us = np.geomspace(1e-6, 1e-2, 9)
    prof = amplification(m, [0.1, 0.3, 0.6, 1.0], u_grid=us)
    assert np.all(np.diff(prof.lambdas) >= -1e-12 * prof.lambdas[1:])
    assert np.all(prof.lambdas >= 2.0 * (1 - 1e-14))


def test_amplification_domain():
    with pytest.raises(DomainError):
        amplification(_gamma_one(4.0), [])
    with pytest.raises(DomainError):
        amplification(_gamma_one(4.0), [1.5])
    with pytest.raises(DomainError):
        amplification(StabilityModulus(BihariTransform(Linear(1.0))), [0.5])


# -- partition ---------------------------------------------------------------------------


def test_single_interval_partition():
    m = _gamma_one(4.0)
    pb = propagate_partition(m, [0.0, 1.0], 0.3)
    assert pb.product_bound == pytest.approx(amplification_factor(m, 1.0).lam * 0.3, rel=1e-15)


def test_zero_gamma_partition():
    m = StabilityModulus(BihariTransform(Linear(1.0)), C1=3.0, gamma=PiecewiseConstant.constant(0.0, 0, 1))
    pb = propagate_partition(m, [0.0, 0.2, 0.7, 1.0], 1.0)
    assert pb.product_bound == pytest.approx(27.0, rel=1e-14)


def test_uniform_partition_closed_form():
    pb = propagate_partition(_gamma_one(4.0), np.linspace(0, 1, 5), 1.0)
    assert pb.product_bound == pytest.approx(4**4 * math.e**4, rel=1e-12)
    assert pb.uniform_bound == pytest.approx(pb.product_bound, rel=1e-12)
    assert pb.product_bound_sqrt == pytest.approx(16 * math.e**2, rel=1e-12)


def test_refinement_increases_product_for_linear():
    prev = 0.0
    for n in (1, 2, 4, 8):
        pb = propagate_partition(_gamma_one(4.0), np.linspace(0, 1, n + 1), 1.0)
        assert pb.product_bound == pytest.approx(4.0**n * math.exp(4.0), rel=1e-12)
        assert pb.product_bound > prev
        prev = pb.product_bound


def test_unsorted_partition():
    with pytest.raises(DomainError):
        propagate_partition(_gamma_one(4.0), [0.0, 0.6, 0.4, 1.0], 1.0)


# -- saturating family ------------------------------------------------------------------------


def test_linear_sigma_exact():
    fam = SaturatingFamily(Linear(4.0), 2.0, W1, 0.0, 1.0)
    for u in (0.0, 0.3, 2.0):
        assert fam.sigma(u) == 2.0 * u
    fam = SaturatingFamily(Power(1.0, 2.0), 2.0, W1, 0.0, 1.0)
    assert fam.sigma(0.5) == pytest.approx(0.125, rel=1e-10)  # int_0^u z dz


def test_saturation_linear():
    fam = SaturatingFamily(Linear(1.0), 2.0, W1, 0.0, 1.0)
    sd = saturating_drift(fam)
    assert sd.shift == 1.0
    for u0 in (1e-4, 1e-2, 1.0):
        assert sd.predict(u0) == pytest.approx(u0 * math.e, rel=1e-14)
        assert saturation_endpoint(fam, u0) == pytest.approx(u0 * math.e, rel=1e-9)
    assert sd.predict(0.0) == 0.0 and saturation_endpoint(fam, 0.0) == 0.0


def test_saturation_power():
    fam = SaturatingFamily(Power(1.0, 2.0), 4.0, W1, 0.0, 1.0)
    assert fam.shift == 2.0
    assert saturating_drift(fam).predict(0.01) == pytest.approx(1 / 98, rel=1e-14)
    assert saturation_endpoint(fam, 0.01) == pytest.approx(1 / 98, rel=1e-9)


def test_saturation_piecewise_weights_and_loglipschitz():
    w = WeightProfile(PiecewiseConstant([0, 0.4, 1], [2.0, 0.5]), PiecewiseConstant.constant(0.25, 0, 1))
    fam = SaturatingFamily(LogLipschitz(1.0), 1.5, w, 0.0, 1.0)
    pred = saturating_drift(fam).predict(1e-3)
    assert saturation_endpoint(fam, 1e-3) == pytest.approx(pred, rel=1e-8)
    assert saturation_residual(fam, 1e-3) < 1e-5


def test_saturation_ode_residual():
    for k, c_b in ((Linear(1.0), 2.0), (Power(1.0, 2.0), 4.0)):
        assert saturation_residual(SaturatingFamily(k, c_b, W1, 0.0, 1.0), 1e-2) < 1e-6


def test_printed_drift_overshoots():
    fam = SaturatingFamily(Linear(1.0), 2.0, W1, 0.0, 1.0)
    end = saturation_endpoint(fam, 1e-2, form="printed")
    assert end == pytest.approx(1e-2 * math.exp(math.sqrt(2.0)), rel=1e-9)


def test_saturating_drift_is_catalog_entry():
    from gstab.msde import CATALOG

    c = CATALOG["saturating"](Linear(1.0), W1, 0.0, 1.0, c_b=2.0)
    assert c.name == "saturating_exact"
    assert float(c.b(0.5, np.array(0.5), None)) == pytest.approx(0.25)


def test_saturating_family_domain():
    with pytest.raises(DomainError):
        SaturatingFamily(Linear(1.0), 0.0, W1, 0.0, 1.0)
    with pytest.raises(DomainError):
        saturating_drift(SaturatingFamily(Linear(1.0), 1.0, W1, 0.0, 1.0), form="other")


# -- asymptotics ---------------------------------------------------------------------


def test_asymptotics_linear_ratio_one():
    m = StabilityModulus(BihariTransform(Linear(2.0)), C1=3.0, C0=0.4)
    tab = asymptotics_probe(m, 10.0 ** -np.arange(1, 9))
    np.testing.assert_allclose(tab.ratio, 1.0, rtol=1e-14)
    assert tab.regime == "lipschitz"


def test_asymptotics_power_ratio_tends_to_one():
    us = 10.0 ** -np.arange(1, 9)
    m = StabilityModulus(BihariTransform(Power(1.0, 2.0)), C1=1.0, C0=1.0)
    tab = asymptotics_probe(m, us)
    np.testing.assert_allclose(tab.ratio, 1 / (1 - us), rtol=1e-12)
    assert abs(tab.ratio[-1] - 1) < 1e-7
    assert np.all(np.diff(tab.ratio) < 0)


def test_asymptotics_loglipschitz_reported():
    us = 10.0 ** -np.arange(1, 9)
    m = StabilityModulus(BihariTransform(LogLipschitz(1.0)), C1=1.0, C0=0.5)
    tab = asymptotics_probe(m, us)
    assert tab.printed is not None and np.all(np.isfinite(tab.ratio))
    # the ratio to C1 u grows without bound as u shrinks
    assert np.all(np.diff(tab.ratio) > 0)


def test_asymptotics_underflow_flagged():
    m = StabilityModulus(BihariTransform(LogLipschitz(1.0)), C1=1.0, C0=-5.0)
    tab = asymptotics_probe(m, 10.0 ** -np.arange(1, 30, 4.0))
    assert tab.underflow.any() and np.isnan(tab.ratio[tab.underflow]).all()


def test_asymptotics_grid_must_decrease():
    m = StabilityModulus(BihariTransform(Linear(1.0)))
    with pytest.raises(DomainError):
        asymptotics_probe(m, [1e-3, 1e-2])
