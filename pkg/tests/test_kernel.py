import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gstab.kernel import (CoefficientBounds, Custom, DomainError, KernelSum, Linear, LogLipschitz,
                          PiecewiseConstant, Power, WeightProfile, evaluate_rho, kernel_from_spec,
                          profile_from_spec, validate_osgood)

BUILTINS = [Linear(1.0), Linear(2.5), LogLipschitz(1.0), LogLipschitz(0.3), Power(1.0, 2.0), Power(0.5, 1.5)]
PROBE = np.concatenate([[0.0], np.geomspace(1e-10, 1e3, 200)])


def test_linear_value():
    assert evaluate_rho(Linear(2.0), 3.0) == 6.0


@pytest.mark.parametrize("k", BUILTINS + [Custom(((0.5, 1.0), (2.0, 2.0)))])
def test_zero_at_origin(k):
    assert evaluate_rho(k, 0.0) == 0.0


def test_loglipschitz_at_one():
    assert evaluate_rho(LogLipschitz(1.0), 1.0) == 1.0


def test_loglipschitz_formula_and_linear_extension():
    k = LogLipschitz(2.0)
    r = np.array([1e-3, 0.1, 0.5, 0.99])
    np.testing.assert_allclose(k(r), 2.0 * r * np.log(np.e / r), rtol=1e-14)
    np.testing.assert_allclose(k(np.array([1.0, 2.0, 10.0])), [2.0, 4.0, 20.0], rtol=1e-14)


def test_negative_argument_rejected():
    with pytest.raises(DomainError):
        evaluate_rho(Linear(1.0), -1e-3)


@pytest.mark.parametrize("k", BUILTINS)
def test_monotone_on_probe_grid(k):
    v = k(PROBE)
    assert np.all(np.diff(v) >= 0)


def test_superposition_exact():
    a, b = LogLipschitz(0.7), Power(1.3, 2.0)
    s = a + b
    np.testing.assert_array_equal(s(PROBE), a(PROBE) + b(PROBE))


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_scale_covariance(c, L):
    np.testing.assert_allclose(Linear(c * L)(PROBE), c * Linear(L)(PROBE), rtol=4e-16, atol=0)


def test_osgood_reports():
    r = validate_osgood(Linear(1.0))
    assert r.osgood_holds and r.concave
    r = validate_osgood(Power(1.0, 2.0))
    assert r.osgood_holds and not r.concave
    r = validate_osgood(LogLipschitz(1.0))
    assert r.osgood_holds and r.concave
    thetas = [th for _, th in r.evidence]
    assert all(b < a for a, b in zip(thetas, thetas[1:]))


def test_osgood_detects_non_osgood_custom():
    # sqrt(r) near zero: the integral of 1/rho converges
    r = np.geomspace(1e-14, 1.0, 60)
    k = Custom(tuple(zip(r, np.sqrt(r))))
    assert not validate_osgood(k).osgood_holds


def test_osgood_accepts_linear_custom():
    k = Custom(((1.0, 2.0), (5.0, 10.0)))
    rep = validate_osgood(k)
    assert rep.osgood_holds and rep.concave


def test_custom_rejects_decreasing_samples():
    with pytest.raises(DomainError):
        Custom(((1.0, 2.0), (2.0, 1.0)))


def test_sum_of_same_family_collapses():
    s = Linear(1.0) + Linear(2.0)
    assert s.has_closed_form
    assert s._collapsed() == Linear(3.0)
    assert not (Linear(1.0) + Power(1.0, 2.0)).has_closed_form


def test_kernel_from_spec():
    assert kernel_from_spec({"family": "power", "L": 2, "alpha": 3}) == Power(2.0, 3.0)
    assert kernel_from_spec({"family": "log_lipschitz"}) == LogLipschitz(1.0)
    with pytest.raises(DomainError, match="kernel.family"):
        kernel_from_spec({"family": "quadratic"})


def test_power_needs_alpha_above_one():
    with pytest.raises(DomainError):
        Power(1.0, 1.0)


def test_piecewise_constant_integral_exact():
    p = PiecewiseConstant([0.0, 0.25, 1.0], [2.0, 4.0])
    assert p.integral(0.0, 1.0) == 0.5 + 3.0
    assert p.integral(0.1, 0.5) == pytest.approx(0.3 + 1.0, rel=1e-15)
    assert p(0.25) == 4.0  # right-continuous
    assert p.integral(0.7, 0.2) == -p.integral(0.2, 0.7)


@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=6), st.floats(0, 1), st.floats(0, 1))
def test_piecewise_constant_additivity(values, a, b):
    p = PiecewiseConstant(np.linspace(0, 1, len(values) + 1), values)
    m = 0.5 * (a + b)
    assert p.integral(a, b) == pytest.approx(p.integral(a, m) + p.integral(m, b), abs=1e-12)


def test_weight_profile_total():
    w = WeightProfile(profile_from_spec(1.0, 0, 2), profile_from_spec({"values": [0.0, 1.0]}, 0, 2))
    assert w.integral(0, 2) == 3.0


def test_weight_profile_span_checked():
    with pytest.raises(DomainError):
        profile_from_spec({"breaks": [0, 0.5], "values": [1.0]}, 0, 1)


def test_negative_bounds_rejected():
    with pytest.raises(DomainError):
        CoefficientBounds(c_b=-1.0)
    with pytest.raises(DomainError):
        CoefficientBounds(beta_g=math.inf)


def test_kernels_are_immutable():
    k = Linear(1.0)
    with pytest.raises(Exception):
        k.L = 2.0


@settings(max_examples=50)
@given(st.sampled_from(BUILTINS), st.floats(0, 100), st.floats(0, 100))
def test_monotone_property(k, a, b):
    lo, hi = min(a, b), max(a, b)
    assert evaluate_rho(k, lo) <= evaluate_rho(k, hi)


def test_kernelsum_flattens():
    s = KernelSum((Linear(1.0), Linear(2.0) + Linear(3.0)))
    assert len(s.parts) == 3
