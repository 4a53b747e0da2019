from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntksketch.errors import ConfigError
from ntksketch.kernels_exact import kappa0, kappa1
from ntksketch.poly_approx import (build_p_relu, build_pdot_relu, eval_poly, grid_error, kappa0_degree_rule,
                                   kappa1_degree_rule, select_degrees)


def central_ratio_exact(i: int) -> Fraction:
    return Fraction(math.factorial(2 * i), 4**i * math.factorial(i) ** 2)


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------


def test_p_relu_degree_zero():
    c = build_p_relu(0).coeffs
    assert np.allclose(c, [1 / math.pi, 0.5, 1 / (2 * math.pi)], rtol=1e-15)


def test_pdot_relu_degree_zero():
    assert np.allclose(build_pdot_relu(0).coeffs, [0.5, 1 / math.pi], rtol=1e-15)


def test_pdot_relu_third_coefficient():
    assert build_pdot_relu(1).coeffs[3] == pytest.approx(1 / (6 * math.pi), rel=1e-15)


@pytest.mark.parametrize("p", [0, 1, 5, 40])
def test_coefficient_layout(p):
    c = build_p_relu(p).coeffs
    b = build_pdot_relu(p).coeffs
    assert c.size == 2 * p + 3 and b.size == 2 * p + 2
    assert c[1] == 0.5
    assert np.all(c[3::2] == 0) and np.all(b[2::2] == 0)
    assert np.all(c >= 0) and np.all(b >= 0)
    # decreasing within each parity class past index 2
    assert np.all(np.diff(c[2::2]) < 0) and np.all(np.diff(b[1::2]) < 0)


def test_log_gamma_matches_exact_factorials():
    c = build_p_relu(10).coeffs
    b = build_pdot_relu(10).coeffs
    for i in range(11):
        r = central_ratio_exact(i)
        exact_c = float(r / ((2 * i + 1) * (2 * i + 2))) / math.pi
        exact_b = float(r / (2 * i + 1)) / math.pi
        assert c[2 * i + 2] == pytest.approx(exact_c, rel=1e-12)
        assert b[2 * i + 1] == pytest.approx(exact_b, rel=1e-12)


def test_large_degree_coefficients_are_finite():
    c = build_p_relu(1500).coeffs
    assert np.all(np.isfinite(c)) and c[-1] > 0


def test_negative_degree_rejected():
    with pytest.raises(ConfigError):
        build_p_relu(-1)
    with pytest.raises(ConfigError):
        build_pdot_relu(-1)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def test_eval_at_zero_is_constant_term():
    assert eval_poly(build_p_relu(7), 0.0) == build_p_relu(7).coeffs[0]
    assert eval_poly(build_pdot_relu(7), 0.0) == 0.5


def test_eval_matches_power_sum():
    P = build_p_relu(4)
    a = np.linspace(-1, 1, 11)
    direct = sum(cj * a**j for j, cj in enumerate(P.coeffs))
    assert np.allclose(P(a), direct, rtol=1e-14, atol=1e-15)


def test_large_degree_approaches_kappa1():
    assert eval_poly(build_p_relu(200), 0.5) == pytest.approx(float(kappa1(0.5)), abs=1e-6)


@pytest.mark.parametrize("p", [0, 3, 50, 900])
def test_pdot_at_one_at_most_one(p):
    assert eval_poly(build_pdot_relu(p), 1.0) <= 1.0


@pytest.mark.parametrize("p", [3, 10, 50])
def test_monotone_on_extended_interval(p):
    grid = np.linspace(0, 1 + 1 / (6 * p), 4001)
    assert np.all(np.diff(build_p_relu(p)(grid)) >= 0)
    assert np.all(np.diff(build_pdot_relu(p)(grid)) >= 0)


# ---------------------------------------------------------------------------
# Degree selection and the uniform error bounds
# ---------------------------------------------------------------------------


def test_select_degrees_examples():
    assert select_degrees(1.0, 1) == (2, 9)
    p, p_dot = select_degrees(0.5, 2)
    assert p == math.ceil(8 / 0.5 ** (4 / 3)) == 21
    assert p_dot == math.ceil(36 / 0.25) == 144
    assert kappa1_degree_rule(0.01) == 3


def test_select_degrees_rejects_bad_targets():
    for eps in (0.0, -0.1, 1.5):
        with pytest.raises(ConfigError):
            select_degrees(eps, 2)
    with pytest.raises(ConfigError):
        select_degrees(0.5, 0)


def test_degree_cap_warns():
    with pytest.warns(UserWarning):
        p, p_dot = select_degrees(0.01, 2, cap=100)
    assert p == 100 and p_dot == 100
    assert select_degrees(0.01, 2, cap=None)[1] == math.ceil(36 / 0.01**2)


@pytest.mark.parametrize("eps", [0.1, 0.05, 0.01])
def test_uniform_error_within_eps(eps):
    assert grid_error(build_p_relu(kappa1_degree_rule(eps))) <= eps
    assert grid_error(build_pdot_relu(kappa0_degree_rule(eps))) <= eps


def test_grid_error_uses_closed_forms():
    P = build_pdot_relu(2)
    grid = np.linspace(-1, 1, 10_001)
    assert grid_error(P) == pytest.approx(float(np.max(np.abs(P(grid) - kappa0(grid)))), rel=1e-15)


# ---------------------------------------------------------------------------
# Sensitivity
# ---------------------------------------------------------------------------


def sensitivity_violations(p: int, pairs: int, seed: int) -> tuple[int, int]:
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, pairs)
    da = rng.uniform(-1, 1, pairs) / (6 * p)
    b = a + da
    P, Pd = build_p_relu(p), build_pdot_relu(p)
    bad_p = np.abs(P(a) - P(b)) > np.abs(da)
    bad_pd = np.abs(Pd(a) - Pd(b)) > math.sqrt(p) * np.abs(da)
    return int(bad_p.sum()), int(bad_pd.sum())


@pytest.mark.parametrize("p", [3, 10, 50])
def test_sensitivity_bounds(p):
    assert sensitivity_violations(p, 10_000, seed=p) == (0, 0)


@settings(max_examples=80, deadline=None)
@given(p=st.integers(3, 60), a=st.floats(-1, 1), t=st.floats(-1, 1))
def test_sensitivity_property(p, a, t):
    b = a + t / (6 * p)
    P, Pd = build_p_relu(p), build_pdot_relu(p)
    assert abs(P(a) - P(b)) <= abs(a - b) + 1e-15
    assert abs(Pd(a) - Pd(b)) <= math.sqrt(p) * abs(a - b) + 1e-15
