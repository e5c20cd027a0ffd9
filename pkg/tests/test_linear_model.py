from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma as gamma_fn

from stablelt.linear_model import (
    C1,
    C2,
    CoefficientModel,
    FarimaNegative,
    NormingError,
    SlowlyVarying,
    beta_schedule,
    coefficients,
    cumulative_g,
    farima_coefficients,
    norm_schedule,
    norming,
    solve_bn,
    write_coefficients_csv,
)


def test_farima_recurrence_by_hand():
    c = coefficients(CoefficientModel.farima(0.3), 3)
    assert c == pytest.approx([1.0, 0.3, 0.195])
    assert cumulative_g(CoefficientModel.farima(0.3), 2)[1] == pytest.approx(1.3)


def test_farima_matches_gamma_ratio():
    d = 0.3
    j = np.arange(1, 50)
    exact = gamma_fn(j + d) / (gamma_fn(d) * gamma_fn(j + 1))
    assert farima_coefficients(d, 50)[1:] == pytest.approx(exact, rel=1e-12)


def test_zero_sum_cumulative_vanishes():
    g = cumulative_g(CoefficientModel.farima(-0.2), 10**5 + 1)
    # g_n ~ n^d / Gamma(1 + d) -> 0 as a power law
    assert g[10**5] / g[10**3] == pytest.approx(100**-0.2, rel=0.01)
    tail = np.abs(g[100:])
    assert np.all(np.diff(tail) < 0)


def test_power_coefficients():
    m = CoefficientModel(C1(0.75, 2.0), 2.0)
    c = coefficients(m, 5)
    assert c[0] == 1.0
    assert c[4] == pytest.approx(4**-0.75)
    g = cumulative_g(m, 2 * 10**4 + 1)
    # increments of g follow the integral of x^-0.75
    n = 10**4
    assert (g[2 * n] - g[n]) / (4 * ((2 * n) ** 0.25 - n**0.25)) == pytest.approx(1.0, rel=1e-3)


def test_regular_variation_ratio():
    m = CoefficientModel(C1(0.7, 1.5), 1.5)
    c = coefficients(m, 2 * 10**5 + 1)
    assert c[2 * 10**5] / c[10**5] == pytest.approx(2 ** (0.7 - 1 - 1 / 1.5), rel=0.01)


@pytest.mark.parametrize(
    "make",
    [
        lambda: CoefficientModel(C1(0.5, 2.0), 2.0),  # H = 1/alpha
        lambda: CoefficientModel(C1(0.3, 2.0), 2.0),  # zero_sum missing
        lambda: CoefficientModel(C2((1.0, -1.0)), 2.0),  # sum zero
        lambda: CoefficientModel(C2((2.0, 1.0)), 2.0),  # c0 != 1
        lambda: CoefficientModel(C2((1.0,)), 0.9),  # alpha <= 1 under C2
        lambda: CoefficientModel(C2(FarimaNegative(-0.2)), 2.0),
        lambda: CoefficientModel(C1(0.7, 1.5), 2.0),  # alpha mismatch
    ],
)
def test_invalid_models(make):
    with pytest.raises(ValueError):
        make()


def test_c1_negative_d_uses_farima():
    m = CoefficientModel(C1(0.3, 2.0, zero_sum=True), 2.0)
    assert m.regime.generator == "farima"
    g = cumulative_g(m, 10**5)
    assert 0 < g[-1] < 0.2 * g[10]


def test_norming_closed_forms():
    assert solve_bn(2.0, SlowlyVarying.constant(1.0), 100) == 10.0
    for n in (1, 17, 1000):
        b, g = norming(CoefficientModel(C1(0.7, 2.0), 2.0), SlowlyVarying.constant(1.0), n)
        assert b == n**0.5
        assert g == pytest.approx(n**0.7, rel=1e-15)
    b, g = norming(CoefficientModel(C2((1.0, 0.5)), 2.0), SlowlyVarying.constant(3.0), 12)
    assert b == pytest.approx(6.0) and g == pytest.approx(9.0)


def _bisect_oracle(alpha, n, p):
    lo, hi = 1e-30, 1.0
    for _ in range(300):
        mid = math.sqrt(lo * hi)
        if mid**alpha * math.log(math.e + 1 / mid) ** p < 1 / n:
            lo = mid
        else:
            hi = mid
    return 1 / hi


def test_logpower_bisection():
    G = SlowlyVarying.log_power(1.0)
    b = solve_bn(1.5, G, 10**4)
    assert b == pytest.approx(_bisect_oracle(1.5, 10**4, 1.0), rel=1e-6)


def test_slow_variation():
    G = SlowlyVarying.log_power(2.0)
    ratios = [G(2 * x) / G(x) for x in (1e3, 1e30, 1e300)]
    assert ratios[0] > ratios[1] > ratios[2] and ratios[2] == pytest.approx(1.0, abs=0.01)
    assert np.all(G(np.array([0.0, 1.0, 1e9])) > 0)


def test_bisection_failure_reported():
    with pytest.raises(NormingError):
        solve_bn(2.0, SlowlyVarying.log_power(80.0), 10)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.6, 2.0), st.floats(0.1, 10.0), st.integers(1, 10**6))
def test_constant_g_inverts(alpha, c, n):
    b = solve_bn(alpha, SlowlyVarying.constant(c), n)
    u = 1 / b
    assert u**alpha * c == pytest.approx(1 / n, rel=1e-9)


def test_schedule_monotone():
    sched = norm_schedule(CoefficientModel(C1(0.7, 2.0), 2.0), SlowlyVarying.constant(1.0), [2**k for k in range(6, 15)])
    assert all(sched.check().values())
    assert beta_schedule(2**14) == pytest.approx(2**5.6)
    with pytest.raises(ValueError):
        beta_schedule(10, 1.0)


def test_csv_export(tmp_path):
    p = write_coefficients_csv(CoefficientModel.farima(0.3), 4, tmp_path / "c.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "j,c_j,g_j"
    j, c, g = lines[2].split(",")
    assert j == "1" and float(c) == pytest.approx(0.3) and float(g) == pytest.approx(1.3)
