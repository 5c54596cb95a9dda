import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize
from scipy.stats import norm

from sde_tv_lab.density import DensityGrid, Gaussian, LogNormal
from sde_tv_lab.distance import (ResampleWarning, TestFunction, indicator, optimal_epsilon,
                                 rr_smoothed_expectation, sign, smooth, step, tv_densities,
                                 tv_w1_ratio, w1_cdf)
from sde_tv_lab.errors import ParameterError, UsageError


def Phi(z):
    return 0.5 * (1 + math.erf(z / math.sqrt(2)))


def quantile_w1(p, q):
    """W1 as int_0^1 |F_p^-1 - F_q^-1| (independent of the CDF route)."""
    def qf(d, u):
        if isinstance(d, Gaussian):
            return d.mean + d.std * norm.ppf(u)
        return d.x * math.exp(d.log_std * norm.ppf(u))
    return integrate.quad(lambda u: abs(qf(p, u) - qf(q, u)), 0, 1, limit=400, epsabs=1e-12)[0]


def grid_of(d, lo, hi, n=20_001):
    y = np.linspace(lo, hi, n)
    return DensityGrid(lo, hi, d.pdf(y), (hi - lo) / (n - 1))


# -- TV -----------------------------------------------------------------------------

def test_tv_examples():
    g = Gaussian(0, 1)
    assert tv_densities(g, g) == 0.0
    assert tv_densities(g, Gaussian(0.2, 1)) == pytest.approx(2 * (2 * Phi(0.1) - 1), abs=1e-10)
    assert tv_densities(g, Gaussian(0.2, 1)) == pytest.approx(0.159311, abs=1e-6)
    assert tv_densities(Gaussian(-50, 1), Gaussian(50, 1)) == pytest.approx(2.0, abs=1e-10)


def test_tv_brute_force_lognormal():
    p, q = LogNormal(1, 1, 0.05), Gaussian(1.025, 0.05)
    y = np.linspace(1e-9, 12, 2_000_001)
    brute = np.trapezoid(np.abs(p.pdf(y) - q.pdf(y)), y) + q.cdf(0.0)
    assert tv_densities(p, q) == pytest.approx(brute, abs=1e-8)


def test_tv_variance_mismatch_closed_form():
    # N(0,1) vs N(0,4): crossings at +-c with c^2 = 8 ln 2 / 3
    c = math.sqrt(8 * math.log(2) / 3)
    exact = 2 * ((2 * Phi(c) - 1) - (2 * Phi(c / 2) - 1))
    assert tv_densities(Gaussian(0, 1), Gaussian(0, 4)) == pytest.approx(exact, abs=1e-10)


def test_tv_grid_and_closed_form():
    p, q = Gaussian(0, 1), Gaussian(0.2, 1)
    exact = tv_densities(p, q)
    gp, gq = grid_of(p, -12, 12), grid_of(q, -12, 12)
    assert tv_densities(gp, q) == pytest.approx(exact, abs=1e-6)
    assert tv_densities(q, gp) == pytest.approx(exact, abs=1e-6)
    assert tv_densities(gp, gq) == pytest.approx(exact, abs=1e-6)
    other = grid_of(q, -10, 11, 7001)
    assert tv_densities(gp, other) == pytest.approx(exact, abs=1e-5)


def test_tv_grid_mass_outside_counts():
    gp = grid_of(Gaussian(0, 1), -12, 12)
    far = Gaussian(100, 1)
    assert tv_densities(gp, far) == pytest.approx(2.0, abs=1e-9)


def test_resample_warning():
    gp = grid_of(Gaussian(0, 1), -3, 3)
    wide = grid_of(Gaussian(0, 1), -12, 12)
    with pytest.warns(ResampleWarning):
        tv_densities(gp, wide)


CATALOG_LAWS = [Gaussian(0, 1), Gaussian(0.3, 1.2), Gaussian(1.0, 0.8), LogNormal(1, 1, 0.1),
                LogNormal(1.1, 0.5, 0.3), Gaussian(1.05, 0.1)]


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(CATALOG_LAWS), st.sampled_from(CATALOG_LAWS), st.sampled_from(CATALOG_LAWS))
def test_tv_metric_properties(p, q, r):
    pq = tv_densities(p, q)
    assert pq == pytest.approx(tv_densities(q, p), abs=1e-10)
    assert 0 <= pq <= 2
    assert pq <= tv_densities(p, r) + tv_densities(r, q) + 1e-8
    if p == q:
        assert pq == 0


# -- W1 -----------------------------------------------------------------------------

def test_w1_examples():
    assert w1_cdf(Gaussian(0, 1), Gaussian(0.2, 1)) == pytest.approx(0.2, abs=1e-10)
    assert w1_cdf(Gaussian(0, 1), Gaussian(0, 1)) == 0.0
    assert w1_cdf(Gaussian(0, 1), Gaussian(0, 4)) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-10)


@pytest.mark.parametrize("p,q", [(LogNormal(1, 1, 0.05), Gaussian(1.025, 0.05)),
                                 (Gaussian(0, 1), Gaussian(0.7, 2.5)),
                                 (LogNormal(1, 0.4, 1.0), LogNormal(1.2, 0.3, 1.0))])
def test_w1_against_quantile_route(p, q):
    assert w1_cdf(p, q) == pytest.approx(quantile_w1(p, q), abs=1e-8)


def test_w1_grid():
    p, q = Gaussian(0, 1), Gaussian(0.5, 1.5)
    assert w1_cdf(grid_of(p, -12, 12), q) == pytest.approx(w1_cdf(p, q), abs=1e-6)
    assert w1_cdf(grid_of(p, -12, 12), grid_of(q, -15, 15)) == pytest.approx(w1_cdf(p, q), abs=1e-6)


# -- smoothing ---------------------------------------------------------------------------

def test_smooth_examples():
    for eps in (1e-4, 0.3, 5.0):
        assert smooth(indicator(0.0), eps)(0.0) == pytest.approx(0.5, abs=1e-15)
    one = step((), (1.0,))
    np.testing.assert_array_equal(smooth(one, 0.1)(np.linspace(-5, 5, 11)), 1.0)
    y, eps = np.linspace(-2, 2, 9), 0.2
    np.testing.assert_allclose(smooth(sign(), eps)(y), 1 - 2 * norm.cdf(-y / math.sqrt(eps)), atol=1e-15)


@pytest.mark.parametrize("f", [indicator(0.3), sign(), step((-1.0, 0.5, 2.0), (0.2, -1.0, 1.0, 0.0))])
def test_smooth_against_quadrature(f):
    eps = 0.05
    fe = smooth(f, eps)
    for y in (-1.3, 0.0, 0.4, 2.2):
        # split at the discontinuities of z -> f(y + sqrt(eps) z)
        cuts = sorted((a - y) / math.sqrt(eps) for a in f.thresholds)
        edges = [-np.inf, *cuts, np.inf]
        val = sum(integrate.quad(lambda z: float(f(y + math.sqrt(eps) * z)) * norm.pdf(z), a, b)[0]
                  for a, b in zip(edges[:-1], edges[1:]))
        assert fe(y) == pytest.approx(val, abs=1e-10)


def test_test_function_validation():
    with pytest.raises(ParameterError):
        TestFunction((0.0,), (2.0, 0.0))
    with pytest.raises(ParameterError):
        TestFunction((1.0, 0.0), (0.0, 1.0, 0.0))
    with pytest.raises(ParameterError):
        smooth(indicator(0.0), 0.0)
    assert float(indicator(0.0)(0.0)) == 1.0 and float(indicator(0.0)(1e-12)) == 0.0


@pytest.mark.parametrize("eps", [1e-4, 1e-2, 1.0])
def test_lipschitz_bound(eps):
    y = np.linspace(0.3 - 10 * math.sqrt(eps), 0.3 + 10 * math.sqrt(eps), 400_001)
    fe = smooth(indicator(0.3), eps)(y)
    slope = np.max(np.abs(np.diff(fe) / np.diff(y)))
    assert slope <= math.sqrt(2 / math.pi) / math.sqrt(eps) * (1 + 1e-6)


# -- Richardson-Romberg --------------------------------------------------------------------

def test_rr_order_one_is_plain_smoothing():
    law = Gaussian(0.1, 0.8)
    assert rr_smoothed_expectation(indicator(0.5), law, 0.2, 1) == pytest.approx(Phi(0.4 / math.sqrt(1.0)), abs=1e-15)


def test_rr_order_two_example():
    f, law, eps = indicator(0.3), Gaussian(0, 1), 0.1
    expected = -Phi(0.3 / math.sqrt(1.1)) + 2 * Phi(0.3 / math.sqrt(1.05))
    val = rr_smoothed_expectation(f, law, eps, 2)
    assert val == pytest.approx(expected, abs=1e-14)
    assert abs(val - Phi(0.3)) < 1e-3
    assert abs(rr_smoothed_expectation(f, law, eps, 1) - Phi(0.3)) > 4e-3
    assert Phi(0.3) == pytest.approx(0.617911, abs=1e-6)


def test_rr_limit_and_errors():
    f, law = indicator(0.3), Gaussian(0.2, 0.5)
    vals = [rr_smoothed_expectation(f, law, e, 3) for e in (1e-2, 1e-4, 1e-6)]
    target = Phi(0.1 / math.sqrt(0.5))
    assert abs(vals[-1] - target) < abs(vals[0] - target)
    assert vals[-1] == pytest.approx(target, abs=1e-12)
    with pytest.raises(ParameterError):
        rr_smoothed_expectation(f, law, 0.1, 13)
    with pytest.raises(ParameterError):
        rr_smoothed_expectation(f, law, 0.1, 0)
    with pytest.raises(UsageError):
        rr_smoothed_expectation(f, LogNormal(1, 1, 1), 0.1, 2)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_rr_extrapolation_order(r):
    eps = np.logspace(-3, -1, 9)
    law = Gaussian(0, 1)
    err = [abs(rr_smoothed_expectation(indicator(0.3), law, e, r) - Phi(0.3)) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(err), 1)[0]
    assert slope == pytest.approx(r, abs=0.15)


# -- optimal epsilon and the interpolation inequality ---------------------------------------

def numeric_minimiser(r, w1, kappa):
    res = optimize.minimize_scalar(lambda le: kappa * math.exp(r * le) + w1 * math.exp(-le / 2),
                                   bounds=(-40, 10), method="bounded", options={"xatol": 1e-12})
    return math.exp(res.x)


def test_optimal_epsilon_examples():
    assert optimal_epsilon(1, 2.0, 1.0) == pytest.approx(1.0, rel=1e-15)
    for r in (1, 2, 5):
        assert optimal_epsilon(r, 2e-3, 3.0) / optimal_epsilon(r, 1e-3, 3.0) == pytest.approx(2 ** (2 / (2 * r + 1)))
    val = optimal_epsilon(2, 1e-3, 10.0)
    assert val == pytest.approx((1e-3 / 40) ** 0.4, rel=1e-14)
    assert val == pytest.approx(0.014427, abs=1e-6)
    assert val == pytest.approx(numeric_minimiser(2, 1e-3, 10.0), rel=1e-6)
    with pytest.raises(ParameterError):
        optimal_epsilon(1, 0.0, 1.0)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_interpolation_ratio_bounded(r):
    ratios = []
    for v in (0.05, 0.3, 1.0, 3.0):
        for dm in (1e-4, 1e-3, 1e-2, 0.1, 0.5):
            for dv in (0.0, 0.01, 0.2):
                ratios.append(tv_w1_ratio(Gaussian(0, v), Gaussian(dm, v * (1 + dv)), r))
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios))
    assert ratios.max() < 10
