"""Total-variation and W1 distances between 1D laws, Gaussian smoothing of
bounded test functions and the Richardson-Romberg smoothed expectation.

TV follows the unnormalised convention ``int |p - q|`` (maximum 2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtr

from .density import ClosedFormDensity, DensityGrid, Gaussian, LogNormal, deriv_l1_norm
from .errors import ParameterError, SolverError, UsageError
from .romberg import MAX_ORDER, weights

Density = Union[ClosedFormDensity, DensityGrid]

QUAD_EPSABS = 1e-10
SUPPORT_SIGMAS = 12.0
_SCAN_POINTS = 4097


class ResampleWarning(UserWarning):
    """A grid density was resampled onto a grid that does not cover its support."""


# -- quadrature helpers ------------------------------------------------------------

def _union_support(p: ClosedFormDensity, q: ClosedFormDensity) -> tuple[float, float]:
    a1, b1 = p.support(SUPPORT_SIGMAS)
    a2, b2 = q.support(SUPPORT_SIGMAS)
    return min(a1, a2), max(b1, b2)


def _sign_change_points(g: Callable, lo: float, hi: float, extra=()) -> list[float]:
    """Roots of ``g`` on ``[lo, hi]`` located by scanning and bisection."""
    pts = np.union1d(np.linspace(lo, hi, _SCAN_POINTS), [e for e in extra if lo < e < hi])
    vals = g(pts)
    roots = []
    for a, b, fa, fb in zip(pts[:-1], pts[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(float(a))
        elif fa * fb < 0:
            roots.append(optimize.brentq(lambda z: float(g(z)), a, b, xtol=1e-15, rtol=1e-15))
    return sorted(set(roots))


def _abs_integral(g: Callable, lo: float, hi: float, extra=()) -> float:
    """int_lo^hi |g|, splitting the range where ``g`` changes sign."""
    edges = [lo, *_sign_change_points(g, lo, hi, extra), hi]
    total = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        val, err = integrate.quad(lambda z: float(g(z)), a, b, epsabs=QUAD_EPSABS * 1e-2,
                                  epsrel=1e-11, limit=400)
        if err > 10 * QUAD_EPSABS:
            raise SolverError(f"quadrature did not converge on [{a:.6g}, {b:.6g}] (err {err:.2g})")
        total.append(abs(val))
    return math.fsum(total)


def _piecewise_linear_abs(y: np.ndarray, d: np.ndarray) -> float:
    """Exact integral of ``|d|`` for ``d`` linear between the nodes ``y``."""
    a, b = d[:-1], d[1:]
    h = np.diff(y)
    same = a * b >= 0
    out = np.where(same, 0.5 * h * (np.abs(a) + np.abs(b)), 0.0)
    cross = ~same
    out[cross] = 0.5 * h[cross] * (a[cross] ** 2 + b[cross] ** 2) / (np.abs(a[cross]) + np.abs(b[cross]))
    return float(np.sum(out))


def _is_grid(d) -> bool:
    return isinstance(d, DensityGrid)


# -- total variation --------------------------------------------------------------------

def tv_densities(p: Density, q: Density) -> float:
    """``int |p - q|`` for closed-form or gridded 1D densities."""
    if not _is_grid(p) and not _is_grid(q):
        lo, hi = _union_support(p, q)
        kinks = [0.0] if isinstance(p, LogNormal) or isinstance(q, LogNormal) else []
        val = _abs_integral(lambda z: p.pdf(z) - q.pdf(z), lo, hi, kinks)
        return min(val, 2.0)
    if _is_grid(q) and not _is_grid(p):
        p, q = q, p
    y = p.y
    if _is_grid(q):
        same = (len(q.values) == len(p.values) and math.isclose(q.lo, p.lo, abs_tol=1e-12 * p.dx)
                and math.isclose(q.dx, p.dx, rel_tol=1e-12))
        if same:
            return min(_piecewise_linear_abs(y, p.values - q.values), 2.0)
        if q.lo < p.lo - 1e-12 or q.hi > p.hi + 1e-12:
            warnings.warn("resampling a grid density onto a grid that does not cover its support",
                          ResampleWarning, stacklevel=2)
        qv = np.interp(y, q.y, q.values, left=0.0, right=0.0)
        outside = q.mass - float(np.trapezoid(qv, dx=p.dx))
    else:
        qv = q.pdf(y)
        outside = float(q.cdf(p.lo)) + float(1.0 - q.cdf(p.hi))
    val = _piecewise_linear_abs(y, p.values - qv) + max(outside, 0.0)
    return min(val, 2.0)


# -- W1 -------------------------------------------------------------------------------

def w1_cdf(p: Density, q: Density) -> float:
    """W1 through ``int |F_p - F_q|``."""
    if not _is_grid(p) and not _is_grid(q):
        lo, hi = _union_support(p, q)
        body = _abs_integral(lambda z: p.cdf(z) - q.cdf(z), lo, hi)
        # beyond 12 sigma the CDFs are ordered, so the tail gaps are exact
        tails = abs(p.lower_tail_mean(lo) - q.lower_tail_mean(lo)) \
            + abs(p.upper_tail_mean(hi) - q.upper_tail_mean(hi))
        return body + tails
    lo = min(_lo(p), _lo(q))
    hi = max(_hi(p), _hi(q))
    dx = min(d.dx for d in (p, q) if _is_grid(d))
    y = np.linspace(lo, hi, int(math.ceil((hi - lo) / dx)) + 1)
    return _piecewise_linear_abs(y, np.asarray(p.cdf(y)) - np.asarray(q.cdf(y)))


def _lo(d):
    return d.lo if _is_grid(d) else d.support(SUPPORT_SIGMAS)[0]


def _hi(d):
    return d.hi if _is_grid(d) else d.support(SUPPORT_SIGMAS)[1]


# -- test functions and smoothing --------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """Piecewise-constant ``f`` taking ``levels[k]`` on ``(a_k, a_{k+1}]``.

    With thresholds ``a_1 < ... < a_m`` and ``a_0 = -inf``, ``a_{m+1} = inf``.
    """

    __test__ = False  # not a pytest class

    thresholds: tuple[float, ...]
    levels: tuple[float, ...]

    def __post_init__(self):
        if len(self.levels) != len(self.thresholds) + 1:
            raise ParameterError("a step function needs one more level than thresholds")
        if any(abs(v) > 1 for v in self.levels):
            raise ParameterError("test functions must be bounded by 1")
        if list(self.thresholds) != sorted(self.thresholds):
            raise ParameterError("thresholds must be increasing")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(np.asarray(self.thresholds), y, side="left")
        return np.asarray(self.levels)[idx]

    def _jumps(self):
        # f = levels[-1] + sum_k (levels[k] - levels[k+1]) 1{y <= a_k}
        return [(a, self.levels[k] - self.levels[k + 1]) for k, a in enumerate(self.thresholds)]

    def gaussian_expectation(self, mean: float, var: float) -> float:
        """E f(Z) for Z ~ N(mean, var); ``var == 0`` is a point mass."""
        if var == 0:
            return float(self(mean))
        s = math.sqrt(var)
        return self.levels[-1] + math.fsum(j * float(ndtr((a - mean) / s)) for a, j in self._jumps())


def indicator(a: float) -> TestFunction:
    """``1{y <= a}``."""
    return TestFunction((float(a),), (1.0, 0.0))


def sign() -> TestFunction:
    return TestFunction((0.0,), (-1.0, 1.0))


def step(thresholds: Sequence[float], levels: Sequence[float]) -> TestFunction:
    return TestFunction(tuple(float(a) for a in thresholds), tuple(float(v) for v in levels))


def smooth(f: TestFunction, eps: float) -> Callable:
    """``y -> E f(y + sqrt(eps) zeta)`` in closed form."""
    if not eps > 0:
        raise ParameterError(f"smoothing parameter must be > 0, got {eps}")
    s = math.sqrt(eps)
    jumps = f._jumps()
    base = f.levels[-1]

    def f_eps(y):
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, base, dtype=float)
        for a, j in jumps:
            out = out + j * ndtr((a - y) / s)
        return out if out.ndim else float(out)

    return f_eps


def rr_smoothed_expectation(f: TestFunction, law: Gaussian, eps: float, r: int) -> float:
    """``sum_i w_i E f_{eps/n_i}(Z)`` for ``Z`` Gaussian, exactly."""
    if not isinstance(law, Gaussian):
        raise UsageError("the smoothed expectation is closed-form only for Gaussian laws")
    if not eps > 0:
        raise ParameterError(f"smoothing parameter must be > 0, got {eps}")
    if not isinstance(r, int) or not 1 <= r <= MAX_ORDER:
        raise ParameterError(f"order r must be in 1..{MAX_ORDER}, got {r!r}")
    wt = weights(r)
    terms = [float(w) * f.gaussian_expectation(law.mean, law.var + eps / n)
             for w, n in zip(wt.w, wt.refiners)]
    return math.fsum(terms)


def optimal_epsilon(r: int, w1: float, deriv_norm_sum: float) -> float:
    """Minimiser of ``deriv_norm_sum * eps**r + w1 * eps**-0.5``."""
    if not (r >= 1 and w1 > 0 and deriv_norm_sum > 0):
        raise ParameterError("optimal_epsilon needs r >= 1 and positive inputs")
    return (w1 / (2 * r * deriv_norm_sum)) ** (2.0 / (2 * r + 1))


def tv_w1_ratio(p: Gaussian, q: Gaussian, r: int) -> float:
    """``tv / (w1**(2r/(2r+1)) * S**(1/(2r+1)))`` with ``S`` the summed
    L1 norms of the ``2r``-th density derivatives; finite across a sweep
    means the interpolation inequality holds with some constant."""
    tv = tv_densities(p, q)
    w1 = w1_cdf(p, q)
    S = deriv_l1_norm(2 * r, p.var) + deriv_l1_norm(2 * r, q.var)
    return tv / (w1 ** (2 * r / (2 * r + 1)) * S ** (1 / (2 * r + 1)))
