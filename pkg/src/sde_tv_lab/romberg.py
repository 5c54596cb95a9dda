"""Exact multi-step Richardson-Romberg weights.

All arithmetic is done with :class:`fractions.Fraction`; conversion to float
happens only where a caller consumes the weights numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .errors import ParameterError

MAX_ORDER = 12
U_INF_FACTORS = 64


def _u(k: int) -> Fraction:
    # u_k = prod_{l=1}^{k-1} (1 - 2^-l)^{-1}; u_1 = 1
    prod = Fraction(1)
    for ell in range(1, k):
        prod *= 1 - Fraction(1, 2**ell)
    return 1 / prod


def _v(k: int) -> Fraction:
    sign = -1 if k % 2 else 1
    return sign * Fraction(1, 2 ** (k * (k + 1) // 2)) * _u(k + 1)


@dataclass(frozen=True)
class RombergWeights:
    r: int
    refiners: tuple[int, ...]
    u: tuple[Fraction, ...]
    v: tuple[Fraction, ...]
    w: tuple[Fraction, ...]

    def as_floats(self) -> list[float]:
        return [float(x) for x in self.w]


@lru_cache(maxsize=None)
def weights(r: int) -> RombergWeights:
    """Weights ``w_1..w_r`` for the refiners ``n_i = 2**(i-1)``.

    ``u`` holds ``u_1..u_r`` and ``v`` holds ``v_0..v_{r-1}``, so that
    ``w[k-1] == u[k-1] * v[r-k]``.
    """
    if not isinstance(r, int) or r < 1:
        raise ParameterError(f"order r must be an integer >= 1, got {r!r}")
    u = tuple(_u(k) for k in range(1, r + 1))
    v = tuple(_v(k) for k in range(0, r))
    w = tuple(u[k - 1] * v[r - k] for k in range(1, r + 1))
    refiners = tuple(2 ** (i - 1) for i in range(1, r + 1))
    return RombergWeights(r=r, refiners=refiners, u=u, v=v, w=w)


def vandermonde_residual(wt: RombergWeights) -> list[Fraction]:
    """``sum_i w_i n_i^-k - [k == 0]`` for ``k = 0..r-1``."""
    out = []
    for k in range(wt.r):
        s = sum(w * Fraction(1, n**k) for w, n in zip(wt.w, wt.refiners))
        out.append(s - (1 if k == 0 else 0))
    return out


def float_residual(wt: RombergWeights) -> float:
    """Largest Vandermonde residual after rounding the weights to float."""
    wf = wt.as_floats()
    worst = 0.0
    for k in range(wt.r):
        s = math.fsum(w * n ** (-k) for w, n in zip(wf, wt.refiners))
        worst = max(worst, abs(s - (1.0 if k == 0 else 0.0)))
    return worst


def u_infinity(n_factors: int = U_INF_FACTORS) -> float:
    prod = 1.0
    for ell in range(1, n_factors + 1):
        prod *= 1.0 - 2.0**-ell
    return 1.0 / prod


@dataclass(frozen=True)
class WeightBounds:
    sum_w_over_n_r: float
    sum_w_sqrt2: float
    u_inf_sq: float
    bound_w_over_n_r: float
    bound_w_sqrt2: float

    @property
    def ok(self) -> bool:
        return (self.sum_w_over_n_r <= self.bound_w_over_n_r
                and self.sum_w_sqrt2 <= self.bound_w_sqrt2)


def weight_bound_checks(wt: RombergWeights) -> WeightBounds:
    """Evaluate the two weight sums and their ``u_inf**2`` envelopes.

    Raises ``AssertionError`` if either envelope is violated; that would
    mean the closed form is wrong, not that the input is bad.
    """
    r = wt.r
    s1 = float(sum(abs(w) * Fraction(1, n**r) for w, n in zip(wt.w, wt.refiners)))
    s2 = math.fsum(abs(float(w)) * 2 ** ((i - 1) / 2) for i, w in enumerate(wt.w, 1))
    u2 = u_infinity() ** 2
    b1 = u2 * math.fsum(2 ** (-i / 2) for i in range(r))
    b2 = u2 * 2**r
    res = WeightBounds(s1, s2, u2, b1, b2)
    if not res.ok:
        raise AssertionError(f"weight envelope violated for r={r}: {res}")
    return res


def adaptive_order(t: float) -> int:
    """Order ``max(1, floor(sqrt(ln(1/t))))``; any ``t >= 1`` gives 1."""
    if t <= 0:
        raise ParameterError(f"t must be positive, got {t}")
    if t >= 1:
        return 1
    # guard against floor(2.9999999) when ln(1/t) is a perfect square
    root = math.sqrt(math.log(1.0 / t))
    r = math.floor(root + 1e-12)
    return max(1, r)
