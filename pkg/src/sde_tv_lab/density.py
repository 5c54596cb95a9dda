"""Transition densities.

Closed forms (Gaussian, lognormal), Gaussian derivatives through probabilist
Hermite polynomials, a Crank-Nicolson Fokker-Planck solver for models
without a closed form, and a fit of sub-Gaussian envelopes to solver output.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import integrate
from scipy.linalg import solve_banded
from scipy.special import ndtr

from .errors import PreconditionError, SolverError, UsageError

SQRT2PI = math.sqrt(2.0 * math.pi)


# -- closed forms --------------------------------------------------------------

@dataclass(frozen=True)
class Gaussian:
    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise UsageError(f"gaussian variance must be > 0, got {self.var}")

    @property
    def std(self) -> float:
        return math.sqrt(self.var)

    def pdf(self, y):
        u = (np.asarray(y, dtype=float) - self.mean) / self.std
        return np.exp(-0.5 * u * u) / (SQRT2PI * self.std)

    def cdf(self, y):
        return ndtr((np.asarray(y, dtype=float) - self.mean) / self.std)

    def support(self, n_sigma: float = 12.0) -> tuple[float, float]:
        return self.mean - n_sigma * self.std, self.mean + n_sigma * self.std

    def upper_tail_mean(self, a: float) -> float:
        """E[(Y - a)_+]."""
        d = (self.mean - a) / self.std
        return self.std * math.exp(-0.5 * d * d) / SQRT2PI + (self.mean - a) * float(ndtr(d))

    def lower_tail_mean(self, a: float) -> float:
        """E[(a - Y)_+]."""
        d = (a - self.mean) / self.std
        return self.std * math.exp(-0.5 * d * d) / SQRT2PI + (a - self.mean) * float(ndtr(d))


@dataclass(frozen=True)
class LogNormal:
    """Law of ``x * exp(sigma * W_t)``."""

    x: float
    sigma: float
    t: float

    def __post_init__(self):
        if not (self.x > 0 and self.sigma > 0 and self.t > 0):
            raise UsageError("lognormal needs x > 0, sigma > 0, t > 0")

    @property
    def log_std(self) -> float:
        return self.sigma * math.sqrt(self.t)

    @property
    def mean(self) -> float:
        return self.x * math.exp(0.5 * self.log_std**2)

    @property
    def std(self) -> float:
        s2 = self.log_std**2
        return self.x * math.exp(0.5 * s2) * math.sqrt(math.expm1(s2))

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        pos = y > 0
        ys = np.where(pos, y, 1.0)
        z = np.log(ys / self.x) / self.log_std
        val = np.exp(-0.5 * z * z) / (SQRT2PI * self.log_std * ys)
        return np.where(pos, val, 0.0)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        pos = y > 0
        z = np.log(np.where(pos, y, 1.0) / self.x) / self.log_std
        return np.where(pos, ndtr(z), 0.0)

    def support(self, n_sigma: float = 12.0) -> tuple[float, float]:
        s = n_sigma * self.log_std
        return self.x * math.exp(-s), self.x * math.exp(s)

    def upper_tail_mean(self, a: float) -> float:
        if a <= 0:
            return self.mean - a
        s = self.log_std
        d1 = (math.log(self.x / a) + s * s) / s
        return self.mean * float(ndtr(d1)) - a * float(ndtr(d1 - s))

    def lower_tail_mean(self, a: float) -> float:
        if a <= 0:
            return 0.0
        return a - self.mean + self.upper_tail_mean(a)


ClosedFormDensity = Union[Gaussian, LogNormal]


def eval_density(d: ClosedFormDensity, y):
    return d.pdf(y)


def euler_one_step_density(model, x: float, t: float) -> Gaussian:
    """Law of ``x + b(0,x) t + sigma(0,x) W_t``."""
    if model.dimension != 1:
        raise UsageError("one-step density needs a scalar model")
    y = np.asarray(x, dtype=float)
    b0 = float(model.drift(0.0, y))
    s0 = float(model.diffusion(0.0, y))
    if s0 == 0:
        raise PreconditionError(f"diffusion of {model.name!r} vanishes at x={x}: "
                                "the one-step law is degenerate")
    return Gaussian(x + b0 * t, s0 * s0 * t)


# -- Gaussian derivatives ---------------------------------------------------------

def hermite(r: int, u):
    """Probabilist Hermite polynomial He_r evaluated at ``u``."""
    u = np.asarray(u, dtype=float)
    prev, cur = np.ones_like(u), u.copy()
    if r == 0:
        return prev if prev.ndim else float(prev)
    for k in range(1, r):
        prev, cur = cur, u * cur - k * prev
    return cur if cur.ndim else float(cur)


def gaussian_density_deriv(r: int, mu: float, v: float, y):
    """r-th derivative in ``y`` of the N(mu, v) density."""
    s = math.sqrt(v)
    u = (np.asarray(y, dtype=float) - mu) / s
    sign = -1.0 if r % 2 else 1.0
    return sign * s**-r * hermite(r, u) * np.exp(-0.5 * u * u) / (SQRT2PI * s)


def _hermite_roots(r: int) -> np.ndarray:
    if r == 0:
        return np.empty(0)
    coef = np.zeros(r + 1)
    coef[-1] = 1.0
    return np.sort(np.polynomial.hermite_e.hermeroots(coef).real)


def deriv_l1_norm(r: int, v: float) -> float:
    """L1 norm of the r-th derivative of the centred N(0, v) density."""
    def integrand(u):
        return abs(hermite(r, u)) * math.exp(-0.5 * u * u) / SQRT2PI

    edges = [-np.inf, *_hermite_roots(r), np.inf]
    total = math.fsum(integrate.quad(integrand, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
                      for a, b in zip(edges[:-1], edges[1:]))
    return v ** (-r / 2) * total


# -- grid densities ------------------------------------------------------------------

@dataclass(frozen=True)
class DensityGrid:
    lo: float
    hi: float
    values: np.ndarray
    dx: float

    @property
    def y(self) -> np.ndarray:
        return self.lo + self.dx * np.arange(len(self.values))

    @property
    def mass(self) -> float:
        return float(np.trapezoid(self.values, dx=self.dx))

    def mean(self) -> float:
        return float(np.trapezoid(self.y * self.values, dx=self.dx)) / self.mass

    def var(self) -> float:
        m = self.mean()
        return float(np.trapezoid((self.y - m) ** 2 * self.values, dx=self.dx)) / self.mass

    def cdf(self, y):
        """Cumulative mass at ``y`` (piecewise-linear density)."""
        F = integrate.cumulative_trapezoid(self.values, dx=self.dx, initial=0.0)
        return np.interp(y, self.y, F, left=0.0, right=F[-1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y", "p"])
        for yy, pp in zip(self.y, self.values):
            w.writerow([repr(float(yy)), repr(float(pp))])
        return buf.getvalue()


@dataclass(frozen=True)
class GridSpec:
    """Resolution of the Fokker-Planck solve.

    The solver works in ``u = (y - x) / sqrt(t)`` over unit time, so ``du``
    and ``n_time`` are dimensionless and the same spec serves every ``t``.
    ``lo``/``hi`` (in ``y``) override the automatic support.
    """

    du: float = 0.01
    n_time: int = 400
    width: float = 10.0
    t0_fraction: float = 1.0 / 64.0
    lo: Optional[float] = None
    hi: Optional[float] = None
    mass_tol: float = 1e-6
    rannacher_steps: int = 2

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.du / factor, self.n_time * factor, self.width, self.t0_fraction,
                        self.lo, self.hi, self.mass_tol, self.rannacher_steps)


def _elliptic_on(model, y: np.ndarray) -> bool:
    # a sign change between nodes means the diffusion vanishes there
    sig = np.asarray(model.diffusion(0.0, y), dtype=float) * np.ones(len(y))
    return bool(np.all(sig > 0) or np.all(sig < 0))


def _sigma_scale(model, x: float, sqrt_t: float, width: float) -> float:
    # grow the window until the largest diffusion on it is self-consistent
    s = abs(float(model.diffusion(0.0, np.asarray(x, dtype=float))))
    if s == 0:
        raise PreconditionError(f"diffusion of {model.name!r} vanishes at the start point")
    for _ in range(500):
        half = width * s * sqrt_t
        ys = np.linspace(x - half, x + half, 2001)
        sig = np.abs(np.asarray(model.diffusion(0.0, ys), dtype=float))
        if not _elliptic_on(model, ys):
            raise PreconditionError(f"model {model.name!r} is not elliptic near x={x}: diffusion "
                                    f"vanishes inside the solver window [{ys[0]:.4g}, {ys[-1]:.4g}]; "
                                    "pass explicit lo/hi bounds")
        s_new = float(np.max(sig))
        if s_new <= s * (1 + 1e-4):
            return max(s, s_new)
        s = s_new
    raise PreconditionError(f"diffusion of {model.name!r} is unbounded near x={x}; "
                            "pass explicit lo/hi bounds")


def _operator_bands(B_face: np.ndarray, A: np.ndarray, du: float) -> np.ndarray:
    """Flux-form operator ``p -> d/du(-B p + (A p)'/2)`` in ``solve_banded`` layout.

    ``B_face[j]`` is the drift on the face left of node ``j``; the outer
    ghost nodes hold zero (Dirichlet).
    """
    n = len(A)
    Bl, Br = B_face[:-1], B_face[1:]
    ab = np.zeros((3, n))
    ab[0, 1:] = (-Br[:-1] / 2 + A[1:] / (2 * du)) / du
    ab[1] = ((Bl - Br) / 2 - A / du) / du
    ab[2, :-1] = (Bl[1:] / 2 + A[:-1] / (2 * du)) / du
    return ab


def _apply(bands: np.ndarray, p: np.ndarray) -> np.ndarray:
    out = bands[1] * p
    out[:-1] += bands[0][1:] * p[1:]
    out[1:] += bands[2][:-1] * p[:-1]
    return out


def fokker_planck_solve(model, x: float, t: float, spec: Optional[GridSpec] = None,
                        return_u: bool = False) -> DensityGrid:
    """Transition density of ``model`` from ``x`` at time ``t``.

    Solves the forward equation with Crank-Nicolson (a few implicit-Euler
    start-up steps damp stiff modes) in the rescaled variable, starting from
    the frozen-coefficient Gaussian at ``t0 = t * spec.t0_fraction``.
    """
    spec = spec or GridSpec()
    if model.dimension != 1:
        raise UsageError("Fokker-Planck solver is one-dimensional")
    if not t > 0:
        raise UsageError(f"t must be > 0, got {t}")
    st = math.sqrt(t)

    if spec.lo is not None and spec.hi is not None:
        u_lo, u_hi = (spec.lo - x) / st, (spec.hi - x) / st
    else:
        half = spec.width * _sigma_scale(model, x, st, spec.width)
        u_lo, u_hi = -half, half
    n = int(math.ceil((u_hi - u_lo) / spec.du)) + 1
    u = np.linspace(u_lo, u_hi, n)
    du = (u_hi - u_lo) / (n - 1)
    y = x + st * u
    faces = np.concatenate([[u[0] - du / 2], 0.5 * (u[:-1] + u[1:]), [u[-1] + du / 2]])

    if not _elliptic_on(model, y):
        raise PreconditionError(f"model {model.name!r} is not elliptic on the solver grid "
                                f"[{y[0]:.4g}, {y[-1]:.4g}]")

    def bands_at(tau):
        A = np.asarray(model.diffusion(tau * t, y), dtype=float) ** 2 * np.ones(n)
        B = st * np.asarray(model.drift(tau * t, x + st * faces), dtype=float) * np.ones(n + 1)
        return _operator_bands(B, A, du)

    tau0 = spec.t0_fraction
    init = euler_one_step_density(model, x, tau0 * t)
    p = Gaussian((init.mean - x) / st, init.var / t).pdf(u)
    p /= p.sum() * du

    n_steps = spec.n_time
    dtau = (1.0 - tau0) / n_steps
    tau = tau0
    static = getattr(model, "autonomous", False)
    L = bands_at(tau0) if static else None
    eye = np.zeros((3, n))
    eye[1] = 1.0

    def implicit(L, h, rhs):
        return solve_banded((1, 1), eye - h * L, rhs)

    for k in range(n_steps):
        Lk = L if static else bands_at(tau + 0.5 * dtau)
        if k < spec.rannacher_steps:
            # two implicit half steps
            p = implicit(Lk, 0.5 * dtau, p)
            p = implicit(Lk, 0.5 * dtau, p)
        else:
            rhs = p + 0.5 * dtau * _apply(Lk, p)
            p = implicit(Lk, 0.5 * dtau, rhs)
        tau += dtau

    mass = float(p.sum() * du)
    if not abs(mass - 1.0) <= spec.mass_tol:
        raise SolverError(f"Fokker-Planck mass drifted to {mass:.10f} (tol {spec.mass_tol:g})")
    neg = p < 0
    if np.any(neg):
        worst = float(-p[neg].min())
        if worst > 1e-12 * max(1.0, float(p.max())):
            raise SolverError(f"Fokker-Planck solution has negative values down to {-worst:.3g}")
        p = np.where(neg, 0.0, p)
    if return_u:
        return DensityGrid(float(u[0]), float(u[-1]), p, float(du))
    return DensityGrid(float(y[0]), float(y[-1]), p / st, float(du * st))


# -- Aronson envelope ---------------------------------------------------------------

@dataclass(frozen=True)
class AronsonEnvelope:
    C: float
    c: float
    t: float
    x: float

    def __call__(self, y):
        z = np.asarray(y, dtype=float) - self.x
        return self.C / math.sqrt(self.t) * np.exp(-self.c * z * z / self.t)


def aronson_envelope_fit(grid: DensityGrid, x: float, t: float,
                         sigma_max: Optional[float] = None, n_c: int = 65) -> AronsonEnvelope:
    """Feasible ``(C, c)`` with ``p(y) <= C t^-1/2 exp(-c (y-x)^2 / t)`` on the grid.

    For each ``c`` on a log grid spanning ``[1e-2, 1e2] / (2 sigma_max^2)``
    the smallest dominating ``C`` is the largest ratio; the pair returned is
    the one whose envelope has the least mass ``C sqrt(pi / c)``.
    """
    if sigma_max is None:
        sigma_max = math.sqrt(grid.var() / t)
    cs = np.logspace(-2, 2, n_c) / (2 * sigma_max**2)
    y, p = grid.y, grid.values
    pos = p > 0
    logp = np.log(p[pos]) + 0.5 * math.log(t)
    z2 = (y[pos] - x) ** 2 / t
    best = None
    for c in cs:
        logC = float(np.max(logp + c * z2))
        score = logC - 0.5 * math.log(c)
        if best is None or score < best[0]:
            best = (score, math.exp(logC), float(c))
    return AronsonEnvelope(C=best[1], c=best[2], t=t, x=x)
