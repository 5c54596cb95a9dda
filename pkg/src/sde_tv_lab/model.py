"""SDE coefficient pairs, the one-step Euler proxy and the model catalog.

Coefficients are plain callables ``f(t, y)`` that broadcast over numpy
arrays. Only scalar (``dimension == 1``) models are used by the density and
distance code; simulation also accepts diagonal-noise models in higher
dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .density import ClosedFormDensity, Gaussian, LogNormal
from .errors import ParameterError, UsageError

Coefficient = Callable[[float, np.ndarray], np.ndarray]
LawFactory = Callable[[float, float], ClosedFormDensity]

CATALOG = ("gbm", "ou", "brownian-drift", "sine-diffusion", "clamped-gbm")


@dataclass(frozen=True)
class SdeModel:
    name: str
    drift: Coefficient
    diffusion: Coefficient
    dimension: int = 1
    exact_law: Optional[str] = None
    law: Optional[LawFactory] = None
    params: dict = field(default_factory=dict)
    constant: bool = False
    autonomous: bool = True

    def transition(self, x: float, t: float) -> ClosedFormDensity:
        """Closed-form law of the state at time ``t`` started from ``x``."""
        if self.law is None:
            raise UsageError(f"model {self.name!r} has no closed-form transition law")
        return self.law(x, t)


@dataclass(frozen=True)
class ModelPair:
    model_x: SdeModel
    model_y: SdeModel
    start: float
    horizon: float = 1.0

    def __post_init__(self):
        if self.model_x.dimension != self.model_y.dimension:
            raise UsageError("paired models must have the same dimension")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise UsageError(f"horizon must be finite and positive, got {self.horizon}")


def _const(c: float) -> Coefficient:
    def f(t, y):
        return np.full(np.shape(y), c, dtype=float) if np.ndim(y) else float(c)
    return f


# -- clamp mollification ------------------------------------------------------

@lru_cache(maxsize=1)
def _ramp_table(n: int = 200_001) -> tuple[np.ndarray, np.ndarray]:
    """Tabulate K(z) = int (z - s)_+ rho(s) ds for the unit bump rho on [-1, 1]."""
    z = np.linspace(-1.0, 1.0, n)
    inner = np.clip(1.0 - z * z, 1e-300, None)
    rho = np.where(np.abs(z) < 1.0, np.exp(-1.0 / inner), 0.0)
    F = cumulative_trapezoid(rho, z, initial=0.0)
    G = cumulative_trapezoid(z * rho, z, initial=0.0)
    mass = F[-1]
    F, G = F / mass, G / mass
    K = z * F - G
    K[-1] = 1.0  # mean-zero bump: K(1) = 1 exactly
    return z, K


def _smooth_ramp(z: np.ndarray) -> np.ndarray:
    zt, Kt = _ramp_table()
    z = np.asarray(z, dtype=float)
    return np.where(z >= 1.0, z, np.interp(z, zt, Kt, left=0.0, right=1.0))


def clamp_psi(eps: float) -> Callable[[np.ndarray], np.ndarray]:
    """Smooth clamp of ``y`` to ``[eps, 1/eps]``.

    The piecewise-linear clamp is convolved with a C-infinity bump of
    half-width ``eps/4``; since the clamp is affine away from its two kinks
    the result equals the clamp outside ``eps +- eps/4`` and
    ``1/eps +- eps/4``, and stays inside ``[eps, 1/eps]``.
    """
    h = eps / 4.0
    hi = 1.0 / eps

    def psi(y):
        y = np.asarray(y, dtype=float)
        out = np.array(np.clip(y, eps, hi), dtype=float, ndmin=1)
        y1 = np.atleast_1d(y)
        band = (np.abs(y1 - eps) < h) | (np.abs(y1 - hi) < h)
        if np.any(band):
            yb = y1[band]
            out[band] = eps + h * _smooth_ramp((yb - eps) / h) - h * _smooth_ramp((yb - hi) / h)
        return out.reshape(y.shape)

    return psi


# -- catalog -----------------------------------------------------------------

_DEFAULTS = {
    "gbm": (1.0,),
    "ou": (1.0, 1.0),
    "brownian-drift": (0.0, 1.0),
    "sine-diffusion": (),
    "clamped-gbm": (1.0, 0.1),
}

_PARAM_NAMES = {
    "gbm": ("sigma",),
    "ou": ("theta", "sigma"),
    "brownian-drift": ("mu", "sigma"),
    "sine-diffusion": (),
    "clamped-gbm": ("sigma", "eps"),
}


def catalog_params(name: str) -> tuple[str, ...]:
    return _PARAM_NAMES[name]


def builtin_model(name: str, params: Sequence[float] = ()) -> SdeModel:
    """Build one of the catalog models.

    ``params`` is positional (see ``catalog_params``); missing trailing
    values take their defaults.
    """
    if name not in _DEFAULTS:
        raise ParameterError(f"unknown model {name!r}; catalog: {', '.join(CATALOG)}")
    names = _PARAM_NAMES[name]
    params = [float(p) for p in params]
    if len(params) > len(names):
        raise ParameterError(f"model {name!r} takes at most {len(names)} parameters "
                             f"({', '.join(names) or 'none'}), got {len(params)}")
    values = list(params) + list(_DEFAULTS[name][len(params):])
    kw = dict(zip(names, values))
    if "sigma" in kw and not kw["sigma"] > 0:
        raise ParameterError(f"{name}: sigma must be > 0, got {kw['sigma']}")

    if name == "gbm":
        s = kw["sigma"]
        return SdeModel(
            name, lambda t, y: 0.5 * s * s * np.asarray(y, dtype=float),
            lambda t, y: s * np.asarray(y, dtype=float),
            exact_law="gbm-lognormal", law=lambda x, t: LogNormal(x, s, t), params=kw)

    if name == "ou":
        th, s = kw["theta"], kw["sigma"]

        def ou_law(x, t):
            if th == 0:
                return Gaussian(x, s * s * t)
            return Gaussian(x * math.exp(-th * t), s * s * -math.expm1(-2 * th * t) / (2 * th))

        return SdeModel(name, lambda t, y: -th * np.asarray(y, dtype=float), _const(s),
                        exact_law="gaussian", law=ou_law, params=kw)

    if name == "brownian-drift":
        mu, s = kw["mu"], kw["sigma"]
        return SdeModel(name, _const(mu), _const(s), exact_law="gaussian",
                        law=lambda x, t: Gaussian(x + mu * t, s * s * t), params=kw,
                        constant=True)

    if name == "sine-diffusion":
        return SdeModel(name, lambda t, y: np.cos(y), lambda t, y: 1.0 + 0.5 * np.sin(y),
                        params=kw)

    # clamped-gbm
    s, eps = kw["sigma"], kw["eps"]
    if not 0 < eps < 0.5:
        raise ParameterError(f"clamped-gbm: eps must lie in (0, 1/2), got {eps}")
    psi = clamp_psi(eps)
    return SdeModel(name, lambda t, y: 0.5 * s * s * np.asarray(y, dtype=float),
                    lambda t, y: s * psi(y), params=kw)


def euler_proxy(model: SdeModel, x: float) -> SdeModel:
    """Model with coefficients frozen at ``(0, x)``; its law is Gaussian."""
    b0 = float(np.asarray(model.drift(0.0, np.asarray(x, dtype=float))))
    s0 = float(np.asarray(model.diffusion(0.0, np.asarray(x, dtype=float))))

    def law(x_start, t):
        return Gaussian(x_start + b0 * t, s0 * s0 * t)

    return SdeModel(f"euler[{model.name}@{x:g}]", _const(b0), _const(s0),
                    dimension=model.dimension, exact_law="gaussian", law=law,
                    params={"drift": b0, "diffusion": s0}, constant=True)


def _coeffs_at(model: SdeModel, x: float) -> tuple[float, float]:
    y = np.asarray(x, dtype=float)
    return float(model.drift(0.0, y)), float(model.diffusion(0.0, y))


def delta_b(pair: ModelPair, x: Optional[float] = None) -> float:
    x = pair.start if x is None else x
    return abs(_coeffs_at(pair.model_x, x)[0] - _coeffs_at(pair.model_y, x)[0])


def delta_sigma(pair: ModelPair, x: Optional[float] = None) -> float:
    x = pair.start if x is None else x
    return abs(_coeffs_at(pair.model_x, x)[1] - _coeffs_at(pair.model_y, x)[1])


def ellipticity_check(model: SdeModel, states, times=(0.0,)) -> float:
    """Smallest ``diffusion**2`` over the grid (0 flags degeneracy)."""
    y = np.asarray(states, dtype=float)
    return float(min(np.min(np.asarray(model.diffusion(t, y), dtype=float) ** 2)
                     for t in times))
