"""Distance curves over time grids and log-log slope fits."""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import simulate
from .density import Gaussian, GridSpec, LogNormal, fokker_planck_solve
from .distance import TestFunction, rr_smoothed_expectation, tv_densities, w1_cdf
from .errors import FitError, UsageError
from .model import ModelPair, SdeModel, euler_proxy

log = logging.getLogger(__name__)

HIST_GATE = 0.01
HIST_SAMPLES = 4_000_000
DEFAULT_H = 2.0**-12


class GateWarning(UserWarning):
    """A Fokker-Planck point failed the Monte Carlo histogram check."""


@dataclass
class RateCurve:
    t: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    meta: dict = field(default_factory=dict)
    flagged: np.ndarray = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if self.flagged is None:
            self.flagged = np.zeros(len(self.t), dtype=bool)
        if not (len(self.t) == len(self.value) == len(self.stderr)):
            raise UsageError("curve arrays must have equal length")
        if np.any(self.t <= 0):
            raise UsageError("curve abscissae must be positive")
        d = np.diff(self.t)
        if len(d) and not (np.all(d > 0) or np.all(d < 0)):
            raise UsageError("curve abscissae must be strictly monotone")

    def __len__(self):
        return len(self.t)

    def to_csv(self, fit: Optional["RateFit"] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value", "stderr"])
        for row in zip(self.t, self.value, self.stderr):
            w.writerow([repr(float(v)) for v in row])
        if fit is not None:
            buf.write(f"# slope={fit.slope!r}, intercept={fit.intercept!r}, r2={fit.r2!r}\n")
        return buf.getvalue()


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    window: tuple[int, int]


def fit_slope(curve: RateCurve, window: Optional[tuple[int, int]] = None,
              skip_flagged: bool = True) -> RateFit:
    """Least squares of ``log value`` on ``log t`` over ``window = (start, stop)``."""
    start, stop = window if window is not None else (0, len(curve))
    idx = np.arange(start, stop)
    if skip_flagged:
        idx = idx[~curve.flagged[idx]]
    if len(idx) < 3:
        raise FitError(f"need at least 3 points to fit, have {len(idx)}")
    v = curve.value[idx]
    if np.any(~(v > 0)):
        raise FitError("non-positive distance in fit window (underflow?)")
    lt, lv = np.log(curve.t[idx]), np.log(v)
    if np.ptp(lv) == 0:
        return RateFit(0.0, float(lv[0]), 1.0, (start, stop))
    res = stats.linregress(lt, lv)
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue**2), (start, stop))


def dyadic_grid(k_min: int, k_max: int) -> np.ndarray:
    """``t = 2**-k`` for ``k = k_min..k_max`` (decreasing t)."""
    if k_max < k_min:
        raise UsageError(f"empty grid: k_min={k_min} > k_max={k_max}")
    return 2.0 ** -np.arange(k_min, k_max + 1, dtype=float)


def _pmap(fn: Callable, items: Sequence, threads: int = 1) -> list:
    if threads <= 1:
        return [fn(i, it) for i, it in enumerate(items)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(len(items)), items))


# -- experiments --------------------------------------------------------------------------

def counterexample_curve(x: float, sigma: float, t_grid: Sequence[float],
                         threads: int = 1) -> RateCurve:
    """Exact TV between ``x exp(sigma W_t)`` and its one-step Euler law."""
    if not (x > 0 and sigma > 0):
        raise UsageError("counterexample needs x > 0 and sigma > 0")

    def point(i, t):
        euler = Gaussian(x * (1 + t * sigma**2 / 2), sigma**2 * x**2 * t)
        return tv_densities(LogNormal(x, sigma, t), euler)

    vals = _pmap(point, list(t_grid), threads)
    return RateCurve(t_grid, vals, np.full(len(vals), 1e-10),
                     meta={"experiment": "counterexample", "method": "quadrature",
                           "x": x, "sigma": sigma})


def _as_pair(model_or_pair, x: float) -> ModelPair:
    if isinstance(model_or_pair, ModelPair):
        return model_or_pair
    return ModelPair(model_or_pair, euler_proxy(model_or_pair, x), x)


def histogram_tv(grid, samples: np.ndarray) -> float:
    """TV between a sample histogram (Freedman-Diaconis bins) and a grid
    density integrated over the same bins; mass of the grid outside the
    bins counts fully."""
    edges = np.histogram_bin_edges(samples, bins="fd")
    counts, _ = np.histogram(samples, edges)
    F = grid.cdf(edges)
    return float(np.sum(np.abs(counts / samples.size - np.diff(F))) + (grid.mass - (F[-1] - F[0])))


def tv_curve(model_or_pair, x: float, t_grid: Sequence[float], method: str = "closed-form",
             spec: Optional[GridSpec] = None, gate: bool = True, gate_samples: int = HIST_SAMPLES,
             h: float = DEFAULT_H, seed: int = 0, threads: int = 1) -> RateCurve:
    """TV between the time-t laws of a pair (default: a model and its Euler proxy).

    With ``method="fokker-planck"`` the first law comes from the solver and
    each point is checked against a Monte Carlo histogram of the same law;
    points failing the check are flagged and left out of fits.
    """
    pair = _as_pair(model_or_pair, x)
    if method not in ("closed-form", "fokker-planck"):
        raise UsageError(f"unknown tv method {method!r}")
    if pair.model_y.law is None:
        raise UsageError(f"second model {pair.model_y.name!r} has no closed-form law")
    if method == "closed-form" and pair.model_x.law is None:
        raise UsageError(f"model {pair.model_x.name!r} has no closed-form law; "
                         "use method=fokker-planck")

    def point(i, t):
        q = pair.model_y.transition(x, t)
        if method == "closed-form":
            return tv_densities(pair.model_x.transition(x, t), q), 1e-10, math.nan, math.nan
        grid = fokker_planck_solve(pair.model_x, x, t, spec)
        tv = tv_densities(grid, q)
        log.info("t=%g: tv=%.6g mass=%.12f", t, tv, grid.mass)
        gate_tv = math.nan
        if gate:
            n = simulate.fine_steps(t, h)
            samples = simulate.terminal_samples(pair.model_x, x, t, n, gate_samples, (seed, i))
            gate_tv = histogram_tv(grid, samples)
        return tv, 1e-10, gate_tv, grid.mass

    res = _pmap(point, list(t_grid), threads)
    gate_vals = np.array([r[2] for r in res])
    flagged = gate_vals > HIST_GATE
    for t, g in zip(np.asarray(t_grid)[flagged], gate_vals[flagged]):
        warnings.warn(f"t={t:g}: histogram TV {g:.4f} exceeds gate {HIST_GATE}", GateWarning)
    return RateCurve(t_grid, [r[0] for r in res], [r[1] for r in res],
                     meta={"experiment": "tv-curve", "method": method, "x": x,
                           "model": pair.model_x.name, "seed": seed,
                           "gate_tv": gate_vals.tolist(), "mass": [r[3] for r in res]},
                     flagged=flagged)


def w1_curve(model_or_pair, x: float, t_grid: Sequence[float], n_paths: int = 100_000,
             h: float = DEFAULT_H, seed: int = 0, method: str = "auto",
             threads: int = 1) -> RateCurve:
    """W1 per time: exact CDF quadrature when both laws are closed-form and
    ``method`` is ``auto``/``cdf``, otherwise the coupled upper bound
    ``E|X_t - Y_t|`` under shared noise."""
    pair = _as_pair(model_or_pair, x)
    closed = pair.model_x.law is not None and pair.model_y.law is not None
    if method == "cdf" and not closed:
        raise UsageError("cdf method needs closed-form laws for both models")
    use_cdf = method == "cdf" or (method == "auto" and closed)

    def point(i, t):
        if use_cdf:
            return w1_cdf(pair.model_x.transition(x, t), pair.model_y.transition(x, t)), 1e-10
        n = simulate.fine_steps(t, h)
        pairs = simulate.coupled_terminals(pair, x, t, n, n_paths, (seed, i))
        est = simulate.mc_lp_distance(pairs, 1.0)
        return est.value, est.stderr

    res = _pmap(point, list(t_grid), threads)
    return RateCurve(t_grid, [r[0] for r in res], [r[1] for r in res],
                     meta={"experiment": "w1-curve", "method": "cdf" if use_cdf else "coupled",
                           "x": x, "model": pair.model_x.name, "seed": seed})


def lp_to_start_curve(model: SdeModel, x: float, t_grid: Sequence[float], p: float = 2.0,
                      n_paths: int = 100_000, h: float = DEFAULT_H, seed: int = 0) -> RateCurve:
    """``||X_t - x||_p`` per time, by Monte Carlo."""
    vals, errs = [], []
    for i, t in enumerate(t_grid):
        n = simulate.fine_steps(t, h)
        X = simulate.terminal_samples(model, x, t, n, n_paths, (seed, i))
        est = simulate.mc_lp_distance((X, np.full_like(X, x)), p)
        vals.append(est.value)
        errs.append(est.stderr)
    return RateCurve(t_grid, vals, errs, meta={"experiment": "lp-to-start", "p": p,
                                               "model": model.name, "seed": seed})


def smoothing_order_curve(f: TestFunction, law: Gaussian, r: int,
                          eps_grid: Sequence[float]) -> RateCurve:
    """``|sum_i w_i E f_{eps/n_i}(Z) - E f(Z)|`` per smoothing level."""
    exact = f.gaussian_expectation(law.mean, law.var)
    vals = [abs(rr_smoothed_expectation(f, law, e, r) - exact) for e in eps_grid]
    return RateCurve(eps_grid, vals, np.zeros(len(vals)),
                     meta={"experiment": "smoothing-order", "r": r})
