"""Path simulation under a synchronous (shared-noise) coupling.

Random streams are derived from ``numpy.random.SeedSequence`` with a spawn
key per (experiment point, chunk), using the counter-based Philox generator,
so results never depend on how work is split across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import UsageError

Stream = Union[int, Sequence[int]]

DEFAULT_CHUNK = 100_000
MIN_FINE_STEPS = 64


def make_rng(stream: Stream) -> np.random.Generator:
    if isinstance(stream, (int, np.integer)):
        seed, key = int(stream), ()
    else:
        seed, *key = (int(s) for s in stream)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))


@dataclass(frozen=True)
class NoisePath:
    """Brownian increments with shape ``(n_steps, n_paths, dim)``."""

    increments: np.ndarray
    dt: float

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def n_paths(self) -> int:
        return self.increments.shape[1]

    @property
    def dim(self) -> int:
        return self.increments.shape[2]

    def terminal(self) -> np.ndarray:
        """W_t per path, shape ``(n_paths, dim)``."""
        return self.increments.sum(axis=0)


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    n_paths: int


def brownian_increments(n_steps: int, dt: float, dim: int = 1, stream: Stream = 0,
                        n_paths: int = 1) -> NoisePath:
    if n_steps < 1 or not dt > 0:
        raise UsageError(f"need n_steps >= 1 and dt > 0, got {n_steps}, {dt}")
    rng = make_rng(stream)
    z = rng.standard_normal((n_steps, n_paths, dim))
    return NoisePath(z * math.sqrt(dt), dt)


def _check_noise(t: float, n_steps: int, noise: NoisePath):
    if noise.n_steps != n_steps or not math.isclose(noise.dt * n_steps, t, rel_tol=1e-9):
        raise UsageError(f"noise has {noise.n_steps} steps of {noise.dt:g}, "
                         f"expected {n_steps} steps covering t={t:g}")


def euler_path(model, x, t: float, n_steps: int, noise: NoisePath) -> np.ndarray:
    """Terminal Euler-Maruyama state for every path of ``noise``.

    Scalar models return shape ``(n_paths,)``; diagonal-noise models in
    dimension ``d`` return ``(n_paths, d)``.
    """
    _check_noise(t, n_steps, noise)
    dt = t / n_steps
    scalar = model.dimension == 1
    if noise.dim != model.dimension:
        raise UsageError(f"noise dimension {noise.dim} != model dimension {model.dimension}")
    dW = noise.increments[..., 0] if scalar else noise.increments
    shape = (noise.n_paths,) if scalar else (noise.n_paths, model.dimension)
    state = np.broadcast_to(np.asarray(x, dtype=float), shape).copy()
    for k in range(n_steps):
        tk = k * dt
        state = state + model.drift(tk, state) * dt + model.diffusion(tk, state) * dW[k]
    return state


def gbm_exact(x: float, sigma: float, t: float, noise: NoisePath) -> np.ndarray:
    """``x exp(sigma W_t)`` from the summed increments."""
    if not x > 0:
        raise UsageError(f"gbm start must be > 0, got {x}")
    _check_noise(t, noise.n_steps, noise)
    return x * np.exp(sigma * noise.terminal()[:, 0])


def fine_steps(t: float, h: float) -> int:
    return max(MIN_FINE_STEPS, math.ceil(t / h - 1e-9))


def _terminal(model, x, t, n_steps, noise):
    if model.exact_law == "gbm-lognormal" and "sigma" in model.params:
        return gbm_exact(x, model.params["sigma"], t, noise)
    return euler_path(model, x, t, n_steps, noise)


def _chunks(n_paths: int, chunk: int) -> Iterator[tuple[int, int]]:
    for c, start in enumerate(range(0, n_paths, chunk)):
        yield c, min(chunk, n_paths - start)


def _stream_key(stream: Stream) -> tuple[int, ...]:
    return (int(stream),) if isinstance(stream, (int, np.integer)) else tuple(int(s) for s in stream)


def terminal_samples(model, x: float, t: float, n_steps: int, n_paths: int, stream: Stream,
                     chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    """Independent samples of the time-``t`` state (exact for GBM)."""
    key = _stream_key(stream)
    out = [_terminal(model, x, t, n_steps,
                     brownian_increments(n_steps, t / n_steps, model.dimension, (*key, c), m))
           for c, m in _chunks(n_paths, chunk)]
    return np.concatenate(out) if out else np.empty(0)


def coupled_terminals(pair, x: float, t: float, n_steps: int, n_paths: int, stream: Stream,
                      chunk: int = DEFAULT_CHUNK) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ``(X_t, Y_t)`` driven by one Brownian path per sample."""
    key = _stream_key(stream)
    xs, ys = [], []
    for c, m in _chunks(n_paths, chunk):
        noise = brownian_increments(n_steps, t / n_steps, pair.model_x.dimension, (*key, c), m)
        xs.append(_terminal(pair.model_x, x, t, n_steps, noise))
        ys.append(_terminal(pair.model_y, x, t, n_steps, noise))
    if not xs:
        return np.empty(0), np.empty(0)
    return np.concatenate(xs), np.concatenate(ys)


def mc_lp_distance(pairs: tuple[np.ndarray, np.ndarray], p: float = 1.0) -> McEstimate:
    """``(E|X - Y|^p)^(1/p)`` with a delta-method standard error."""
    X, Y = (np.asarray(a, dtype=float) for a in pairs)
    if X.size == 0:
        raise UsageError("mc_lp_distance needs a nonempty sample")
    if p < 1:
        raise UsageError(f"p must be >= 1, got {p}")
    d = np.abs(X - Y)
    if d.ndim > 1:
        d = np.linalg.norm(d, axis=-1)
    dp = d**p
    n = dp.size
    m = float(dp.mean())
    se_m = float(dp.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    value = m ** (1.0 / p)
    stderr = (value / (p * m)) * se_m if m > 0 else 0.0
    return McEstimate(value, stderr, n)
