"""``sde-tv-lab`` command line.

Configuration is an INI-style file of ``key = value`` lines; section names
only group keys, every key is global and also available as a ``--key``
flag. Flags override the file, the file overrides defaults.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import platform
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__, rates
from .density import Gaussian, GridSpec, aronson_envelope_fit, fokker_planck_solve
from .distance import indicator
from .errors import ConfigError, LabError
from .model import CATALOG, ModelPair, builtin_model, euler_proxy
from .romberg import float_residual, vandermonde_residual, weights

log = logging.getLogger("sde_tv_lab")

EXPERIMENTS = ("weights", "counterexample", "tv-curve", "w1-curve", "smoothing-order",
               "fokker-planck", "envelope")
NEEDS_MODEL = ("tv-curve", "w1-curve", "fokker-planck", "envelope")


def _floats(s: str) -> tuple[float, ...]:
    s = s.strip()
    return tuple(float(v) for v in s.replace(",", " ").split()) if s else ()


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


@dataclass
class ExperimentConfig:
    experiment: str = ""
    model: Optional[str] = None
    params: tuple[float, ...] = ()
    model_y: Optional[str] = None
    params_y: tuple[float, ...] = ()
    x: float = 1.0
    sigma: float = 1.0
    t: float = 0.05
    k_min: Optional[int] = None
    k_max: Optional[int] = None
    t_list: tuple[float, ...] = ()
    fit_start: int = 0
    fit_stop: Optional[int] = None
    r: int = 3
    j_min: int = 3
    j_max: int = 10
    eps_list: tuple[float, ...] = ()
    threshold: float = 0.3
    mean: float = 0.0
    var: float = 1.0
    method: str = "auto"
    n_paths: int = 100_000
    h: float = rates.DEFAULT_H
    gate: bool = True
    gate_samples: int = rates.HIST_SAMPLES
    du: float = 0.01
    n_time: int = 400
    width: float = 10.0
    lo: Optional[float] = None
    hi: Optional[float] = None
    seed: int = 0
    out: Optional[str] = None
    threads: int = 1

    _set: set = field(default_factory=set, repr=False)

    def t_grid(self) -> np.ndarray:
        if self.t_list:
            return np.asarray(self.t_list, dtype=float)
        return rates.dyadic_grid(self.k_min, self.k_max)

    def grid_spec(self) -> GridSpec:
        return GridSpec(du=self.du, n_time=self.n_time, width=self.width, lo=self.lo, hi=self.hi)

    def output_path(self) -> Path:
        return Path(self.out or f"{self.experiment}.csv")

    def echo(self) -> str:
        """The effective configuration as a re-runnable config file."""
        lines = ["[experiment]"]
        for f in dataclasses.fields(self):
            if f.name.startswith("_"):
                continue
            v = getattr(self, f.name)
            if v is None or v == ():
                continue
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig) if not f.name.startswith("_")}

# per-experiment defaults applied to keys the user left unset; t-curve fits
# drop the two largest t, which are pre-asymptotic
_EXPERIMENT_DEFAULTS = {
    "counterexample": {"k_min": 8, "k_max": 20, "fit_start": 2},
    "tv-curve": {"k_min": 6, "k_max": 14, "fit_start": 2},
    "w1-curve": {"k_min": 4, "k_max": 10, "fit_start": 2},
}


def _convert(key: str, raw: str):
    f = _FIELDS[key]
    typ = str(f.type)
    try:
        if "tuple" in typ:
            return _floats(raw)
        if "bool" in typ:
            return _bool(raw)
        if "int" in typ:
            return int(raw)
        if "float" in typ:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r}") from None


def _read_file(path: str) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path!r} not found")
    text = p.read_text()
    stripped = [ln.strip() for ln in text.splitlines() if ln.strip() and ln.strip()[0] not in "#;"]
    if not stripped or not stripped[0].startswith("["):
        text = "[experiment]\n" + text
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config file {path!r}: {e}") from None
    out = {}
    for sec in cp.sections():
        for k, v in cp.items(sec):
            key = k.replace("-", "_")
            if key in out:
                raise ConfigError(f"key {key!r} set twice in {path!r}")
            out[key] = v
    return out


def parse_config(values: dict[str, str]) -> ExperimentConfig:
    """Validate raw string settings and fill defaults."""
    cfg = ExperimentConfig()
    for key, raw in values.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        setattr(cfg, key, _convert(key, raw))
        cfg._set.add(key)

    if not cfg.experiment:
        raise ConfigError("missing required key 'experiment'")
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"key 'experiment': unknown experiment {cfg.experiment!r}; "
                          f"choose from {', '.join(EXPERIMENTS)}")
    for k, v in _EXPERIMENT_DEFAULTS.get(cfg.experiment, {}).items():
        if k not in cfg._set:
            setattr(cfg, k, v)
    if cfg.experiment in NEEDS_MODEL and not cfg.model:
        raise ConfigError(f"missing required key 'model' for experiment {cfg.experiment!r}")
    for key in ("model", "model_y"):
        name = getattr(cfg, key)
        if name is not None and name not in CATALOG:
            raise ConfigError(f"key {key!r}: unknown model {name!r}; catalog: {', '.join(CATALOG)}")
    if cfg.k_min is not None and cfg.k_max is not None and cfg.k_max < cfg.k_min and not cfg.t_list:
        raise ConfigError("keys 'k_min'/'k_max': empty t-grid")
    if cfg.j_max < cfg.j_min and not cfg.eps_list:
        raise ConfigError("keys 'j_min'/'j_max': empty eps-grid")
    for key in ("n_paths", "gate_samples", "n_time", "threads"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"key {key!r} must be positive")
    for key in ("h", "du", "width", "t", "var"):
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"key {key!r} must be positive")
    if cfg.method not in ("auto", "closed-form", "fokker-planck", "coupled", "cdf"):
        raise ConfigError(f"key 'method': unknown method {cfg.method!r}")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("key 'seed' must be a 64-bit unsigned integer")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sde-tv-lab",
                                 description="Distances between SDE laws and their Euler proxies.")
    ap.add_argument("command", nargs="?", choices=EXPERIMENTS,
                    help="experiment to run (overrides 'experiment' in the config)")
    ap.add_argument("--config", metavar="PATH")
    ap.add_argument("-v", "--verbose", action="store_true")
    for name in _FIELDS:
        if name == "experiment":
            continue
        ap.add_argument("--" + name.replace("_", "-"), dest=name, metavar="VALUE", default=None)
    return ap


def config_from_args(argv=None) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    if args.verbose:
        log.setLevel(logging.INFO)
    raw = _read_file(args.config) if args.config else {}
    if args.command:
        raw["experiment"] = args.command
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            raw[name] = v
    return parse_config(raw)


# -- experiments ----------------------------------------------------------------------------

def _fit_window(cfg, n):
    return (cfg.fit_start, cfg.fit_stop if cfg.fit_stop is not None else n)


def _curve_output(cfg, curve, fit_window=True) -> tuple[str, str]:
    fit = rates.fit_slope(curve, _fit_window(cfg, len(curve)) if fit_window else None)
    return curve.to_csv(fit), f"slope={fit.slope:.4f} r2={fit.r2:.6f}"


def _pair(cfg) -> ModelPair:
    mx = builtin_model(cfg.model, cfg.params)
    my = builtin_model(cfg.model_y, cfg.params_y) if cfg.model_y else euler_proxy(mx, cfg.x)
    return ModelPair(mx, my, cfg.x)


def _run_weights(cfg):
    wt = weights(cfg.r)
    rows = ["i,n_i,w_exact,w_float"]
    for i, (n, w) in enumerate(zip(wt.refiners, wt.w), 1):
        rows.append(f"{i},{n},{w},{float(w)!r}")
    resid = vandermonde_residual(wt)
    exact_zero = all(x == 0 for x in resid)
    head = [f"w_{i} = {w}" for i, w in enumerate(wt.w, 1)]
    head.append(f"residual={'0' if exact_zero else max(abs(x) for x in resid)} "
                f"(float round-trip {float_residual(wt):.3g})")
    return "\n".join(rows) + "\n", "\n".join(head)


def _run_counterexample(cfg):
    curve = rates.counterexample_curve(cfg.x, cfg.sigma, cfg.t_grid(), threads=cfg.threads)
    return _curve_output(cfg, curve)


def _run_tv_curve(cfg):
    pair = _pair(cfg)
    method = cfg.method
    if method == "auto":
        method = "closed-form" if pair.model_x.law is not None else "fokker-planck"
    curve = rates.tv_curve(pair, cfg.x, cfg.t_grid(), method=method, spec=cfg.grid_spec(),
                           gate=cfg.gate, gate_samples=cfg.gate_samples, h=cfg.h,
                           seed=cfg.seed, threads=cfg.threads)
    return _curve_output(cfg, curve)


def _run_w1_curve(cfg):
    curve = rates.w1_curve(_pair(cfg), cfg.x, cfg.t_grid(), n_paths=cfg.n_paths, h=cfg.h,
                           seed=cfg.seed, method=cfg.method if cfg.method in ("coupled", "cdf") else "auto",
                           threads=cfg.threads)
    return _curve_output(cfg, curve)


def _run_smoothing_order(cfg):
    eps = np.asarray(cfg.eps_list) if cfg.eps_list else 2.0 ** -np.arange(cfg.j_min, cfg.j_max + 1)
    curve = rates.smoothing_order_curve(indicator(cfg.threshold), Gaussian(cfg.mean, cfg.var),
                                        cfg.r, eps)
    csv_text, head = _curve_output(cfg, curve)
    return csv_text.replace("t,value,stderr", "eps,value,stderr", 1), head


def _run_fokker_planck(cfg):
    grid = fokker_planck_solve(builtin_model(cfg.model, cfg.params), cfg.x, cfg.t, cfg.grid_spec())
    return grid.to_csv(), f"mass={grid.mass:.12f} points={len(grid.values)}"


def _run_envelope(cfg):
    grid = fokker_planck_solve(builtin_model(cfg.model, cfg.params), cfg.x, cfg.t, cfg.grid_spec())
    env = aronson_envelope_fit(grid, cfg.x, cfg.t)
    bound = env(grid.y)
    rows = ["y,p,envelope"] + [f"{y!r},{p!r},{b!r}" for y, p, b in
                               zip(grid.y.tolist(), grid.values.tolist(), bound.tolist())]
    return "\n".join(rows) + "\n", f"C={env.C:.6g} c={env.c:.6g}"


_RUNNERS = {
    "weights": _run_weights,
    "counterexample": _run_counterexample,
    "tv-curve": _run_tv_curve,
    "w1-curve": _run_w1_curve,
    "smoothing-order": _run_smoothing_order,
    "fokker-planck": _run_fokker_planck,
    "envelope": _run_envelope,
}


def run(cfg: ExperimentConfig, stdout=None) -> int:
    """Run one experiment, write its CSV and manifest, print the headline."""
    stdout = stdout or sys.stdout
    started = time.perf_counter()
    csv_text, headline = _RUNNERS[cfg.experiment](cfg)
    out = cfg.output_path()
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text)
    manifest = out.with_name(out.name + ".manifest.ini")
    manifest.write_text(
        f"# sde-tv-lab {__version__}; python {platform.python_version()}; "
        f"numpy {np.__version__}; scipy {scipy.__version__}\n"
        f"# wall_time_s = {time.perf_counter() - started:.3f}\n"
        f"# headline: {json.dumps(headline)}\n" + cfg.echo())
    log.info("wrote %s and %s", out, manifest.name)
    print(headline, file=stdout)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return run(cfg)
    except LabError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
