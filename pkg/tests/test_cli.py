import subprocess
import sys
from pathlib import Path

import pytest

from sde_tv_lab import cli
from sde_tv_lab.errors import ConfigError


def run_cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "sde_tv_lab.cli", *args], cwd=cwd,
                          capture_output=True, text=True)


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_minimal_counterexample_config():
    cfg = cli.parse_config({"experiment": "counterexample", "x": "1", "sigma": "1",
                            "k_min": "8", "k_max": "20"})
    assert (cfg.k_min, cfg.k_max, cfg.x, cfg.sigma) == (8, 20, 1.0, 1.0)
    assert cfg.seed == 0 and cfg.threads == 1 and cfg.fit_start == 2
    assert len(cfg.t_grid()) == 13


def test_flag_overrides_file(tmp_path):
    path = write(tmp_path, "experiment = counterexample\nseed = 3\n")
    assert cli.config_from_args(["--config", path]).seed == 3
    assert cli.config_from_args(["--config", path, "--seed=7"]).seed == 7


def test_sections_group_keys(tmp_path):
    path = write(tmp_path, "[experiment]\nexperiment = tv-curve\n[model]\nmodel = ou\n"
                           "params = 1, 1\nx = 2\n[grid]\nk_min = 6\nk_max = 16\n")
    cfg = cli.config_from_args(["--config", path])
    assert cfg.model == "ou" and cfg.params == (1.0, 1.0) and cfg.k_max == 16


@pytest.mark.parametrize("values, key", [
    ({"experiment": "tv-curve", "model": "gmb"}, "model"),
    ({"experiment": "counterexample", "colour": "red"}, "colour"),
    ({"experiment": "bogus"}, "experiment"),
    ({"experiment": "counterexample", "x": "one"}, "x"),
    ({"experiment": "tv-curve"}, "model"),
    ({"x": "1"}, "experiment"),
    ({"experiment": "w1-curve", "model": "ou", "n_paths": "0"}, "n_paths"),
    ({"experiment": "counterexample", "k_min": "9", "k_max": "3"}, "k_min"),
])
def test_config_errors_name_the_key(values, key):
    with pytest.raises(ConfigError, match=key):
        cli.parse_config(values)


def test_unknown_model_lists_catalog(tmp_path):
    res = run_cli(["tv-curve", "--model", "gmb"], tmp_path)
    assert res.returncode == 2
    assert "'model'" in res.stderr
    for name in ("gbm", "ou", "brownian-drift", "sine-diffusion", "clamped-gbm"):
        assert name in res.stderr


def test_duplicate_key_rejected(tmp_path):
    path = write(tmp_path, "[a]\nseed = 1\n[b]\nseed = 2\n")
    with pytest.raises(ConfigError, match="seed"):
        cli.config_from_args(["counterexample", "--config", path])


def test_weights_stdout_and_csv(tmp_path):
    res = run_cli(["weights", "--r", "3", "--out", "w.csv"], tmp_path)
    assert res.returncode == 0, res.stderr
    out = res.stdout
    assert "w_1 = 1/3" in out and "w_2 = -2" in out and "w_3 = 8/3" in out
    assert "residual=0 " in out
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "i,n_i,w_exact,w_float"
    assert lines[3].startswith("3,4,8/3,2.66666")


def test_counterexample_stdout(tmp_path):
    res = run_cli(["counterexample", "--out", "ce.csv"], tmp_path)
    assert res.returncode == 0, res.stderr
    assert res.stdout.startswith("slope=0.5")
    assert (tmp_path / "ce.csv").read_text().startswith("t,value,stderr\n")
    assert (tmp_path / "ce.csv.manifest.ini").exists()


def test_non_elliptic_fokker_planck_exit_3(tmp_path):
    res = run_cli(["tv-curve", "--model", "gbm", "--x", "1", "--method", "fokker-planck",
                   "--k-min", "6", "--k-max", "8"], tmp_path)
    assert res.returncode == 3
    assert "elliptic" in res.stderr


def test_solver_error_exit_4(tmp_path):
    # a window far too narrow for the law loses mass
    res = run_cli(["fokker-planck", "--model", "brownian-drift", "--x", "0", "--t", "1",
                   "--lo", "-0.5", "--hi", "0.5"], tmp_path)
    assert res.returncode == 4
    assert "mass" in res.stderr


def test_smoothing_order_run(tmp_path):
    res = run_cli(["smoothing-order", "--r", "2", "--out", "s.csv"], tmp_path)
    assert res.returncode == 0
    assert res.stdout.startswith("slope=1.9") or res.stdout.startswith("slope=2.0")
    assert (tmp_path / "s.csv").read_text().startswith("eps,value,stderr\n")


def test_envelope_and_fp_runs(tmp_path):
    res = run_cli(["envelope", "--model", "sine-diffusion", "--x", "0", "--t", "0.05",
                   "--out", "e.csv"], tmp_path)
    assert res.returncode == 0, res.stderr
    assert res.stdout.startswith("C=")
    assert (tmp_path / "e.csv").read_text().startswith("y,p,envelope\n")
    res = run_cli(["fokker-planck", "--model", "sine-diffusion", "--x", "0", "--out", "f.csv"], tmp_path)
    assert res.returncode == 0 and res.stdout.startswith("mass=")
    assert (tmp_path / "f.csv").read_text().startswith("y,p\n")


def test_byte_identical_and_manifest_rerun(tmp_path):
    path = write(tmp_path, "experiment = w1-curve\nmodel = sine-diffusion\nx = 0\n"
                           "k_min = 5\nk_max = 9\nn_paths = 20000\nseed = 5\nmethod = coupled\n")
    a = run_cli(["--config", path, "--out", "a.csv"], tmp_path)
    b = run_cli(["--config", path, "--out", "b.csv", "--threads", "3"], tmp_path)
    assert a.returncode == b.returncode == 0
    first = (tmp_path / "a.csv").read_bytes()
    assert first == (tmp_path / "b.csv").read_bytes()
    # the manifest alone reproduces the run
    manifest = tmp_path / "a.csv.manifest.ini"
    text = manifest.read_text()
    assert "numpy" in text and "wall_time_s" in text and "seed = 5" in text
    Path(tmp_path / "a.csv").unlink()
    c = run_cli(["--config", str(manifest)], tmp_path)
    assert c.returncode == 0, c.stderr
    assert (tmp_path / "a.csv").read_bytes() == first
