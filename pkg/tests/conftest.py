import pytest

from sde_tv_lab.model import builtin_model
from sde_tv_lab.rates import dyadic_grid, tv_curve

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    def _report(n, ok, text):
        ACCEPTANCE_LINES.append(f"[{n:>2}] {'PASS' if ok else 'FAIL'}  {text}")
        return ok
    return _report


@pytest.fixture(scope="session")
def clamped_fp_curve():
    model = builtin_model("clamped-gbm", [1.0, 0.1])
    return tv_curve(model, 1.0, dyadic_grid(6, 14), method="fokker-planck", seed=11, threads=4)


@pytest.fixture(scope="session")
def sine_fp_curve():
    model = builtin_model("sine-diffusion")
    return tv_curve(model, 0.0, dyadic_grid(6, 14), method="fokker-planck", seed=12, threads=4)
