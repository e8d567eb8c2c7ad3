import math

import pytest

from debias_lab.dist_core import GaussianLocation, make_estimate
from debias_lab.policy import GroupModel, Population

G1 = GaussianLocation(1.0)


def gauss_model(mean1, mean0, tau1=50.0, tau0=50.0, alpha1=0.5, weight=1.0, sigma=1.0):
    kind = GaussianLocation(sigma)
    return GroupModel((make_estimate(kind, mean0, tau0), make_estimate(kind, mean1, tau1)), alpha1, weight)


def single(model, name="a"):
    return Population({name: model})


def normal_pdf(x, mu=0.0, sigma=1.0):
    z = (x - mu) / sigma
    return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))


@pytest.fixture
def paper_truth():
    return single(gauss_model(10.0, 7.0, tau1=50, tau0=60))


@pytest.fixture
def paper_init():
    return single(gauss_model(11.0, 8.0, tau1=50, tau0=60))


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
