import numpy as np
import pytest

from stsw.sphere import DiscreteMeasure, sample_uniform_sphere


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_measure(rng, d, n, weighted=True):
    pts = sample_uniform_sphere(rng, d, n)
    if not weighted:
        return DiscreteMeasure(pts)
    w = rng.random(n) + 0.05
    return DiscreteMeasure(pts, w / w.sum())


def shared_pair(rng, d, n):
    """Two measures on one support list (as the closed form expects)."""
    pts = sample_uniform_sphere(rng, d, n)
    u = rng.random(n) + 0.01
    v = rng.random(n) + 0.01
    return DiscreteMeasure(pts, u / u.sum()), DiscreteMeasure(pts, v / v.sum())


# Acceptance results, one line per criterion, printed at the end of the run.
ACCEPTANCE: dict = {}


def record(criterion: int, passed: bool, detail: str):
    ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[crit]
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if passed else 'FAIL'}  {detail}")
