"""Shared fixtures and the acceptance-summary reporter."""

import numpy as np
import pytest

import fkfield as fk
from fkfield import estimators as est

# (criterion number, title, status, detail) tuples, printed at session end
_ACCEPTANCE_LINES = []


def record_criterion(number: int, title: str, passed: bool, detail: str):
    status = "PASS" if passed else "FAIL"
    _ACCEPTANCE_LINES.append((number, title, status, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    tw = terminalreporter
    tw.section("acceptance criteria")
    for number, title, status, detail in sorted(_ACCEPTANCE_LINES):
        tw.write_line(f"criterion {number:>2} [{status}] {title}: {detail}")


@pytest.fixture(scope="session")
def small_critical_ensemble():
    """Two chains on the padded torus for n=8 at the self-dual point."""
    g = fk.build_lattice(est.padded_spec(8))
    sched = fk.Schedule(sweeps=400, therm=100, thinning=2, seed=90, chains=2)
    chains = fk.run_chains(g, fk.CouplingSpec("fk", 2, fk.critical_point("fk"), 0.0),
                           sched)
    return g, est.centered_window(g, 8), chains


@pytest.fixture(scope="session")
def free_lattice_3x3():
    return fk.rect_lattice(3, 3, "free", 1.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240814)
