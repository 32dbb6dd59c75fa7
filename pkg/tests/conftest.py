import numpy as np
import pytest

from flexmg import GridSpec, StencilOperator, build_hierarchy
from flexmg.multigrid import MgConfig, smg_config


def textbook_cg(Ad, b, x0, maxit):
    """Unpreconditioned CG written from the textbook recurrences; returns residual norms."""
    x = x0.copy()
    r = b - Ad @ x
    p = r.copy()
    rr = r @ r
    out = []
    for _ in range(maxit):
        Ap = Ad @ p
        alpha = rr / (p @ Ap)
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = r @ r
        out.append(np.sqrt(rr_new))
        p = r + (rr_new / rr) * p
        rr = rr_new
    return np.array(out)


def jacobi_mg(pre, post, coarsest=30):
    """Weighted-Jacobi full-coarsening cycle with enough levels on dense-cap grids."""
    return MgConfig(pre, post, coarsest_size=coarsest)


@pytest.fixture(scope="session")
def op80():
    return StencilOperator(GridSpec.cube(80))


@pytest.fixture(scope="session")
def smg80(op80):
    return build_hierarchy(op80, smg_config(1, 0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line; returns the boolean for the assertion."""

    def _record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
