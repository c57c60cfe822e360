from __future__ import annotations

import numpy as np
import pytest

from compound_freq import LinearDelaySystem

# lines recorded by the acceptance suite, echoed in the terminal summary
CRITERIA: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"[{criterion}] {'PASS' if ok else 'FAIL'}: {detail}"
    CRITERIA.append(line)
    print(line)
    return ok


def note(criterion: str, detail: str) -> None:
    line = f"[{criterion}] {detail}"
    CRITERIA.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)


def random_stable_system(rng, h_steps=(20, 40), tau0_free=True) -> tuple[LinearDelaySystem, float]:
    """A delay-independent stable system (a0 < -|a1|) on a grid with tau/h = n_tau even."""
    tau = float(rng.uniform(0.5, 2.0))
    n_tau = int(rng.choice(h_steps))
    h = tau / n_tau
    a1 = float(rng.uniform(-1.5, 1.5))
    a0 = -abs(a1) - float(rng.uniform(0.2, 1.5))
    n0 = int(rng.integers(0, n_tau + 1)) if tau0_free else 0
    b = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0))
    return LinearDelaySystem(a0, a1, tau, min(n0 * h, tau), b, lambda_bound=1.0), h


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
