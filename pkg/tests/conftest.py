import contextlib

import numpy as np
import pytest

from coapool import kernels
from coapool.allocation import FitnessHistory
from coapool.scenario import Agent, Scenario, Task

ACCEPTANCE_LINES = []

# every GA run anywhere in the suite must keep a non-decreasing best fitness
_orig_append = FitnessHistory.append


def _checked_append(self, fit, div, comp):
    if self.best_fitness and float(fit) < self.best_fitness[-1]:
        raise AssertionError(f"fitness history decreased: {self.best_fitness[-1]} -> {fit}")
    _orig_append(self, fit, div, comp)


FitnessHistory.append = _checked_append


@contextlib.contextmanager
def criterion(label):
    """Record one PASS/FAIL line for an acceptance check; the yielded dict takes a detail note."""
    note = {"detail": ""}
    try:
        yield note
    except BaseException:
        ACCEPTANCE_LINES.append(f"FAIL  {label}  {note['detail']}".rstrip())
        print(ACCEPTANCE_LINES[-1])
        raise
    ACCEPTANCE_LINES.append(f"PASS  {label}  {note['detail']}".rstrip())
    print(ACCEPTANCE_LINES[-1])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


BACKENDS = ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return kernels.get_backend(request.param)


def line_scenario(points, deadlines, compat=None, velocity=1.0, depot=(0.0, 0.0), t_max=None):
    """Single-agent hand-built scenario."""
    n = len(points)
    tasks = [Task(i, float(x), float(y), float(d)) for i, ((x, y), d) in enumerate(zip(points, deadlines))]
    compat = np.ones((1, n)) if compat is None else np.atleast_2d(compat)
    agents = [Agent(j, velocity, depot) for j in range(compat.shape[0])]
    return Scenario(tasks, agents, compat, t_max or n)


def random_single_agent(rng, n, area=1000.0, deadline_range=(200.0, 3000.0)):
    xy = rng.uniform(0, area, size=(n, 2))
    dl = rng.uniform(*deadline_range, size=n)
    compat = rng.uniform(0.01, 1.0, size=(1, n))
    return line_scenario(xy.tolist(), dl.tolist(), compat, depot=(area / 2, area / 2))
