import math

import numpy as np
import pytest

from edgelab.atoms import from_offsets, validate


@pytest.fixture
def dsym():
    return validate([-1.0, 0.0, 1.0], [0.25, 0.5, 0.25])


@pytest.fixture
def dirr():
    return from_offsets([math.sqrt(2), 2.0], [0.25, 0.5, 0.25])


@pytest.fixture
def generic():
    return from_offsets([0.7 * math.sqrt(2), 1.9], [0.2, 0.5, 0.3])


def random_distribution(rng, d):
    while True:
        p = rng.dirichlet([2.0] * (d + 1))
        b = np.sort(rng.uniform(0.1, 3.0, size=d))
        if p.min() > 0.05 and np.diff(np.concatenate([[0.0], b])).min() > 0.05:
            return from_offsets(b, p)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def acceptance_line(tag: str, ok: bool, detail: str) -> None:
    line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
