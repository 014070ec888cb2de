import numpy as np
import pytest

from drmrec.interactions import InteractionMatrix

# one line per acceptance criterion, echoed after the run so the verdicts
# survive pytest's output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def toy_train():
    # 4 users x 8 items, user 3 left empty on purpose
    rows = [[0, 1, 2, 3, 4], [1, 2, 5], [0, 4, 5, 6, 7], []]
    return InteractionMatrix.from_user_items(4, 8, rows)


@pytest.fixture
def toy_test():
    rows = [[5, 6], [0], [1], [2]]
    return InteractionMatrix.from_user_items(4, 8, rows)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
