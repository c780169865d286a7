import math
import random

import numpy as np
import pytest

from mams.abstraction import AgentConfig, build_abstraction
from mams.world import LETHAL, OccupancyMap, build_tree


def random_tree(rng, depth, d=2, lethal=0.0, high=1.0):
    """Risk in ``[0, high)``; a ``lethal`` fraction of cells is set to 1."""
    side = 1 << depth
    cells = np.array([rng.random() * high for _ in range(side ** d)]).reshape((side,) * d)
    if lethal:
        mask = np.array([rng.random() < lethal for _ in range(side ** d)]).reshape(cells.shape)
        cells[mask] = LETHAL
    return build_tree(OccupancyMap(d, depth, cells))


def random_point(rng, tree):
    return tuple(rng.randrange(tree.side) + 0.5 for _ in range(tree.d))


def random_configs(rng, tree, n, lo=0.5, hi=4.0):
    return [AgentConfig(i, random_point(rng, tree), rng.uniform(lo, hi)) for i in range(n)]


def random_graphs(rng, tree, n, lo=0.5, hi=4.0):
    return [build_abstraction(tree, c) for c in random_configs(rng, tree, n, lo, hi)]


def free_tree(depth, d=2):
    side = 1 << depth
    return build_tree(OccupancyMap(d, depth, np.zeros((side,) * d)))


def close(a, b, tol=1e-9):
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= tol


@pytest.fixture
def rng():
    return random.Random(1234)


# one line per acceptance criterion, printed after the run
VERDICTS = []


def verdict(name, ok, detail=""):
    line = f"{name} {'PASS' if ok else 'FAIL'} {detail}".rstrip()
    VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance")
        for line in VERDICTS:
            terminalreporter.write_line(line)
