from pathlib import Path

import numpy as np
import pytest

from stratheda.frame import ProblemInstance, PrecisionConstraints, load_basic_strata

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
CONFIGS = ROOT / "configs"

# Iris solutions in their published (un-normalized) form, columns a..h.
IRIS_POPULATION = [
    ([3, 2, 2, 3, 2, 1, 2, 2], 19.19),
    ([3, 2, 4, 3, 2, 1, 2, 3], 46.77),
    ([3, 2, 4, 1, 2, 1, 2, 4], 14.48),
    ([3, 2, 4, 3, 2, 1, 1, 4], 10.65),
    ([3, 3, 2, 3, 2, 1, 2, 2], 30.30),
]
IRIS_ELITE = [[3, 2, 4, 3, 2, 1, 1, 4], [3, 2, 4, 1, 2, 1, 2, 4]]
IRIS_MODEL = np.array(
    [
        [0, 0, 0, 0.5, 0, 1, 0.5, 0],
        [0, 1, 0, 0, 1, 0, 0.5, 0],
        [1, 0, 0, 0.5, 0, 0, 0, 0],
        [0, 0, 1, 0, 0, 0, 0, 1],
    ]
)
IRIS_OFFSPRING_BEST = ([3, 2, 4, 3, 2, 1, 2, 4], 9.34)

_acceptance_lines = []


@pytest.fixture(scope="session")
def iris():
    return load_basic_strata(DATA / "iris_strata.csv", DATA / "iris_cv.csv")


def random_instance(rng, L, G=2, eps=None, zero_var=0.1):
    counts = rng.integers(1, 40, size=L).astype(float)
    means = rng.uniform(0.5, 10.0, size=(L, G))
    stddevs = rng.uniform(0.0, 3.0, size=(L, G)) * (rng.random((L, G)) > zero_var)
    stddevs[counts == 1] = 0.0
    eps = rng.uniform(0.02, 0.1, size=G) if eps is None else np.full(G, eps)
    return ProblemInstance(
        tuple(str(i) for i in range(L)), counts, means, stddevs, constraints=PrecisionConstraints(eps)
    )


@pytest.fixture
def record_acceptance():
    def record(criterion: str, ok: bool, detail: str = ""):
        _acceptance_lines.append(f"{'PASS' if ok else 'FAIL'}  {criterion}  {detail}".rstrip())
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
