import numpy as np
import pytest

from drmc.matrix import ProblemInstance
from drmc.synth import REFERENCE_SPEC, SyntheticSpec, generate


def random_instance(seed, rows=12, n=8, d=6, t=3, density=0.4, zero_policy=None):
    rng = np.random.default_rng(seed)
    X = (rng.random((rows, d)) < density).astype(np.int8)
    Y = (rng.random((n, t)) < density).astype(np.int8)
    return ProblemInstance.from_arrays(X, Y, zero_policy=zero_policy, seed=seed)


@pytest.fixture
def toy():
    # n=1, m=1, d=2, t=1
    return ProblemInstance.from_arrays(np.array([[1, 0], [0, 1]]), np.array([[1]]))


@pytest.fixture(scope="session")
def reference():
    return generate(REFERENCE_SPEC)


@pytest.fixture(scope="session")
def small_synthetic():
    return generate(SyntheticSpec(n=30, m=15, d=20, t=5, rank=2, feature_noise=0.02,
                                  label_flip=0.02, seed=3))


# one "PASS"/"FAIL" line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
