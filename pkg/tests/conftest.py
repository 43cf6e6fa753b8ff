import numpy as np
import pytest
from hypothesis import strategies as st

from zerorate import JointDistribution, LambdaSolver

P_REF = np.array([[0.5, 0.125], [0.125, 0.25]])
Q_REF = np.array([[0.125, 0.25], [0.5, 0.125]])

# independent reference values, see tests/oracles/compute_oracles.py
E_STAR = 0.16181925728385493
D0_GRID = 0.03226933324199319
F_GRID = {0.02: 0.04846731097132542, 0.05: 0.019151958611869038, 0.1: 0.004002617348522075}
D_PQ = 0.6065037829899521


@pytest.fixture(scope="session")
def P():
    return JointDistribution(P_REF)


@pytest.fixture(scope="session")
def Q():
    return JointDistribution(Q_REF)


@pytest.fixture(scope="session")
def solver(P, Q):
    return LambdaSolver(P, Q)


def random_table(rng, shape, floor=0.02):
    w = rng.dirichlet(np.ones(shape[0] * shape[1])).reshape(shape)
    w = w + floor
    return JointDistribution(w / w.sum())


@st.composite
def tables(draw, shape=None, floor=0.02):
    if shape is None:
        shape = draw(st.sampled_from([(2, 2), (2, 3), (3, 2), (3, 3)]))
    k = shape[0] * shape[1]
    w = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k))) + floor
    return JointDistribution(w.reshape(shape) / w.sum())


@st.composite
def table_pairs(draw, shape=None):
    if shape is None:
        shape = draw(st.sampled_from([(2, 2), (2, 3), (3, 3)]))
    return draw(tables(shape)), draw(tables(shape))


# acceptance criteria report: one line per criterion in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    def record(criterion: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[criterion] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
