import numpy as np
import pytest

from noma_anneal.ising_map import build_ising
from noma_anneal.signal_model import CodeBook, assemble_signal, builtin_codebook


@pytest.fixture(scope="session")
def c8():
    return builtin_codebook(8)


@pytest.fixture(scope="session")
def lone_user_model(c8):
    """N=8, b0 = (1,0,...,0), perfect channel, no noise."""
    b = np.zeros(8, dtype=int)
    b[0] = 1
    w = np.ones(8)
    y = assemble_signal(c8, b, w, np.zeros(c8.code_length))
    return build_ising(c8, y, w)


@pytest.fixture
def walsh4():
    # Sylvester-Hadamard rows: four mutually orthogonal codes of length 4.
    H2 = np.array([[1, 1], [1, -1]])
    return CodeBook(np.kron(H2, H2))


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
