import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from dbgnn.graph import Graph

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def graphs(draw, min_nodes=2, max_nodes=12, connected=False):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=min(len(pairs), 3 * n)))
    if connected:
        # random spanning tree first so the result is connected
        parents = [draw(st.integers(0, k - 1)) for k in range(1, n)]
        tree = {(p, k) for k, p in zip(range(1, n), parents)}
        chosen = sorted(tree | set(chosen))
    return Graph(n, tuple(chosen))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary so it shows up without -s
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
