import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ggad.graph import from_edges
from ggad.synthetic import SyntheticDomainSpec, generate_synthetic_domain

settings.register_profile("ggad", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ggad")


def random_graph(n=20, p=0.2, dim=6, seed=0, anomalies=3, name="rand"):
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    edges = np.column_stack([iu[0][keep], iu[1][keep]])
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.choice(n, anomalies, replace=False)] = 1
    return from_edges(n, edges, rng.standard_normal((n, dim)), labels, name)


@pytest.fixture
def small_graph():
    return random_graph()


@pytest.fixture(scope="session")
def tiny_domains():
    """Two small labeled synthetic sources and one target."""
    def spec(seed, blocks, dim, scale, rot):
        return SyntheticDomainSpec(200, blocks, 0.08, 0.01, dim, {"scale": scale, "rotation": rot}, 0.05, seed)
    return ([generate_synthetic_domain(spec(11, 3, 12, 1.0, 0.0), "s0"),
             generate_synthetic_domain(spec(12, 4, 16, 2.0, 0.3), "s1")],
            generate_synthetic_domain(spec(13, 3, 10, 0.5, 0.6), "t0"))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
