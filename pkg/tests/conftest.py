import math

import numpy as np
import pytest

import etconsensus as ec
from etconsensus.config import preset_scenario
from etconsensus.pipeline import run_pipeline


@pytest.fixture(scope="session")
def union_topology():
    return ec.build_topology(4, [(1, 2), (2, 3), (3, 4), (1, 3), (1, 4), (2, 4)])


@pytest.fixture(scope="session")
def triangle():
    return ec.build_topology(3, [(1, 2), (2, 3), (1, 3)])


@pytest.fixture(scope="session")
def two_node():
    return ec.build_topology(2, [(1, 2)])


@pytest.fixture(scope="session")
def dynamic_pipeline(tmp_path_factory):
    """Golden switching scenario, dynamic trigger, full pipeline."""
    out = tmp_path_factory.mktemp("golden_dynamic")
    return run_pipeline(preset_scenario("switching-dynamic"), out_dir=out)


@pytest.fixture(scope="session")
def static_pipeline(tmp_path_factory):
    """Golden switching scenario, static trigger, full pipeline."""
    out = tmp_path_factory.mktemp("golden_static")
    return run_pipeline(preset_scenario("switching-static"), out_dir=out)


def random_connected_topology(rng, max_nodes=7):
    """Random connected graph: a random spanning tree plus extra edges."""
    n = int(rng.integers(2, max_nodes + 1))
    edges = []
    for v in range(2, n + 1):
        u = int(rng.integers(1, v))
        edges.append((u, v))
    possible = [(a, b) for a in range(1, n + 1) for b in range(a + 1, n + 1)
                if (a, b) not in edges and (b, a) not in edges]
    rng.shuffle(possible)
    extra = int(rng.integers(0, len(possible) + 1))
    edges += possible[:extra]
    return ec.build_topology(n, edges)


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


TWO_PI = 2.0 * math.pi
