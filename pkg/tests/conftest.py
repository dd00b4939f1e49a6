"""Session fixtures: pipeline bundles built once per system and reused."""

from types import SimpleNamespace

import numpy as np
import pytest

import boxflow as bf

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log():
    """Callable recording one pass/fail line per acceptance criterion."""
    def record(line):
        ACCEPTANCE_LINES.append(line)
    return record


def _bundle(name, depth, map_time=1.0):
    system = bf.builtin_system(name)
    grid = bf.build_grid(system.domain, depth)
    graph = bf.build_transition_graph(system, grid, map_time)
    region = grid.all_boxes()
    mg = bf.morse_graph(graph, region)
    return SimpleNamespace(system=system, grid=grid, graph=graph,
                           region=region, mg=mg)


@pytest.fixture(scope="session")
def saddle():
    b = _bundle("saddle1d", (64,))
    # N covers the whole interval and L is empty, so the exit time is the
    # time to reach the domain boundary at |x| = 1
    b.hand_pair = bf.IndexPair.from_boxes(b.grid, b.grid.all_boxes().ids, [])
    return b


@pytest.fixture(scope="session")
def doublewell():
    b = _bundle("doublewell1d", (256,))
    b.pair = bf.build_index_pair(b.graph, b.region)
    b.recurrent = bf.chain_recurrent_boxes(b.graph, b.region)
    b.ar = bf.ar_regions_in_pair(b.mg, b.graph, b.region, frozenset({1}))
    b.pair_field = bf.pair_lyapunov(b.system, b.pair, b.ar, graph=b.graph)
    b.morse_field = bf.morse_lyapunov(b.system, b.pair, b.mg)
    return b


@pytest.fixture(scope="session")
def gradient():
    return _bundle("gradient2d", (32, 32))


@pytest.fixture(scope="session")
def hopf():
    b = _bundle("hopf2d", (64, 64))
    b.pair = bf.build_index_pair(b.graph, b.region)
    b.recurrent = bf.chain_recurrent_boxes(b.graph, b.region)
    b.complete_field = bf.complete_lyapunov(b.system, b.pair, b.mg, b.graph)
    return b


def sample_in_boxes(rng, grid, boxset, n):
    """n random points uniform over the rectangles of a box set."""
    ids = boxset.ids
    pick = ids[rng.integers(0, ids.size, size=n)]
    rects = grid.bounds(pick)
    u = rng.random((n, grid.dimension))
    return rects[:, :, 0] + u * (rects[:, :, 1] - rects[:, :, 0])
