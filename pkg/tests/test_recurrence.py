"""Recurrence and Morse decomposition against a hand-rolled SCC oracle."""

import numpy as np
import pytest

import boxflow as bf
from boxflow.errors import PreconditionError
from boxflow.grid import BoxSet
from boxflow.transition import TransitionGraph


def _kosaraju(n, edges):
    """Strongly connected components, iteratively, two DFS passes."""
    adj = [[] for _ in range(n)]
    radj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        radj[v].append(u)

    order = []
    seen = [False] * n
    for start in range(n):
        if seen[start]:
            continue
        stack = [(start, 0)]
        seen[start] = True
        while stack:
            node, i = stack.pop()
            if i < len(adj[node]):
                stack.append((node, i + 1))
                nxt = adj[node][i]
                if not seen[nxt]:
                    seen[nxt] = True
                    stack.append((nxt, 0))
            else:
                order.append(node)

    comp = [-1] * n
    n_comp = 0
    for start in reversed(order):
        if comp[start] != -1:
            continue
        stack = [start]
        comp[start] = n_comp
        while stack:
            node = stack.pop()
            for nxt in radj[node]:
                if comp[nxt] == -1:
                    comp[nxt] = n_comp
                    stack.append(nxt)
        n_comp += 1

    groups = [[] for _ in range(n_comp)]
    for v, c in enumerate(comp):
        groups[c].append(v)
    return groups, comp


def _oracle_classes(n, edges):
    """Nontrivial SCCs (a cycle through the node, possibly a self-loop)."""
    groups, _ = _kosaraju(n, edges)
    edge_set = set(edges)
    out = []
    for g in groups:
        if len(g) > 1 or (g[0], g[0]) in edge_set:
            out.append(frozenset(g))
    return out


def _random_graph(seed, n=36, p=0.06):
    rng = np.random.default_rng(seed)
    mat = rng.random((n, n)) < p
    edges = [(int(u), int(v)) for u, v in zip(*np.nonzero(mat))]
    grid = bf.build_grid([(0.0, 1.0)], (n,))
    graph = TransitionGraph(grid, 1.0, 0.0, 3,
                            [e[0] for e in edges], [e[1] for e in edges])
    return grid, graph, edges, n


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_recurrent_boxes_match_scc_oracle(seed):
    grid, graph, edges, n = _random_graph(seed)
    recurrent = bf.chain_recurrent_boxes(graph, grid.all_boxes())
    expected = sorted(b for comp in _oracle_classes(n, edges) for b in comp)
    assert recurrent.ids.tolist() == expected


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_morse_sets_and_order_match_oracle(seed):
    grid, graph, edges, n = _random_graph(seed)
    mg = bf.morse_graph(graph, grid.all_boxes())
    oracle = _oracle_classes(n, edges)
    got = {frozenset(m.ids.tolist()) for m in mg.morse_sets}
    assert got == set(oracle)

    # condensation reachability: every ordered class pair must appear in the
    # partial order with the attractor side carrying the smaller index
    groups, comp = _kosaraju(n, edges)
    reach = {i: {i} for i in range(len(groups))}
    changed = True
    while changed:
        changed = False
        for u, v in edges:
            cu, cv = comp[u], comp[v]
            if not reach[cv] <= reach[cu]:
                reach[cu] |= reach[cv]
                changed = True
    index_of = {}
    for i, m in enumerate(mg.morse_sets, start=1):
        index_of[comp[int(m.ids[0])]] = i
    expected_pairs = set()
    for c_hi, below in reach.items():
        if c_hi not in index_of:
            continue
        for c_lo in below:
            if c_lo in index_of and c_lo != c_hi:
                expected_pairs.add((index_of[c_hi], index_of[c_lo]))
    assert set(mg.partial_order) == expected_pairs
    for hi, lo in mg.partial_order:
        assert hi > lo

    assert bf.chain_recurrent_boxes(graph, grid.all_boxes()) \
        == BoxSet(sorted(b for m in mg.morse_sets for b in m.ids.tolist()))


def test_doublewell_morse_sets(doublewell):
    mg = doublewell.mg
    assert mg.n == 3
    assert mg.morse_sets[0].ids.tolist() == [63, 64]
    assert mg.morse_sets[1].ids.tolist() == [191, 192]
    assert mg.morse_sets[2].ids.tolist() == [127, 128]
    assert mg.partial_order == frozenset({(3, 1), (3, 2)})
    assert mg.class_of(63) == 1 and mg.class_of(128) == 3
    assert mg.class_of(100) is None
    assert mg.reach_classes(100) == frozenset({1})
    assert mg.coreach_classes(100) == frozenset({3})
    with pytest.raises(PreconditionError):
        mg.reach_classes(0)


def test_down_set_enumeration_is_canonical(doublewell):
    pairs = bf.enumerate_ar_pairs(doublewell.mg, doublewell.graph,
                                  doublewell.region)
    downs = [tuple(sorted(p.down_set)) for p in pairs]
    assert downs == [(), (1,), (2,), (1, 2), (1, 2, 3)]


def test_attractor_repeller_regions(doublewell):
    pairs = bf.enumerate_ar_pairs(doublewell.mg, doublewell.graph,
                                  doublewell.region)
    by_down = {tuple(sorted(p.down_set)): p for p in pairs}
    assert by_down[(1,)].attractor.ids.tolist() == [63, 64]
    assert by_down[(1,)].repeller.ids.tolist() == list(range(127, 193))
    assert by_down[(2,)].attractor.ids.tolist() == [191, 192]
    assert by_down[(2,)].repeller.ids.tolist() == list(range(63, 129))
    assert by_down[(1, 2)].attractor.ids.tolist() == [63, 64, 191, 192]
    assert by_down[(1, 2)].repeller.ids.tolist() == [127, 128]
    full = by_down[(1, 2, 3)]
    assert not full.repeller
    empty = by_down[()]
    assert not empty.attractor
    for p in pairs:
        assert p.attractor.isdisjoint(p.repeller)


def test_non_down_closed_set_rejected(doublewell):
    with pytest.raises(PreconditionError):
        bf.ar_regions(doublewell.mg, doublewell.graph, doublewell.region,
                      frozenset({3}))
    with pytest.raises(PreconditionError):
        bf.ar_regions(doublewell.mg, doublewell.graph, doublewell.region,
                      frozenset({5}))


def test_one_sided_regions_pin_the_pair(doublewell):
    ar = doublewell.ar
    assert ar.alpha.ids.tolist() == [63, 64]
    assert BoxSet(list(range(127, 193))).issubset(ar.omega)
    assert ar.alpha.isdisjoint(ar.omega)


def test_recurrence_equals_attractor_intersection(doublewell):
    rep = bf.check_R_equals_intersection(doublewell.mg, doublewell.graph,
                                         doublewell.region)
    assert rep.equal
    assert len(rep.symmetric_difference) == 0
    assert rep.recurrent == doublewell.recurrent


def test_empty_invariant_part_yields_empty_decomposition():
    system = bf.FlowSystem(dimension=1, field=lambda p: np.ones_like(p),
                           domain=[[0.0, 1.0]], name="drift")
    grid = bf.build_grid(system.domain, (16,))
    graph = bf.build_transition_graph(system, grid, 1.0)
    region = grid.all_boxes()
    assert not bf.chain_recurrent_boxes(graph, region)
    mg = bf.morse_graph(graph, region)
    assert mg.n == 0
    pairs = bf.enumerate_ar_pairs(mg, graph, region)
    assert len(pairs) == 1
    assert not pairs[0].attractor and not pairs[0].repeller


def test_chain_oracle_flags_the_contracting_fixed_point():
    system = bf.builtin_system("contract1d")
    pts = np.linspace(-0.9, 0.9, 37)[:, None]
    flagged = bf.epsilon_chain_oracle(system, pts, 0.05, t_max=8.0)
    assert flagged.shape[0] > 0
    assert np.abs(flagged).max() < 0.2


def test_chain_oracle_validates_inputs():
    system = bf.builtin_system("contract1d")
    pts = np.zeros((3, 1))
    with pytest.raises(PreconditionError):
        bf.epsilon_chain_oracle(system, pts, 0.0)
    with pytest.raises(PreconditionError):
        bf.epsilon_chain_oracle(system, pts, 0.1, t_min=0.5)
    with pytest.raises(PreconditionError):
        bf.epsilon_chain_oracle(system, pts, 0.1, t_max=0.5)


def test_morse_graph_dot_output(doublewell):
    text = doublewell.mg.to_dot()
    assert text.startswith("digraph")
    assert "M1" in text and "M3" in text
