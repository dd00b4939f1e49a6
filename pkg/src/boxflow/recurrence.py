"""Chain recurrence, Morse decompositions, and attractor-repeller pairs.

Chain recurrent boxes are the nontrivial strongly connected components of
the transition graph restricted to a region.  The Morse graph orders these
classes by reachability and assigns admissible indices with attractors
lowest.  Attractor-repeller pairs correspond to down-sets of that order. An
independent point-level epsilon-chain oracle cross-checks the box picture.
"""

import json
from dataclasses import dataclass
from typing import NamedTuple

import networkx as nx
import numpy as np

from .errors import CapacityError, PreconditionError
from .flows import _advance
from .grid import BoxSet
from .transition import _peel, invariant_part


def _restricted_digraph(graph, boxes):
    """networkx view of the graph restricted to a box set, EXIT dropped."""
    ids = boxes.ids
    src, dst = graph.edge_arrays()
    keep = np.isin(src, ids) & np.isin(dst, ids)
    g = nx.DiGraph()
    g.add_nodes_from(ids.tolist())
    g.add_edges_from(zip(src[keep].tolist(), dst[keep].tolist()))
    return g


def _nontrivial_sccs(g):
    out = []
    for comp in nx.strongly_connected_components(g):
        if len(comp) > 1:
            out.append(sorted(comp))
        else:
            (b,) = comp
            if g.has_edge(b, b):
                out.append([b])
    return out


def chain_recurrent_boxes(graph, region):
    """Boxes of the region lying in nontrivial SCCs of the restricted graph."""
    g = _restricted_digraph(graph, region)
    boxes = []
    for comp in _nontrivial_sccs(g):
        boxes.extend(comp)
    return BoxSet(boxes)


class MorseGraph:
    """Recurrent classes of a region with an admissible order.

    morse_sets is listed in admissible order, so morse_sets[i-1] carries
    index i and attractor classes come first.  partial_order holds the
    reachability pairs (higher index, lower index).  Connecting boxes of the
    invariant part keep the sets of classes they reach and are reached from.
    """

    def __init__(self, graph, region, invariant, morse_sets, partial_order,
                 inv_ids, class_of_local, reach_bits, coreach_bits):
        self.graph = graph
        self.region = region
        self.invariant = invariant
        self.morse_sets = morse_sets
        self.n = len(morse_sets)
        self.admissible_order = tuple(range(1, self.n + 1))
        self.partial_order = frozenset(partial_order)
        self._inv_ids = inv_ids
        self._class_of_local = class_of_local
        self._reach_bits = reach_bits
        self._coreach_bits = coreach_bits
        self._connecting = None

    def _local(self, box):
        i = np.searchsorted(self._inv_ids, box)
        if i < self._inv_ids.size and self._inv_ids[i] == box:
            return int(i)
        return None

    def class_of(self, box):
        """Admissible index of the box's Morse set, or None."""
        i = self._local(box)
        if i is None or self._class_of_local[i] == 0:
            return None
        return int(self._class_of_local[i])

    def reach_classes(self, box):
        """Indices of Morse sets reachable from an invariant-part box."""
        i = self._local(box)
        if i is None:
            raise PreconditionError(f"box {box} is not in the invariant part")
        return frozenset(int(k) for k in np.flatnonzero(self._reach_bits[:, i]) + 1)

    def coreach_classes(self, box):
        """Indices of Morse sets from which an invariant-part box is reachable."""
        i = self._local(box)
        if i is None:
            raise PreconditionError(f"box {box} is not in the invariant part")
        return frozenset(int(k) for k in np.flatnonzero(self._coreach_bits[:, i]) + 1)

    @property
    def connecting(self):
        """Non-recurrent invariant boxes with their (reach, coreach) class sets."""
        if self._connecting is None:
            out = {}
            for i in np.flatnonzero(self._class_of_local == 0):
                box = int(self._inv_ids[i])
                out[box] = (
                    frozenset(int(k) for k in
                              np.flatnonzero(self._reach_bits[:, i]) + 1),
                    frozenset(int(k) for k in
                              np.flatnonzero(self._coreach_bits[:, i]) + 1))
            self._connecting = out
        return self._connecting

    def __repr__(self):
        sizes = [len(m) for m in self.morse_sets]
        return f"MorseGraph(n={self.n}, sizes={sizes})"

    def to_json(self, path):
        data = {
            "n": self.n,
            "admissible_order": list(self.admissible_order),
            "partial_order": sorted([list(p) for p in self.partial_order]),
            "morse_sets": [m.ids.tolist() for m in self.morse_sets],
            "region": self.region.ids.tolist(),
            "invariant": self.invariant.ids.tolist(),
            "connecting": sorted(
                [[b, sorted(r), sorted(c)] for b, (r, c) in self.connecting.items()]),
        }
        with open(path, "w") as fh:
            json.dump(data, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    def to_dot(self):
        cover = set(self.partial_order)
        for i, j in self.partial_order:
            for k in range(1, self.n + 1):
                if (i, k) in self.partial_order and (k, j) in self.partial_order:
                    cover.discard((i, j))
        lines = ["digraph morse {"]
        for i, m in enumerate(self.morse_sets, start=1):
            lines.append(f'  M{i} [label="M{i} ({len(m)} boxes)"];')
        for i, j in sorted(cover):
            lines.append(f"  M{i} -> M{j};")
        lines.append("}")
        return "\n".join(lines)


def morse_graph(graph, region):
    """Compute the Morse decomposition of a region of the transition graph.

    Morse sets are the nontrivial SCC classes of the restricted graph; the
    admissible order is a reverse topological order of the condensation with
    ties broken by smallest contained box id.
    """
    inv, _ = invariant_part(graph, region)
    g = _restricted_digraph(graph, inv)
    raw_classes = _nontrivial_sccs(g)

    reach_sets = []
    for comp in raw_classes:
        desc = set()
        for b in comp:
            desc |= nx.descendants(g, b)
            break
        reach_sets.append(desc)
    reachable_classes = []
    for i, comp in enumerate(raw_classes):
        below = set()
        for j, other in enumerate(raw_classes):
            if j != i and reach_sets[i].intersection(other):
                below.add(j)
        reachable_classes.append(below)

    order = []
    assigned = set()
    while len(order) < len(raw_classes):
        ready = [i for i in range(len(raw_classes))
                 if i not in assigned and reachable_classes[i] <= assigned]
        pick = min(ready, key=lambda i: raw_classes[i][0])
        order.append(pick)
        assigned.add(pick)

    index_of = {raw: k + 1 for k, raw in enumerate(order)}
    morse_sets = [BoxSet(raw_classes[raw]) for raw in order]
    partial_order = set()
    for i, below in enumerate(reachable_classes):
        for j in below:
            partial_order.add((index_of[i], index_of[j]))

    n = len(morse_sets)
    inv_ids = inv.ids
    class_of_local = np.zeros(inv_ids.size, dtype=np.int64)
    for k, m in enumerate(morse_sets, start=1):
        class_of_local[np.searchsorted(inv_ids, m.ids)] = k

    reach_bits = np.zeros((n, inv_ids.size), dtype=bool)
    coreach_bits = np.zeros((n, inv_ids.size), dtype=bool)
    rev = g.reverse(copy=False)
    for k, m in enumerate(morse_sets):
        seeds = m.ids.tolist()
        fwd = set(seeds)
        for b in seeds:
            fwd |= nx.descendants(g, b)
            break
        bwd = set(seeds)
        for b in seeds:
            bwd |= nx.descendants(rev, b)
            break
        coreach_bits[k, np.searchsorted(inv_ids, np.fromiter(sorted(fwd), np.int64))] = True
        reach_bits[k, np.searchsorted(inv_ids, np.fromiter(sorted(bwd), np.int64))] = True

    return MorseGraph(graph, region, inv, morse_sets, partial_order,
                      inv_ids, class_of_local, reach_bits, coreach_bits)


@dataclass(frozen=True)
class ARPair:
    attractor: BoxSet
    repeller: BoxSet
    down_set: frozenset


class ARRegions(NamedTuple):
    attractor: BoxSet
    repeller: BoxSet
    alpha: BoxSet
    omega: BoxSet
    down_set: frozenset


def _check_down_set(mg, down_set):
    D = frozenset(int(i) for i in down_set)
    if not D <= set(range(1, mg.n + 1)):
        raise PreconditionError(f"down-set {sorted(D)} has indices outside 1..{mg.n}")
    for hi, lo in mg.partial_order:
        if hi in D and lo not in D:
            raise PreconditionError(
                f"{sorted(D)} is not downward closed: {hi} is in but reaches {lo}")
    return D


def _class_set_members(mg, allowed):
    """Invariant boxes whose class set is contained in the allowed indices.

    A recurrent box contributes its own class; a connecting box contributes
    every class it reaches or is reached from.
    """
    if mg._inv_ids.size == 0:
        return BoxSet([])
    allowed_bits = np.zeros(mg.n, dtype=bool)
    for k in allowed:
        allowed_bits[k - 1] = True
    cls = mg._class_of_local
    recurrent = cls > 0
    ok = np.zeros(mg._inv_ids.size, dtype=bool)
    ok[recurrent] = allowed_bits[cls[recurrent] - 1]
    connecting = ~recurrent
    if connecting.any() and mg.n:
        union = mg._reach_bits | mg._coreach_bits
        outside = union & ~allowed_bits[:, None]
        ok[connecting] = ~outside[:, connecting].any(axis=0)
    return BoxSet(mg._inv_ids[ok])


def ar_regions(mg, graph, region, down_set):
    """The attractor-repeller pair of boxes generated by a down-set."""
    if graph is None:
        graph = mg.graph
    if region is None:
        region = mg.region
    if not region == mg.region:
        raise PreconditionError("region does not match the Morse graph's region")
    D = _check_down_set(mg, down_set)
    E = frozenset(range(1, mg.n + 1)) - D
    return ARPair(attractor=_class_set_members(mg, D),
                  repeller=_class_set_members(mg, E),
                  down_set=D)


def _orbit_class_bits(mg, graph, region):
    """Reach/coreach class bits for every region box, over the region graph."""
    ids = region.ids
    g = _restricted_digraph(graph, region)
    rev = g.reverse(copy=False)
    n = mg.n
    reach = np.zeros((n, ids.size), dtype=bool)
    coreach = np.zeros((n, ids.size), dtype=bool)
    for k, m in enumerate(mg.morse_sets):
        seeds = m.ids.tolist()
        fwd = set(seeds)
        bwd = set(seeds)
        for b in seeds:
            fwd |= nx.descendants(g, b)
            bwd |= nx.descendants(rev, b)
            break
        coreach[k, np.searchsorted(ids, np.fromiter(sorted(fwd), np.int64))] = True
        reach[k, np.searchsorted(ids, np.fromiter(sorted(bwd), np.int64))] = True
    return reach, coreach


def ar_regions_in_pair(mg, graph, region, down_set):
    """Attractor-repeller pair plus the one-sided orbit regions.

    alpha holds boxes carrying a full backward orbit in the region whose
    sources among the Morse classes all lie in the down-set (recurrent boxes
    qualify through their own class).  omega is the forward counterpart for
    the complementary up-set.  These over-approximate the sets where the
    pair's Lyapunov function is pinned at 0 and 1.
    """
    if graph is None:
        graph = mg.graph
    if region is None:
        region = mg.region
    pair = ar_regions(mg, graph, region, down_set)
    D = pair.down_set
    E = frozenset(range(1, mg.n + 1)) - D

    w_back = _peel(graph, region, require_in=True, require_out=False)
    w_fwd = _peel(graph, region, require_in=False, require_out=True)
    reach, coreach = _orbit_class_bits(mg, graph, region)
    ids = region.ids

    d_bits = np.zeros(mg.n, dtype=bool)
    for k in D:
        d_bits[k - 1] = True
    e_bits = np.zeros(mg.n, dtype=bool)
    for k in E:
        e_bits[k - 1] = True

    cls = np.zeros(ids.size, dtype=np.int64)
    for k, m in enumerate(mg.morse_sets, start=1):
        pos = np.searchsorted(ids, m.ids)
        cls[pos] = k
    recurrent = cls > 0

    alpha_ok = np.zeros(ids.size, dtype=bool)
    alpha_ok[recurrent] = d_bits[cls[recurrent] - 1] if mg.n else False
    if (~recurrent).any() and mg.n:
        bad = coreach & ~d_bits[:, None]
        alpha_ok[~recurrent] = ~bad[:, ~recurrent].any(axis=0)
    alpha = BoxSet(ids[alpha_ok]).intersection(w_back)

    omega_ok = np.zeros(ids.size, dtype=bool)
    omega_ok[recurrent] = e_bits[cls[recurrent] - 1] if mg.n else False
    if (~recurrent).any() and mg.n:
        bad = reach & ~e_bits[:, None]
        omega_ok[~recurrent] = ~bad[:, ~recurrent].any(axis=0)
    omega = BoxSet(ids[omega_ok]).intersection(w_fwd)

    return ARRegions(pair.attractor, pair.repeller, alpha, omega, pair.down_set)


def enumerate_ar_pairs(mg, graph=None, region=None):
    """All attractor-repeller pairs, one per down-set, canonically ordered.

    Down-sets are ordered by size then lexicographically, so (∅, S) comes
    first and (S, ∅) last; the weights of the complete Lyapunov sum follow
    this enumeration.
    """
    if mg.n > 20:
        raise CapacityError(
            f"{mg.n} Morse sets may generate more than 2**20 down-sets")
    down_sets = []
    for mask in range(1 << mg.n):
        D = frozenset(k + 1 for k in range(mg.n) if mask >> k & 1)
        if all(lo in D for hi, lo in mg.partial_order if hi in D):
            down_sets.append(D)
    down_sets.sort(key=lambda D: (len(D), tuple(sorted(D))))
    return [ar_regions(mg, graph, region, D) for D in down_sets]


def epsilon_chain_oracle(system, points, epsilon, t_min=1.0, t_max=10.0, steps=19):
    """Sample points that admit an epsilon-chain returning to themselves.

    Builds the digraph with an edge x -> y whenever some flow time in the
    probe grid lands the orbit of x within epsilon of y, then returns the
    points lying on cycles.  Chain times start at 1, matching the definition
    of chain recurrence this approximates; escapes contribute no edges.
    """
    if epsilon <= 0:
        raise PreconditionError(f"epsilon must be positive, got {epsilon}")
    if t_min < 1.0:
        raise PreconditionError(f"chain times start at 1, got t_min={t_min}")
    if t_max < t_min:
        raise PreconditionError(f"t_max ({t_max}) must be at least t_min ({t_min})")
    if steps < 1:
        raise PreconditionError("steps must be at least 1")

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    grid_times = np.linspace(t_min, t_max, steps)
    edges = np.zeros((n, n), dtype=bool)

    current, escaped, _ = _advance(system, pts, grid_times[0])
    prev_t = grid_times[0]
    for t in grid_times:
        if t > prev_t:
            step_pts, step_esc, _ = _advance(system, current, t - prev_t)
            current = np.where(escaped[:, None], current, step_pts)
            escaped |= step_esc & ~escaped
            prev_t = t
        live = ~escaped
        if not live.any():
            break
        diff = current[live, None, :] - pts[None, :, :]
        dist = np.linalg.norm(diff, axis=2)
        edges[live] |= dist < epsilon

    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    srcs, dsts = np.nonzero(edges)
    g.add_edges_from(zip(srcs.tolist(), dsts.tolist()))
    flagged = sorted(b for comp in _nontrivial_sccs(g) for b in comp)
    return pts[flagged]


class IntersectionReport(NamedTuple):
    equal: bool
    symmetric_difference: BoxSet
    intersection: BoxSet
    recurrent: BoxSet


def check_R_equals_intersection(mg, graph=None, region=None):
    """Compare the chain recurrent boxes with the intersection of A ∪ A*."""
    pairs = enumerate_ar_pairs(mg, graph, region)
    intersection = mg.invariant
    for pair in pairs:
        intersection = intersection.intersection(pair.attractor.union(pair.repeller))
    recurrent = BoxSet([])
    for m in mg.morse_sets:
        recurrent = recurrent.union(m)
    diff = intersection.difference(recurrent).union(recurrent.difference(intersection))
    return IntersectionReport(equal=len(diff) == 0,
                              symmetric_difference=diff,
                              intersection=intersection,
                              recurrent=recurrent)
