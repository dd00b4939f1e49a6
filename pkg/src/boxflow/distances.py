"""Exact Euclidean distances from points to unions of grid boxes.

A KD tree over box centers proposes nearby candidate boxes; the exact
distance to each candidate is found by clamping the point to the box.  The
candidate minimum is certified against the center-distance lower bound for
all other boxes and refined with a ball query in the rare uncertified case,
so the returned distances are exact, not approximate.
"""

import numpy as np
from scipy.spatial import cKDTree


class BoxSetDistance:
    """Callable computing the exact distance from points to a box set.

    The distance to the empty set is +inf.
    """

    def __init__(self, grid, boxset, k=32):
        self.grid = grid
        self.boxset = boxset
        self.n = len(boxset)
        if self.n:
            self._bounds = grid.bounds(boxset.ids)
            self._tree = cKDTree(grid.centers(boxset.ids))
            self._radius = 0.5 * float(np.linalg.norm(grid.widths))
            self._k = min(k, self.n)

    def _clamp_distance(self, pts, cand):
        lo = self._bounds[cand, :, 0]
        hi = self._bounds[cand, :, 1]
        clamped = np.clip(pts[:, None, :], lo, hi)
        return np.linalg.norm(pts[:, None, :] - clamped, axis=2)

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if self.n == 0:
            out = np.full(pts.shape[0], np.inf)
            return float(out[0]) if single else out

        center_d, cand = self._tree.query(pts, k=self._k)
        if self._k == 1:
            center_d = center_d[:, None]
            cand = cand[:, None]
        best = self._clamp_distance(pts, cand).min(axis=1)

        if self._k < self.n:
            uncertified = best > center_d[:, -1] - self._radius
            for i in np.flatnonzero(uncertified):
                near = self._tree.query_ball_point(pts[i], best[i] + self._radius + 1e-12)
                if near:
                    best[i] = self._clamp_distance(pts[i:i + 1], np.asarray(near)).min()
        if single:
            return float(best[0])
        return best


def boxset_min_distance(grid, first, second, k=32):
    """Exact minimum distance between two box sets as closed regions."""
    if not first or not second:
        return np.inf
    if not first.isdisjoint(second):
        return 0.0
    bounds_a = grid.bounds(first.ids)
    bounds_b = grid.bounds(second.ids)
    centers_a = grid.centers(first.ids)
    tree = cKDTree(grid.centers(second.ids))
    diag = float(np.linalg.norm(grid.widths))
    kk = min(k, len(second))

    center_d, cand = tree.query(centers_a, k=kk)
    if kk == 1:
        center_d = center_d[:, None]
        cand = cand[:, None]

    def pair_distance(i, idx):
        lo_a = bounds_a[i, :, 0]
        hi_a = bounds_a[i, :, 1]
        lo_b = bounds_b[idx, :, 0]
        hi_b = bounds_b[idx, :, 1]
        gap = np.maximum(0.0, np.maximum(lo_b - hi_a, lo_a - hi_b))
        return np.linalg.norm(gap, axis=1)

    best = np.empty(len(first))
    for i in range(len(first)):
        best[i] = pair_distance(i, cand[i]).min()
        if kk < len(second) and best[i] > center_d[i, -1] - diag:
            near = tree.query_ball_point(centers_a[i], best[i] + diag + 1e-12)
            if near:
                best[i] = min(best[i], pair_distance(i, np.asarray(near)).min())
    return float(best.min())
