"""Weighted shortest paths on the grid graph restricted to the core polygon.

The conformal metric w >= 0 is sampled at grid nodes.  Distances are computed
on the 16-neighbor graph (axis, diagonal, and knight moves) over the nodes
inside the closed core polygon, with edge weight (w(p)+w(q))/2 * |p-q|.  The
knight moves cap the angular overshoot of graph distances against the
continuum at about 2.8 percent, versus 8.2 percent for the 8-neighbor graph.

Label setting is delegated to scipy's compiled Dijkstra; predecessor links
are then re-derived so that ties resolve to the smallest flat node index,
which makes extracted paths deterministic and independent of heap order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra as _dijkstra
from scipy.spatial import cKDTree

from .core import Domain, GeometryError, Polyline, ScalarField, polyline_quadrature

# Offsets (dx, dy) of the 16-neighbor stencil, one representative per
# undirected edge; the reverse directions are implied.
_HALF_OFFSETS = [
    (1, 0), (0, 1), (1, 1), (1, -1),
    (2, 1), (1, 2), (2, -1), (1, -2),
]


class GeodesicError(RuntimeError):
    """Invalid metric, source outside the core region, or unreachable target."""


def _edge_structure(dom: Domain):
    """Cache (I, J, length) arrays of graph edges between inside nodes."""
    if dom._edges is not None:
        return dom._edges
    g = dom.grid
    inside = dom.in_omega0
    idx = np.arange(g.n_nodes, dtype=np.int64).reshape(g.ny, g.nx)
    I, J, L = [], [], []
    for dx, dy in _HALF_OFFSETS:
        ell = float(np.hypot(dx * g.hx, dy * g.hy))
        sy0, sy1 = (0, g.ny - dy) if dy >= 0 else (-dy, g.ny)
        sx0, sx1 = (0, g.nx - dx) if dx >= 0 else (-dx, g.nx)
        a = idx[sy0:sy1, sx0:sx1]
        b = idx[sy0 + dy:sy1 + dy, sx0 + dx:sx1 + dx]
        ok = inside[sy0:sy1, sx0:sx1] & inside[sy0 + dy:sy1 + dy, sx0 + dx:sx1 + dx]
        I.append(a[ok].ravel())
        J.append(b[ok].ravel())
        L.append(np.full(int(ok.sum()), ell))
    dom._edges = (np.concatenate(I), np.concatenate(J), np.concatenate(L))
    return dom._edges


@dataclass
class DistanceField:
    """Geodesic distance values from a source point, +inf outside the core."""

    field: ScalarField
    source: np.ndarray
    metric_sup: float
    _pred: np.ndarray = None
    _source_flat: int = -1
    _dom: Domain = None

    def at(self, point) -> float:
        """Distance value at the inside node nearest to ``point``."""
        ix, iy = self._dom.nearest_inside_node(point)
        return float(self.field.values[iy, ix])


def distance_field(w: ScalarField, source, dom: Domain) -> DistanceField:
    """Shortest-path distance from ``source`` to every inside node.

    Deterministic: distances are graph shortest paths, and predecessor ties
    resolve to the lexicographically smallest node index.
    """
    g = dom.grid
    src = np.asarray(source, dtype=float)
    if not dom.omega0.contains_point(src):
        raise GeodesicError("source lies outside the core polygon")
    wv = w.values.ravel()
    inside_flat = dom.in_omega0.ravel()
    if np.any(wv[inside_flat] < 0.0):
        raise GeodesicError("metric must be nonnegative on core nodes")

    I, J, L = _edge_structure(dom)
    weights = 0.5 * (wv[I] + wv[J]) * L
    graph = sp.coo_matrix((weights, (I, J)), shape=(g.n_nodes, g.n_nodes)).tocsr()

    ix, iy = dom.nearest_inside_node(src)
    src_flat = iy * g.nx + ix
    dist, pred_heap = _dijkstra(
        graph, directed=False, indices=src_flat, return_predecessors=True
    )

    pred = _lexicographic_predecessors(dom, wv, dist, pred_heap, src_flat)
    vals = np.where(inside_flat, dist, np.inf)
    metric_sup = float(wv[inside_flat].max()) if inside_flat.any() else 0.0
    return DistanceField(
        field=ScalarField(g, vals),
        source=src,
        metric_sup=metric_sup,
        _pred=pred,
        _source_flat=src_flat,
        _dom=dom,
    )


def _lexicographic_predecessors(dom, wv, dist, pred_heap, src_flat):
    """Re-derive predecessors: among neighbors p with dist[p] + w(p,q) equal
    to dist[q] and dist[p] < dist[q], pick the smallest flat index.  Plateaus
    of zero-weight edges fall back to the label-setting tree, which is
    cycle-free by construction."""
    g = dom.grid
    inside = dom.in_omega0
    d2 = dist.reshape(g.ny, g.nx)
    w2 = wv.reshape(g.ny, g.nx)
    flat = np.arange(g.n_nodes, dtype=np.int64).reshape(g.ny, g.nx)

    offsets = [(dx, dy) for dx, dy in _HALF_OFFSETS]
    offsets += [(-dx, -dy) for dx, dy in _HALF_OFFSETS]
    offsets.sort(key=lambda o: (o[1], o[0]))

    best = np.full((g.ny, g.nx), np.inf)
    pred = np.full((g.ny, g.nx), -1, dtype=np.int64)
    for dx, dy in offsets:
        ell = float(np.hypot(dx * g.hx, dy * g.hy))
        sy0, sy1 = (0, g.ny - dy) if dy >= 0 else (-dy, g.ny)
        sx0, sx1 = (0, g.nx - dx) if dx >= 0 else (-dx, g.nx)
        q = (slice(sy0, sy1), slice(sx0, sx1))
        p = (slice(sy0 + dy, sy1 + dy), slice(sx0 + dx, sx1 + dx))
        cand = np.full((g.ny, g.nx), np.inf)
        ok = inside[q] & inside[p] & (d2[p] < d2[q])
        val = d2[p] + 0.5 * (w2[q] + w2[p]) * ell
        cand[q][ok] = val[ok]
        upd = cand < best
        best[upd] = cand[upd]
        src_idx = np.full((g.ny, g.nx), -1, dtype=np.int64)
        src_idx[q] = flat[p]
        pred[upd] = src_idx[upd]

    pred_flat = pred.ravel()
    exact = best.ravel() == dist
    out = np.where(exact, pred_flat, pred_heap.astype(np.int64))
    out[src_flat] = -1
    out[~inside.ravel()] = -1
    return out


def shortest_path(df: DistanceField, target) -> Polyline:
    """Backtrack predecessor links from the node nearest ``target``.

    The returned chain is [exact source, source node, ..., target node,
    exact target]; snapping the endpoints to nodes costs at most
    metric_sup*(hx+hy) of path integral against the stored distance.
    """
    dom = df._dom
    g = dom.grid
    tgt = np.asarray(target, dtype=float)
    if not dom.omega0.contains_point(tgt):
        raise GeodesicError("target lies outside the core polygon")
    if np.array_equal(tgt, df.source):
        return Polyline([df.source, tgt])
    ix, iy = dom.nearest_inside_node(tgt)
    node = iy * g.nx + ix
    if not np.isfinite(df.field.values[iy, ix]):
        raise GeodesicError("target is unreachable from the source")

    chain = [node]
    seen = 0
    while node != df._source_flat:
        node = int(df._pred[node])
        if node < 0 or seen > g.n_nodes:
            raise GeodesicError("predecessor chain did not reach the source")
        chain.append(node)
        seen += 1
    chain.reverse()
    pts = [df.source]
    for f in chain:
        pts.append(g.node_point(f % g.nx, f // g.nx))
    pts.append(tgt)
    return Polyline(pts)


def path_integral(w: ScalarField, gamma: Polyline) -> float:
    """Composite trapezoid integral of the interpolated field along a chain.

    Sub-sampling step is half the grid spacing, so fields that vary linearly
    along grid lines integrate exactly.
    """
    pts, wq = polyline_quadrature(gamma, w.grid.spacing_min / 2.0)
    if pts.shape[0] == 0:
        return 0.0
    return float(np.dot(wq, w.eval(pts)))


def distance_to_set(K, dom: Domain) -> ScalarField:
    """Euclidean distance from every grid node to the nearest point of K."""
    pts = np.atleast_2d(np.asarray(K, dtype=float))
    if pts.shape[0] == 0:
        raise GeometryError("distance_to_set needs a nonempty point set")
    d, _ = cKDTree(pts).query(dom.grid.node_coords())
    return ScalarField(dom.grid, d)
