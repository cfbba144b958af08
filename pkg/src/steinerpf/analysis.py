"""Post-processing: sublevel sets, Hausdorff distances, distance-field
comparison, and dyadic quantization of sampled measures."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from .core import DiscreteMeasure, Domain, GeometryError, ScalarField
from .geodesic import DistanceField, distance_to_set


def sublevel_set(u: ScalarField, t: float, dom: Domain) -> np.ndarray:
    """Discrete sublevel set {u <= t} as a point cloud.

    Core-region grid nodes with u <= t, plus the points where u crosses t
    along grid edges (linear interpolation), restricted to the core polygon.
    May be empty.
    """
    if not (0.0 < t < 1.0):
        raise GeometryError("threshold must lie in (0, 1)")
    g = dom.grid
    v = u.values
    coords = g.node_coords().reshape(g.ny, g.nx, 2)

    pts = [coords[(v <= t) & dom.in_omega0]]

    # horizontal edges with a sign change of u - t
    f = v - t
    cross = f[:, :-1] * f[:, 1:] < 0.0
    if np.any(cross):
        lam = f[:, :-1][cross] / (f[:, :-1][cross] - f[:, 1:][cross])
        base = coords[:, :-1, :][cross]
        p = base + np.column_stack([lam * g.hx, np.zeros_like(lam)])
        pts.append(p[dom.omega0.contains(p)])
    cross = f[:-1, :] * f[1:, :] < 0.0
    if np.any(cross):
        lam = f[:-1, :][cross] / (f[:-1, :][cross] - f[1:, :][cross])
        base = coords[:-1, :, :][cross]
        p = base + np.column_stack([np.zeros_like(lam), lam * g.hy])
        pts.append(p[dom.omega0.contains(p)])

    out = np.vstack([a for a in pts if a.size]) if any(a.size for a in pts) else np.zeros((0, 2))
    return out


def hausdorff(A, B) -> float:
    """Hausdorff distance between two nonempty finite point sets."""
    a = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_2d(np.asarray(B, dtype=float))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise GeometryError("hausdorff needs nonempty point sets")
    ta, tb = cKDTree(a), cKDTree(b)
    d_ab = tb.query(a)[0].max()
    d_ba = ta.query(b)[0].max()
    return float(max(d_ab, d_ba))


def compare_distance_fields(df: DistanceField, K, dom: Domain) -> float:
    """Sup over core nodes of |geodesic distance - Euclidean distance to K|."""
    ref = distance_to_set(K, dom)
    mask = dom.in_omega0
    diff = np.abs(df.field.values[mask] - ref.values[mask])
    return float(diff.max())


def quantize_measure(density_samples, k: int,
                     base_point=None) -> DiscreteMeasure:
    """Bin sampled mass into dyadic half-open squares of side 2**-k.

    Every nonempty square contributes one atom at the mass-weighted mean of
    its samples (which lies in the square and, for samples from a convex
    region, in that region) carrying the square's total mass.  Total mass is
    conserved and atom positions sit within the square diameter of their
    samples.
    """
    pts = np.atleast_2d(np.asarray([p for p, _ in density_samples], dtype=float))
    masses = np.asarray([m for _, m in density_samples], dtype=float)
    if np.any(masses < 0.0):
        raise GeometryError("sample masses must be nonnegative")
    keep = masses > 0.0
    pts, masses = pts[keep], masses[keep]
    if masses.size == 0 or masses.sum() <= 0.0:
        raise GeometryError("total mass must be positive")

    side = 2.0**-k
    cells = np.floor(pts / side).astype(np.int64)
    order = np.lexsort((cells[:, 1], cells[:, 0]))
    cells, pts, masses = cells[order], pts[order], masses[order]
    atoms, weights = [], []
    start = 0
    for i in range(1, len(masses) + 1):
        if i == len(masses) or np.any(cells[i] != cells[start]):
            m = masses[start:i]
            w = float(math.fsum(m))
            mean = (pts[start:i] * m[:, None]).sum(axis=0) / w
            atoms.append(mean)
            weights.append(w)
            start = i
    if base_point is None:
        base_point = atoms[int(np.argmax(weights))]
    return DiscreteMeasure(atoms, weights, base_point)
