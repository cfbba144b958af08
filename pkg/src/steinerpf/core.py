"""Shared problem data: parameters, domain geometry, grid fields, and curves.

Everything here is immutable after construction and safe to share across
threads; the solver modules treat these objects as read-only values.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Margin factor: the computational box inflates the bounding box of the core
# region by this fraction of its diameter on every side.  The box boundary
# only has to stay well clear of the curves, so the exact value is a
# convention; 0.5 keeps boundary effects negligible at the grid sizes the
# bundled experiments use.
ETA0_FACTOR = 0.5

# Points closer than this (in index units) to a grid node evaluate to the
# stored node value exactly.
_NODE_SNAP = 1e-9


class ParameterError(ValueError):
    """Solver parameter outside its admissible open range."""


class GeometryError(ValueError):
    """Invalid polygon, point outside the core region, or malformed curve."""


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class Params:
    """Phase-field parameter pack.

    ``delta`` is tied to ``lam`` through ``delta = lam ** beta_exp`` with
    ``beta_exp`` in (1, 2), and ``lambda_cap = 2 + 3/delta`` is the Ahlfors
    ratio threshold above which excising an arc and bridging it with a chord
    is guaranteed to lower the energy.
    """

    epsilon: float
    lam: float
    delta: float
    beta_exp: float
    lambda_cap: float


def make_params(lam: float, beta_exp: float, epsilon: float) -> Params:
    """Build a :class:`Params` from the coupling rule ``delta = lam**beta_exp``."""
    if not (0.0 < lam < 1.0):
        raise ParameterError(f"lam must lie in the open interval (0, 1), got {lam}")
    if not (0.0 < epsilon < 1.0):
        raise ParameterError(
            f"epsilon must lie in the open interval (0, 1), got {epsilon}"
        )
    if not (1.0 < beta_exp < 2.0):
        raise ParameterError(
            f"beta_exp must lie in the open interval (1, 2), got {beta_exp}"
        )
    delta = lam**beta_exp
    return Params(
        epsilon=float(epsilon),
        lam=float(lam),
        delta=float(delta),
        beta_exp=float(beta_exp),
        lambda_cap=2.0 + 3.0 / delta,
    )


# ---------------------------------------------------------------------------
# geometry


class ConvexPolygon:
    """Closed convex polygon with counterclockwise vertices."""

    def __init__(self, vertices: Sequence[Sequence[float]]):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise GeometryError("polygon needs at least 3 two-dimensional vertices")
        if np.any(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1) == 0.0):
            raise GeometryError("polygon has repeated consecutive vertices")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        scale = float(np.max(np.abs(e))) ** 2
        if np.any(cross < -1e-12 * max(scale, 1.0)):
            raise GeometryError("vertices must be convex and counterclockwise")
        self.vertices = v
        self._edge_origin = v
        self._edge_dir = e

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Vectorized closed-hull membership test (boundary counts as inside)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        rel = p[:, None, :] - self._edge_origin[None, :, :]
        cross = self._edge_dir[None, :, 0] * rel[:, :, 1] - self._edge_dir[None, :, 1] * rel[:, :, 0]
        slack = tol * (1.0 + float(np.max(np.abs(self.vertices))))
        return np.all(cross >= -slack, axis=1)

    def contains_point(self, point, tol: float = 1e-12) -> bool:
        return bool(self.contains(np.asarray(point, dtype=float)[None, :], tol)[0])

    def diameter(self) -> float:
        v = self.vertices
        d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=2)
        return float(np.sqrt(d2.max()))

    def bbox(self):
        v = self.vertices
        return float(v[:, 0].min()), float(v[:, 0].max()), float(v[:, 1].min()), float(v[:, 1].max())


def point_in_omega0(p, poly: ConvexPolygon) -> bool:
    """True iff ``p`` lies in the closed convex hull of the polygon vertices."""
    return poly.contains_point(p)


# ---------------------------------------------------------------------------
# grid and fields


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian lattice; node (ix, iy) sits at (x0+ix*hx, y0+iy*hy)."""

    x0: float
    y0: float
    hx: float
    hy: float
    nx: int
    ny: int

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def spacing_min(self) -> float:
        return min(self.hx, self.hy)

    def node_coords(self) -> np.ndarray:
        """All node positions as an (nx*ny, 2) array, y-major order."""
        xs = self.x0 + self.hx * np.arange(self.nx)
        ys = self.y0 + self.hy * np.arange(self.ny)
        xx, yy = np.meshgrid(xs, ys)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def _locate(self, s: np.ndarray, n: int):
        i = np.floor(s).astype(np.int64)
        t = s - i
        hi = t > 1.0 - _NODE_SNAP
        i = np.where(hi, i + 1, i)
        t = np.where(hi | (t < _NODE_SNAP), 0.0, t)
        cell = np.clip(i, 0, n - 2)
        return cell, t + (i - cell)

    def bilinear_stencil(self, points: np.ndarray):
        """Flat node indices (m,4) and weights (m,4) of the bilinear stencil.

        The same arithmetic backs field evaluation and the curve mass form,
        so quadratures of interpolated quantities agree bit-for-bit.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        cx, tx = self._locate((p[:, 0] - self.x0) / self.hx, self.nx)
        cy, ty = self._locate((p[:, 1] - self.y0) / self.hy, self.ny)
        base = cy * self.nx + cx
        idx = np.column_stack([base, base + 1, base + self.nx, base + self.nx + 1])
        coef = np.column_stack(
            [(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty]
        )
        return idx, coef

    def nearest_node(self, point) -> tuple[int, int]:
        p = np.asarray(point, dtype=float)
        ix = int(np.clip(round((p[0] - self.x0) / self.hx), 0, self.nx - 1))
        iy = int(np.clip(round((p[1] - self.y0) / self.hy), 0, self.ny - 1))
        return ix, iy

    def node_point(self, ix: int, iy: int) -> np.ndarray:
        return np.array([self.x0 + ix * self.hx, self.y0 + iy * self.hy])


class ScalarField:
    """Grid-sampled function with bilinear interpolation off the nodes."""

    def __init__(self, grid: Grid, values: np.ndarray):
        vals = np.asarray(values, dtype=float)
        if vals.size != grid.n_nodes:
            raise GeometryError(
                f"field needs {grid.n_nodes} values, got {vals.size}"
            )
        self.grid = grid
        self.values = vals.reshape(grid.ny, grid.nx)

    def eval(self, points: np.ndarray) -> np.ndarray:
        idx, coef = self.grid.bilinear_stencil(points)
        flat = self.values.ravel()
        return (flat[idx] * coef).sum(axis=1)

    def eval_one(self, point) -> float:
        return float(self.eval(np.asarray(point, dtype=float)[None, :])[0])

    def copy_with(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)


def dump_field(f: ScalarField, path) -> None:
    """Write the text dump: header line, then node values y-major, x inner."""
    g = f.grid
    with open(path, "w") as fh:
        fh.write(f"field {g.nx} {g.ny} {g.x0!r} {g.y0!r} {g.hx!r} {g.hy!r}\n")
        for row in f.values:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_field(path) -> ScalarField:
    with open(path) as fh:
        head = fh.readline().split()
        if not head or head[0] != "field":
            raise GeometryError(f"{path} is not a field dump")
        nx, ny = int(head[1]), int(head[2])
        x0, y0, hx, hy = (float(t) for t in head[3:7])
        vals = np.loadtxt(io.StringIO(fh.read())).reshape(ny, nx)
    return ScalarField(Grid(x0, y0, hx, hy, nx, ny), vals)


# ---------------------------------------------------------------------------
# domain


class Domain:
    """Core polygon, inflated bounding box, grid, and node masks."""

    def __init__(self, omega0: ConvexPolygon, grid: Grid, eta0: float):
        self.omega0 = omega0
        self.grid = grid
        self.eta0 = float(eta0)
        if grid.nx < 8 or grid.ny < 8:
            raise GeometryError("grid must have at least 8 nodes per direction")
        coords = grid.node_coords()
        self.in_omega0 = omega0.contains(coords).reshape(grid.ny, grid.nx)
        bnd = np.zeros((grid.ny, grid.nx), dtype=bool)
        bnd[0, :] = bnd[-1, :] = True
        bnd[:, 0] = bnd[:, -1] = True
        self.boundary = bnd
        self._edges = None
        self._stiffness = None

    @staticmethod
    def build(omega0: ConvexPolygon, nx: int, ny: int | None = None,
              eta0: float | None = None) -> "Domain":
        if ny is None:
            ny = nx
        if eta0 is None:
            eta0 = ETA0_FACTOR * omega0.diameter()
        if eta0 <= 0.0:
            raise GeometryError("eta0 must be positive")
        xmin, xmax, ymin, ymax = omega0.bbox()
        x0, x1 = xmin - eta0, xmax + eta0
        y0, y1 = ymin - eta0, ymax + eta0
        grid = Grid(x0, y0, (x1 - x0) / (nx - 1), (y1 - y0) / (ny - 1), nx, ny)
        return Domain(omega0, grid, eta0)

    def field(self, values) -> ScalarField:
        return ScalarField(self.grid, values)

    def constant_field(self, c: float) -> ScalarField:
        return ScalarField(self.grid, np.full(self.grid.n_nodes, float(c)))

    def nearest_inside_node(self, point) -> tuple[int, int]:
        """Nearest grid node flagged inside the core polygon."""
        g = self.grid
        ix, iy = g.nearest_node(point)
        if self.in_omega0[iy, ix]:
            return ix, iy
        coords = g.node_coords()[self.in_omega0.ravel()]
        if coords.size == 0:
            raise GeometryError("no grid nodes inside the core polygon")
        p = np.asarray(point, dtype=float)
        k = int(np.argmin(np.sum((coords - p) ** 2, axis=1)))
        flat = np.flatnonzero(self.in_omega0.ravel())[k]
        return int(flat % g.nx), int(flat // g.nx)

    # Stiffness of the five-point gradient form: u^T K u equals
    # sum over horizontal links of (hy/hx)(du)^2 plus the vertical analogue.
    def stiffness(self):
        if self._stiffness is None:
            import scipy.sparse as sp

            g = self.grid

            def second_diff(n):
                d = sp.diags(
                    [np.full(n - 1, -1.0), np.r_[1.0, np.full(n - 2, 2.0), 1.0],
                     np.full(n - 1, -1.0)],
                    offsets=[-1, 0, 1], format="csr",
                )
                return d

            kx = sp.kron(sp.identity(g.ny), second_diff(g.nx)) * (g.hy / g.hx)
            ky = sp.kron(second_diff(g.ny), sp.identity(g.nx)) * (g.hx / g.hy)
            self._stiffness = (kx + ky).tocsr()
        return self._stiffness


# ---------------------------------------------------------------------------
# measures


class DiscreteMeasure:
    """Finite positive combination of point masses plus a base point."""

    def __init__(self, atoms, weights, base_point):
        pts = np.atleast_2d(np.asarray(atoms, dtype=float))
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        if pts.shape[0] != w.shape[0]:
            raise GeometryError("one weight per atom required")
        if np.any(w <= 0.0):
            raise GeometryError("atom weights must be positive")
        if pts.shape[0] == 0:
            raise GeometryError("measure needs at least one atom")
        self.atoms = pts
        self.weights = w
        self.base_point = np.asarray(base_point, dtype=float)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def validate_inside(self, poly: ConvexPolygon) -> None:
        ok = poly.contains(self.atoms)
        if not bool(np.all(ok)):
            raise GeometryError("all atoms must lie in the closed core polygon")
        if not poly.contains_point(self.base_point):
            raise GeometryError("base point must lie in the closed core polygon")


# ---------------------------------------------------------------------------
# curves


class Polyline:
    """Ordered vertex chain with cached segment and cumulative arc lengths.

    Consecutive duplicate vertices are dropped on construction; a fully
    degenerate input collapses to the 2-point chain [start, end].
    """

    def __init__(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if p.shape[0] < 2 or p.shape[1] != 2:
            raise GeometryError("polyline needs at least two 2-D points")
        keep = np.ones(p.shape[0], dtype=bool)
        keep[1:] = np.any(p[1:] != p[:-1], axis=1)
        q = p[keep]
        if q.shape[0] < 2:
            q = np.vstack([p[0], p[-1]])
        self.points = q
        self.seg_lengths = np.linalg.norm(q[1:] - q[:-1], axis=1)
        self.cum_lengths = np.concatenate([[0.0], np.cumsum(self.seg_lengths)])

    @property
    def length(self) -> float:
        return float(self.cum_lengths[-1])

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def point_at(self, s: float) -> np.ndarray:
        """Point at arc-length position ``s`` (clamped to [0, length])."""
        s = min(max(s, 0.0), self.length)
        k = int(np.searchsorted(self.cum_lengths, s, side="right")) - 1
        k = min(k, len(self.seg_lengths) - 1)
        if self.seg_lengths[k] == 0.0:
            return self.points[k].copy()
        t = (s - self.cum_lengths[k]) / self.seg_lengths[k]
        return self.points[k] + t * (self.points[k + 1] - self.points[k])


def polyline_length(gamma: Polyline) -> float:
    return gamma.length


def polyline_quadrature(gamma: Polyline, step: float):
    """Composite trapezoid nodes and weights along every segment.

    Each segment of length L is split into ceil(L/step) equal pieces; the
    weights of one segment sum to L exactly up to roundoff.  Returns a pair
    (points (m,2), weights (m,)); both empty for a degenerate chain.
    """
    pts_all = []
    w_all = []
    p = gamma.points
    for k, L in enumerate(gamma.seg_lengths):
        if L == 0.0:
            continue
        m = max(1, int(math.ceil(L / step)))
        t = np.linspace(0.0, 1.0, m + 1)
        pts = p[k] + t[:, None] * (p[k + 1] - p[k])
        w = np.full(m + 1, L / m)
        w[0] *= 0.5
        w[-1] *= 0.5
        pts_all.append(pts)
        w_all.append(w)
    if not pts_all:
        return np.zeros((0, 2)), np.zeros(0)
    return np.vstack(pts_all), np.concatenate(w_all)


class CurveBundle:
    """One curve per atom, each running from the base point to its atom."""

    def __init__(self, curves: Sequence[Polyline]):
        self.curves = list(curves)

    def __len__(self) -> int:
        return len(self.curves)

    def __getitem__(self, i: int) -> Polyline:
        return self.curves[i]

    def __iter__(self):
        return iter(self.curves)

    def replaced(self, i: int, curve: Polyline) -> "CurveBundle":
        out = list(self.curves)
        out[i] = curve
        return CurveBundle(out)

    def total_length(self) -> float:
        return float(sum(c.length for c in self.curves))

    def validate_measure(self, mu: DiscreteMeasure, tol: float = 1e-9) -> None:
        if len(self.curves) != mu.atoms.shape[0]:
            raise GeometryError("bundle must hold one curve per atom")
        for i, c in enumerate(self.curves):
            if (np.linalg.norm(c.start - mu.base_point) > tol
                    or np.linalg.norm(c.end - mu.atoms[i]) > tol):
                raise GeometryError(f"curve {i} endpoints do not match the measure")


def straight_bundle(mu: DiscreteMeasure) -> CurveBundle:
    """Straight chords from the base point to every atom."""
    return CurveBundle([Polyline([mu.base_point, a]) for a in mu.atoms])


def dump_polyline(gamma: Polyline, path) -> None:
    with open(path, "w") as fh:
        for x, y in gamma.points:
            fh.write(f"{float(x)!r} {float(y)!r}\n")


def load_polyline(path) -> Polyline:
    pts = np.loadtxt(path, ndmin=2)
    return Polyline(pts)
