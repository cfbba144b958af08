"""Curve-bundle surgery: Ahlfors ratio scans, chord replacement, resampling,
and ball coverings of curve images.

Segment-ball clipping is exact (one quadratic per segment), so arc-in-ball
lengths carry no quadrature error; only the finite set of scanned centers
and radii is an approximation of the supremum over all balls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConvexPolygon, CurveBundle, Params, Polyline


class CurveError(ValueError):
    """Replacement center off the curve or malformed surgery request."""


def _clip_lengths(p0: np.ndarray, p1: np.ndarray, centers: np.ndarray, r: float):
    """Arc length of each segment [p0_s, p1_s] inside each closed ball.

    Returns a (n_centers, n_segments) matrix.  Exact: solves the quadratic
    |p0 + t (p1 - p0) - c|^2 = r^2 per pair and clips the root interval
    to [0, 1].
    """
    d = p1 - p0                                     # (S,2)
    a = np.sum(d * d, axis=1)[None, :]              # (1,S)
    rel = p0[None, :, :] - centers[:, None, :]      # (C,S,2)
    b = 2.0 * np.sum(rel * d[None, :, :], axis=2)   # (C,S)
    c = np.sum(rel * rel, axis=2) - r * r           # (C,S)
    disc = b * b - 4.0 * a * c
    seg_len = np.sqrt(a)
    out = np.zeros_like(b)
    pos = (disc > 0.0) & (a > 0.0)
    if np.any(pos):
        sq = np.sqrt(disc[pos])
        aa = np.broadcast_to(a, b.shape)[pos]
        t0 = (-b[pos] - sq) / (2.0 * aa)
        t1 = (-b[pos] + sq) / (2.0 * aa)
        lo = np.clip(t0, 0.0, 1.0)
        hi = np.clip(t1, 0.0, 1.0)
        out[pos] = (hi - lo) * np.broadcast_to(seg_len, b.shape)[pos]
    # zero-length segments inside the ball contribute nothing either way
    return out


def arc_length_in_ball(gamma: Polyline, center, r: float) -> float:
    """Exact length of the chain inside the closed ball B(center, r)."""
    c = np.asarray(center, dtype=float)[None, :]
    m = _clip_lengths(gamma.points[:-1], gamma.points[1:], c, float(r))
    return float(m.sum())


@dataclass
class AhlforsReport:
    worst_ratio: float
    witness: tuple  # (curve index, center, radius)


def scan_centers(gamma: Polyline) -> np.ndarray:
    """Vertices plus segment midpoints."""
    mids = 0.5 * (gamma.points[:-1] + gamma.points[1:])
    return np.vstack([gamma.points, mids])


def ahlfors_scan(gamma: Polyline, radii, curve_index: int = 0) -> AhlforsReport:
    """Max of (arc length inside ball)/radius over scanned centers and radii."""
    radii = list(radii)
    if not radii:
        raise CurveError("ahlfors_scan needs at least one radius")
    centers = scan_centers(gamma)
    p0, p1 = gamma.points[:-1], gamma.points[1:]
    worst = -np.inf
    witness = (curve_index, centers[0].copy(), float(radii[0]))
    for r in radii:
        lens = _clip_lengths(p0, p1, centers, float(r)).sum(axis=1)
        k = int(np.argmax(lens))
        ratio = float(lens[k]) / float(r)
        if ratio > worst:
            worst = ratio
            witness = (curve_index, centers[k].copy(), float(r))
    return AhlforsReport(worst_ratio=worst, witness=witness)


def radius_ladder(diam: float, h: float) -> list[float]:
    """Geometric ladder diam/2^j down to the grid scale."""
    if diam <= 0.0:
        return [max(h, 1e-12)]
    jmax = max(0, int(math.ceil(math.log2(max(diam / max(h, 1e-300), 1.0)))))
    return [diam / (2.0**j) for j in range(jmax + 1)]


def _first_hit(gamma: Polyline, center: np.ndarray, r: float):
    """Arc position and point of the first entry into the closed ball."""
    if np.linalg.norm(gamma.points[0] - center) <= r:
        return 0.0, gamma.points[0].copy()
    p0, p1 = gamma.points[:-1], gamma.points[1:]
    d = p1 - p0
    a = np.sum(d * d, axis=1)
    rel = p0 - center
    b = 2.0 * np.sum(rel * d, axis=1)
    c = np.sum(rel * rel, axis=1) - r * r
    disc = b * b - 4.0 * a * c
    for k in range(len(a)):
        if a[k] <= 0.0 or disc[k] < 0.0:
            continue
        t0 = (-b[k] - math.sqrt(disc[k])) / (2.0 * a[k])
        t1 = (-b[k] + math.sqrt(disc[k])) / (2.0 * a[k])
        if t1 < 0.0 or t0 > 1.0:
            continue
        t = max(t0, 0.0)
        s = gamma.cum_lengths[k] + t * gamma.seg_lengths[k]
        return float(s), gamma.points[k] + t * d[k]
    return None, None


def _last_hit(gamma: Polyline, center: np.ndarray, r: float):
    if np.linalg.norm(gamma.points[-1] - center) <= r:
        return gamma.length, gamma.points[-1].copy()
    rev = Polyline(gamma.points[::-1])
    s, p = _first_hit(rev, center, r)
    if s is None:
        return None, None
    return gamma.length - s, p


def polyline_point_distance(gamma: Polyline, p) -> float:
    """Euclidean distance from a point to the chain."""
    q = np.asarray(p, dtype=float)
    a, b = gamma.points[:-1], gamma.points[1:]
    d = b - a
    denom = np.sum(d * d, axis=1)
    t = np.zeros_like(denom)
    nz = denom > 0.0
    t[nz] = np.clip(np.sum((q - a[nz]) * d[nz], axis=1) / denom[nz], 0.0, 1.0)
    proj = a + t[:, None] * d
    return float(np.min(np.linalg.norm(proj - q, axis=1)))


def replace_arc(bundle: CurveBundle, i0: int, x, r: float,
                poly: ConvexPolygon, point_tol: float | None = None) -> CurveBundle:
    """Bridge the portion of curve i0 between its first entry into and last
    exit from B(x, r) with the straight chord between those two points.

    Endpoint conventions: a start point inside the ball enters at arc
    position 0, an end point inside exits at the full length.  The chord
    stays in the core polygon by convexity; all other curves are untouched.
    """
    gamma = bundle[i0]
    center = np.asarray(x, dtype=float)
    if point_tol is None:
        point_tol = 1e-9 * (1.0 + float(np.abs(gamma.points).max()))
    if polyline_point_distance(gamma, center) > point_tol:
        raise CurveError("replacement center is not on the target curve")
    s_in, a = _first_hit(gamma, center, float(r))
    if s_in is None:
        return bundle
    s_out, b = _last_hit(gamma, center, float(r))
    keep_head = gamma.points[gamma.cum_lengths[: len(gamma.points)] < s_in]
    tail_mask = gamma.cum_lengths[: len(gamma.points)] > s_out
    keep_tail = gamma.points[tail_mask]
    new_pts = np.vstack([keep_head, a[None, :], b[None, :], keep_tail])
    replaced = Polyline(new_pts)
    if not bool(np.all(poly.contains(replaced.points))):
        raise CurveError("replacement produced points outside the core polygon")
    return bundle.replaced(i0, replaced)


def enforce_ahlfors(bundle: CurveBundle, u, params: Params,
                    poly: ConvexPolygon) -> CurveBundle:
    """Replace arcs until every scanned ratio is below the cap 2 + 3/delta."""
    out, _ = enforce_ahlfors_counted(bundle, u, params, poly)
    return out


def enforce_ahlfors_counted(bundle: CurveBundle, u, params: Params,
                            poly: ConvexPolygon):
    """Like :func:`enforce_ahlfors` but also reports the replacement count.

    Violating witnesses are processed largest radius first, which maximizes
    the guaranteed energy drop per replacement.  Terminates because every
    replacement shortens the curve by at least (cap - 2) * r.
    """
    h = u.grid.spacing_min
    cap = params.lambda_cap
    count = 0
    limit = 10_000
    while True:
        hit = None
        for i, gamma in enumerate(bundle):
            if gamma.length == 0.0:
                continue
            diam = _point_diameter(gamma.points)
            centers = scan_centers(gamma)
            p0, p1 = gamma.points[:-1], gamma.points[1:]
            for r in radius_ladder(diam, h):
                lens = _clip_lengths(p0, p1, centers, r).sum(axis=1)
                k = int(np.argmax(lens))
                if lens[k] / r >= cap and (hit is None or r > hit[0]):
                    hit = (r, lens[k] / r, i, centers[k].copy())
                    break  # radii descend; the first hit is the largest r
        if hit is None:
            return bundle, count
        r, _, i, center = hit
        bundle = replace_arc(bundle, i, center, r, poly, point_tol=h / 2.0)
        count += 1
        if count > limit:
            raise CurveError("arc replacement did not reach a fixed point")


def _point_diameter(pts: np.ndarray) -> float:
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    return float(np.sqrt(d2.max()))


def reparametrize_constant_speed(gamma: Polyline, n_points: int) -> Polyline:
    """Resample at arc-length-equidistant positions; endpoints kept exactly."""
    if n_points < 2:
        raise CurveError("need at least two sample points")
    L = gamma.length
    if L == 0.0:
        return Polyline([gamma.start, gamma.end])
    s = np.linspace(0.0, L, n_points)
    pts = np.array([gamma.point_at(v) for v in s])
    pts[0] = gamma.start
    pts[-1] = gamma.end
    return Polyline(pts)


def tube_covering(gammas: CurveBundle, rho: float) -> list[tuple[np.ndarray, float]]:
    """Greedy 5r-style covering of the bundle image by closed balls.

    Centers are chosen on the curves at pairwise distance > 2*rho/5 until the
    radius-rho balls cover everything; the cardinality then satisfies
    card <= max(min(5*len/rho, 25*diam^2/rho^2), 1).
    """
    if rho <= 0.0:
        raise CurveError("tube radius must be positive")
    all_pts = np.vstack([c.points for c in gammas])
    diam = _point_diameter(all_pts)
    base = gammas[0].start
    if rho >= diam:
        return [(np.asarray(base, dtype=float).copy(), float(rho))]

    samples = []
    for c in gammas:
        if c.length == 0.0:
            samples.append(c.points[:1])
            continue
        n = max(2, int(math.ceil(c.length / (rho / 5.0))) + 1)
        s = np.linspace(0.0, c.length, n)
        samples.append(np.array([c.point_at(v) for v in s]))
    pts = np.vstack(samples)

    centers: list[np.ndarray] = []
    sep = 2.0 * rho / 5.0
    for p in pts:
        if all(np.linalg.norm(p - c) > sep for c in centers):
            centers.append(p)
    return [(c.copy(), float(rho)) for c in centers]
