"""Assembly and solution of the potential equation for a fixed curve bundle.

The potential u minimizes, over fields equal to 1 on the box boundary,

    eps * (grad u, grad u) + 1/(4 eps) * (u-1, u-1) + 1/lam * B(u, u),

where B is the curve-supported form B(u, v) = sum_i beta_i int_curve_i u v.
Discretely: five-point stiffness for the gradient, node-lumped mass for the
(u-1) term (this keeps the matrix an M-matrix apart from the nonnegative
curve term, so the solution stays in [0, 1] to solver tolerance), and B
assembled from trapezoid quadrature points spread over bilinear stencils.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (
    CurveBundle,
    DiscreteMeasure,
    Domain,
    Params,
    Polyline,
    ScalarField,
    polyline_quadrature,
)


class SolverError(RuntimeError):
    """Conjugate gradient failed to reach the requested residual."""


CG_RTOL = 1e-10


@dataclass
class CurveMassForm:
    """Sparse symmetric matrix of the weighted curve form, plus the total
    weighted curve length (which equals B(1,1) up to roundoff)."""

    matrix: sp.csr_matrix
    total_weighted_length: float

    def apply(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ (self.matrix @ v))

    def triplets(self):
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data


def quadrature_step(dom: Domain) -> float:
    return dom.grid.spacing_min / 2.0


def curve_mass_form(bundle: CurveBundle, mu: DiscreteMeasure, dom: Domain,
                    step: float | None = None) -> CurveMassForm:
    """Assemble B from quadrature points at spacing <= half the grid step.

    Every quadrature point of weight w contributes w * phi_a * phi_b over its
    four-node stencil, scaled by the atom weight of its curve.
    """
    if step is None:
        step = quadrature_step(dom)
    g = dom.grid
    n = g.n_nodes
    rows, cols, vals = [], [], []
    total = 0.0
    for beta, gamma in zip(mu.weights, bundle):
        pts, wq = polyline_quadrature(gamma, step)
        if pts.shape[0] == 0:
            continue
        total += beta * float(wq.sum())
        idx, coef = g.bilinear_stencil(pts)
        scaled = coef * (beta * wq)[:, None]
        for a in range(4):
            for b in range(4):
                rows.append(idx[:, a])
                cols.append(idx[:, b])
                vals.append(scaled[:, a] * coef[:, b])
    if rows:
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        ).tocsr()
    else:
        mat = sp.csr_matrix((n, n))
    return CurveMassForm(matrix=mat, total_weighted_length=total)


def dump_triplets(form: CurveMassForm, path) -> None:
    """Text dump `i j value` of the assembled form, for external checking."""
    r, c, d = form.triplets()
    with open(path, "w") as fh:
        for i, j, v in zip(r, c, d):
            fh.write(f"{i} {j} {float(v)!r}\n")


@dataclass
class EllipticSolution:
    u: ScalarField
    iterations: int
    residual: float


def solve_potential(bundle: CurveBundle, mu: DiscreteMeasure, params: Params,
                    dom: Domain, initial: ScalarField | None = None) -> EllipticSolution:
    """Solve the potential equation with u = 1 on the box boundary.

    Weak form per interior node v:
        eps (grad u, grad v) + 1/(4 eps) (u, v) + 1/lam B(u, v) = 1/(4 eps) (1, v).
    The system is symmetric positive definite; Jacobi-preconditioned CG is
    run to relative residual 1e-10.
    """
    g = dom.grid
    eps, lam = params.epsilon, params.lam
    mass = g.hx * g.hy
    K = dom.stiffness()
    B = curve_mass_form(bundle, mu, dom).matrix
    A = (eps * K + (1.0 / lam) * B).tocsr()
    A = A + sp.diags(np.full(g.n_nodes, mass / (4.0 * eps)))

    bnd = dom.boundary.ravel()
    interior = ~bnd
    rhs_full = np.full(g.n_nodes, mass / (4.0 * eps))
    lift = np.where(bnd, 1.0, 0.0)
    rhs = rhs_full[interior] - (A @ lift)[interior]
    Aii = A[interior][:, interior].tocsr()

    diag = Aii.diagonal()
    precond = sp.diags(1.0 / diag)
    if initial is not None:
        x0 = initial.values.ravel()[interior]
    else:
        x0 = np.ones(int(interior.sum()))

    count = {"n": 0}

    def _cb(_xk):
        count["n"] += 1

    maxiter = 20 * (g.nx + g.ny)
    x, info = spla.cg(Aii, rhs, x0=x0, rtol=CG_RTOL, atol=0.0,
                      maxiter=maxiter, M=precond, callback=_cb)
    resid = float(np.linalg.norm(Aii @ x - rhs) / max(np.linalg.norm(rhs), 1e-300))
    if info != 0:
        raise SolverError(
            f"conjugate gradient stopped at iteration {count['n']} "
            f"with relative residual {resid:.3e}"
        )
    u = lift.copy()
    u[interior] = x
    return EllipticSolution(u=ScalarField(g, u), iterations=count["n"], residual=resid)


def diffuse_energy(u: ScalarField, params: Params, dom: Domain) -> float:
    """eps * sum of edge-midpoint |grad u|^2 plus 1/(4 eps) * trapezoid (u-1)^2.

    Edge terms use half weight along the box boundary lines and node masses
    use trapezoid corner/edge factors, which matches the assembled quadratic
    exactly on fields that are 1 on the boundary.
    """
    g = dom.grid
    v = u.values
    eps = params.epsilon

    wx = np.full((g.ny, 1), g.hy / g.hx)
    wx[0, 0] *= 0.5
    wx[-1, 0] *= 0.5
    dx2 = ((v[:, 1:] - v[:, :-1]) ** 2 * wx).sum()

    wy = np.full((1, g.nx), g.hx / g.hy)
    wy[0, 0] *= 0.5
    wy[0, -1] *= 0.5
    dy2 = ((v[1:, :] - v[:-1, :]) ** 2 * wy).sum()

    node_w = np.ones((g.ny, g.nx))
    node_w[0, :] *= 0.5
    node_w[-1, :] *= 0.5
    node_w[:, 0] *= 0.5
    node_w[:, -1] *= 0.5
    mass = ((v - 1.0) ** 2 * node_w).sum() * g.hx * g.hy

    return float(eps * (dx2 + dy2) + mass / (4.0 * eps))


def gradient_quadratic(u: ScalarField, dom: Domain) -> float:
    """u^T K u with the same five-point stiffness used in the solver."""
    flat = u.values.ravel()
    return float(flat @ (dom.stiffness() @ flat))


def curve_metric_integral(u: ScalarField, gamma: Polyline, delta: float,
                          step: float) -> float:
    """Trapezoid quadrature of delta + (interpolated u)^2 along the chain.

    Squaring happens after interpolation, so with the same step this agrees
    with u^T B u from :func:`curve_mass_form` to roundoff.
    """
    pts, wq = polyline_quadrature(gamma, step)
    if pts.shape[0] == 0:
        return 0.0
    vals = u.eval(pts)
    return float(delta * wq.sum() + np.dot(wq, vals * vals))
