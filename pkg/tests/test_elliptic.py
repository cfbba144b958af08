import numpy as np
import pytest

from steinerpf.core import (
    ConvexPolygon,
    CurveBundle,
    DiscreteMeasure,
    Domain,
    Polyline,
    ScalarField,
    make_params,
    straight_bundle,
)
from steinerpf.elliptic import (
    curve_mass_form,
    curve_metric_integral,
    diffuse_energy,
    dump_triplets,
    solve_potential,
)
from steinerpf.geodesic import path_integral


def unit_square():
    return ConvexPolygon([[0, 0], [1, 0], [1, 1], [0, 1]])


def segment_problem(n=65, beta=1.0):
    poly = unit_square()
    dom = Domain.build(poly, n)
    mu = DiscreteMeasure([[0.8, 0.5]], [beta], [0.2, 0.5])
    return dom, mu, straight_bundle(mu)


class TestCurveMassForm:
    def test_degenerate_zero_form(self):
        poly = unit_square()
        dom = Domain.build(poly, 33)
        mu = DiscreteMeasure([[0.5, 0.5]], [2.0], [0.5, 0.5])
        bundle = CurveBundle([Polyline([[0.5, 0.5], [0.5, 0.5]])])
        form = curve_mass_form(bundle, mu, dom)
        assert form.matrix.nnz == 0
        assert form.total_weighted_length == 0.0

    def test_partition_of_unity_identity(self):
        # B(1,1) equals the weighted curve length
        dom, _, _ = segment_problem(65)
        rng = np.random.default_rng(0)
        pts = rng.uniform(0.15, 0.85, size=(4, 2))
        bundle = CurveBundle([Polyline([[0.2, 0.5], p]) for p in pts[:2]]
                             + [Polyline([[0.2, 0.5], pts[2], pts[3]])])
        mu = DiscreteMeasure([pts[0], pts[1], pts[3]], [1.0, 2.5, 0.7], [0.2, 0.5])
        form = curve_mass_form(bundle, mu, dom)
        ones = np.ones(dom.grid.n_nodes)
        expect = sum(b * c.length for b, c in zip(mu.weights, bundle))
        assert form.apply(ones, ones) == pytest.approx(expect, rel=1e-10)
        assert form.total_weighted_length == pytest.approx(expect, rel=1e-10)

    def test_symmetry_and_psd(self):
        dom, mu, bundle = segment_problem(33)
        form = curve_mass_form(bundle, mu, dom)
        diff = (form.matrix - form.matrix.T)
        assert abs(diff).max() <= 1e-14
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.normal(size=dom.grid.n_nodes)
            assert form.apply(x, x) >= -1e-12

    def test_quadratic_form_matches_path_integral(self):
        # two quadratures of the same curve integral: stencil products of the
        # interpolant against the interpolated node-squared field
        dom, mu, bundle = segment_problem(129)
        coords = dom.grid.node_coords()
        uvals = 0.8 + 0.01 * coords[:, 0]
        u = ScalarField(dom.grid, uvals)
        form = curve_mass_form(bundle, mu, dom)
        quad = form.apply(u.values.ravel(), u.values.ravel())
        w2 = ScalarField(dom.grid, uvals**2)
        assert quad == pytest.approx(path_integral(w2, bundle[0]), rel=1e-8)

    def test_row_support_near_curve(self):
        dom, mu, bundle = segment_problem(33)
        form = curve_mass_form(bundle, mu, dom)
        rows = np.unique(form.matrix.tocoo().row)
        coords = dom.grid.node_coords()[rows]
        # the segment is y = 0.5, x in [0.2, 0.8]
        assert np.all(np.abs(coords[:, 1] - 0.5) <= dom.grid.hy + 1e-12)
        assert np.all(coords[:, 0] >= 0.2 - dom.grid.hx - 1e-12)
        assert np.all(coords[:, 0] <= 0.8 + dom.grid.hx + 1e-12)

    def test_triplet_dump(self, tmp_path):
        dom, mu, bundle = segment_problem(17)
        form = curve_mass_form(bundle, mu, dom)
        path = tmp_path / "b.txt"
        dump_triplets(form, path)
        rows = np.loadtxt(path)
        assert rows.shape[1] == 3
        assert rows.shape[0] == form.matrix.nnz


class TestSolvePotential:
    def test_degenerate_bundle_gives_one(self):
        poly = unit_square()
        dom = Domain.build(poly, 33)
        mu = DiscreteMeasure([[0.4, 0.4]], [1.0], [0.4, 0.4])
        bundle = CurveBundle([Polyline([[0.4, 0.4], [0.4, 0.4]])])
        sol = solve_potential(bundle, mu, make_params(0.1, 1.5, 0.1), dom)
        assert np.abs(1.0 - sol.u.values).max() <= 1e-9

    def test_bounds_and_boundary(self):
        dom, mu, bundle = segment_problem(65)
        params = make_params(0.06, 1.5, 0.06)
        sol = solve_potential(bundle, mu, params, dom)
        v = sol.u.values
        assert v.min() >= -1e-9
        assert v.max() <= 1.0 + 1e-9
        assert np.all(v[0, :] == 1.0) and np.all(v[-1, :] == 1.0)
        assert np.all(v[:, 0] == 1.0) and np.all(v[:, -1] == 1.0)
        assert sol.residual <= 1e-9

    def test_weak_coupling_limit(self):
        # potential tends to 1 uniformly as the atom weight vanishes
        params = make_params(0.06, 1.5, 0.06)
        gaps = []
        for beta in (1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001):
            dom, mu, bundle = segment_problem(65, beta=beta)
            sol = solve_potential(bundle, mu, params, dom)
            gaps.append(np.abs(1.0 - sol.u.values).max())
        assert all(a > b for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 0.05

    def test_exponential_decay_bound(self):
        # 1 - u <= exp(-3 dist / 32 eps) wherever dist >= 12 eps
        poly = unit_square()
        dom = Domain.build(poly, 129)
        eps = 0.06
        assert dom.grid.spacing_min <= eps / 3.0
        mu = DiscreteMeasure([[0.8, 0.5]], [1.0], [0.2, 0.5])
        bundle = straight_bundle(mu)
        params = make_params(0.1, 1.5, eps)
        sol = solve_potential(bundle, mu, params, dom)
        coords = dom.grid.node_coords()
        x = np.clip(coords[:, 0], 0.2, 0.8)
        dist = np.hypot(coords[:, 0] - x, coords[:, 1] - 0.5)
        mask = dist >= 12 * eps
        assert mask.any()
        bound = np.exp(-3.0 * dist[mask] / (32.0 * eps)) + 1e-6
        assert np.all(1.0 - sol.u.values.ravel()[mask] <= bound)

    def test_two_starts_agree(self):
        dom, mu, bundle = segment_problem(33)
        params = make_params(0.08, 1.5, 0.08)
        rng = np.random.default_rng(3)
        u1 = solve_potential(bundle, mu, params, dom,
                             initial=ScalarField(dom.grid, rng.uniform(0, 1, dom.grid.n_nodes)))
        u2 = solve_potential(bundle, mu, params, dom,
                             initial=ScalarField(dom.grid, rng.uniform(0, 1, dom.grid.n_nodes)))
        assert np.abs(u1.u.values - u2.u.values).max() <= 1e-8

    def test_energy_optimality_against_bumps(self):
        # the solved potential minimizes the recorded energy: interior bump
        # perturbations never lower it
        from steinerpf.optimizer import energy

        dom, mu, bundle = segment_problem(49)
        params = make_params(0.08, 1.5, 0.08)
        sol = solve_potential(bundle, mu, params, dom)
        base = energy(sol.u, bundle, mu, params, dom).total
        rng = np.random.default_rng(4)
        g = dom.grid
        for _ in range(10):
            cx, cy = rng.uniform(0.1, 0.9, size=2)
            coords = g.node_coords()
            bump = np.exp(-((coords[:, 0] - cx) ** 2 + (coords[:, 1] - cy) ** 2)
                          / (2 * 0.05**2))
            bump[dom.boundary.ravel()] = 0.0
            for t in (1e-3, -1e-3):
                pert = ScalarField(g, sol.u.values.ravel() + t * bump)
                assert energy(pert, bundle, mu, params, dom).total >= base - 1e-12

    def test_mirror_symmetry(self):
        poly = unit_square()
        dom = Domain.build(poly, 65)
        mu = DiscreteMeasure([[0.2, 0.3], [0.8, 0.3]], [1.0, 1.0], [0.5, 0.7])
        bundle = straight_bundle(mu)
        params = make_params(0.08, 1.5, 0.08)
        sol = solve_potential(bundle, mu, params, dom)
        assert np.abs(sol.u.values - sol.u.values[:, ::-1]).max() <= 1e-8


class TestDiffuseEnergy:
    def test_constant_one_is_zero(self):
        poly = unit_square()
        dom = Domain.build(poly, 33)
        params = make_params(0.1, 1.5, 0.1)
        assert diffuse_energy(dom.constant_field(1.0), params, dom) == 0.0

    def test_interface_profile_unit_energy(self):
        # the optimal transverse profile 1 - exp(-|y|/(2 eps)) around a long
        # straight interface carries unit energy per unit length
        poly = ConvexPolygon([[0, 0], [4, 0], [4, 1], [0, 1]])
        eps = 0.02
        dom = Domain.build(poly, 1025, 257, eta0=0.5)
        coords = dom.grid.node_coords()
        d = np.abs(coords[:, 1] - 0.5)
        u = ScalarField(dom.grid, 1.0 - np.exp(-d / (2 * eps)))
        params = make_params(0.05, 1.5, eps)
        got = diffuse_energy(u, params, dom)
        # interface spans the full box width
        length = dom.grid.hx * (dom.grid.nx - 1)
        assert got == pytest.approx(length, rel=0.02)

    def test_quadratic_field_convergence(self):
        # grid quadrature converges at second order on a smooth field
        poly = unit_square()
        params = make_params(0.1, 1.5, 0.25)

        def exact(dom):
            # u = x^2 + x y over the box, against eps |grad u|^2 + (u-1)^2/4eps
            x0, y0 = dom.grid.x0, dom.grid.y0
            x1 = x0 + (dom.grid.nx - 1) * dom.grid.hx
            y1 = y0 + (dom.grid.ny - 1) * dom.grid.hy
            import sympy as sp

            x, y = sp.symbols("x y")
            u = x**2 + x * y
            integrand = params.epsilon * ((sp.diff(u, x)) ** 2 + (sp.diff(u, y)) ** 2) \
                + (u - 1) ** 2 / (4 * params.epsilon)
            return float(sp.integrate(sp.integrate(integrand, (x, x0, x1)), (y, y0, y1)))

        errs = []
        for n in (17, 33, 65):
            dom = Domain.build(poly, n, eta0=0.5)
            coords = dom.grid.node_coords()
            u = ScalarField(dom.grid, coords[:, 0] ** 2 + coords[:, 0] * coords[:, 1])
            errs.append(abs(diffuse_energy(u, params, dom) - exact(dom)))
        assert errs[2] <= errs[0] / 8.0  # better than second order here


class TestMetricIntegral:
    def test_matches_mass_form_quadratic(self):
        dom, mu, bundle = segment_problem(65)
        params = make_params(0.1, 1.5, 0.1)
        rng = np.random.default_rng(5)
        u = ScalarField(dom.grid, rng.uniform(0, 1, dom.grid.n_nodes))
        form = curve_mass_form(bundle, mu, dom)
        quad = form.apply(u.values.ravel(), u.values.ravel())
        step = dom.grid.spacing_min / 2.0
        direct = curve_metric_integral(u, bundle[0], 0.0, step)
        assert direct == pytest.approx(quad, rel=1e-12)
