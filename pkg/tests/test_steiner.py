import math

import numpy as np
import pytest

from steinerpf.steiner import (
    OracleError,
    SteinerTree,
    branch_angles,
    exact_steiner,
    fermat_point,
    mst_length,
)

THIRD = 2.0 * math.pi / 3.0


def tree_is_valid(tree: SteinerTree, angle_tol=1e-7):
    """Degree-3 branch points with pairwise 120-degree angles; terminals of
    degree at most 3; connected and acyclic."""
    n = len(tree.nodes)
    deg = [0] * n
    for i, j in tree.edges:
        deg[i] += 1
        deg[j] += 1
    for k in range(tree.n_terminals):
        assert 1 <= deg[k] <= 3
    for gaps in branch_angles(tree):
        assert len(gaps) == 3
        for g in gaps:
            assert abs(g - THIRD) <= angle_tol
    # spanning tree on the used nodes
    assert len(tree.edges) == n - 1
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in tree.edges:
        ri, rj = find(i), find(j)
        assert ri != rj  # acyclic
        parent[ri] = rj
    roots = {find(k) for k in range(n)}
    assert len(roots) == 1


class TestFermat:
    def test_equilateral(self):
        a, b, c = [0, 0], [1, 0], [0.5, math.sqrt(3) / 2]
        p, length = fermat_point(a, b, c)
        assert length == pytest.approx(math.sqrt(3), abs=1e-10)
        assert np.allclose(p, [0.5, math.sqrt(3) / 6], atol=1e-10)

    def test_wide_angle_vertex(self):
        # obtuse angle beyond 120 degrees at the origin
        a = np.array([0.0, 0.0])
        b = np.array([1.0, 0.0])
        c = np.array([np.cos(np.radians(150)), np.sin(np.radians(150))])
        p, length = fermat_point(a, b, c)
        assert np.allclose(p, a)
        assert length == pytest.approx(np.linalg.norm(b - a) + np.linalg.norm(c - a), rel=1e-12)

    def test_collinear_middle(self):
        p, length = fermat_point([0, 0], [1, 0], [2, 0])
        assert np.allclose(p, [1, 0])
        assert length == pytest.approx(2.0, rel=1e-12)

    def test_construction_matches_iteration(self):
        # the line-intersection initializer already lands where the
        # fixed-point iteration converges
        rng = np.random.default_rng(2)
        for _ in range(50):
            pts = rng.uniform(0, 1, size=(3, 2))
            angs = _triangle_angles(pts)
            if max(angs) >= THIRD:
                continue
            p, length = fermat_point(*pts)
            # stationarity: unit vectors toward the vertices cancel
            units = [(v - p) / np.linalg.norm(v - p) for v in pts]
            assert np.linalg.norm(np.sum(units, axis=0)) <= 1e-9
            brute = min(
                sum(np.linalg.norm(q - v) for v in pts)
                for q in rng.uniform(0, 1, size=(200, 2))
            )
            assert length <= brute + 1e-12


def _triangle_angles(pts):
    out = []
    for k in range(3):
        a, b, c = pts[k], pts[(k + 1) % 3], pts[(k + 2) % 3]
        v1, v2 = b - a, c - a
        cosv = np.dot(v1, v2) / (np.linalg.norm(v1) * np.linalg.norm(v2))
        out.append(math.acos(np.clip(cosv, -1, 1)))
    return out


class TestMST:
    def test_two_points(self):
        assert mst_length([[0, 0], [3, 4]]) == pytest.approx(5.0)

    def test_unit_square(self):
        assert mst_length([[0, 0], [1, 0], [1, 1], [0, 1]]) == pytest.approx(3.0, rel=1e-12)

    def test_equilateral(self):
        pts = [[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]
        assert mst_length(pts) == pytest.approx(2.0, rel=1e-12)


class TestExactSteiner:
    def test_two_points(self):
        tree = exact_steiner([[0, 0], [2, 1]])
        assert tree.length == pytest.approx(math.hypot(2, 1), rel=1e-12)
        assert tree.edges == [(0, 1)]

    def test_three_collinear(self):
        tree = exact_steiner([[0, 0], [1, 0], [2, 0]])
        assert tree.length == pytest.approx(2.0, rel=1e-12)
        assert len(tree.nodes) == 3  # no added branch point survives

    def test_equilateral_triangle(self):
        pts = [[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]
        tree = exact_steiner(pts)
        assert tree.length == pytest.approx(math.sqrt(3), abs=1e-9)
        tree_is_valid(tree)

    def test_unit_square_melzak_value(self):
        tree = exact_steiner([[0, 0], [1, 0], [1, 1], [0, 1]])
        assert tree.length == pytest.approx(1 + math.sqrt(3), abs=1e-9)
        assert len(list(tree.steiner_indices())) == 2
        tree_is_valid(tree)

    def test_square_against_direct_minimization(self):
        # independent check: minimize the two-branch-point length directly
        from scipy.optimize import minimize

        pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

        def length(z):
            s1, s2 = z[:2], z[2:]
            return (np.linalg.norm(pts[0] - s1) + np.linalg.norm(pts[3] - s1)
                    + np.linalg.norm(s1 - s2)
                    + np.linalg.norm(pts[1] - s2) + np.linalg.norm(pts[2] - s2))

        res = minimize(length, x0=[0.3, 0.5, 0.7, 0.5], method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 5000})
        tree = exact_steiner(pts)
        assert tree.length == pytest.approx(res.fun, abs=1e-8)

    def test_rejects_bad_input(self):
        with pytest.raises(OracleError):
            exact_steiner([[0, 0]])
        with pytest.raises(OracleError):
            exact_steiner([[0, 0], [1, 0], [0, 1], [1, 1], [2, 2]])
        with pytest.raises(OracleError):
            exact_steiner([[0, 0], [0, 0], [1, 1]])

    def test_random_instances_invariants(self):
        rng = np.random.default_rng(11)
        for trial in range(1000):
            n = 3 if trial % 2 == 0 else 4
            pts = rng.uniform(0, 1, size=(n, 2))
            if min(np.linalg.norm(pts[i] - pts[j])
                   for i in range(n) for j in range(i + 1, n)) < 1e-3:
                continue
            tree = exact_steiner(pts)
            tree_is_valid(tree)
            mst = mst_length(pts)
            assert tree.length <= mst + 1e-9
            assert tree.length >= mst / 2.0 - 1e-9

    def test_permutation_invariance(self):
        from itertools import permutations

        rng = np.random.default_rng(13)
        for _ in range(20):
            pts = rng.uniform(0, 1, size=(4, 2))
            lengths = [exact_steiner([pts[i] for i in perm]).length
                       for perm in permutations(range(4))]
            assert max(lengths) - min(lengths) <= 1e-12 * (1 + max(lengths))

    def test_scaling_rotation_equivariance(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            pts = rng.uniform(0, 1, size=(4, 2))
            base = exact_steiner(pts).length
            c = float(rng.uniform(0.5, 3.0))
            th = float(rng.uniform(0, 2 * np.pi))
            R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
            moved = (c * pts) @ R.T + rng.uniform(-1, 1, size=2)
            assert exact_steiner(moved).length == pytest.approx(c * base, rel=1e-10)

    def test_json_round_trip(self):
        tree = exact_steiner([[0, 0], [1, 0], [1, 1], [0, 1]])
        doc = tree.to_dict()
        assert set(doc) == {"nodes", "edges", "length"}
        assert doc["length"] == pytest.approx(tree.length)

    def test_sampling(self):
        tree = exact_steiner([[0, 0], [1, 0]])
        pts = tree.sample_points(0.1)
        assert pts.shape[0] >= 11
        assert np.all(np.abs(pts[:, 1]) < 1e-12)
