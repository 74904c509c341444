import numpy as np
import pytest
from hypothesis import given, strategies as st

from udfsw.errors import ParameterError
from udfsw.field import make_primitive_field, sample_grid
from udfsw.isoextract import marching_cubes
from udfsw.mesh import TriMesh
from udfsw.metrics import (
    SampleCloud, average_row, chamfer_distance, largest_remainder, mesh_report, reports_to_csv,
    reports_to_table, sample_mesh, systematic_counts,
)

from conftest import icosphere, torus_mesh


def brute_chamfer(a, b):
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    ab, ba = d.min(axis=1).mean(), d.min(axis=0).mean()
    return ab, ba, 0.5 * (ab + ba)


class TestChamfer:
    def test_identical(self, rng):
        a = rng.normal(size=(50, 3))
        c = chamfer_distance(a, a)
        assert (c.a_to_b, c.b_to_a, c.average) == (0, 0, 0)

    def test_single_points(self):
        c = chamfer_distance([[0.0, 0, 0]], [[0.25, 0, 0]])
        assert (c.a_to_b, c.b_to_a, c.average) == (0.25, 0.25, 0.25)

    @given(st.integers(0, 2**31 - 1))
    def test_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(-1, 1, (200, 3)), rng.uniform(-1, 1, (200, 3))
        c = chamfer_distance(a, b)
        ref = brute_chamfer(a, b)
        assert np.abs(np.array([c.a_to_b, c.b_to_a, c.average]) - ref).max() <= 1e-12

    def test_roles_swap(self, rng):
        a, b = rng.normal(size=(80, 3)), rng.normal(size=(60, 3))
        assert chamfer_distance(a, b).a_to_b == chamfer_distance(b, a).b_to_a

    @given(st.integers(0, 2**31 - 1))
    def test_rigid_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(100, 3)), rng.normal(size=(100, 3))
        q, r = np.linalg.qr(rng.normal(size=(3, 3)))
        t = rng.normal(size=3)
        c0 = chamfer_distance(a, b).average
        c1 = chamfer_distance(a @ q.T + t, b @ q.T + t).average
        assert abs(c0 - c1) <= 1e-12

    @given(st.floats(1e-3, 1e3))
    def test_scaling(self, s):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(100, 3)), rng.normal(size=(100, 3))
        c0, c1 = chamfer_distance(a, b), chamfer_distance(a * s, b * s)
        for x, y in ((c0.a_to_b, c1.a_to_b), (c0.b_to_a, c1.b_to_a), (c0.average, c1.average)):
            assert y == pytest.approx(s * x, rel=1e-12)

    def test_squared_flag(self):
        c = chamfer_distance([[0.0, 0, 0]], [[0.5, 0, 0]], squared=True)
        assert c.average == 0.25

    def test_empty(self):
        with pytest.raises(ParameterError):
            chamfer_distance(np.zeros((0, 3)), [[0.0, 0, 0]])


class TestSampling:
    def test_deterministic_and_count(self, sphere_mesh):
        a = sample_mesh(sphere_mesh, 1000, seed=3)
        b = sample_mesh(sphere_mesh, 1000, seed=3)
        assert len(a) == 1000 and np.array_equal(a.points, b.points)
        assert not np.array_equal(a.points, sample_mesh(sphere_mesh, 1000, seed=4).points)

    def test_points_on_faces(self):
        m = torus_mesh()
        pts = sample_mesh(m, 500).points
        from udfsw.field import MeshField
        assert MeshField(m.vertices, m.faces).value(pts).max() < 1e-12

    @given(st.integers(0, 2**31 - 1), st.integers(1, 5000))
    def test_systematic_counts(self, seed, n):
        rng = np.random.default_rng(seed)
        w = rng.exponential(size=rng.integers(1, 300))
        c = systematic_counts(w, n, np.random.default_rng(seed))
        quota = n * w / w.sum()
        assert c.sum() == n
        assert np.all(c >= np.floor(quota - 1e-9)) and np.all(c <= np.ceil(quota + 1e-9))

    def test_systematic_counts_unbiased(self):
        w = np.array([1.0, 10.0, 1.0, 1.0])
        mean = np.mean([systematic_counts(w, 3, np.random.default_rng(s)) for s in range(4000)], axis=0)
        assert np.allclose(mean, 3 * w / w.sum(), atol=0.03)

    def test_largest_remainder(self):
        assert largest_remainder([1, 1, 1], 10).tolist() == [4, 3, 3]
        assert largest_remainder([0.5, 0.25, 0.25], 4).tolist() == [2, 1, 1]
        with pytest.raises(ParameterError):
            largest_remainder([0, 0], 3)

    def test_area_proportional(self):
        # two coplanar triangles, areas 1:3
        V = [[0, 0, 0], [1, 0, 0], [0, 2, 0], [3, 0, 0], [5, 0, 0], [3, 3, 0]]
        m = TriMesh(V, [[0, 1, 2], [3, 4, 5]])
        pts = sample_mesh(m, 4000).points
        assert (pts[:, 0] < 2).sum() == 1000


class TestReport:
    def test_mc_sphere(self):
        f = make_primitive_field("sphere")
        # r just under one cell keeps the two sheets apart at 64^3
        mesh = marching_cubes(sample_grid(f, 64), 0.012)
        rep = mesh_report(mesh, f.sample_surface(10_000))
        assert rep.boundaries == 0 and rep.nm_vertices == 0 and rep.nm_edges == 0
        assert rep.genus == 0 and rep.components == 2
        assert rep.cd_avg <= 1 / 63

    def test_deleted_triangle(self, sphere_mesh):
        m = TriMesh(sphere_mesh.vertices, sphere_mesh.faces[1:])
        assert mesh_report(m, sphere_mesh).boundaries == 1

    def test_deterministic(self, sphere_mesh):
        gt = SampleCloud(icosphere(3, 1.01).vertices)
        assert mesh_report(sphere_mesh, gt, seed=5).cd_avg == mesh_report(sphere_mesh, gt, seed=5).cd_avg

    def test_rows_and_tables(self, sphere_mesh):
        row = mesh_report(sphere_mesh, sphere_mesh).row()
        assert row["cd_avg"] >= 0 and row["genus"] == 0
        bad = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]],
                      [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
        row2 = mesh_report(bad, bad).row()
        assert row2["genus"] == "n/a"
        avg = average_row([row, row2])
        assert avg["genus"] == 0.0 and avg["faces"] == (320 + 3) / 2
        csv = reports_to_csv([row, row2, avg], ["a", "b", "avg."])
        lines = csv.splitlines()
        assert lines[0].startswith("model,cd_gt_to_pred,cd_pred_to_gt,cd_avg,nm_vertices")
        assert lines[3].startswith("avg.,")
        assert "n/a" in lines[2]
        assert "avg." in reports_to_table([row, avg], ["a", "avg."])
