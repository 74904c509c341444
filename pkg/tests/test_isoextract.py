import numpy as np
import pytest
from hypothesis import given, strategies as st

from udfsw.errors import ContractViolation, EmptyLevelSet
from udfsw.field import GridField, make_primitive_field, sample_grid
from udfsw.isoextract import CORNERS, EDGE_CORNERS, STANDARD_TABLE, marching_cubes, orient_outward
from udfsw.mesh import TriMesh, topology_stats

from conftest import icosphere


def canonical_faces(F):
    """Rotate each face so its smallest index comes first (winding preserved)."""
    k = np.argmin(F, axis=1)
    return np.stack([F[np.arange(len(F)), (k + j) % 3] for j in range(3)], 1)


def centroid_gradient_dots(mesh, field):
    g, flag = field.gradient(mesh.centroids, return_flags=True)
    return (g * mesh.face_normals()).sum(axis=1)[~flag]


class TestTable:
    def test_trivial_cases_are_empty(self):
        assert len(STANDARD_TABLE.case_triangles(0)) == 0
        assert len(STANDARD_TABLE.case_triangles(255)) == 0

    def test_every_other_case_emits_triangles(self):
        assert all(len(STANDARD_TABLE.case_triangles(c)) > 0 for c in range(1, 255))

    def test_winding_is_consistent_with_corner_signs(self):
        # every triangle's normal points to the same side (below -> above or
        # the reverse) in every case, so complementary cases are opposite
        signs = set()
        for c in range(1, 255):
            below = np.array([(c >> k) & 1 for k in range(8)], bool)
            for t in STANDARD_TABLE.case_triangles(c):
                P = [(CORNERS[EDGE_CORNERS[e, 0]] + CORNERS[EDGE_CORNERS[e, 1]]) / 2 for e in t]
                n = np.cross(P[1] - P[0], P[2] - P[0])
                d = np.zeros(3)
                for e in t:
                    a, b = EDGE_CORNERS[e]
                    d += (CORNERS[b] - CORNERS[a]) if below[a] else (CORNERS[a] - CORNERS[b])
                signs.add(np.sign(n @ d))
        assert len(signs) == 1

    def test_unambiguous_complements_are_reversed(self):
        def canon(t):
            i = t.index(min(t))
            return t[i:] + t[:i]

        checked = 0
        for c in range(1, 128):
            a = [tuple(t) for t in STANDARD_TABLE.case_triangles(c)]
            b = [tuple(t) for t in STANDARD_TABLE.case_triangles(255 - c)]
            if sorted(map(sorted, a)) != sorted(map(sorted, b)):
                continue  # ambiguous face: the table picks different splits
            assert {canon(t) for t in a} == {canon(t[::-1]) for t in b}
            checked += 1
        assert checked > 50


class TestMarchingCubes:
    def test_constant_grid_is_empty(self):
        with pytest.raises(EmptyLevelSet):
            marching_cubes(GridField(np.ones((8, 8, 8))), 0.005)

    def test_invalid_iso_value(self):
        with pytest.raises(ValueError):
            marching_cubes(GridField(np.ones((4, 4, 4))), 0.0)

    def test_sphere_double_cover(self):
        f = make_primitive_field("sphere", radius=0.3)
        mesh = marching_cubes(sample_grid(f, 64), 0.02)
        st_ = topology_stats(mesh)
        assert st_.components == 2
        assert st_.boundary_edges == 0
        assert st_.euler_per_component == [2, 2]
        assert st_.is_closed_manifold
        radii = np.linalg.norm(mesh.vertices, axis=1)
        _, comp = mesh.components()
        vcomp = np.zeros(mesh.n_vertices, int)
        vcomp[mesh.faces.ravel()] = np.repeat(comp, 3)
        means = sorted(radii[vcomp == c].mean() for c in range(2))
        assert means == pytest.approx([0.28, 0.32], abs=2e-3)

    def test_disk_single_closed_cover(self):
        mesh = marching_cubes(sample_grid(make_primitive_field("disk"), 64), 0.02)
        st_ = topology_stats(mesh)
        assert st_.components == 1 and st_.euler_per_component == [2]
        assert st_.is_closed_manifold

    def test_normals_point_up_the_field(self):
        f = make_primitive_field("sphere", radius=0.3)
        mesh = marching_cubes(sample_grid(f, 64), 0.02)
        dots = centroid_gradient_dots(mesh, f)
        assert (dots > 0).mean() >= 0.99
        # inner cover normals point toward the center
        inner = np.linalg.norm(mesh.centroids, axis=1) < 0.3
        radial = (mesh.face_normals()[inner] * mesh.centroids[inner]).sum(axis=1)
        assert (radial < 0).mean() >= 0.99

    def test_vertices_interpolate_the_iso_value(self):
        f = make_primitive_field("torus")
        grid = sample_grid(f, 48)
        r = 0.02
        mesh = marching_cubes(grid, r)
        # along a lattice edge, interpolation error is bounded by the edge spread
        h = grid.spacing
        u = (mesh.vertices - grid.bbox[0]) / h
        axis_frac = np.abs(u - np.round(u)) > 1e-9
        assert (axis_frac.sum(axis=1) <= 1).all()
        i0 = np.floor(u + 1e-12).astype(int)
        i1 = i0 + axis_frac.astype(int)
        lo = grid.values[tuple(i0.T)]
        hi = grid.values[tuple(i1.T)]
        assert (np.abs(grid.value(mesh.vertices) - r) <= np.abs(hi - lo) + 1e-12).all()

    @pytest.mark.parametrize("kind", ["torus", "cylinder_plane", "u_channel"])
    def test_clean_boundary_gives_closed_manifold(self, kind):
        mesh = marching_cubes(sample_grid(make_primitive_field(kind), 48), 0.02)
        assert topology_stats(mesh).is_closed_manifold

    def test_thread_count_does_not_change_output(self):
        grid = sample_grid(make_primitive_field("torus"), 40)
        a = marching_cubes(grid, 0.02)
        b = marching_cubes(grid, 0.02, threads=4)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.faces, b.faces)

    def test_no_degenerate_faces(self):
        mesh = marching_cubes(sample_grid(make_primitive_field("u_channel"), 40), 0.02)
        assert (mesh.face_areas() > 0).all()
        assert (mesh.faces[:, 0] != mesh.faces[:, 1]).all()

    def test_lattice_ties_are_deterministic(self):
        # many samples exactly at r
        vals = np.full((6, 6, 6), 0.05)
        vals[2:4, 2:4, 2:4] = 0.0
        vals[1, 1, 1] = 0.02
        mesh = marching_cubes(GridField(vals), 0.05)
        again = marching_cubes(GridField(vals), 0.05)
        assert np.array_equal(mesh.faces, again.faces)
        assert topology_stats(mesh).is_closed_manifold

    def test_resolution_refinement_reduces_radius_error(self):
        f = make_primitive_field("sphere", radius=0.3)
        errs = []
        for k in (32, 64):
            mesh = marching_cubes(sample_grid(f, k), 0.02)
            rr = np.linalg.norm(mesh.vertices, axis=1)
            target = np.where(rr > 0.3, 0.32, 0.28)
            errs.append(np.sqrt(np.mean((rr - target) ** 2)))
        assert errs[0] / errs[1] >= 1.8

    @given(st.integers(0, 10_000))
    def test_random_blobs_are_closed_manifolds(self, seed):
        rng = np.random.default_rng(seed)
        vals = rng.uniform(0, 1, (7, 7, 7))
        vals[[0, -1]] = 2.0
        vals[:, [0, -1]] = 2.0
        vals[:, :, [0, -1]] = 2.0
        try:
            mesh = marching_cubes(GridField(vals), 0.5, orient=False)
        except EmptyLevelSet:
            return
        st_ = topology_stats(mesh)
        assert st_.boundary_edges == 0 and st_.non_manifold_edges == 0


class TestOrient:
    def test_outward_sphere_unchanged(self):
        m = icosphere(2, 0.3)
        f = make_primitive_field("sphere", radius=0.1)  # field grows outward on this mesh
        out = orient_outward(m, f)
        assert np.array_equal(out.faces, m.faces)

    def test_flipped_input_restored(self):
        m = icosphere(2, 0.3)
        f = make_primitive_field("sphere", radius=0.1)
        flipped = TriMesh(m.vertices, m.faces[:, ::-1])
        out = orient_outward(flipped, f)
        assert np.array_equal(canonical_faces(out.faces), canonical_faces(m.faces))

    def test_mixed_winding_made_consistent(self):
        m = icosphere(2, 0.3)
        f = make_primitive_field("sphere", radius=0.1)
        F = m.faces.copy()
        F[::3] = F[::3, ::-1]
        out = orient_outward(TriMesh(m.vertices, F), f)
        assert (centroid_gradient_dots(out, f) > 0).all()

    def test_inner_sphere_points_inward(self):
        m = icosphere(3, 0.28)
        f = make_primitive_field("sphere", radius=0.3)
        out = orient_outward(m, f)
        assert (centroid_gradient_dots(out, f) > 0).mean() >= 0.99
        assert ((out.face_normals() * out.centroids).sum(axis=1) < 0).all()

    def test_non_manifold_rejected(self):
        V = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
        m = TriMesh(V, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
        with pytest.raises(ContractViolation):
            orient_outward(m, make_primitive_field("sphere"))
