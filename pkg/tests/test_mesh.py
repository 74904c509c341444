import numpy as np
import pytest
from hypothesis import given, strategies as st

from udfsw.errors import ParameterError, ParseError
from udfsw.mesh import (
    TriMesh, laplacian, laplacian_all, load_mesh, load_obj, load_ply, save_mesh, save_obj,
    save_ply, topology_stats, vertex_normals,
)

from conftest import grid_mesh, icosphere, torus_mesh


def hexagon_fan(center=(0.0, 0.0, 0.0)):
    ang = np.arange(6) * np.pi / 3
    ring = np.stack([np.cos(ang), np.sin(ang), np.zeros(6)], 1)
    V = np.vstack([center, ring])
    F = [[0, 1 + i, 1 + (i + 1) % 6] for i in range(6)]
    return TriMesh(V, F)


def reference_obj_parse(text):
    """Minimal independent OBJ reader: positional indices, negatives counted back."""
    V, F = [], []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            V.append(list(map(float, parts[1:4])))
        elif parts[0] == "f":
            ids = [int(p.split("/")[0]) for p in parts[1:]]
            ids = [i - 1 if i > 0 else len(V) + i for i in ids]
            for j in range(1, len(ids) - 1):
                F.append([ids[0], ids[j], ids[j + 1]])
    return np.array(V), np.array(F)


class TestTriMesh:
    def test_rejects_bad_faces(self):
        with pytest.raises(ValueError):
            TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])
        with pytest.raises(ValueError):
            TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 1]])

    def test_centroids_are_exact_means(self, sphere_mesh):
        V, F = sphere_mesh.vertices, sphere_mesh.faces
        assert np.array_equal(sphere_mesh.centroids, (V[F[:, 0]] + V[F[:, 1]] + V[F[:, 2]]) / 3)

    def test_centroids_follow_vertex_updates(self, sphere_mesh):
        m = sphere_mesh.copy()
        before = m.centroids.copy()
        m.vertices += 0.5
        assert np.allclose(m.centroids, before + 0.5)

    def test_neighbors(self):
        m = hexagon_fan()
        assert sorted(m.neighbors(0)) == [1, 2, 3, 4, 5, 6]
        assert sorted(m.neighbors(1)) == [0, 2, 6]


class TestLaplacian:
    def test_symmetric_ring_is_zero(self):
        assert np.allclose(laplacian(hexagon_fan(), 0), 0, atol=1e-15)

    def test_displacement_is_returned(self):
        d = np.array([0.1, -0.05, 0.2])
        assert np.allclose(laplacian(hexagon_fan(d), 0), d, atol=1e-15)

    def test_isolated_vertex(self):
        m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], [[0, 1, 2]])
        v, flag = laplacian(m, 3, return_flag=True)
        assert flag and np.all(v == 0)

    def test_matches_direct_summation(self, sphere_mesh, rng):
        X = sphere_mesh.vertices + rng.normal(0, 0.05, sphere_mesh.vertices.shape)
        L = laplacian_all(sphere_mesh, X)
        for i in rng.choice(sphere_mesh.n_vertices, 30, replace=False):
            nb = set(sphere_mesh.faces[(sphere_mesh.faces == i).any(axis=1)].ravel()) - {i}
            ref = X[i] - sum(X[j] for j in nb) / len(nb)
            assert np.abs(L[i] - ref).max() <= 1e-14
            assert np.abs(laplacian(sphere_mesh, i, X) - ref).max() <= 1e-14

    @given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
    def test_translation_invariant(self, tx, ty, tz):
        m = icosphere(1)
        L0 = laplacian_all(m)
        L1 = laplacian_all(m, m.vertices + [tx, ty, tz])
        assert np.allclose(L0, L1, atol=1e-12)

    @given(st.integers(0, 2**31 - 1))
    def test_permutation_equivariant(self, seed):
        rng = np.random.default_rng(seed)
        m = icosphere(1)
        perm = rng.permutation(m.n_vertices)
        inv = np.argsort(perm)
        pm = TriMesh(m.vertices[perm], inv[m.faces])
        assert np.allclose(laplacian_all(pm), laplacian_all(m)[perm], atol=1e-14)


class TestNormals:
    def test_cube_corner(self):
        V = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
        # three faces of a unit cube corner, wound outward (away from +octant)
        m = TriMesh(V, [[0, 2, 1], [0, 1, 3], [0, 3, 2]])
        assert np.allclose(vertex_normals(m)[0], -np.ones(3) / np.sqrt(3))

    def test_flat_fan(self):
        assert np.allclose(vertex_normals(hexagon_fan())[0], [0, 0, 1])

    def test_icosphere_angular_error(self):
        m = icosphere(3)
        n = vertex_normals(m)
        cos = (n * m.vertices).sum(axis=1) / np.linalg.norm(m.vertices, axis=1)
        assert np.degrees(np.arccos(np.clip(cos, -1, 1))).max() <= 5.0

    def test_zero_area_star_flagged(self):
        m = TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0], [1, 1, 0]], [[0, 1, 2], [3, 4, 0]])
        n, flags = vertex_normals(m, return_flags=True)
        assert flags[2] and np.all(n[2] == 0)
        assert not flags[3]


class TestTopologyStats:
    def test_closed_torus(self):
        s = topology_stats(torus_mesh())
        assert s.genus_per_component == [1] and s.genus == 1
        assert s.boundary_loops == 0 and s.non_manifold_edges == 0 and s.non_manifold_vertices == 0

    def test_sphere(self, sphere_mesh):
        s = topology_stats(sphere_mesh)
        assert s.genus == 0 and s.euler_per_component == [2]

    def test_bowtie(self):
        V = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [-1, 0, 0], [-1, -1, 0]]
        s = topology_stats(TriMesh(V, [[0, 1, 2], [0, 3, 4]]))
        assert s.non_manifold_vertices == 1
        assert s.boundary_loops == 2
        assert s.genus is None

    def test_fin(self):
        V = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
        s = topology_stats(TriMesh(V, [[0, 1, 2], [1, 0, 3], [0, 1, 4]]))
        assert s.non_manifold_edges == 1
        assert s.genus_per_component == [None]

    def test_open_grid(self):
        s = topology_stats(grid_mesh(4))
        assert s.boundary_loops == 1 and s.boundary_edges == 16
        assert s.genus == 0

    def test_genus_is_total_over_components(self):
        a, b = torus_mesh(), torus_mesh()
        V = np.vstack([a.vertices, b.vertices + 5])
        F = np.vstack([a.faces, b.faces + a.n_vertices])
        s = topology_stats(TriMesh(V, F))
        assert s.components == 2 and s.genus == 2

    def test_empty(self):
        s = topology_stats(TriMesh(np.zeros((0, 3)), np.zeros((0, 3), int)))
        assert s.components == 0


class TestIO:
    def test_obj_round_trip(self, tmp_path, rng):
        m = TriMesh(rng.normal(size=(50, 3)) * 1e-3, icosphere(0).faces.tolist() + [[20, 21, 22]])
        save_obj(m, tmp_path / "a.obj")
        out = load_obj(tmp_path / "a.obj")
        assert np.array_equal(out.vertices, m.vertices)
        assert np.array_equal(out.faces, m.faces)

    def test_obj_one_based(self, tmp_path):
        (tmp_path / "a.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        assert load_obj(tmp_path / "a.obj").faces.tolist() == [[0, 1, 2]]

    def test_obj_negative_indices_and_extras(self, tmp_path):
        text = (
            "mtllib x.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf -3/1/1 -2/1/1 -1/1/1\n"
            "v 1 1 0\nusemtl m\nf 2 4 -2\ng part\nv 2 2 0\nf -1 -2 -3 1\n"
        )
        (tmp_path / "a.obj").write_text(text)
        m = load_obj(tmp_path / "a.obj")
        V, F = reference_obj_parse("\n".join(
            ln for ln in text.splitlines() if ln.split()[0] in ("v", "f")))
        assert np.array_equal(m.vertices, V)
        assert np.array_equal(m.faces, F)

    @pytest.mark.parametrize("body,line", [
        ("v 0 0 0\nv 1 0\n", 2),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", 4),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n", 4),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", 4),
    ])
    def test_obj_errors_carry_line_numbers(self, tmp_path, body, line):
        (tmp_path / "a.obj").write_text(body)
        with pytest.raises(ParseError) as err:
            load_obj(tmp_path / "a.obj")
        assert err.value.line == line

    def test_ply_round_trip(self, tmp_path, sphere_mesh):
        save_ply(sphere_mesh, tmp_path / "a.ply")
        out = load_ply(tmp_path / "a.ply")
        assert np.array_equal(out.vertices, sphere_mesh.vertices)
        assert np.array_equal(out.faces, sphere_mesh.faces)
        assert (tmp_path / "a.ply").read_bytes().startswith(b"ply\nformat binary_little_endian 1.0\n")

    def test_extension_dispatch(self, tmp_path, sphere_mesh):
        for ext in ("obj", "ply"):
            save_mesh(sphere_mesh, tmp_path / f"m.{ext}")
            assert np.array_equal(load_mesh(tmp_path / f"m.{ext}").faces, sphere_mesh.faces)
        with pytest.raises(ParameterError):
            save_mesh(sphere_mesh, tmp_path / "m.stl")
