"""Indexed triangle mesh with adjacency, differential quantities and I/O."""

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import ParameterError, ParseError

logger = logging.getLogger(__name__)


class TriMesh:
    """Triangle mesh with lazily built, face-keyed adjacency.

    Vertex positions may be edited in place (``mesh.vertices[...] = ...``);
    adjacency depends only on ``faces`` and is dropped whenever ``faces`` is
    reassigned.

    Parameters
    ----------
    vertices : (n, 3) array_like
    faces : (m, 3) array_like of int
    """

    def __init__(self, vertices, faces):
        self.vertices = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = faces

    @property
    def faces(self):
        return self._faces

    @faces.setter
    def faces(self, faces):
        F = np.array(faces, dtype=np.int64).reshape(-1, 3)
        if F.size and (F.min() < 0 or F.max() >= len(self.vertices)):
            raise ValueError("face index out of range")
        if F.size and ((F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2]) | (F[:, 0] == F[:, 2])).any():
            raise ValueError("face repeats a vertex")
        self._faces = F
        self._cache = {}

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self._faces)

    def copy(self):
        m = TriMesh.__new__(TriMesh)
        m.vertices = self.vertices.copy()
        m._faces = self._faces.copy()
        m._cache = dict(self._cache)
        return m

    def _cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    # ---------------------------------------------------------------- geometry

    @property
    def centroids(self):
        """Per-face centroids ``(v_a + v_b + v_c) / 3`` of the current positions."""
        X, F = self.vertices, self._faces
        return (X[F[:, 0]] + X[F[:, 1]] + X[F[:, 2]]) / 3.0

    def face_cross(self):
        """Unnormalized face normals (length = twice the face area)."""
        X, F = self.vertices, self._faces
        a = X[F[:, 0]]
        return np.cross(X[F[:, 1]] - a, X[F[:, 2]] - a)

    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_cross(), axis=1)

    def face_normals(self):
        c = self.face_cross()
        n = np.linalg.norm(c, axis=1, keepdims=True)
        return np.divide(c, n, out=np.zeros_like(c), where=n > 0)

    # ---------------------------------------------------------------- topology

    @property
    def edges(self):
        """Unique undirected edges, (E, 2) with ``e[:, 0] < e[:, 1]``."""
        return self._edge_data()[0]

    @property
    def face_edges(self):
        """(m, 3) edge ids; column ``k`` is edge ``(f[k], f[k+1])``."""
        return self._edge_data()[1]

    @property
    def edge_face_count(self):
        return self._edge_data()[2]

    def _edge_data(self):
        def build():
            F = self._faces
            a = F.ravel()
            b = np.roll(F, -1, axis=1).ravel()
            n = max(self.n_vertices, 1)
            key = np.minimum(a, b) * n + np.maximum(a, b)
            uk, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
            edges = np.stack([uk // n, uk % n], axis=1)
            return edges, inv.reshape(-1, 3), counts

        return self._cached("edges", build)

    @property
    def adjacency(self):
        """Symmetric vertex adjacency (n, n) CSR matrix of ones."""

        def build():
            e = self.edges
            n = self.n_vertices
            A = sparse.coo_matrix(
                (np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n)
            ).tocsr()
            A.data[:] = 1.0
            return A

        return self._cached("adjacency", build)

    @property
    def vertex_faces(self):
        """Vertex-face incidence (n, m) CSR matrix."""

        def build():
            F = self._faces
            m = len(F)
            return sparse.csr_matrix(
                (np.ones(3 * m), (F.ravel(), np.repeat(np.arange(m), 3))), shape=(self.n_vertices, m)
            )

        return self._cached("vertex_faces", build)

    @property
    def degree(self):
        return self._cached("degree", lambda: np.asarray(self.adjacency.sum(axis=1)).ravel())

    @property
    def laplacian_matrix(self):
        """Uniform Laplacian ``I - D^-1 A``; rows of isolated vertices are zero."""

        def build():
            deg = self.degree
            inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
            ident = sparse.diags((deg > 0).astype(np.float64))
            return (ident - sparse.diags(inv) @ self.adjacency).tocsr()

        return self._cached("laplacian", build)

    def neighbors(self, i):
        A = self.adjacency
        return A.indices[A.indptr[i]:A.indptr[i + 1]]

    def components(self):
        """Connected components over shared vertices: (count, label per face)."""

        def build():
            m = self.n_faces
            if m == 0:
                return 0, np.zeros(0, dtype=np.int64)
            # faces joined through shared vertices
            VF = self.vertex_faces
            G = (VF.T @ VF).tocsr()
            ncomp, labels = csgraph.connected_components(G, directed=False)
            return ncomp, labels

        return self._cached("components", build)

    def __repr__(self):
        return f"TriMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"


# --------------------------------------------------------------------------
# differential quantities


def laplacian(mesh, i, positions=None, return_flag=False):
    """Umbrella Laplacian ``x_i - mean(x_j for j in N(i))`` at one vertex.

    An isolated vertex gives the zero vector; with ``return_flag=True`` a
    second value reports whether the vertex was isolated.
    """
    X = mesh.vertices if positions is None else positions
    nb = mesh.neighbors(i)
    if len(nb) == 0:
        out = np.zeros(3)
        return (out, True) if return_flag else out
    out = X[i] - X[nb].mean(axis=0)
    return (out, False) if return_flag else out


def laplacian_all(mesh, positions=None):
    """Umbrella Laplacian at every vertex, (n, 3)."""
    X = mesh.vertices if positions is None else positions
    return mesh.laplacian_matrix @ X


def vertex_normals(mesh, return_flags=False):
    """Area-weighted unit vertex normals.

    Vertices whose incident faces all have zero area (or no faces) get the
    zero vector; ``return_flags=True`` also returns that mask.
    """
    acc = mesh.vertex_faces @ mesh.face_cross()
    n = np.linalg.norm(acc, axis=1, keepdims=True)
    flags = n[:, 0] == 0
    out = np.divide(acc, n, out=np.zeros_like(acc), where=n > 0)
    return (out, flags) if return_flags else out


# --------------------------------------------------------------------------
# topology statistics


@dataclass
class TopologyStats:
    components: int
    non_manifold_vertices: int
    non_manifold_edges: int
    boundary_loops: int
    boundary_edges: int
    genus_per_component: list = dc_field(default_factory=list)
    euler_per_component: list = dc_field(default_factory=list)

    @property
    def is_manifold(self):
        return self.non_manifold_vertices == 0 and self.non_manifold_edges == 0

    @property
    def is_closed_manifold(self):
        return self.is_manifold and self.boundary_loops == 0

    @property
    def genus(self):
        """Total genus, or ``None`` if any component's genus is undefined."""
        if any(g is None for g in self.genus_per_component):
            return None
        return int(sum(self.genus_per_component))


def _corner_fans(mesh):
    """Label each face corner by its edge-connected fan around the vertex.

    Returns ``(labels, n_fans)`` with ``labels`` shaped (m, 3): two corners at
    the same vertex share a label iff their faces are joined through a chain
    of faces sharing edges incident to that vertex.
    """
    F = mesh.faces
    m = len(F)
    ef = mesh.face_edges
    E = mesh.edges
    # every (face, edge) incidence; corners of the two edge endpoints
    fi = np.repeat(np.arange(m), 3)
    eid = ef.ravel()
    k = np.tile(np.arange(3), m)
    corner_a = fi * 3 + k  # corner at F[f, k]
    corner_b = fi * 3 + (k + 1) % 3  # corner at F[f, k+1]
    va = F[fi, k]
    order = np.argsort(eid, kind="stable")
    eid_s = eid[order]
    starts = np.r_[0, np.flatnonzero(np.diff(eid_s)) + 1]
    counts = np.diff(np.r_[starts, len(eid_s)])
    rows, cols = [], []
    # link consecutive incidences of the same edge (chain is enough for connectivity)
    multi = counts > 1
    for s, c in zip(starts[multi], counts[multi]):
        idx = order[s:s + c]
        for a, b in zip(idx[:-1], idx[1:]):
            # match corners by vertex id
            for ca in (corner_a[a], corner_b[a]):
                vert = F.ravel()[ca]
                cb = corner_a[b] if F.ravel()[corner_a[b]] == vert else corner_b[b]
                rows.append(ca)
                cols.append(cb)
    G = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(3 * m, 3 * m))
    n_fans, labels = csgraph.connected_components(G, directed=False)
    return labels.reshape(m, 3), n_fans


def _corner_fans_fast(mesh):
    """Vectorized :func:`_corner_fans` for meshes whose edges have <= 2 faces."""
    F = mesh.faces
    m = len(F)
    ef = mesh.face_edges
    cnt = mesh.edge_face_count
    if (cnt > 2).any():
        return _corner_fans(mesh)
    fi = np.repeat(np.arange(m), 3)
    k = np.tile(np.arange(3), m)
    eid = ef.ravel()
    order = np.argsort(eid, kind="stable")
    eid_s = eid[order]
    pair = np.flatnonzero(eid_s[1:] == eid_s[:-1])
    a = order[pair]
    b = order[pair + 1]
    fa, ka = fi[a], k[a]
    fb, kb = fi[b], k[b]
    Fr = F.ravel()
    ca0 = fa * 3 + ka
    ca1 = fa * 3 + (ka + 1) % 3
    cb0 = fb * 3 + kb
    cb1 = fb * 3 + (kb + 1) % 3
    same = Fr[ca0] == Fr[cb0]
    rows = np.r_[ca0, ca1]
    cols = np.r_[np.where(same, cb0, cb1), np.where(same, cb1, cb0)]
    G = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(3 * m, 3 * m))
    n_fans, labels = csgraph.connected_components(G, directed=False)
    return labels.reshape(m, 3), n_fans


def boundary_loops(mesh, fan_labels=None):
    """Boundary edge cycles as lists of edge ids.

    Two boundary edges continue each other at a vertex when they belong to the
    same face fan there, so bow-tie vertices split loops correctly.
    """
    if fan_labels is None:
        fan_labels, _ = _corner_fans_fast(mesh)
    F = mesh.faces
    ef = mesh.face_edges
    cnt = mesh.edge_face_count
    bmask = cnt[ef] == 1  # (m, 3): edge (F[f,k], F[f,k+1]) is boundary
    f_idx, k_idx = np.nonzero(bmask)
    if len(f_idx) == 0:
        return []
    bedge = ef[f_idx, k_idx]
    fan_a = fan_labels[f_idx, k_idx]
    fan_b = fan_labels[f_idx, (k_idx + 1) % 3]
    nb = len(bedge)
    # group boundary-edge endpoints by fan; chain within each fan
    ends = np.r_[fan_a, fan_b]
    owner = np.r_[np.arange(nb), np.arange(nb)]
    order = np.argsort(ends, kind="stable")
    ends_s = ends[order]
    same = np.flatnonzero(ends_s[1:] == ends_s[:-1])
    rows = owner[order[same]]
    cols = owner[order[same + 1]]
    G = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nb, nb))
    n, labels = csgraph.connected_components(G, directed=False)
    loops = [[] for _ in range(n)]
    for i, lab in enumerate(labels):
        loops[lab].append(int(bedge[i]))
    return loops


def topology_stats(mesh):
    """Manifoldness, boundary and genus statistics.

    A non-manifold edge has three or more incident faces; a non-manifold vertex
    has incident faces forming two or more edge-connected fans. Genus per
    component is ``(2 - chi - b) / 2`` and ``None`` for components that touch
    any non-manifold element.
    """
    F = mesh.faces
    n = mesh.n_vertices
    if len(F) == 0:
        return TopologyStats(0, 0, 0, 0, 0, [], [])
    E = mesh.edges
    cnt = mesh.edge_face_count
    nm_edge_mask = cnt >= 3
    labels, n_fans = _corner_fans_fast(mesh)
    # fans per vertex
    fan_vertex = np.zeros(n_fans, dtype=np.int64)
    fan_vertex[labels.ravel()] = F.ravel()
    fans_per_vertex = np.bincount(fan_vertex, minlength=n)
    nm_vertex_mask = fans_per_vertex >= 2

    loops = boundary_loops(mesh, labels)
    ncomp, comp = mesh.components()
    used = np.zeros(n, dtype=bool)
    used[F.ravel()] = True
    vcomp = np.full(n, -1)
    vcomp[F.ravel()] = np.repeat(comp, 3)
    V_c = np.bincount(vcomp[used], minlength=ncomp)
    F_c = np.bincount(comp, minlength=ncomp)
    ecomp = vcomp[E[:, 0]]
    E_c = np.bincount(ecomp, minlength=ncomp)
    b_c = np.zeros(ncomp, dtype=np.int64)
    for lp in loops:
        b_c[ecomp[lp[0]]] += 1
    bad = np.zeros(ncomp, dtype=bool)
    bad[vcomp[nm_vertex_mask]] = True
    bad[ecomp[nm_edge_mask]] = True
    chi = V_c - E_c + F_c
    genus = [None if bad[c] else int((2 - chi[c] - b_c[c]) // 2) for c in range(ncomp)]
    return TopologyStats(
        components=int(ncomp),
        non_manifold_vertices=int(nm_vertex_mask.sum()),
        non_manifold_edges=int(nm_edge_mask.sum()),
        boundary_loops=len(loops),
        boundary_edges=int((cnt == 1).sum()),
        genus_per_component=genus,
        euler_per_component=[int(x) for x in chi],
    )


def remove_unreferenced(mesh):
    """Drop vertices not used by any face. Returns (new_mesh, old_index_of_new)."""
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.faces.ravel()] = True
    keep = np.flatnonzero(used)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    return TriMesh(mesh.vertices[keep], remap[mesh.faces]), keep


# --------------------------------------------------------------------------
# I/O


def save_obj(mesh, path):
    # %.17g round-trips float64 exactly
    with open(path, "w") as fh:
        fh.write(f"# {mesh.n_vertices} vertices, {mesh.n_faces} faces\n")
        np.savetxt(fh, mesh.vertices, fmt="v %.17g %.17g %.17g")
        np.savetxt(fh, mesh.faces + 1, fmt="f %d %d %d")


def load_obj(path):
    """Read vertices and (triangulated) faces from an ASCII OBJ file.

    Texture/normal indices, materials and groups are ignored. Negative indices
    are relative to the vertices read so far. Polygons are fan-triangulated.
    """
    verts = []
    faces = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            tok = s.split()
            if tok[0] == "v":
                if len(tok) < 4:
                    raise ParseError("vertex needs 3 coordinates", path, lineno)
                try:
                    verts.append([float(t) for t in tok[1:4]])
                except ValueError:
                    raise ParseError(f"bad vertex coordinate in {s!r}", path, lineno) from None
            elif tok[0] == "f":
                if len(tok) < 4:
                    raise ParseError("face needs at least 3 vertices", path, lineno)
                idx = []
                for t in tok[1:]:
                    head = t.split("/", 1)[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise ParseError(f"bad face index {t!r}", path, lineno) from None
                    if i > 0:
                        i -= 1
                    elif i < 0:
                        i += len(verts)
                    else:
                        raise ParseError("face index 0 is invalid in OBJ", path, lineno)
                    if not 0 <= i < len(verts):
                        raise ParseError(f"face index {t} out of range", path, lineno)
                    idx.append(i)
                for j in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[j], idx[j + 1]])
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_ply(mesh, path):
    """Binary little-endian PLY with float64 vertices and int32 faces."""
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property double x\nproperty double y\nproperty double z\n"
        f"element face {mesh.n_faces}\n"
        "property list uchar int vertex_indices\nend_header\n"
    )
    fdt = np.dtype([("n", "u1"), ("i", "<i4", (3,))])
    frec = np.empty(mesh.n_faces, dtype=fdt)
    frec["n"] = 3
    frec["i"] = mesh.faces
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.asarray(mesh.vertices, dtype="<f8").tobytes())
        fh.write(frec.tobytes())


_PLY_TYPES = {
    "char": "i1", "uchar": "u1", "short": "<i2", "ushort": "<u2", "int": "<i4", "uint": "<u4",
    "float": "<f4", "double": "<f8", "int8": "i1", "uint8": "u1", "int16": "<i2", "uint16": "<u2",
    "int32": "<i4", "uint32": "<u4", "float32": "<f4", "float64": "<f8",
}


def load_ply(path):
    """Read a binary little-endian triangle PLY (as written by :func:`save_ply`)."""
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("not a PLY file", path)
    lines = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in lines:
        raise ParseError("only binary_little_endian PLY is supported", path)
    elements = []
    for ln in lines:
        tok = ln.split()
        if tok[:1] == ["element"]:
            elements.append([tok[1], int(tok[2]), []])
        elif tok[:1] == ["property"]:
            elements[-1][2].append(tok[1:])
    off = end + len(b"end_header\n")
    verts = faces = None
    for name, count, props in elements:
        if name == "vertex":
            dt = np.dtype([(p[1], _PLY_TYPES[p[0]]) for p in props])
            rec = np.frombuffer(data, dtype=dt, count=count, offset=off)
            off += dt.itemsize * count
            verts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
        elif name == "face":
            p = props[0]
            if p[0] != "list":
                raise ParseError("face element must be a list property", path)
            dt = np.dtype([("n", _PLY_TYPES[p[1]]), ("i", _PLY_TYPES[p[2]], (3,))])
            rec = np.frombuffer(data, dtype=dt, count=count, offset=off)
            if (rec["n"] != 3).any():
                raise ParseError("only triangle faces are supported", path)
            off += dt.itemsize * count
            faces = rec["i"].astype(np.int64)
        else:
            raise ParseError(f"unsupported element {name!r}", path)
    if verts is None:
        raise ParseError("no vertex element", path)
    return TriMesh(verts, faces if faces is not None else np.zeros((0, 3), np.int64))


def save_mesh(mesh, path):
    """Write OBJ or PLY depending on the file extension."""
    p = str(path).lower()
    if p.endswith(".ply"):
        save_ply(mesh, path)
    elif p.endswith(".obj"):
        save_obj(mesh, path)
    else:
        raise ParameterError(f"unsupported mesh extension: {path}")


def load_mesh(path):
    p = str(path).lower()
    if p.endswith(".ply"):
        return load_ply(path)
    if p.endswith(".obj"):
        return load_obj(path)
    raise ParameterError(f"unsupported mesh extension: {path}")
