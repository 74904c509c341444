"""In-loop topology surgery and adaptive subdivision.

Every edit returns a :class:`MeshEdit` describing how the new vertices and
faces derive from the old ones, so per-point optimizer state can be carried
across the edit.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from . import kernels
from .mesh import TriMesh

logger = logging.getLogger(__name__)

MIN_CLUSTER_FACES = 10


@dataclass
class MeshEdit:
    """Result of a topology edit.

    Attributes
    ----------
    mesh : TriMesh
        The edited mesh.
    vertex_weights : (n_new, n_old) sparse matrix
        Row ``i`` expresses new vertex ``i`` as an average of old vertices
        (a unit row for kept vertices).
    vertex_is_new : (n_new,) bool
    face_parent : (m_new,) int
        Old face each new face came from, ``-1`` for faces with no parent.
    event : str
        Short description for the iteration log.
    """

    mesh: TriMesh
    vertex_weights: sparse.csr_matrix
    vertex_is_new: np.ndarray
    face_parent: np.ndarray
    event: str = ""

    @property
    def vertex_source(self):
        """Old index of each kept vertex, ``-1`` for inserted vertices."""
        W = self.vertex_weights.tocsr()
        first = W.indices[W.indptr[:-1].clip(max=max(len(W.indices) - 1, 0))]
        return np.where(self.vertex_is_new, -1, first)


def identity_edit(mesh):
    n = mesh.n_vertices
    return MeshEdit(mesh, sparse.identity(n, format="csr"), np.zeros(n, bool), np.arange(mesh.n_faces), "")


@dataclass
class RegionCluster:
    faces: np.ndarray
    loops: list = field(default_factory=list)  # ordered vertex-index arrays
    touches_boundary: bool = False
    pinched: bool = False

    @property
    def classification(self):
        if len(self.loops) == 2 and not self.touches_boundary and not self.pinched:
            return "columnar"
        return "non_columnar"

    @property
    def is_columnar(self):
        return self.classification == "columnar"


def _face_graph(mesh, face_mask):
    """Adjacency between flagged faces sharing an edge."""
    m = mesh.n_faces
    ef = mesh.face_edges.ravel()
    fi = np.repeat(np.arange(m), 3)
    keep = face_mask[fi]
    ef, fi = ef[keep], fi[keep]
    order = np.argsort(ef, kind="stable")
    es = ef[order]
    pair = np.flatnonzero(es[1:] == es[:-1])
    a, b = fi[order[pair]], fi[order[pair + 1]]
    return sparse.coo_matrix((np.ones(len(a)), (a, b)), shape=(m, m)).tocsr()


def _cluster_loops(mesh, faces):
    """Ordered boundary loops of a face set, following its half-edge direction.

    Returns ``(loops, touches_boundary, pinched)``.
    """
    F = mesh.faces[faces]
    ef = mesh.face_edges[faces]
    inside = np.bincount(ef.ravel(), minlength=len(mesh.edges))
    total = mesh.edge_face_count
    on_rim = inside[ef] == 1  # (k, 3) edge (F[:, j], F[:, j+1]) borders the cluster
    touches = bool((total[ef[on_rim]] == 1).any())
    starts = F[on_rim]
    ends = np.roll(F, -1, axis=1)[on_rim]
    if len(starts) == 0:
        return [], touches, False
    if len(np.unique(starts)) != len(starts):
        return [], touches, True  # a vertex with two outgoing rim edges
    nxt = dict(zip(starts.tolist(), ends.tolist()))
    loops = []
    seen = set()
    for s in starts.tolist():
        if s in seen:
            continue
        loop = [s]
        seen.add(s)
        v = nxt[s]
        while v != s:
            if v in seen or v not in nxt:
                return [], touches, True
            loop.append(v)
            seen.add(v)
            v = nxt[v]
        loops.append(np.array(loop, dtype=np.int64))
    return loops, touches, False


def regularize_cluster(mesh, faces, max_rounds=10):
    """Grow a face set until its boundary is a set of simple loops.

    Each round absorbs faces with two or more edges already inside the set
    (notches) and every face around a vertex where the boundary touches
    itself. Stops when nothing changes or after ``max_rounds``.
    """
    inside = np.zeros(mesh.n_faces, dtype=bool)
    inside[faces] = True
    ef = mesh.face_edges
    VF = mesh.vertex_faces
    n_edges = len(mesh.edges)
    for _ in range(max_rounds):
        cover = np.bincount(ef[inside].ravel(), minlength=n_edges)
        notch = ~inside & ((cover[ef] > 0).sum(axis=1) >= 2)
        F = mesh.faces[inside]
        rim = (cover[ef[inside]] == 1)
        starts = F[rim]
        cnt = np.bincount(starts, minlength=mesh.n_vertices)
        pinch_v = np.flatnonzero(cnt > 1)
        grow = notch
        if len(pinch_v):
            around = np.asarray(VF[pinch_v].sum(axis=0)).ravel() > 0
            grow = grow | (around & ~inside)
        if not grow.any():
            break
        inside |= grow
    return np.flatnonzero(inside)


def cluster_high_weight_faces(mesh, face_weights, w_s, min_cluster_faces=MIN_CLUSTER_FACES):
    """Edge-connected clusters of faces with weight strictly above ``w_s``.

    Clusters with fewer than ``min_cluster_faces`` faces are dropped; the rest
    are passed through :func:`regularize_cluster`. Result is ordered by
    smallest face index.
    """
    hot = np.asarray(face_weights) > w_s
    if not hot.any():
        return []
    G = _face_graph(mesh, hot)
    _, labels = csgraph.connected_components(G, directed=False)
    labels = np.where(hot, labels, -1)
    out = []
    hot_idx = np.flatnonzero(hot)
    order = np.argsort(labels[hot_idx], kind="stable")
    lab_sorted = labels[hot_idx][order]
    cuts = np.flatnonzero(np.diff(lab_sorted)) + 1
    for grp in np.split(hot_idx[order], cuts):
        if len(grp) < min_cluster_faces:
            continue
        grp = regularize_cluster(mesh, np.sort(grp))
        loops, touches, pinched = _cluster_loops(mesh, grp)
        out.append(RegionCluster(grp, loops, touches, pinched))
    out.sort(key=lambda c: int(c.faces[0]))
    return out


# --------------------------------------------------------------------------
# hole filling


def _circumradius(p):
    """Circumradius of triangles given as (k, 3, 3) corner arrays."""
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    area2 = np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(area2 > 0, a * b * c / (2.0 * area2), np.inf)


def _angle_at(p, a, b, c):
    """Angle at vertex ``c`` of triangle (a, b, c); ``p`` is a list of 3-tuples."""
    ux, uy, uz = p[a][0] - p[c][0], p[a][1] - p[c][1], p[a][2] - p[c][2]
    vx, vy, vz = p[b][0] - p[c][0], p[b][1] - p[c][1], p[b][2] - p[c][2]
    den = math.sqrt((ux * ux + uy * uy + uz * uz) * (vx * vx + vy * vy + vz * vz))
    if den == 0.0:
        return math.pi
    return math.acos(max(-1.0, min(1.0, (ux * vx + uy * vy + uz * vz) / den)))


def _delaunay_flips(pts, tris, fixed_edges, max_flips):
    """Flip non-fixed edges whose opposite angles sum past pi; edits ``tris`` in place."""
    p = [tuple(map(float, q)) for q in pts]
    owners = {}
    for ti, t in enumerate(tris):
        for j in range(3):
            owners.setdefault(frozenset((t[j], t[(j + 1) % 3])), []).append(ti)
    queue = [e for e in owners if e not in fixed_edges]
    flips = 0
    while queue and flips < max_flips:
        e = queue.pop()
        own = owners.get(e)
        if own is None or len(own) != 2 or e in fixed_edges:
            continue
        t0, t1 = tris[own[0]], tris[own[1]]
        a, b = tuple(e)
        c = next(v for v in t0 if v not in e)
        d = next(v for v in t1 if v not in e)
        if c == d or frozenset((c, d)) in owners:
            continue
        if _angle_at(p, a, b, c) + _angle_at(p, a, b, d) <= math.pi + 1e-12:
            continue
        i = t0.index(a)
        if t0[(i + 1) % 3] != b:
            a, b = b, a
        # t0 = (a, b, c), t1 = (b, a, d)  ->  (a, d, c), (d, b, c)
        i0, i1 = own
        tris[i0] = [a, d, c]
        tris[i1] = [d, b, c]
        del owners[e]
        owners[frozenset((c, d))] = [i0, i1]
        # edges (b, d) and (b, c) changed owners
        bd = owners[frozenset((b, d))]
        bd[bd.index(i1)] = i1
        ad = owners[frozenset((a, d))]
        ad[ad.index(i1)] = i0
        bc = owners[frozenset((b, c))]
        bc[bc.index(i0)] = i1
        queue += [frozenset((a, d)), frozenset((b, d)), frozenset((b, c)), frozenset((a, c))]
        flips += 1
    return tris


def refine_patch(points, tris, threshold, max_points=4000, max_rounds=20):
    """Split patch triangles whose circumradius exceeds ``threshold``.

    Bad triangles get a centroid vertex; interior edges are then flipped
    toward a Delaunay configuration. Boundary edges of the patch never change,
    so ears (two boundary edges) are left alone: no interior split helps them.

    Returns ``(points, tris)``; the first ``len(points)`` input points are kept
    in place.
    """
    pts = [np.asarray(p, dtype=np.float64) for p in points]
    tris = [list(map(int, t)) for t in tris]
    count = {}
    for t in tris:
        for j in range(3):
            e = frozenset((t[j], t[(j + 1) % 3]))
            count[e] = count.get(e, 0) + 1
    fixed = {e for e, c in count.items() if c == 1}
    for _ in range(max_rounds):
        P = np.array(pts)
        R = _circumradius(P[np.array(tris)])
        T = np.array(tris)
        n_fixed = sum(
            np.array([frozenset((int(a), int(b))) in fixed for a, b in zip(T[:, j], T[:, (j + 1) % 3])])
            for j in range(3)
        )
        bad = np.flatnonzero((R > threshold) & (n_fixed < 2))
        if len(bad) == 0 or len(pts) + len(bad) > max_points:
            break
        new_tris = []
        badset = set(bad.tolist())
        for ti, t in enumerate(tris):
            if ti not in badset:
                new_tris.append(t)
                continue
            c = len(pts)
            pts.append(P[t].mean(axis=0))
            a, b, d = t
            new_tris += [[a, b, c], [b, d, c], [d, a, c]]
        tris = new_tris
        _delaunay_flips(pts, tris, fixed, max_flips=20 * len(tris))
    return np.array(pts), np.array(tris, dtype=np.int64)


def fill_hole(points, edge_normals=None, refine=True, refine_factor=2.0):
    """Triangulate a closed polygon, optionally refining the patch.

    Triangles traverse polygon edges in loop order ``t -> t+1``.

    Returns
    -------
    pts : (n + extra, 3) array
        Loop points followed by inserted interior points.
    tris : (k, 3) int array
    """
    P = np.asarray(points, dtype=np.float64)
    tris = kernels.min_area_triangulation(P, edge_normals)
    if not refine or len(P) <= 3:
        return P.copy(), tris
    mean_edge = np.linalg.norm(np.roll(P, -1, axis=0) - P, axis=1).mean()
    return refine_patch(P, tris, refine_factor * mean_edge)


def _loop_edge_normals(mesh, loop, cluster_faces):
    """Unit normal of the outside face across each loop edge ``(t, t+1)``."""
    F = mesh.faces
    n = mesh.n_vertices
    outside = np.ones(mesh.n_faces, dtype=bool)
    outside[cluster_faces] = False
    fo = np.flatnonzero(outside)
    Fo = F[fo]
    # an outside face crossing loop edge (u, v) traverses it as v -> u
    key = np.roll(Fo, -1, axis=1).ravel() * n + Fo.ravel()
    owner = np.repeat(fo, 3)
    order = np.argsort(key, kind="stable")
    key, owner = key[order], owner[order]
    want = loop * n + np.roll(loop, -1)
    pos = np.searchsorted(key, want).clip(max=max(len(key) - 1, 0))
    hit = key[pos] == want if len(key) else np.zeros(len(loop), bool)
    out = np.zeros((len(loop), 3))
    if hit.any():
        out[hit] = mesh.face_normals()[owner[pos[hit]]]
    return out


def excise_and_fill(mesh, cluster, refine=True, field=None, max_fill_value=None):
    """Remove a columnar cluster and cap both boundary loops.

    Returns a :class:`MeshEdit`, or ``None`` when the cluster is skipped
    (not columnar, loops pinch, or the result would be non-manifold). If
    ``field`` and ``max_fill_value`` are given, caps whose mean field value at
    face centroids exceeds ``max_fill_value`` also cause a skip.
    """
    if not cluster.is_columnar:
        logger.warning("skipping cluster of %d faces: %s", len(cluster.faces), cluster.classification)
        return None
    l0, l1 = cluster.loops
    if len(np.intersect1d(l0, l1)) or min(len(l0), len(l1)) < 3:
        logger.warning("skipping cluster of %d faces: boundary loops pinch", len(cluster.faces))
        return None

    n_old = mesh.n_vertices
    keep_face = np.ones(mesh.n_faces, dtype=bool)
    keep_face[cluster.faces] = False
    new_pts = []
    new_tris = []
    new_rows = []  # averaging rows for inserted vertices
    next_id = n_old
    for loop in (l0, l1):
        en = _loop_edge_normals(mesh, loop, cluster.faces)
        pts, tris = fill_hole(mesh.vertices[loop], en, refine=refine)
        gidx = np.concatenate([loop, np.arange(next_id, next_id + len(pts) - len(loop))])
        new_tris.append(gidx[tris])
        extra = pts[len(loop):]
        new_pts.append(extra)
        new_rows += [loop] * len(extra)
        next_id += len(extra)
    fill_faces = np.concatenate(new_tris)
    V = np.concatenate([mesh.vertices] + new_pts)
    F_all = np.concatenate([mesh.faces[keep_face], fill_faces])
    parent_all = np.concatenate([np.flatnonzero(keep_face), np.full(len(fill_faces), -1)])

    # drop vertices left unreferenced by the excision
    used = np.zeros(len(V), dtype=bool)
    used[F_all.ravel()] = True
    keep_v = np.flatnonzero(used)
    remap = np.full(len(V), -1, dtype=np.int64)
    remap[keep_v] = np.arange(len(keep_v))
    try:
        out = TriMesh(V[keep_v], remap[F_all])
    except ValueError as exc:
        logger.warning("skipping cluster: fill produced invalid faces (%s)", exc)
        return None
    if (out.edge_face_count > 2).any() or (
        (out.edge_face_count == 1).sum() > (mesh.edge_face_count == 1).sum()
    ):
        logger.warning("skipping cluster of %d faces: fill would not be manifold", len(cluster.faces))
        return None
    if field is not None and max_fill_value is not None:
        fill_c = out.centroids[len(F_all) - len(fill_faces):]
        if float(field.value(fill_c).mean()) > max_fill_value:
            logger.info("skipping cluster of %d faces: caps leave the surface", len(cluster.faces))
            return None

    rows, cols, vals = [], [], []
    for new_i, old_i in enumerate(keep_v):
        if old_i < n_old:
            rows.append(new_i)
            cols.append(old_i)
            vals.append(1.0)
        else:
            src = new_rows[old_i - n_old]
            rows += [new_i] * len(src)
            cols += src.tolist()
            vals += [1.0 / len(src)] * len(src)
    W = sparse.csr_matrix((vals, (rows, cols)), shape=(len(keep_v), n_old))
    return MeshEdit(out, W, keep_v >= n_old, parent_all, f"excise:{len(cluster.faces)}")


# --------------------------------------------------------------------------
# red-green subdivision


def subdivide_faces(mesh, face_mask):
    """Split flagged faces 1->4 and neighbours 1->2 / 1->3 to stay conforming.

    A neighbour whose three edges all end up split is itself split 1->4. For
    1->3 splits the quad is cut along its shorter diagonal.
    """
    face_mask = np.asarray(face_mask, dtype=bool)
    n_old = mesh.n_vertices
    if not face_mask.any():
        return identity_edit(mesh)
    F = mesh.faces
    E = mesh.edges
    ef = mesh.face_edges
    marked = np.zeros(len(E), dtype=bool)
    marked[ef[face_mask].ravel()] = True
    mid_id = np.full(len(E), -1, dtype=np.int64)
    mids = np.flatnonzero(marked)
    mid_id[mids] = n_old + np.arange(len(mids))
    X = mesh.vertices
    V = np.concatenate([X, 0.5 * (X[E[mids, 0]] + X[E[mids, 1]])])

    nmark = marked[ef].sum(axis=1)
    faces_out = [F[nmark == 0]]
    parent_out = [np.flatnonzero(nmark == 0)]

    # 1 -> 4
    sel = np.flatnonzero(nmark == 3)
    if len(sel):
        a, b, c = F[sel].T
        mab, mbc, mca = (mid_id[ef[sel, k]] for k in range(3))
        faces_out.append(np.stack([
            np.stack([a, mab, mca], 1), np.stack([mab, b, mbc], 1),
            np.stack([mca, mbc, c], 1), np.stack([mab, mbc, mca], 1),
        ], 1).reshape(-1, 3))
        parent_out.append(np.repeat(sel, 4))

    # 1 -> 2: rotate so the marked edge is (v0, v1)
    sel = np.flatnonzero(nmark == 1)
    if len(sel):
        k = np.argmax(marked[ef[sel]], axis=1)
        idx = (k[:, None] + np.arange(3)) % 3
        R = np.take_along_axis(F[sel], idx, axis=1)
        m = mid_id[ef[sel, k]]
        faces_out.append(np.stack([
            np.stack([R[:, 0], m, R[:, 2]], 1), np.stack([m, R[:, 1], R[:, 2]], 1),
        ], 1).reshape(-1, 3))
        parent_out.append(np.repeat(sel, 2))

    # 1 -> 3: rotate so the unmarked edge is (v2, v0)
    sel = np.flatnonzero(nmark == 2)
    if len(sel):
        k = np.argmin(marked[ef[sel]], axis=1)  # unmarked edge index
        start = (k + 1) % 3
        idx = (start[:, None] + np.arange(3)) % 3
        R = np.take_along_axis(F[sel], idx, axis=1)
        E_r = np.take_along_axis(ef[sel], idx, axis=1)
        m01 = mid_id[E_r[:, 0]]
        m12 = mid_id[E_r[:, 1]]
        v0, v1, v2 = R.T
        # corner triangle at v1, then the quad (v0, m01, m12, v2)
        d_a = np.linalg.norm(V[v0] - V[m12], axis=1)
        d_b = np.linalg.norm(V[m01] - V[v2], axis=1)
        use_a = d_a <= d_b
        t0 = np.stack([m01, v1, m12], 1)
        t1 = np.where(use_a[:, None], np.stack([v0, m01, m12], 1), np.stack([v0, m01, v2], 1))
        t2 = np.where(use_a[:, None], np.stack([v0, m12, v2], 1), np.stack([m01, m12, v2], 1))
        faces_out.append(np.stack([t0, t1, t2], 1).reshape(-1, 3))
        parent_out.append(np.repeat(sel, 3))

    F_new = np.concatenate(faces_out)
    parent = np.concatenate(parent_out)
    order = np.argsort(parent, kind="stable")
    F_new, parent = F_new[order], parent[order]

    rows = np.r_[np.arange(n_old), np.repeat(n_old + np.arange(len(mids)), 2)]
    cols = np.r_[np.arange(n_old), E[mids].ravel()]
    vals = np.r_[np.ones(n_old), np.full(2 * len(mids), 0.5)]
    W = sparse.csr_matrix((vals, (rows, cols)), shape=(len(V), n_old))
    is_new = np.r_[np.zeros(n_old, bool), np.ones(len(mids), bool)]
    return MeshEdit(TriMesh(V, F_new), W, is_new, parent, f"subdivide:{int(face_mask.sum())}")


def subdivide_high_weight(mesh, face_weights, w_s):
    """Red-green subdivision of faces whose weight exceeds ``w_s``."""
    return subdivide_faces(mesh, np.asarray(face_weights) > w_s)
