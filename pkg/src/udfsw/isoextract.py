"""Marching-cubes extraction of the r-offset double cover."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from ._mc_tables import CORNERS, EDGE_CORNERS, TRI_TABLE
from .errors import ContractViolation, EmptyLevelSet, ParameterError
from .mesh import TriMesh

logger = logging.getLogger(__name__)

# values sitting exactly on the iso-value are nudged up by this much
TIE_NUDGE = 1e-9


@dataclass(frozen=True)
class McTable:
    """The 256-case marching cubes table.

    ``triangles[case]`` is a (5, 3) array of cube-edge ids padded with -1.
    Bit ``b`` of ``case`` is set when cube corner ``b`` is below the iso-value.
    """

    triangles: np.ndarray = TRI_TABLE
    corners: np.ndarray = CORNERS
    edge_corners: np.ndarray = EDGE_CORNERS

    def case_triangles(self, case):
        t = self.triangles[case]
        return t[t[:, 0] >= 0]


STANDARD_TABLE = McTable()

# per cube edge: offset of its lower lattice endpoint and its axis
_EDGE_LO = np.minimum(CORNERS[EDGE_CORNERS[:, 0]], CORNERS[EDGE_CORNERS[:, 1]])
_EDGE_AXIS = np.argmax(np.abs(CORNERS[EDGE_CORNERS[:, 1]] - CORNERS[EDGE_CORNERS[:, 0]]), axis=1)


def _slab_triangles(below, x0, x1, dims):
    """Global edge ids of all triangles emitted by cells with ``x0 <= ix < x1``."""
    nx, ny, nz = dims
    sub = below[x0:x1 + 1]
    sx = x1 - x0
    case = np.zeros((sx, ny - 1, nz - 1), dtype=np.int32)
    for b, (dx, dy, dz) in enumerate(CORNERS):
        case |= sub[dx:sx + dx, dy:ny - 1 + dy, dz:nz - 1 + dz].astype(np.int32) << b
    cells = np.nonzero((case > 0) & (case < 255))
    tris = TRI_TABLE[case[cells]]  # (q, 5, 3)
    q, s = np.nonzero(tris[:, :, 0] >= 0)
    te = tris[q, s].astype(np.int64)  # (T, 3) cube-edge ids
    cell = np.stack(cells, axis=1)[q]
    cell[:, 0] += x0
    p = cell[:, None, :] + _EDGE_LO[te]
    return _EDGE_AXIS[te] * (nx * ny * nz) + (p[..., 0] * ny + p[..., 1]) * nz + p[..., 2]


def marching_cubes(grid, r, threads=1, orient=True):
    """Triangulate the level set ``grid.value == r``.

    Vertices lie on lattice edges (linear interpolation) and are shared by
    edge key, so the output is watertight whenever every boundary sample
    exceeds ``r``. Faces are wound so normals point toward increasing field
    values. Zero-area triangles are dropped.

    Parameters
    ----------
    grid : GridField
    r : float
        Iso-value, must be positive.
    threads : int
        Worker count for per-cell casing; the result is identical for any value.
    orient : bool
        Run :func:`orient_outward` on the result (skipped automatically if the
        extraction is not a closed manifold).

    Raises
    ------
    EmptyLevelSet
        No cell straddles ``r``.
    """
    if not r > 0:
        raise ParameterError(f"iso-value must be positive, got {r}")
    vals = grid.values
    dims = vals.shape
    nx, ny, nz = dims
    v = np.where(vals == r, r + TIE_NUDGE, vals)
    below = v < r
    if not below.any() or below.all():
        raise EmptyLevelSet(r, float(vals.min()), float(vals.max()))

    bounds = np.linspace(0, nx - 1, max(1, min(threads, nx - 1)) + 1).astype(int)
    jobs = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda ab: _slab_triangles(below, ab[0], ab[1], dims), jobs))
    else:
        parts = [_slab_triangles(below, a, b, dims) for a, b in jobs]
    gid = np.concatenate(parts, axis=0)
    if len(gid) == 0:
        raise EmptyLevelSet(r, float(vals.min()), float(vals.max()))

    keys, inv = np.unique(gid.ravel(), return_inverse=True)
    faces = inv.reshape(-1, 3)

    # place vertices on their lattice edges
    n_lat = nx * ny * nz
    axis = keys // n_lat
    lin = keys % n_lat
    i0 = np.stack(np.unravel_index(lin, dims), axis=1)
    i1 = i0.copy()
    i1[np.arange(len(keys)), axis] += 1
    va = v[i0[:, 0], i0[:, 1], i0[:, 2]]
    vb = v[i1[:, 0], i1[:, 1], i1[:, 2]]
    t = (r - va) / (vb - va)
    spacing = grid.spacing
    origin = grid.bbox[0]
    pa = origin + i0 * spacing
    pb = origin + i1 * spacing
    verts = pa + t[:, None] * (pb - pa)

    # table winding puts normals toward the below-r side; flip to face increasing f
    faces = faces[:, [0, 2, 1]]
    cr = np.cross(verts[faces[:, 1]] - verts[faces[:, 0]], verts[faces[:, 2]] - verts[faces[:, 0]])
    nondeg = (cr * cr).sum(axis=1) > 0
    if not nondeg.all():
        logger.debug("dropping %d zero-area triangles", int((~nondeg).sum()))
        faces = faces[nondeg]
    mesh = TriMesh(verts, faces)
    if orient:
        try:
            mesh = orient_outward(mesh, grid)
        except ContractViolation as exc:
            logger.warning("skipping orientation pass: %s", exc)
    return mesh


def _winding_parity(mesh):
    """Per-face flip flags making winding consistent within each component.

    Raises ContractViolation on non-manifold input or non-orientable components.
    """
    F = mesh.faces
    m = len(F)
    cnt = mesh.edge_face_count
    if (cnt > 2).any():
        raise ContractViolation(f"{int((cnt > 2).sum())} non-manifold edges")
    ef = mesh.face_edges.ravel()
    fi = np.repeat(np.arange(m), 3)
    # +1 if the face traverses the edge low->high
    he_from = F.ravel()
    dirn = np.where(he_from == mesh.edges[ef, 0], 1, -1)
    order = np.argsort(ef, kind="stable")
    es = ef[order]
    pair = np.flatnonzero(es[1:] == es[:-1])
    a, b = order[pair], order[pair + 1]
    fa, fb = fi[a], fi[b]
    same = (dirn[a] == dirn[b]).astype(np.int8)  # same direction -> one must flip
    G = sparse.coo_matrix((np.ones(len(fa)), (fa, fb)), shape=(m, m)).tocsr()
    ncomp, labels = csgraph.connected_components(G, directed=False)
    rel = {}
    for x, y, s in zip(fa.tolist(), fb.tolist(), same.tolist()):
        rel[(x, y)] = s
        rel[(y, x)] = s
    flip = np.zeros(m, dtype=np.int8)
    seen = np.zeros(m, dtype=bool)
    for c in range(ncomp):
        root = int(np.flatnonzero(labels == c)[0])
        order_c, pred = csgraph.breadth_first_order(G, root, directed=False, return_predecessors=True)
        for f in order_c[1:]:
            flip[f] = flip[pred[f]] ^ rel[(int(pred[f]), int(f))]
        seen[order_c] = True
    bad = flip[fa] ^ flip[fb] ^ same
    if bad.any():
        raise ContractViolation("mesh is not orientable")
    return flip.astype(bool), ncomp, labels


def orient_outward(mesh, field):
    """Rewind faces so normals point toward increasing field values.

    Winding is first made consistent per connected component; each component
    is then flipped as a whole if most of its faces (area-weighted) have
    ``gradient(centroid) . normal < 0``. Faces whose centroid gradient is
    flagged as unreliable do not vote.

    Raises
    ------
    ContractViolation
        Non-manifold or non-orientable input.
    """
    if mesh.n_faces == 0:
        return mesh.copy()
    flip, ncomp, labels = _winding_parity(mesh)
    F = mesh.faces.copy()
    F[flip] = F[flip][:, [0, 2, 1]]
    out = TriMesh(mesh.vertices.copy(), F)
    g, unreliable = field.gradient(out.centroids, return_flags=True)
    cr = out.face_cross()
    vote = np.einsum("ij,ij->i", g, cr)
    vote[unreliable] = 0.0
    score = np.bincount(labels, weights=vote, minlength=ncomp)
    flip_comp = score < 0
    if flip_comp.any():
        sel = flip_comp[labels]
        F[sel] = F[sel][:, [0, 2, 1]]
        out = TriMesh(out.vertices, F)
    return out
