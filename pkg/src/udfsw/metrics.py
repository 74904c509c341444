"""Chamfer distance and the topology/accuracy report."""

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParameterError
from .mesh import TriMesh, topology_stats

DEFAULT_SAMPLES = 10_000


@dataclass
class SampleCloud:
    """Points sampled from a surface (or given directly)."""

    points: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)

    @property
    def count(self):
        return len(self.points)

    def __len__(self):
        return len(self.points)


def largest_remainder(weights, n):
    """Split ``n`` into integer counts proportional to ``weights``.

    Floors are topped up by one for the largest fractional parts (ties go to
    the lower index), so the counts sum to exactly ``n``.
    """
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise ParameterError("cannot apportion samples: total weight is zero")
    quota = n * w / total
    base = np.floor(quota).astype(np.int64)
    short = n - int(base.sum())
    if short > 0:
        order = np.argsort(-(quota - base), kind="stable")
        base[order[:short]] += 1
    return base


def systematic_counts(weights, n, rng):
    """Integer counts summing to ``n``, each the floor or ceiling of its quota.

    Quotas are laid end to end and hit by ``n`` evenly spaced points with one
    random offset, so a face gets the ceiling with probability equal to its
    fractional part. Unlike :func:`largest_remainder`, this does not favour
    large faces when most quotas are below one.
    """
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise ParameterError("cannot apportion samples: total weight is zero")
    edges = np.concatenate([[0.0], np.cumsum(w) * (n / total)])
    edges[-1] = n
    hits = np.floor(edges - rng.random()).astype(np.int64)
    return np.diff(hits)


def sample_mesh(mesh, n=DEFAULT_SAMPLES, seed=0):
    """Area-uniform samples: per-face counts by systematic rounding, uniform barycentrics."""
    if mesh.n_faces == 0:
        raise ParameterError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    counts = systematic_counts(mesh.face_areas(), n, rng)
    fid = np.repeat(np.arange(mesh.n_faces), counts)
    u = rng.random((len(fid), 2))
    flip = u.sum(axis=1) > 1
    u[flip] = 1 - u[flip]
    tri = mesh.vertices[mesh.faces[fid]]
    pts = tri[:, 0] + u[:, :1] * (tri[:, 1] - tri[:, 0]) + u[:, 1:] * (tri[:, 2] - tri[:, 0])
    return SampleCloud(pts, seed)


def as_cloud(obj, n=DEFAULT_SAMPLES, seed=0):
    """Coerce a mesh, point array or SampleCloud into a SampleCloud."""
    if isinstance(obj, SampleCloud):
        return obj
    if isinstance(obj, TriMesh):
        if obj.n_faces == 0:
            return SampleCloud(obj.vertices, seed)
        return sample_mesh(obj, n, seed)
    return SampleCloud(np.asarray(obj), seed)


@dataclass(frozen=True)
class Chamfer:
    a_to_b: float
    b_to_a: float
    average: float


def _one_way(src, dst, squared):
    d, _ = cKDTree(dst).query(src, k=1)
    if squared:
        d = d * d
    return float(d.mean())


def chamfer_distance(a, b, squared=False):
    """Mean nearest-neighbour distance in both directions and their average.

    Distances are Euclidean (unsquared) unless ``squared=True``.
    """
    pa = as_cloud(a).points
    pb = as_cloud(b).points
    if len(pa) == 0 or len(pb) == 0:
        raise ParameterError("chamfer distance needs two non-empty clouds")
    ab = _one_way(pa, pb, squared)
    ba = _one_way(pb, pa, squared)
    return Chamfer(ab, ba, 0.5 * (ab + ba))


@dataclass
class MeshReport:
    cd_gt_to_pred: float
    cd_pred_to_gt: float
    cd_avg: float
    nm_vertices: int
    nm_edges: int
    genus: object  # int or None when undefined
    boundaries: int
    components: int
    vertices: int
    faces: int

    FIELDS = (
        "cd_gt_to_pred", "cd_pred_to_gt", "cd_avg", "nm_vertices", "nm_edges",
        "genus", "boundaries", "components", "vertices", "faces",
    )

    def row(self, scale=1e3):
        """Table row with CD values multiplied by ``scale``."""
        d = asdict(self)
        for k in ("cd_gt_to_pred", "cd_pred_to_gt", "cd_avg"):
            d[k] = d[k] * scale
        d["genus"] = "n/a" if self.genus is None else self.genus
        return d


def mesh_report(mesh, ground_truth, n_samples=DEFAULT_SAMPLES, seed=0):
    """Chamfer distance to ``ground_truth`` plus topology statistics.

    ``ground_truth`` may be a SampleCloud, a point array or a TriMesh (sampled
    with the same sampler and seed).
    """
    gt = as_cloud(ground_truth, n_samples, seed)
    stats = topology_stats(mesh)
    if mesh.n_faces:
        cd = chamfer_distance(gt, sample_mesh(mesh, n_samples, seed))
    else:
        cd = Chamfer(np.inf, np.inf, np.inf)
    return MeshReport(
        cd_gt_to_pred=cd.a_to_b,
        cd_pred_to_gt=cd.b_to_a,
        cd_avg=cd.average,
        nm_vertices=stats.non_manifold_vertices,
        nm_edges=stats.non_manifold_edges,
        genus=stats.genus,
        boundaries=stats.boundary_loops,
        components=stats.components,
        vertices=mesh.n_vertices,
        faces=mesh.n_faces,
    )


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def average_row(rows):
    """Column means over report rows; genus averaged over defined entries."""
    out = {}
    for k in MeshReport.FIELDS:
        vals = [r[k] for r in rows if not isinstance(r[k], str)]
        out[k] = float(np.mean(vals)) if vals else "n/a"
    return out


def reports_to_csv(rows, names=None):
    """CSV text with an optional leading ``model`` column."""
    buf = io.StringIO()
    cols = (["model"] if names is not None else []) + list(MeshReport.FIELDS)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for i, r in enumerate(rows):
        lead = [names[i]] if names is not None else []
        w.writerow(lead + [_fmt(r[k]) for k in MeshReport.FIELDS])
    return buf.getvalue()


def reports_to_table(rows, names=None):
    """Fixed-width text table (CD columns already scaled by the caller)."""
    cols = (["model"] if names is not None else []) + list(MeshReport.FIELDS)
    cells = []
    for i, r in enumerate(rows):
        lead = [str(names[i])] if names is not None else []
        cells.append(lead + [_fmt(r[k]) for k in MeshReport.FIELDS])
    widths = [max(len(c), *(len(row[j]) for row in cells)) if cells else len(c) for j, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)
