"""Shrink an r-offset double cover onto the zero set of an unsigned distance field.

The loss is a weighted sum of field values at vertices and face centroids plus
a uniform-Laplacian penalty. Point weights track each point's accumulated
loss relative to the mean, so poorly fitted regions get more pull; vertices in
well-fitted regions are frozen between mask updates. Periodically the mesh is
edited: columnar high-weight regions are cut out and capped, and high-weight
faces are subdivided.
"""

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import sparse

from . import topo_edit
from .errors import EmptyLevelSet, NonFiniteLoss, ParameterError
from .field import UNIT_BOX, GridField, sample_grid
from .isoextract import marching_cubes
from .mesh import TriMesh

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

LAPLACIAN_WEIGHT_MODES = ("uniform", "self_adaptive")


@dataclass
class ExtractionConfig:
    """Hyper-parameters of one extraction run."""

    r: float = 0.005
    k: int = 128
    lambda1: float = 1800.0
    learning_rate: float = 0.0005
    max_iterations: int = 150
    N_reset: int = 50
    w_s: float = 2.0
    w_t: float = 2.0
    s1: int = 100
    s2: int = 50
    beta_m: int = 50
    direction_correction_enabled: bool = True
    topology_correction_enabled: bool = True
    subdivision_enabled: bool = True
    mask_enabled: bool = True
    self_adaptive_enabled: bool = True
    laplacian_weight_mode: str = "uniform"
    min_cluster_faces: int = topo_edit.MIN_CLUSTER_FACES
    # edits scheduled on the last main iteration would leave new geometry unfitted
    skip_final_edits: bool = True
    # extra iterations with the Laplacian switched off, no edits
    post_iterations: int = 0
    seed: int = 0
    bbox: tuple = tuple(map(tuple, UNIT_BOX))
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("N_reset", "s1", "s2", "beta_m", "k"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.k < 2:
            raise ParameterError("k must be >= 2")
        if not self.r > 0:
            raise ParameterError("r must be positive")
        if self.lambda1 < 0:
            raise ParameterError("lambda1 must be >= 0")
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if self.max_iterations < 0 or self.post_iterations < 0:
            raise ParameterError("iteration counts must be >= 0")
        if self.laplacian_weight_mode not in LAPLACIAN_WEIGHT_MODES:
            raise ParameterError(f"laplacian_weight_mode must be one of {LAPLACIAN_WEIGHT_MODES}")
        if self.threads < 1:
            raise ParameterError("threads must be >= 1")
        return self

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["bbox"] = [list(x) for x in self.bbox]
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(d) - set(names)
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kw = {}
        for k, v in d.items():
            kw[k] = tuple(map(tuple, v)) if k == "bbox" else _coerce(names[k], v)
        return cls(**kw)

    # presets -------------------------------------------------------------

    @classmethod
    def noisy(cls, **kw):
        return cls(**{"r": 0.01, **kw})

    @classmethod
    def car(cls, **kw):
        return cls(**{"w_s": 3.0, **kw})

    def components_off(self):
        """Adaptive weights only: no mask, direction correction or mesh edits."""
        return self.replace(
            mask_enabled=False, direction_correction_enabled=False,
            topology_correction_enabled=False, subdivision_enabled=False,
        )

    def dcudf_mode(self):
        """Uniform weights, no enhancements, a Laplacian stage then a free stage."""
        return self.replace(
            self_adaptive_enabled=False, mask_enabled=False, direction_correction_enabled=False,
            topology_correction_enabled=False, subdivision_enabled=False,
            max_iterations=self.max_iterations, post_iterations=self.max_iterations,
        )


def _coerce(f, v):
    t = f.type if isinstance(f.type, type) else type(f.default)
    if t is bool and isinstance(v, str):
        low = v.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ParameterError(f"{f.name}: cannot read {v!r} as a boolean")
    try:
        return t(v)
    except (TypeError, ValueError):
        raise ParameterError(f"{f.name}: cannot read {v!r} as {t.__name__}") from None


@dataclass
class OptimizerState:
    """Per-point optimizer state. Vertices come first, then face centroids."""

    m: np.ndarray  # (n, 3) first moment
    v: np.ndarray  # (n,) scalar second moment
    steps: np.ndarray  # (n,) Adam step count per vertex
    acc_v: np.ndarray  # (n,) accumulated field value since last reset
    acc_c: np.ndarray  # (m,)
    w_v: np.ndarray
    w_c: np.ndarray
    active: np.ndarray  # (n,) bool
    f_v: np.ndarray  # latest field value per vertex
    f_c: np.ndarray  # latest field value per centroid
    j: int = 0
    last_reset: int = 0

    @classmethod
    def fresh(cls, n, m):
        return cls(
            m=np.zeros((n, 3)), v=np.zeros(n), steps=np.zeros(n, dtype=np.int64),
            acc_v=np.zeros(n), acc_c=np.zeros(m), w_v=np.ones(n), w_c=np.ones(m),
            active=np.ones(n, dtype=bool), f_v=np.full(n, np.nan), f_c=np.full(m, np.nan),
        )

    @property
    def n_points(self):
        return len(self.acc_v) + len(self.acc_c)

    def remap(self, edit):
        """Carry state across a :class:`~udfsw.topo_edit.MeshEdit`."""
        W = edit.vertex_weights
        new = edit.vertex_is_new
        kept_src = edit.vertex_source[~new]
        n = len(new)

        def carry(arr, fill):
            out = np.full((n,) + arr.shape[1:], fill, dtype=arr.dtype)
            out[~new] = arr[kept_src]
            return out

        acc_v = W @ self.acc_v
        w_v = W @ self.w_v
        parent = edit.face_parent
        has = parent >= 0
        F = edit.mesh.faces
        acc_c = np.where(has, self.acc_c[np.maximum(parent, 0)], acc_v[F].mean(axis=1))
        w_c = np.where(has, self.w_c[np.maximum(parent, 0)], w_v[F].mean(axis=1))
        active = carry(self.active, True)
        self.m = carry(self.m, 0.0)
        self.v = carry(self.v, 0.0)
        self.steps = carry(self.steps, 0)
        self.acc_v, self.acc_c, self.w_v, self.w_c = acc_v, acc_c, w_v, w_c
        self.active = active
        self.f_v = np.full(n, np.nan)
        self.f_c = np.full(len(F), np.nan)


@dataclass
class LossBreakdown:
    distance_term: float
    laplacian_term: float
    active_points: int

    @property
    def total(self):
        return self.distance_term + self.laplacian_term


@dataclass
class IterationRecord:
    iter: int
    distance_term: float
    laplacian_term: float
    active_vertices: int
    vertex_count: int
    face_count: int
    wall_ms: float
    event: str = ""

    FIELDS = ("iter", "distance_term", "laplacian_term", "active_vertices", "vertex_count",
              "face_count", "wall_ms", "event")


def write_log_csv(records, path_or_file):
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IterationRecord.FIELDS)
        for r in records:
            w.writerow([r.iter, repr(r.distance_term), repr(r.laplacian_term), r.active_vertices,
                        r.vertex_count, r.face_count, f"{r.wall_ms:.3f}", r.event])
    finally:
        if own:
            fh.close()


# --------------------------------------------------------------------------
# weights and mask


def update_self_adaptive_weights(state, enabled=True):
    """Set ``w = acc / mean(acc)`` over all vertices and centroids.

    An empty or all-zero history (first iteration, right after a reset) gives
    uniform weights, as does ``enabled=False``.
    """
    total = state.acc_v.sum() + state.acc_c.sum()
    if not enabled or total <= 0:
        state.w_v = np.ones_like(state.acc_v)
        state.w_c = np.ones_like(state.acc_c)
        return state
    mean = total / state.n_points
    state.w_v = state.acc_v / mean
    state.w_c = state.acc_c / mean
    return state


def update_activation_mask(state, mesh, w_t):
    """Active iff the vertex weight or any incident centroid weight is >= ``w_t``."""
    hot_face = (state.w_c >= w_t).astype(np.float64)
    touched = (mesh.vertex_faces @ hot_face) > 0
    state.active = (state.w_v >= w_t) | touched
    return state.active


def reset_weights(state):
    """Clear accumulated losses and return to uniform weights; moments are kept."""
    state.acc_v[:] = 0.0
    state.acc_c[:] = 0.0
    state.w_v = np.ones_like(state.acc_v)
    state.w_c = np.ones_like(state.acc_c)
    state.last_reset = state.j
    return state


# --------------------------------------------------------------------------
# loss and gradient


class _ActiveSet:
    """Index sets and sparse operators restricted to the active vertices."""

    def __init__(self, mesh, active):
        self.act = np.flatnonzero(active)
        VF = mesh.vertex_faces
        touched = np.asarray(VF[self.act].sum(axis=0)).ravel() > 0
        self.faces = np.flatnonzero(touched)
        # incident-face incidence, active rows x selected faces
        self.B = VF[self.act][:, self.faces].tocsr()
        L = mesh.laplacian_matrix
        self.L_rows = L[self.act].tocsr()
        self.L_AA_T = self.L_rows[:, self.act].T.tocsr()


def _check_finite(values, points, mesh):
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteLoss(
            f"field returned {values[i]} at point {points[i].tolist()}",
            point=points[i].copy(), last_good_mesh=mesh.copy(),
        )


def _laplacian_weights(state, act, mode):
    return np.ones(len(act)) if mode == "uniform" else state.w_v[act]


def accuracy_aware_loss(mesh, field, state, config, active_set=None, lambda1=None):
    """Loss and gradient with respect to active vertex positions.

    Distance term: ``sum w * f`` over active vertices and over centroids of
    faces with at least one active vertex. Laplacian term:
    ``lambda1 * sum w_lap * |L x|^2`` over active vertices; inactive
    neighbours enter as constants.

    Returns
    -------
    breakdown : LossBreakdown
    grad : (n, 3) array, zero on inactive rows
    f_v_act, f_c_sel : field values at the active vertices / selected centroids
    active_set : the :class:`_ActiveSet` used (reusable while mask and mesh are unchanged)
    """
    lam = config.lambda1 if lambda1 is None else lambda1
    aset = active_set if active_set is not None else _ActiveSet(mesh, state.active)
    X = mesh.vertices
    act, sel = aset.act, aset.faces
    grad = np.zeros_like(X)
    if len(act) == 0:
        return LossBreakdown(0.0, 0.0, 0), grad, np.zeros(0), np.zeros(0), aset

    pv = X[act]
    fv, gv = field.value_and_gradient(pv)
    _check_finite(fv, pv, mesh)
    Fs = mesh.faces[sel]
    a, b, c = X[Fs[:, 0]], X[Fs[:, 1]], X[Fs[:, 2]]
    pc = (a + b + c) / 3.0
    fc, gc = field.value_and_gradient(pc)
    _check_finite(fc, pc, mesh)

    wv = state.w_v[act]
    wc = state.w_c[sel]
    dist = float(wv @ fv + wc @ fc)
    g = wv[:, None] * gv + (aset.B @ (wc[:, None] * gc)) / 3.0

    lap = 0.0
    if lam > 0:
        D = aset.L_rows @ X
        wl = _laplacian_weights(state, act, config.laplacian_weight_mode)
        lap = float(lam * (wl @ np.einsum("ij,ij->i", D, D)))
        g += 2.0 * lam * (aset.L_AA_T @ (wl[:, None] * D))
    grad[act] = g
    aset.field_grad = gv
    aset.corners = (a, b, c)
    return LossBreakdown(dist, lap, len(act) + len(sel)), grad, fv, fc, aset


# --------------------------------------------------------------------------
# direction correction and Adam


def correct_direction(g_r, normals, w_1ring, eligible=None):
    """Blend raw gradients with normal-aligned vectors of the same length.

    ``g_c = w_n |g_r| n + (1 - w_n) g_r`` with ``w_n`` the min-max normalised
    ``w_1ring``; a constant ``w_1ring`` gives ``w_n = 0``. Rows where
    ``eligible`` is False get ``w_n = 0``.

    Returns ``(g_c, w_n)``.
    """
    g_r = np.asarray(g_r, dtype=np.float64)
    w = np.asarray(w_1ring, dtype=np.float64)
    if len(w) == 0:
        return g_r.copy(), w.copy()
    lo, hi = w.min(), w.max()
    w_n = (w - lo) / (hi - lo) if hi > lo else np.zeros_like(w)
    if eligible is not None:
        w_n = np.where(eligible, w_n, 0.0)
    norm = np.linalg.norm(g_r, axis=1)
    g_c = (w_n * norm)[:, None] * normals + (1.0 - w_n)[:, None] * g_r
    return g_c, w_n


def vector_adam_step(state, positions, grads, learning_rate, rows=None):
    """One Adam update with a scalar second moment per vertex.

    Only ``rows`` (default: all) are updated; each vertex keeps its own step
    count for bias correction. Returns the new positions.
    """
    X = positions.copy()
    if rows is None or len(rows) == len(X):
        idx = slice(None)
    else:
        idx = np.asarray(rows)
        if len(idx) == 0:
            return X
    g = grads[idx]
    state.steps[idx] += 1
    t = state.steps[idx]
    m = ADAM_BETA1 * state.m[idx] + (1 - ADAM_BETA1) * g
    v = ADAM_BETA2 * state.v[idx] + (1 - ADAM_BETA2) * np.einsum("ij,ij->i", g, g)
    state.m[idx] = m
    state.v[idx] = v
    m_hat = m / (1 - ADAM_BETA1 ** t)[:, None]
    v_hat = v / (1 - ADAM_BETA2 ** t)
    X[idx] -= learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)[:, None]
    return X


def _cross(u, v):
    out = np.empty_like(u)
    out[:, 0] = u[:, 1] * v[:, 2] - u[:, 2] * v[:, 1]
    out[:, 1] = u[:, 2] * v[:, 0] - u[:, 0] * v[:, 2]
    out[:, 2] = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    return out


def _active_normals(mesh, aset):
    """Area-weighted unit normals at active vertices, from the selected faces only."""
    corners = getattr(aset, "corners", None)
    if corners is None:
        X = mesh.vertices
        F = mesh.faces[aset.faces]
        corners = X[F[:, 0]], X[F[:, 1]], X[F[:, 2]]
    a, b, c = corners
    acc = aset.B @ _cross(b - a, c - a)
    n = np.sqrt(np.einsum("ij,ij->i", acc, acc))[:, None]
    return np.divide(acc, n, out=np.zeros_like(acc), where=n > 0)


# --------------------------------------------------------------------------
# driver


@dataclass
class ExtractionResult:
    mesh: TriMesh
    log: list
    initial_mesh: TriMesh
    state: OptimizerState
    timings: dict = dc_field(default_factory=dict)
    events: list = dc_field(default_factory=list)
    config: ExtractionConfig = None


def initial_mesh(field, config, grid=None):
    """Marching-cubes double cover at ``config.r``."""
    if grid is None:
        if isinstance(field, GridField):
            grid = field
        else:
            grid = sample_grid(field, config.k, np.array(config.bbox), threads=config.threads)
    return marching_cubes(grid, config.r, threads=config.threads)


def _topology_pass(mesh, state, field, config):
    """Excise all columnar high-weight clusters. Returns (mesh, events)."""
    clusters = topo_edit.cluster_high_weight_faces(mesh, state.w_c, config.w_s, config.min_cluster_faces)
    events = []
    pending = [c.faces for c in clusters if c.is_columnar]
    while pending:
        faces = pending.pop(0)
        loops, touches, pinched = topo_edit._cluster_loops(mesh, faces)
        cl = topo_edit.RegionCluster(faces, loops, touches, pinched)
        edit = topo_edit.excise_and_fill(mesh, cl)
        if edit is None:
            continue
        m_old = mesh.n_faces
        state.remap(edit)
        mesh = edit.mesh
        events.append(edit.event)
        old_to_new = np.full(m_old, -1)
        has = edit.face_parent >= 0
        old_to_new[edit.face_parent[has]] = np.flatnonzero(has)
        pending = [old_to_new[f] for f in pending]
    return mesh, events


def _refresh_cache(mesh, field, state):
    X = mesh.vertices
    state.f_v = field.value(X)
    state.f_c = field.value(mesh.centroids)
    _check_finite(state.f_v, X, mesh)
    _check_finite(state.f_c, mesh.centroids, mesh)


def run_extraction(field, config=None, callbacks=(), grid=None, mesh=None):
    """Extract the zero level set of ``field``.

    Parameters
    ----------
    field : ScalarField
        Field the loss is evaluated on.
    config : ExtractionConfig
    callbacks : iterable of callables
        Each is called as ``cb(record, mesh, state)`` after every iteration.
    grid : GridField, optional
        Lattice for the initial marching cubes; by default ``field`` itself if
        it is a grid, otherwise ``field`` sampled at ``config.k``.
    mesh : TriMesh, optional
        Skip marching cubes and start from this mesh.

    Raises
    ------
    EmptyLevelSet
        From marching cubes.
    NonFiniteLoss
        Carries the last good mesh.
    """
    config = config or ExtractionConfig()
    config.validate()
    timings = {"mc": 0.0, "optimization": 0.0, "topology": 0.0}
    t0 = time.perf_counter()
    if mesh is None:
        mesh = initial_mesh(field, config, grid)
    else:
        mesh = mesh.copy()
    start_mesh = mesh.copy()
    timings["mc"] = time.perf_counter() - t0

    state = OptimizerState.fresh(mesh.n_vertices, mesh.n_faces)
    log = []
    events = []
    aset = None
    total_iters = config.max_iterations + config.post_iterations
    t_opt = time.perf_counter()
    if total_iters:
        _refresh_cache(mesh, field, state)

    for j in range(1, total_iters + 1):
        t_it = time.perf_counter()
        state.j = j
        main_stage = j <= config.max_iterations
        may_edit = main_stage and not (config.skip_final_edits and j == config.max_iterations)
        event = []
        update_self_adaptive_weights(state, config.self_adaptive_enabled)

        edited = False
        if may_edit and config.topology_correction_enabled and j % config.s1 == 0:
            t_top = time.perf_counter()
            mesh, ev = _topology_pass(mesh, state, field, config)
            timings["topology"] += time.perf_counter() - t_top
            if ev:
                edited = True
                event += ev
        if config.mask_enabled and (
            j % config.beta_m == 0 or (main_stage and config.topology_correction_enabled and j % config.s1 == 0)
        ):
            update_activation_mask(state, mesh, config.w_t)
            aset = None
        if may_edit and config.subdivision_enabled and j % config.s2 == 0:
            t_top = time.perf_counter()
            edit = topo_edit.subdivide_high_weight(mesh, state.w_c, config.w_s)
            if edit.mesh is not mesh:
                state.remap(edit)
                mesh = edit.mesh
                edited = True
                event.append(edit.event)
            timings["topology"] += time.perf_counter() - t_top
        if edited:
            aset = None
            _refresh_cache(mesh, field, state)

        if aset is None:
            aset = _ActiveSet(mesh, state.active)
        lam = config.lambda1 if main_stage else 0.0
        try:
            loss, grad, fv, fc, aset = accuracy_aware_loss(mesh, field, state, config, aset, lambda1=lam)
        except NonFiniteLoss as exc:
            exc.last_good_mesh = mesh.copy()
            raise
        state.f_v[aset.act] = fv
        state.f_c[aset.faces] = fc
        state.acc_v += state.f_v
        state.acc_c += state.f_c

        if config.direction_correction_enabled and len(aset.act):
            act = aset.act
            normals = _active_normals(mesh, aset)
            w1 = aset.B @ state.w_c[aset.faces]
            # only where the surface still lies on the far side of the normal
            eligible = np.einsum("ij,ij->i", aset.field_grad, normals) > 0
            g_c, _ = correct_direction(grad[act], normals, w1, eligible)
            grad[act] = g_c

        X_new = vector_adam_step(state, mesh.vertices, grad, config.learning_rate, aset.act)
        mesh.vertices[:] = X_new

        if j % config.N_reset == 0 and j < total_iters:
            reset_weights(state)

        rec = IterationRecord(
            iter=j, distance_term=loss.distance_term, laplacian_term=loss.laplacian_term,
            active_vertices=len(aset.act), vertex_count=mesh.n_vertices, face_count=mesh.n_faces,
            wall_ms=1e3 * (time.perf_counter() - t_it), event=";".join(event),
        )
        log.append(rec)
        events += [(j, e) for e in event]
        for cb in callbacks:
            cb(rec, mesh, state)
    timings["optimization"] = time.perf_counter() - t_opt
    return ExtractionResult(mesh, log, start_mesh, state, timings, events, config)
