"""Unsigned distance field sources.

Every field answers vectorized ``value`` / ``gradient`` queries on ``(N, 3)``
point arrays (a single ``(3,)`` point is accepted too). Analytic primitives
and mesh/point-cloud fields are exact distances; :class:`GridField` is a
trilinear interpolant of sampled values.
"""

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .errors import ParameterError, ParseError

UNIT_BOX = np.array([[-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]])

GRID_MAGIC = b"UDFG"
GRID_VERSION = 1
_GRID_HEADER = struct.Struct("<4sI3I6d")


def _as_points(points):
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    return np.atleast_2d(p), single


class ScalarField:
    """Queryable non-negative scalar field with gradient access.

    Subclasses implement :meth:`_evaluate`, returning values, gradients and a
    boolean "degenerate gradient" flag per point.
    """

    #: finite-difference step used to decide when a gradient is flagged
    fd_step = 1e-4
    #: whether ``|f(p) - f(q)| <= |p - q|`` holds exactly
    lipschitz = True

    def _evaluate(self, points):
        raise NotImplementedError

    def value(self, points):
        p, single = _as_points(points)
        v = self._value(p)
        return v[0] if single else v

    def _value(self, p):
        return self._evaluate(p)[0]

    def gradient(self, points, return_flags=False):
        """Gradient at ``points``.

        With ``return_flags=True`` also returns a boolean array marking points
        where the gradient is unreliable: the value is below the
        finite-difference step or the closest point is not unique. Degenerate
        points (value exactly 0) get a zero vector.
        """
        p, single = _as_points(points)
        _, g, flags = self._evaluate(p)
        if single:
            g, flags = g[0], flags[0]
        return (g, flags) if return_flags else g

    def value_and_gradient(self, points):
        p, _ = _as_points(points)
        v, g, _ = self._evaluate(p)
        return v, g

    def bounds(self):
        """Axis-aligned box containing the zero set, as a (2, 3) array."""
        return UNIT_BOX.copy()


# --------------------------------------------------------------------------
# analytic surfaces


class Surface:
    """Closed-form surface with a closest-point projection."""

    def closest(self, p):
        """Closest surface points to ``p`` (N, 3) and a non-uniqueness mask."""
        raise NotImplementedError

    def area(self):
        raise NotImplementedError

    def sample(self, n, rng):
        """``n`` area-uniform samples on the surface."""
        raise NotImplementedError

    def bounds(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Sphere(Surface):
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.3

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError(f"sphere radius must be positive, got {self.radius}")

    def closest(self, p):
        c = np.asarray(self.center)
        d = p - c
        n = np.sqrt((d * d).sum(axis=1))
        deg = n == 0
        u = d / np.where(deg, 1.0, n)[:, None]
        u[deg] = (1.0, 0.0, 0.0)
        return c + self.radius * u, deg

    def area(self):
        return 4.0 * np.pi * self.radius**2

    def sample(self, n, rng):
        u = rng.normal(size=(n, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return np.asarray(self.center) + self.radius * u

    def bounds(self):
        c = np.asarray(self.center)
        return np.array([c - self.radius, c + self.radius])


@dataclass(frozen=True)
class Torus(Surface):
    """Torus around the z axis through ``center``."""

    center: tuple = (0.0, 0.0, 0.0)
    major_radius: float = 0.25
    minor_radius: float = 0.08

    def __post_init__(self):
        if not (self.major_radius > 0 and self.minor_radius > 0):
            raise ParameterError("torus radii must be positive")
        if self.minor_radius >= self.major_radius:
            raise ParameterError("torus minor radius must be below the major radius")

    def closest(self, p):
        c = np.asarray(self.center)
        d = p - c
        rho = np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2)
        axis_deg = rho == 0
        rho_s = np.where(axis_deg, 1.0, rho)
        ex = np.where(axis_deg, 1.0, d[:, 0] / rho_s)
        ey = np.where(axis_deg, 0.0, d[:, 1] / rho_s)
        # tube center on the core circle, then project onto the tube
        core = np.stack([self.major_radius * ex, self.major_radius * ey, np.zeros_like(ex)], axis=1)
        q = d - core
        qn = np.sqrt((q * q).sum(axis=1))
        core_deg = qn == 0
        u = q / np.where(core_deg, 1.0, qn)[:, None]
        u[core_deg] = np.stack([ex, ey, np.zeros_like(ex)], axis=1)[core_deg]
        return c + core + self.minor_radius * u, axis_deg | core_deg

    def area(self):
        return 4.0 * np.pi**2 * self.major_radius * self.minor_radius

    def sample(self, n, rng):
        R, a = self.major_radius, self.minor_radius
        out = np.empty((0, 3))
        while len(out) < n:
            m = 2 * (n - len(out)) + 16
            u = rng.uniform(0, 2 * np.pi, m)
            v = rng.uniform(0, 2 * np.pi, m)
            keep = rng.uniform(0, R + a, m) < R + a * np.cos(v)
            u, v = u[keep], v[keep]
            pts = np.stack(
                [(R + a * np.cos(v)) * np.cos(u), (R + a * np.cos(v)) * np.sin(u), a * np.sin(v)],
                axis=1,
            )
            out = np.vstack([out, pts])
        return np.asarray(self.center) + out[:n]

    def bounds(self):
        c = np.asarray(self.center)
        e = np.array([self.major_radius + self.minor_radius] * 2 + [self.minor_radius])
        return np.array([c - e, c + e])


@dataclass(frozen=True)
class Disk(Surface):
    """Flat open disk in the plane ``z = center[2]``."""

    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.3

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError(f"disk radius must be positive, got {self.radius}")

    def closest(self, p):
        c = np.asarray(self.center)
        d = p - c
        rho = np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2)
        scale = np.where(rho > self.radius, self.radius / np.where(rho > 0, rho, 1.0), 1.0)
        cp = np.stack([d[:, 0] * scale, d[:, 1] * scale, np.zeros(len(d))], axis=1)
        return c + cp, np.zeros(len(d), dtype=bool)

    def area(self):
        return np.pi * self.radius**2

    def sample(self, n, rng):
        rad = self.radius * np.sqrt(rng.uniform(0, 1, n))
        t = rng.uniform(0, 2 * np.pi, n)
        return np.asarray(self.center) + np.stack([rad * np.cos(t), rad * np.sin(t), np.zeros(n)], axis=1)

    def bounds(self):
        c = np.asarray(self.center)
        e = np.array([self.radius, self.radius, 0.0])
        return np.array([c - e, c + e])


@dataclass(frozen=True)
class Tube(Surface):
    """Open finite cylinder (no caps) with its axis along x."""

    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.1
    length: float = 0.5

    def __post_init__(self):
        if not (self.radius > 0 and self.length > 0):
            raise ParameterError("tube radius and length must be positive")

    def closest(self, p):
        c = np.asarray(self.center)
        d = p - c
        t = np.clip(d[:, 0], -0.5 * self.length, 0.5 * self.length)
        rho = np.sqrt(d[:, 1] ** 2 + d[:, 2] ** 2)
        deg = rho == 0
        rs = np.where(deg, 1.0, rho)
        ey = np.where(deg, 1.0, d[:, 1] / rs)
        ez = np.where(deg, 0.0, d[:, 2] / rs)
        cp = np.stack([t, self.radius * ey, self.radius * ez], axis=1)
        return c + cp, deg

    def area(self):
        return 2.0 * np.pi * self.radius * self.length

    def sample(self, n, rng):
        x = rng.uniform(-0.5 * self.length, 0.5 * self.length, n)
        t = rng.uniform(0, 2 * np.pi, n)
        return np.asarray(self.center) + np.stack(
            [x, self.radius * np.cos(t), self.radius * np.sin(t)], axis=1
        )

    def bounds(self):
        c = np.asarray(self.center)
        e = np.array([0.5 * self.length, self.radius, self.radius])
        return np.array([c - e, c + e])


@dataclass(frozen=True)
class Rectangle(Surface):
    """Planar rectangle ``center + s*u + t*v`` with ``|s| <= half[0]``, ``|t| <= half[1]``."""

    center: tuple = (0.0, 0.0, 0.0)
    u: tuple = (1.0, 0.0, 0.0)
    v: tuple = (0.0, 1.0, 0.0)
    half: tuple = (0.25, 0.25)

    def __post_init__(self):
        u, v = np.asarray(self.u, float), np.asarray(self.v, float)
        if not (abs(np.linalg.norm(u) - 1) < 1e-12 and abs(np.linalg.norm(v) - 1) < 1e-12 and abs(u @ v) < 1e-12):
            raise ParameterError("rectangle axes must be orthonormal")
        if not (self.half[0] > 0 and self.half[1] > 0):
            raise ParameterError("rectangle extents must be positive")

    def closest(self, p):
        c, u, v = (np.asarray(x, float) for x in (self.center, self.u, self.v))
        d = p - c
        s = np.clip(d @ u, -self.half[0], self.half[0])
        t = np.clip(d @ v, -self.half[1], self.half[1])
        return c + s[:, None] * u + t[:, None] * v, np.zeros(len(p), dtype=bool)

    def area(self):
        return 4.0 * self.half[0] * self.half[1]

    def sample(self, n, rng):
        c, u, v = (np.asarray(x, float) for x in (self.center, self.u, self.v))
        s = rng.uniform(-self.half[0], self.half[0], n)
        t = rng.uniform(-self.half[1], self.half[1], n)
        return c + s[:, None] * u + t[:, None] * v

    def bounds(self):
        c, u, v = (np.asarray(x, float) for x in (self.center, self.u, self.v))
        e = np.abs(u) * self.half[0] + np.abs(v) * self.half[1]
        return np.array([c - e, c + e])


class Union(Surface):
    def __init__(self, parts):
        if not parts:
            raise ParameterError("union needs at least one surface")
        self.parts = list(parts)

    def closest(self, p):
        best = None
        best_d = None
        deg = np.zeros(len(p), dtype=bool)
        for part in self.parts:
            cp, dg = part.closest(p)
            d = ((p - cp) ** 2).sum(axis=1)
            if best is None:
                best, best_d, deg = cp, d, dg
                continue
            tie = d == best_d
            better = d < best_d
            best = np.where(better[:, None], cp, best)
            deg = np.where(better, dg, deg | (tie & (d > 0)))
            best_d = np.minimum(d, best_d)
        return best, deg

    def area(self):
        return sum(p.area() for p in self.parts)

    def sample(self, n, rng):
        areas = np.array([p.area() for p in self.parts])
        counts = _largest_remainder(areas / areas.sum() * n)
        return np.vstack([p.sample(c, rng) for p, c in zip(self.parts, counts)])

    def bounds(self):
        b = np.array([p.bounds() for p in self.parts])
        return np.array([b[:, 0].min(axis=0), b[:, 1].max(axis=0)])


def _largest_remainder(quotas):
    base = np.floor(quotas).astype(np.int64)
    short = int(round(quotas.sum())) - int(base.sum())
    if short > 0:
        order = np.argsort(-(quotas - base), kind="stable")
        base[order[:short]] += 1
    return base


class SurfaceField(ScalarField):
    """Exact unsigned distance to an analytic :class:`Surface`."""

    def __init__(self, surface, name=None):
        self.surface = surface
        self.name = name or type(surface).__name__.lower()

    def _evaluate(self, p):
        cp, deg = self.surface.closest(p)
        diff = p - cp
        v = np.sqrt((diff * diff).sum(axis=1))
        zero = v == 0
        g = diff / np.where(zero, 1.0, v)[:, None]
        g[zero] = 0.0
        return v, g, deg | (v < self.fd_step)

    def _value(self, p):
        cp, _ = self.surface.closest(p)
        diff = p - cp
        return np.sqrt((diff * diff).sum(axis=1))

    def bounds(self):
        return self.surface.bounds()

    def sample_surface(self, n, seed=0):
        return self.surface.sample(n, np.random.default_rng(seed))

    def __repr__(self):
        return f"SurfaceField({self.surface!r})"


def _check_in_box(surface, margin=0.0):
    b = surface.bounds()
    if (b[0] < UNIT_BOX[0] + margin).any() or (b[1] > UNIT_BOX[1] - margin).any():
        raise ParameterError(f"shape does not fit in the unit box: bounds {b.tolist()}")


PRIMITIVES = ("sphere", "torus", "disk", "cylinder_plane", "u_channel")


def cylinder_plane_surface(radius=0.12, length=0.5, gap=0.02, plane_half=0.3, center=(0.0, 0.0, 0.05)):
    """Open tube along x and a square plate below it, ``gap`` apart."""
    if not gap > 0:
        raise ParameterError(f"gap must be positive, got {gap}")
    c = np.asarray(center, float)
    tube = Tube(center=tuple(c), radius=radius, length=length)
    plate_z = c[2] - radius - gap
    plate = Rectangle(center=(c[0], c[1], plate_z), half=(plane_half, plane_half))
    return Union([tube, plate])


def u_channel_surface(width=0.06, depth=0.15, flange=0.12, length=0.5, center=(0.0, 0.0, 0.1)):
    """Sheet with a deep rectangular groove, extruded along y.

    Cross-section in xz: a flange at the top on each side, two vertical walls
    ``depth`` deep and a floor ``width`` wide.
    """
    if not (width > 0 and depth > 0 and flange > 0 and length > 0):
        raise ParameterError("u_channel dimensions must be positive")
    c = np.asarray(center, float)
    hl = 0.5 * length
    ex, ey, ez = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)
    hw = 0.5 * width
    parts = [
        # flanges
        Rectangle(center=tuple(c + (-hw - 0.5 * flange, 0, 0)), u=ex, v=ey, half=(0.5 * flange, hl)),
        Rectangle(center=tuple(c + (hw + 0.5 * flange, 0, 0)), u=ex, v=ey, half=(0.5 * flange, hl)),
        # walls
        Rectangle(center=tuple(c + (-hw, 0, -0.5 * depth)), u=ez, v=ey, half=(0.5 * depth, hl)),
        Rectangle(center=tuple(c + (hw, 0, -0.5 * depth)), u=ez, v=ey, half=(0.5 * depth, hl)),
        # floor
        Rectangle(center=tuple(c + (0, 0, -depth)), u=ex, v=ey, half=(hw, hl)),
    ]
    return Union(parts)


def make_primitive_field(kind, **params):
    """Exact unsigned distance field of a named synthetic surface.

    ``kind`` is one of ``sphere``, ``torus``, ``disk``, ``cylinder_plane``,
    ``u_channel``; keyword parameters are forwarded to the shape. Raises
    :class:`ParameterError` for unknown kinds, invalid parameters, or shapes
    that leave the unit box.
    """
    builders = {
        "sphere": Sphere,
        "torus": Torus,
        "disk": Disk,
        "cylinder_plane": cylinder_plane_surface,
        "u_channel": u_channel_surface,
    }
    if kind not in builders:
        raise ParameterError(f"unknown primitive {kind!r}; expected one of {', '.join(PRIMITIVES)}")
    params = {k: (tuple(v) if isinstance(v, (list, np.ndarray)) else v) for k, v in params.items()}
    try:
        surface = builders[kind](**params)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {kind}: {exc}") from None
    _check_in_box(surface)
    return SurfaceField(surface, name=kind)


# --------------------------------------------------------------------------
# mesh and point-cloud distance


class MeshField(ScalarField):
    """Exact distance to a triangle soup.

    Candidate triangles come from a k-d tree over centroids; a triangle whose
    centroid is farther than ``d_best + r_max`` (``r_max`` = largest
    centroid-to-vertex distance) cannot be closer, so the search is exact.
    """

    def __init__(self, vertices, faces=None):
        if faces is None:  # TriMesh-like
            vertices, faces = vertices.vertices, vertices.faces
        V = np.asarray(vertices, dtype=np.float64)
        F = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if len(F) == 0 or len(V) == 0:
            raise ParameterError("mesh field needs a non-empty mesh")
        self.tri = V[F]  # (m, 3, 3)
        cent = self.tri.mean(axis=1)
        self.r_max = float(np.sqrt(((self.tri - cent[:, None]) ** 2).sum(axis=2)).max())
        self.tree = cKDTree(cent)
        self.n_tri = len(F)
        # closest-point roundoff for queries lying on a triangle
        self.zero_tol = 64 * np.finfo(float).eps * max(1.0, float(np.abs(self.tri).max()))

    def _closest_to(self, p, tri_idx):
        t = self.tri[tri_idx]
        return kernels.closest_point_triangles(p, t[:, 0], t[:, 1], t[:, 2])

    def closest(self, p):
        n = len(p)
        best_cp = np.empty((n, 3))
        best_d = np.full(n, np.inf)
        todo = np.arange(n)
        k = min(8, self.n_tri)
        while len(todo):
            q = p[todo]
            dc, idx = self.tree.query(q, k=k)
            if k == 1:
                dc, idx = dc[:, None], idx[:, None]
            rep = np.repeat(q, k, axis=0)
            cp = self._closest_to(rep, idx.ravel()).reshape(-1, k, 3)
            d = np.sqrt(((q[:, None, :] - cp) ** 2).sum(axis=2))
            j = np.argmin(d, axis=1)
            rows = np.arange(len(q))
            dmin = d[rows, j]
            better = dmin < best_d[todo]
            best_d[todo[better]] = dmin[better]
            best_cp[todo[better]] = cp[rows, j][better]
            if k >= self.n_tri:
                break
            unresolved = dc[:, -1] < best_d[todo] + self.r_max
            todo = todo[unresolved]
            k = min(4 * k, self.n_tri)
        return best_cp

    def _evaluate(self, p):
        cp = self.closest(p)
        diff = p - cp
        v = np.sqrt((diff * diff).sum(axis=1))
        zero = v <= self.zero_tol
        v[zero] = 0.0
        g = diff / np.where(zero, 1.0, v)[:, None]
        g[zero] = 0.0
        return v, g, v < self.fd_step

    def bounds(self):
        flat = self.tri.reshape(-1, 3)
        return np.array([flat.min(axis=0), flat.max(axis=0)])


class PointCloudField(ScalarField):
    """Distance to the nearest point of a cloud."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            raise ParameterError("point cloud field needs at least one point")
        self.points = pts
        self.tree = cKDTree(pts)

    def _evaluate(self, p):
        d, i = self.tree.query(p, k=1)
        diff = p - self.points[i]
        zero = d == 0
        g = diff / np.where(zero, 1.0, d)[:, None]
        g[zero] = 0.0
        return d, g, d < self.fd_step

    def bounds(self):
        return np.array([self.points.min(axis=0), self.points.max(axis=0)])


# --------------------------------------------------------------------------
# sampled grids


class GridField(ScalarField):
    """Trilinear interpolant of lattice samples over an axis-aligned box.

    ``values`` is indexed ``[ix, iy, iz]``. Queries outside the box clamp to
    the boundary value.
    """

    lipschitz = False

    def __init__(self, values, bbox=UNIT_BOX):
        vals = np.ascontiguousarray(values, dtype=np.float64)
        bbox = np.asarray(bbox, dtype=np.float64).reshape(2, 3)
        if vals.ndim != 3 or min(vals.shape) < 2:
            raise ParameterError(f"grid needs at least 2 samples per axis, got shape {vals.shape}")
        if not (bbox[1] > bbox[0]).all():
            raise ParameterError("grid bbox must have positive extent on each axis")
        if (vals < 0).any() or not np.isfinite(vals).all():
            raise ParameterError("grid values must be finite and non-negative")
        self.values = vals
        self.bbox = bbox
        self.dims = vals.shape
        self.spacing = (bbox[1] - bbox[0]) / (np.array(self.dims) - 1)
        self.fd_step = 0.5 * float(self.spacing.min())

    def _evaluate(self, p):
        v, g = kernels.trilinear(self.values, self.bbox[0], self.spacing, p)
        return v, g, v < self.fd_step

    def _value(self, p):
        return kernels.trilinear(self.values, self.bbox[0], self.spacing, p)[0]

    def lattice(self):
        """Coordinates of the lattice points along each axis."""
        return [np.linspace(self.bbox[0, a], self.bbox[1, a], self.dims[a]) for a in range(3)]

    def bounds(self):
        return self.bbox.copy()

    def save(self, path):
        save_udfgrid(self, path)

    @classmethod
    def load(cls, path):
        return load_udfgrid(path)


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean Gaussian noise added to sampled values (then clamped at 0)."""

    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ParameterError(f"noise sigma must be >= 0, got {self.sigma}")


def _dims3(dims):
    d = np.broadcast_to(np.asarray(dims, dtype=np.int64), (3,))
    if (d < 2).any():
        raise ParameterError(f"grid dims must be >= 2 per axis, got {tuple(d)}")
    return tuple(int(x) for x in d)


def sample_grid(field, dims, bbox=UNIT_BOX, noise=None, threads=1):
    """Sample ``field`` on a lattice and wrap it as a :class:`GridField`.

    ``dims`` is an int or a 3-tuple. Noise (if any) is added after sampling,
    then negatives are clamped to zero. ``threads`` only splits the work; the
    result does not depend on it.
    """
    dims = _dims3(dims)
    bbox = np.asarray(bbox, dtype=np.float64).reshape(2, 3)
    xs, ys, zs = (np.linspace(bbox[0, a], bbox[1, a], dims[a]) for a in range(3))
    out = np.empty(dims)
    yy, zz = np.meshgrid(ys, zs, indexing="ij")
    yz = np.stack([yy.ravel(), zz.ravel()], axis=1)

    def slab(ix):
        pts = np.empty((len(yz), 3))
        pts[:, 0] = xs[ix]
        pts[:, 1:] = yz
        out[ix] = field.value(pts).reshape(dims[1], dims[2])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(slab, range(dims[0])))
    else:
        for ix in range(dims[0]):
            slab(ix)

    if noise is not None and noise.sigma > 0:
        rng = np.random.default_rng(noise.seed)
        out += rng.normal(0.0, noise.sigma, size=dims)
    np.maximum(out, 0.0, out=out)
    return GridField(out, bbox)


def save_udfgrid(grid, path):
    """Write a ``.udfgrid`` file: little-endian header then float32 values, x fastest."""
    nx, ny, nz = grid.dims
    header = _GRID_HEADER.pack(GRID_MAGIC, GRID_VERSION, nx, ny, nz, *grid.bbox[0], *grid.bbox[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(grid.values, dtype="<f4").ravel(order="F").tobytes())


def load_udfgrid(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _GRID_HEADER.size:
        raise ParseError("file too short for a udfgrid header", path)
    magic, version, nx, ny, nz, *box = _GRID_HEADER.unpack_from(data)
    if magic != GRID_MAGIC:
        raise ParseError(f"bad magic {magic!r}", path)
    if version != GRID_VERSION:
        raise ParseError(f"unsupported udfgrid version {version}", path)
    count = nx * ny * nz
    body = data[_GRID_HEADER.size:]
    if len(body) != 4 * count:
        raise ParseError(f"expected {count} float32 values, found {len(body) // 4}", path)
    vals = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape((nx, ny, nz), order="F")
    try:
        return GridField(vals, np.array(box).reshape(2, 3))
    except ParameterError as exc:
        raise ParseError(str(exc), path) from None


def estimate_d_max(sampled, clean, k):
    """Largest sampled value at lattice points lying within ``1/k`` of the zero set.

    ``clean`` supplies the true distances used to pick those points; pass the
    same grid twice when no noise-free reference exists.
    """
    near = clean.values < 1.0 / k
    if not near.any():
        return 0.0
    return float(sampled.values[near].max())


@dataclass(frozen=True)
class IsoCheck:
    ok: bool
    lower: float
    upper: float
    message: str = ""


def validate_iso_value(r, k, d_max=0.0, eta_min=None):
    """Check ``max(1/(2k), d_max) <= r <= eta_min/2``.

    Advisory only: returns an :class:`IsoCheck` carrying a warning message
    instead of raising. ``eta_min=None`` means no upper bound.
    """
    if not r > 0:
        raise ParameterError(f"iso-value must be positive, got {r}")
    if k < 2:
        raise ParameterError(f"grid resolution must be >= 2, got {k}")
    lower = max(1.0 / (2 * k), float(d_max))
    upper = np.inf if eta_min is None else 0.5 * float(eta_min)
    eps = 1e-12
    problems = []
    if r < lower * (1 - eps):
        which = "1/(2k)" if lower == 1.0 / (2 * k) else "d_max"
        problems.append(f"r={r:g} is below the lower bound {which}={lower:g}; the r-level set may be unstable")
    if r > upper * (1 + eps):
        problems.append(f"r={r:g} exceeds eta_min/2={upper:g}; gaps narrower than 2r will be bridged")
    if lower > upper:
        problems.append(f"empty admissible range [{lower:g}, {upper:g}]")
    return IsoCheck(not problems, lower, upper, "; ".join(problems))


def make_mesh_field(mesh):
    """Exact unsigned distance to the triangles of ``mesh``."""
    return MeshField(mesh.vertices, mesh.faces)
