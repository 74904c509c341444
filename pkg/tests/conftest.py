import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from udfsw.mesh import TriMesh

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def icosphere(level=2, radius=1.0):
    """Subdivided icosahedron projected onto a sphere."""
    t = (1 + 5 ** 0.5) / 2
    V = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], float)
    F = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    for _ in range(level):
        cache = {}
        verts = list(V)

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        out = []
        for a, b, c in F:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            out += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        V, F = np.array(verts), np.array(out)
    return TriMesh(V * radius, F)


def torus_mesh(nu=24, nv=12, R=1.0, a=0.3):
    u, v = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    uu, vv = 2 * np.pi * u / nu, 2 * np.pi * v / nv
    V = np.stack([(R + a * np.cos(vv)) * np.cos(uu), (R + a * np.cos(vv)) * np.sin(uu), a * np.sin(vv)], -1)
    idx = lambda i, j: (i % nu) * nv + (j % nv)  # noqa: E731
    F = []
    for i in range(nu):
        for j in range(nv):
            F.append([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)])
            F.append([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)])
    return TriMesh(V.reshape(-1, 3), np.array(F))


def grid_mesh(n=6, size=1.0):
    """Flat triangulated square in z=0 with n x n quads."""
    xs = np.linspace(0, size, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    V = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], 1)
    F = []
    for i in range(n):
        for j in range(n):
            a = i * (n + 1) + j
            b, c, d = a + n + 1, a + n + 2, a + 1
            F += [[a, b, c], [a, c, d]]
    return TriMesh(V, np.array(F))


@pytest.fixture
def sphere_mesh():
    return icosphere(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "SUMMARY", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
