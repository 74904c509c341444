"""Compiled and pure-Python kernels must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from udfsw import kernels

BACKENDS = kernels.backends()
needs_both = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")


def brute_closest(p, a, b, c, n=400):
    """Closest point by dense barycentric sampling plus edge projection."""
    s = np.linspace(0, 1, n)
    U, V = np.meshgrid(s, s)
    ok = U + V <= 1
    pts = a + U[ok, None] * (b - a) + V[ok, None] * (c - a)
    d = np.linalg.norm(pts - p, axis=1)
    i = np.argmin(d)
    return pts[i], d[i]


@pytest.mark.parametrize("name", list(BACKENDS))
def test_closest_point_matches_sampling(name):
    mod = BACKENDS[name]
    rng = np.random.default_rng(4)
    for _ in range(20):
        a, b, c, p = rng.normal(size=(4, 3))
        cp = mod.closest_point_triangles(p[None], a[None], b[None], c[None])[0]
        _, bd = brute_closest(p, a, b, c)
        assert np.linalg.norm(cp - p) <= bd + 1e-12
        assert np.linalg.norm(cp - p) >= bd - 0.02


@needs_both
@given(st.integers(0, 2**31 - 1))
def test_trilinear_agrees(seed):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0, 1, tuple(rng.integers(2, 7, 3)))
    origin = rng.normal(size=3)
    spacing = rng.uniform(0.1, 1.0, 3)
    p = origin + rng.uniform(-0.5, 1.2, (50, 3)) * spacing * (np.array(vals.shape) - 1)
    v0, g0 = BACKENDS["python"].trilinear(vals, origin, spacing, p)
    v1, g1 = BACKENDS["cython"].trilinear(vals, origin, spacing, p)
    assert np.allclose(v0, v1, rtol=0, atol=1e-13)
    assert np.allclose(g0, g1, rtol=0, atol=1e-11)


@needs_both
@given(st.integers(0, 2**31 - 1))
def test_closest_point_agrees(seed):
    rng = np.random.default_rng(seed)
    n = 64
    a, b, c, p = (rng.normal(size=(n, 3)) for _ in range(4))
    # include degenerate-ish slivers
    c[:8] = a[:8] + 1e-9 * rng.normal(size=(8, 3))
    x0 = BACKENDS["python"].closest_point_triangles(p, a, b, c)
    x1 = BACKENDS["cython"].closest_point_triangles(p, a, b, c)
    d0 = np.linalg.norm(x0 - p, axis=1)
    d1 = np.linalg.norm(x1 - p, axis=1)
    assert np.allclose(d0, d1, atol=1e-12)


@needs_both
@given(st.integers(0, 2**31 - 1), st.integers(3, 30))
def test_min_area_triangulation_agrees(seed, n):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, 2 * np.pi, n))
    r = rng.uniform(0.5, 1.5, n)
    P = np.stack([r * np.cos(t), r * np.sin(t), rng.normal(0, 0.2, n)], 1)
    N = rng.normal(size=(n, 3))
    for normals in (None, N):
        t0 = BACKENDS["python"].min_area_triangulation(P, normals)
        t1 = BACKENDS["cython"].min_area_triangulation(P, normals)
        assert np.array_equal(t0, t1)


@pytest.mark.parametrize("name", list(BACKENDS))
def test_min_area_triangulation_is_optimal_on_square(name):
    # a non-planar quad: the cheaper diagonal must be chosen
    P = np.array([[0, 0, 0], [1, 0, 0.0], [1, 1, 0], [0, 1, 0.9]])
    tris = BACKENDS[name].min_area_triangulation(P)
    assert len(tris) == 2
    area = lambda t: 0.5 * np.linalg.norm(np.cross(P[t[1]] - P[t[0]], P[t[2]] - P[t[0]]))  # noqa: E731
    got = sum(area(t) for t in tris)
    alt = min(area([0, 1, 2]) + area([0, 2, 3]), area([0, 1, 3]) + area([1, 2, 3]))
    assert got == pytest.approx(alt)


def test_pure_python_switch():
    code = "import udfsw.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, UDFSW_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
