"""The compiled kernels and the numpy fallback must agree."""

from __future__ import annotations

import numpy as np
import pytest

from spherepack import kernels
from spherepack.geometry import RAY_TOL

pytestmark = pytest.mark.skipif("cython" not in kernels.available_backends(),
                                reason="compiled extension not built")


@pytest.fixture(scope="module")
def backends():
    return kernels.load_backend("cython"), kernels.load_backend("python")


def _data(seed, n_pts=3000, n_sph=7):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.2, 1.2, (n_pts, 3))
    normals = rng.standard_normal((n_pts, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    centers = rng.random((n_sph, 3))
    radii = rng.uniform(0.05, 0.4, n_sph)
    return pts, normals, centers, radii


def test_backend_selection(monkeypatch):
    monkeypatch.delenv("SPHEREPACK_PURE_PYTHON", raising=False)
    assert kernels._select()[0] == "cython"
    monkeypatch.setenv("SPHEREPACK_PURE_PYTHON", "1")
    assert kernels._select()[0] == "python"


@pytest.mark.parametrize("seed", range(3))
def test_nearest_queries(backends, seed):
    c_mod, p_mod = backends
    pts, _, centers, radii = _data(seed)
    sd_c, k_c = c_mod.nearest_signed(pts, centers, radii)
    sd_p, k_p = p_mod.nearest_signed(pts, centers, radii)
    assert np.allclose(sd_c, sd_p, rtol=0, atol=1e-14)
    assert np.array_equal(k_c, k_p)
    assert np.allclose(c_mod.nearest_unsigned(pts, centers, radii),
                       p_mod.nearest_unsigned(pts, centers, radii), rtol=0, atol=1e-14)
    assert np.array_equal(c_mod.any_sphere_contains(pts, centers, radii),
                          p_mod.any_sphere_contains(pts, centers, radii))


def test_argmin_ties_go_to_lowest_index(backends):
    pts = np.array([[0.0, 0.0, 0.0]])
    centers = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0]])
    radii = np.full(3, 0.5)
    for mod in backends:
        _, k = mod.nearest_signed(pts, centers, radii)
        assert k[0] == 0


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("center_closest", [False, True])
def test_point_losses(backends, seed, center_closest):
    c_mod, p_mod = backends
    pts, normals, centers, radii = _data(seed)
    inner = pts[:1500]
    args = (inner, pts[1500:], normals[1500:], centers, radii, 3.0, 5.0, 7.0, 11.0, center_closest, True)
    out_c = c_mod.point_losses(*args)
    out_p = p_mod.point_losses(*args)
    for a, b in zip(out_c[:4], out_p[:4]):
        assert a == pytest.approx(b, rel=1e-12, abs=1e-15)
    assert np.allclose(out_c[4], out_p[4], rtol=1e-10, atol=1e-13)
    assert np.allclose(out_c[5], out_p[5], rtol=1e-10, atol=1e-13)


def test_ray_parity(backends, sphere_mesh):
    c_mod, p_mod = backends
    frame = sphere_mesh._frame(0)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1.1, 1.1, (20000, 3))
    # add points exactly on vertices and edge midpoints
    v = sphere_mesh.vertices
    e = (v[sphere_mesh.faces[:, 0]] + v[sphere_mesh.faces[:, 1]]) / 2
    pts = np.ascontiguousarray(np.vstack([pts, v, e]) @ frame.rotation.T)
    args = (frame.tris, pts, frame.cell_start, frame.cell_faces, frame.lo[0], frame.lo[1],
            frame.inv[0], frame.inv[1], frame.grid, RAY_TOL)
    a = c_mod.ray_parity(*args)
    b = p_mod.ray_parity(*args)
    assert np.array_equal(a, b)
    # surface points are never reported as inside or ambiguous
    assert np.all(a[20000:] == 0)
