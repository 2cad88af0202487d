"""Vectorised numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``SPHEREPACK_PURE_PYTHON=1`` is set. Signatures mirror ``_ckernels.pyx``.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 8192
_COINCIDENT = 1e-12


def _chunks(n: int):
    for start in range(0, n, _CHUNK):
        yield start, min(start + _CHUNK, n)


def nearest_signed(points, centers, radii):
    """Per point, the minimum of ``|p - c_i| - r_i`` and the index attaining it."""
    points = np.asarray(points, dtype=np.float64)
    n_pts = points.shape[0]
    best = np.empty(n_pts)
    arg = np.empty(n_pts, dtype=np.int64)
    for lo, hi in _chunks(n_pts):
        diff = points[lo:hi, None, :] - centers[None, :, :]
        sd = np.sqrt(np.einsum("pij,pij->pi", diff, diff)) - radii[None, :]
        k = np.argmin(sd, axis=1)
        arg[lo:hi] = k
        best[lo:hi] = sd[np.arange(hi - lo), k]
    return best, arg


def nearest_unsigned(points, centers, radii):
    """Per point, ``min_i | |p - c_i| - r_i |``."""
    points = np.asarray(points, dtype=np.float64)
    out = np.empty(points.shape[0])
    for lo, hi in _chunks(points.shape[0]):
        diff = points[lo:hi, None, :] - centers[None, :, :]
        sd = np.sqrt(np.einsum("pij,pij->pi", diff, diff)) - radii[None, :]
        out[lo:hi] = np.min(np.abs(sd), axis=1)
    return out


def any_sphere_contains(points, centers, radii):
    points = np.asarray(points, dtype=np.float64)
    out = np.zeros(points.shape[0], dtype=bool)
    r2 = radii * radii
    for lo, hi in _chunks(points.shape[0]):
        diff = points[lo:hi, None, :] - centers[None, :, :]
        d2 = np.einsum("pij,pij->pi", diff, diff)
        out[lo:hi] = np.any(d2 <= r2[None, :], axis=1)
    return out


def _nearest_full(points, centers, radii):
    diff = points[:, None, :] - centers[None, :, :]
    d = np.sqrt(np.einsum("pij,pij->pi", diff, diff))
    sd = d - radii[None, :]
    k = np.argmin(sd, axis=1)
    rows = np.arange(points.shape[0])
    return sd[rows, k], k, d[rows, k], d


def _scatter(grad_c, grad_r, k, coef_dir, coef_r):
    n = grad_r.shape[0]
    for axis in range(3):
        grad_c[:, axis] += np.bincount(k, weights=coef_dir[:, axis], minlength=n)
    grad_r += np.bincount(k, weights=coef_r, minlength=n)


def point_losses(interior, surface, normals, centers, radii,
                 w_c, w_b, w_s, w_q, sqem_center, want_grad):
    """Coverage, boundary, surface and SQEM means plus their weighted gradient.

    Returns ``(cover, bound, surf, sqem, grad_centers, grad_radii)``; the
    gradient already carries the four weights.
    """
    n = centers.shape[0]
    grad_c = np.zeros((n, 3))
    grad_r = np.zeros(n)
    n_int = interior.shape[0]
    n_surf = surface.shape[0]

    cover = 0.0
    for lo, hi in _chunks(n_int):
        p = interior[lo:hi]
        s, k, d, _ = _nearest_full(p, centers, radii)
        active = s > 0.0
        cover += float(np.sum(np.where(active, s, 0.0)))
        if want_grad:
            ok = active & (d > _COINCIDENT)
            coef = w_c / n_int
            unit = (p - centers[k]) / np.where(ok, d, 1.0)[:, None]
            _scatter(grad_c, grad_r, k,
                     np.where(ok[:, None], -coef * unit, 0.0),
                     np.where(ok, -coef, 0.0))

    bound = surf = sqem = 0.0
    for lo, hi in _chunks(n_surf):
        q = surface[lo:hi]
        nq = normals[lo:hi]
        s, k, d, dall = _nearest_full(q, centers, radii)
        bound += float(np.sum(np.where(s < 0.0, -s, 0.0)))
        surf += float(np.sum(np.abs(s)))
        if sqem_center:
            kq = np.argmin(dall, axis=1)
        else:
            kq = k
        e = np.einsum("pi,pi->p", q - centers[kq], nq) - radii[kq]
        sqem += float(np.sum(e * e))
        if want_grad:
            ok = d > _COINCIDENT
            unit = (q - centers[k]) / np.where(ok, d, 1.0)[:, None]
            # d s / d c = -unit, d s / d r = -1
            ds = (w_b / n_surf) * np.where(s < 0.0, -1.0, 0.0) + (w_s / n_surf) * np.sign(s)
            ds = np.where(ok, ds, 0.0)
            _scatter(grad_c, grad_r, k, -ds[:, None] * unit, -ds)
            coef = 2.0 * w_q / n_surf * e
            _scatter(grad_c, grad_r, kq, -coef[:, None] * nq, -coef)

    return (cover / n_int, bound / n_surf, surf / n_surf, sqem / n_surf,
            grad_c, grad_r)


def _seg_dist(py, pz, ay, az, by, bz):
    ey = by - ay
    ez = bz - az
    l2 = ey * ey + ez * ez
    t = np.where(l2 > 0.0, ((py - ay) * ey + (pz - az) * ez) / np.where(l2 > 0.0, l2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    dy = py - (ay + t * ey)
    dz = pz - (az + t * ez)
    return np.sqrt(dy * dy + dz * dz)


def _seg_dist3(p, a, b):
    e = b - a
    l2 = np.sum(e * e, axis=-1)
    t = np.sum((p - a) * e, axis=-1) / np.where(l2 > 0.0, l2, 1.0)
    t = np.clip(np.where(l2 > 0.0, t, 0.0), 0.0, 1.0)
    d = p - (a + t[..., None] * e)
    return np.sqrt(np.sum(d * d, axis=-1))


def ray_parity(tris, points, cell_start, cell_faces, lo_y, lo_z, inv_y, inv_z, grid, tol):
    """Crossing parity of +x rays against triangles binned on a (y, z) grid.

    Result codes: 1 inside, 0 outside or on the surface, 2 ambiguous (the ray
    passes within ``tol`` of an edge or vertex ahead of the point). Lying on
    the surface takes precedence over ambiguity.
    """
    points = np.asarray(points, dtype=np.float64)
    n_pts = points.shape[0]
    out = np.zeros(n_pts, dtype=np.int8)
    iy = np.floor((points[:, 1] - lo_y) * inv_y)
    iz = np.floor((points[:, 2] - lo_z) * inv_z)
    valid = (iy >= 0) & (iy < grid) & (iz >= 0) & (iz < grid)
    cell = np.where(valid, iy * grid + iz, -1).astype(np.int64)
    order = np.argsort(cell, kind="stable")
    sorted_cells = cell[order]
    uniq, starts = np.unique(sorted_cells, return_index=True)
    ends = np.append(starts[1:], n_pts)
    for c, s0, s1 in zip(uniq, starts, ends):
        if c < 0:
            continue
        faces = cell_faces[cell_start[c]:cell_start[c + 1]]
        if faces.size == 0:
            continue
        idx = order[s0:s1]
        p = points[idx]
        t = tris[faces]
        px = p[:, 0:1]
        py = p[:, 1:2]
        pz = p[:, 2:3]
        ax, ay, az = t[None, :, 0, 0], t[None, :, 0, 1], t[None, :, 0, 2]
        bx, by, bz = t[None, :, 1, 0], t[None, :, 1, 1], t[None, :, 1, 2]
        cx, cy, cz = t[None, :, 2, 0], t[None, :, 2, 1], t[None, :, 2, 2]
        in_box = ((py >= np.minimum(np.minimum(ay, by), cy) - tol)
                  & (py <= np.maximum(np.maximum(ay, by), cy) + tol)
                  & (pz >= np.minimum(np.minimum(az, bz), cz) - tol)
                  & (pz <= np.maximum(np.maximum(az, bz), cz) + tol))
        dmin = np.minimum(np.minimum(_seg_dist(py, pz, ay, az, by, bz),
                                     _seg_dist(py, pz, by, bz, cy, cz)),
                          _seg_dist(py, pz, cy, cz, ay, az))
        xmax = np.maximum(np.maximum(ax, bx), cx)
        near_edge = in_box & (dmin < tol)
        p3 = p[:, None, :]
        a3, b3, c3 = t[None, :, 0], t[None, :, 1], t[None, :, 2]
        on_edge = near_edge & ((_seg_dist3(p3, a3, b3) < tol) | (_seg_dist3(p3, b3, c3) < tol)
                               | (_seg_dist3(p3, c3, a3) < tol))
        ambiguous = near_edge & ~on_edge & (xmax >= px - tol)
        wa = (by - py) * (cz - pz) - (bz - pz) * (cy - py)
        wb = (cy - py) * (az - pz) - (cz - pz) * (ay - py)
        wc = (ay - py) * (bz - pz) - (az - pz) * (by - py)
        area2 = wa + wb + wc
        pos = (wa > 0) & (wb > 0) & (wc > 0)
        neg = (wa < 0) & (wb < 0) & (wc < 0)
        hit = in_box & ~near_edge & (pos | neg) & (area2 != 0.0)
        xhit = (wa * ax + wb * bx + wc * cx) / np.where(area2 != 0.0, area2, 1.0)
        on_surface = (hit & (np.abs(xhit - px) <= tol)) | on_edge
        crossing = hit & (xhit > px + tol)
        n_cross = np.sum(crossing, axis=1)
        res = np.where(n_cross % 2 == 1, 1, 0).astype(np.int8)
        res = np.where(np.any(ambiguous, axis=1), 2, res)
        res = np.where(np.any(on_surface, axis=1), 0, res).astype(np.int8)
        out[idx] = res
    return out
