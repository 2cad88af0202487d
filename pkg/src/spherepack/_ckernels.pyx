# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Signatures mirror ``_pykernels``.

All reductions run sequentially in point order, so results are
bit-reproducible for a given build.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, floor, INFINITY

cnp.import_array()

cdef double COINCIDENT = 1e-12


def nearest_signed(const double[:, ::1] points, const double[:, ::1] centers,
                   const double[::1] radii):
    cdef Py_ssize_t n_pts = points.shape[0], n = centers.shape[0], p, i
    cdef double[::1] best = np.empty(n_pts)
    cdef cnp.int64_t[::1] arg = np.empty(n_pts, dtype=np.int64)
    cdef double dx, dy, dz, s, b
    cdef Py_ssize_t k
    with nogil:
        for p in range(n_pts):
            b = INFINITY
            k = 0
            for i in range(n):
                dx = points[p, 0] - centers[i, 0]
                dy = points[p, 1] - centers[i, 1]
                dz = points[p, 2] - centers[i, 2]
                s = sqrt(dx * dx + dy * dy + dz * dz) - radii[i]
                if s < b:
                    b = s
                    k = i
            best[p] = b
            arg[p] = k
    return np.asarray(best), np.asarray(arg)


def nearest_unsigned(const double[:, ::1] points, const double[:, ::1] centers,
                     const double[::1] radii):
    cdef Py_ssize_t n_pts = points.shape[0], n = centers.shape[0], p, i
    cdef double[::1] out = np.empty(n_pts)
    cdef double dx, dy, dz, s, b
    with nogil:
        for p in range(n_pts):
            b = INFINITY
            for i in range(n):
                dx = points[p, 0] - centers[i, 0]
                dy = points[p, 1] - centers[i, 1]
                dz = points[p, 2] - centers[i, 2]
                s = fabs(sqrt(dx * dx + dy * dy + dz * dz) - radii[i])
                if s < b:
                    b = s
            out[p] = b
    return np.asarray(out)


def any_sphere_contains(const double[:, ::1] points, const double[:, ::1] centers,
                        const double[::1] radii):
    cdef Py_ssize_t n_pts = points.shape[0], n = centers.shape[0], p, i
    cdef cnp.uint8_t[::1] out = np.zeros(n_pts, dtype=np.uint8)
    cdef double dx, dy, dz
    with nogil:
        for p in range(n_pts):
            for i in range(n):
                dx = points[p, 0] - centers[i, 0]
                dy = points[p, 1] - centers[i, 1]
                dz = points[p, 2] - centers[i, 2]
                if dx * dx + dy * dy + dz * dz <= radii[i] * radii[i]:
                    out[p] = 1
                    break
    return np.asarray(out).view(bool)


def point_losses(const double[:, ::1] interior, const double[:, ::1] surface,
                 const double[:, ::1] normals, const double[:, ::1] centers,
                 const double[::1] radii, double w_c, double w_b, double w_s,
                 double w_q, bint sqem_center, bint want_grad):
    cdef Py_ssize_t n = centers.shape[0], n_int = interior.shape[0]
    cdef Py_ssize_t n_surf = surface.shape[0], p, i, k, kq
    cdef cnp.ndarray[double, ndim=2] grad_c_arr = np.zeros((n, 3))
    cdef cnp.ndarray[double, ndim=1] grad_r_arr = np.zeros(n)
    cdef double[:, ::1] gc = grad_c_arr
    cdef double[::1] gr = grad_r_arr
    cdef double dx, dy, dz, d, s, b, bd, d2, bd2, e, coef, ds
    cdef double cover = 0.0, bound = 0.0, surf = 0.0, sqem = 0.0
    cdef double c_cover = w_c / n_int if n_int > 0 else 0.0
    cdef double c_bound = w_b / n_surf if n_surf > 0 else 0.0
    cdef double c_surf = w_s / n_surf if n_surf > 0 else 0.0
    cdef double c_sqem = 2.0 * w_q / n_surf if n_surf > 0 else 0.0

    with nogil:
        for p in range(n_int):
            b = INFINITY
            bd = 0.0
            k = 0
            for i in range(n):
                dx = interior[p, 0] - centers[i, 0]
                dy = interior[p, 1] - centers[i, 1]
                dz = interior[p, 2] - centers[i, 2]
                d = sqrt(dx * dx + dy * dy + dz * dz)
                s = d - radii[i]
                if s < b:
                    b = s
                    bd = d
                    k = i
            if b > 0.0:
                cover += b
                if want_grad and bd > COINCIDENT:
                    gc[k, 0] -= c_cover * (interior[p, 0] - centers[k, 0]) / bd
                    gc[k, 1] -= c_cover * (interior[p, 1] - centers[k, 1]) / bd
                    gc[k, 2] -= c_cover * (interior[p, 2] - centers[k, 2]) / bd
                    gr[k] -= c_cover

        for p in range(n_surf):
            b = INFINITY
            bd = 0.0
            bd2 = INFINITY
            k = 0
            kq = 0
            for i in range(n):
                dx = surface[p, 0] - centers[i, 0]
                dy = surface[p, 1] - centers[i, 1]
                dz = surface[p, 2] - centers[i, 2]
                d2 = dx * dx + dy * dy + dz * dz
                d = sqrt(d2)
                s = d - radii[i]
                if s < b:
                    b = s
                    bd = d
                    k = i
                if sqem_center and d < bd2:
                    bd2 = d
                    kq = i
            if not sqem_center:
                kq = k
            if b < 0.0:
                bound -= b
            surf += fabs(b)
            e = ((surface[p, 0] - centers[kq, 0]) * normals[p, 0]
                 + (surface[p, 1] - centers[kq, 1]) * normals[p, 1]
                 + (surface[p, 2] - centers[kq, 2]) * normals[p, 2]) - radii[kq]
            sqem += e * e
            if want_grad:
                if bd > COINCIDENT:
                    ds = 0.0
                    if b < 0.0:
                        ds = -c_bound - c_surf
                    elif b > 0.0:
                        ds = c_surf
                    if ds != 0.0:
                        gc[k, 0] -= ds * (surface[p, 0] - centers[k, 0]) / bd
                        gc[k, 1] -= ds * (surface[p, 1] - centers[k, 1]) / bd
                        gc[k, 2] -= ds * (surface[p, 2] - centers[k, 2]) / bd
                        gr[k] -= ds
                coef = c_sqem * e
                gc[kq, 0] -= coef * normals[p, 0]
                gc[kq, 1] -= coef * normals[p, 1]
                gc[kq, 2] -= coef * normals[p, 2]
                gr[kq] -= coef

    return (cover / n_int, bound / n_surf, surf / n_surf, sqem / n_surf,
            grad_c_arr, grad_r_arr)


cdef inline double seg_dist(double py, double pz, double ay, double az,
                            double by, double bz) noexcept nogil:
    cdef double ey = by - ay, ez = bz - az
    cdef double l2 = ey * ey + ez * ez, t = 0.0, dy, dz
    if l2 > 0.0:
        t = ((py - ay) * ey + (pz - az) * ez) / l2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    dy = py - (ay + t * ey)
    dz = pz - (az + t * ez)
    return sqrt(dy * dy + dz * dz)


cdef inline double seg_dist3(double px, double py, double pz, double ax, double ay, double az,
                             double bx, double by, double bz) noexcept nogil:
    cdef double ex = bx - ax, ey = by - ay, ez = bz - az
    cdef double l2 = ex * ex + ey * ey + ez * ez, t = 0.0, dx, dy, dz
    if l2 > 0.0:
        t = ((px - ax) * ex + (py - ay) * ey + (pz - az) * ez) / l2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    dx = px - (ax + t * ex)
    dy = py - (ay + t * ey)
    dz = pz - (az + t * ez)
    return sqrt(dx * dx + dy * dy + dz * dz)


def ray_parity(const double[:, :, ::1] tris, const double[:, ::1] points,
               const cnp.int64_t[::1] cell_start, const cnp.int64_t[::1] cell_faces,
               double lo_y, double lo_z, double inv_y, double inv_z,
               Py_ssize_t grid, double tol):
    cdef Py_ssize_t n_pts = points.shape[0], p, j, f, cell
    cdef cnp.int8_t[::1] out = np.zeros(n_pts, dtype=np.int8)
    cdef double px, py, pz, fy, fz
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz
    cdef double wa, wb, wc, area2, xhit, dmin, dd, xmax
    cdef Py_ssize_t iy, iz, crossings
    cdef int code, ambiguous
    with nogil:
        for p in range(n_pts):
            px = points[p, 0]
            py = points[p, 1]
            pz = points[p, 2]
            fy = floor((py - lo_y) * inv_y)
            fz = floor((pz - lo_z) * inv_z)
            if fy < 0 or fz < 0 or fy >= grid or fz >= grid:
                out[p] = 0
                continue
            iy = <Py_ssize_t>fy
            iz = <Py_ssize_t>fz
            cell = iy * grid + iz
            crossings = 0
            code = -1
            ambiguous = 0
            for j in range(cell_start[cell], cell_start[cell + 1]):
                f = cell_faces[j]
                ax = tris[f, 0, 0]; ay = tris[f, 0, 1]; az = tris[f, 0, 2]
                bx = tris[f, 1, 0]; by = tris[f, 1, 1]; bz = tris[f, 1, 2]
                cx = tris[f, 2, 0]; cy = tris[f, 2, 1]; cz = tris[f, 2, 2]
                if py < min(ay, by, cy) - tol or py > max(ay, by, cy) + tol:
                    continue
                if pz < min(az, bz, cz) - tol or pz > max(az, bz, cz) + tol:
                    continue
                dmin = seg_dist(py, pz, ay, az, by, bz)
                dd = seg_dist(py, pz, by, bz, cy, cz)
                if dd < dmin:
                    dmin = dd
                dd = seg_dist(py, pz, cy, cz, ay, az)
                if dd < dmin:
                    dmin = dd
                if dmin < tol:
                    # on an edge or vertex of this face: a surface point
                    if (seg_dist3(px, py, pz, ax, ay, az, bx, by, bz) < tol
                            or seg_dist3(px, py, pz, bx, by, bz, cx, cy, cz) < tol
                            or seg_dist3(px, py, pz, cx, cy, cz, ax, ay, az) < tol):
                        code = 0
                        break
                    xmax = max(ax, bx, cx)
                    if xmax >= px - tol:
                        ambiguous = 1
                    continue
                wa = (by - py) * (cz - pz) - (bz - pz) * (cy - py)
                wb = (cy - py) * (az - pz) - (cz - pz) * (ay - py)
                wc = (ay - py) * (bz - pz) - (az - pz) * (by - py)
                area2 = wa + wb + wc
                if area2 == 0.0:
                    continue
                if not ((wa > 0 and wb > 0 and wc > 0) or (wa < 0 and wb < 0 and wc < 0)):
                    continue
                xhit = (wa * ax + wb * bx + wc * cx) / area2
                if fabs(xhit - px) <= tol:
                    code = 0
                    break
                if xhit > px + tol:
                    crossings += 1
            if code >= 0:
                out[p] = code
            elif ambiguous:
                out[p] = 2
            else:
                out[p] = crossings & 1
    return np.asarray(out)
