"""Analytic test shapes and brute-force oracles.

The oracles here deliberately avoid the compiled kernels and the loss
module: they recompute everything from the textbook definitions, in
extended precision where it matters, so they can check the production code
rather than echo it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import SampleSet, TriangleMesh, icosphere
from .loss import LossGradient
from .model import SphereSet, WeightConfig


class ShapeKind(str, Enum):
    UNIT_CUBE = "UNIT_CUBE"
    ICOSPHERE = "ICOSPHERE"
    CAPSULE = "CAPSULE"
    TETRAHEDRON = "TETRAHEDRON"


@dataclass(frozen=True, eq=False)
class AnalyticShape:
    kind: ShapeKind
    mesh: TriangleMesh
    exact_volume: float
    params: tuple = ()


def divergence_volume(vertices, faces) -> float:
    """Volume as the flux of ``x / 3`` through the faces (area * centroid . normal / 3)."""
    tri = np.asarray(vertices, dtype=np.float64)[np.asarray(faces)]
    total = 0.0
    for a, b, c in tri:
        n2 = np.cross(b - a, c - a)  # twice the area times the unit normal
        centroid = (a + b + c) / 3.0
        total += float(centroid @ n2) / 6.0
    return abs(total)


def unit_cube() -> AnalyticShape:
    v = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)])
    # vertex index = 4x + 2y + z
    f = [(0, 1, 3), (0, 3, 2), (4, 6, 7), (4, 7, 5),   # x = 0, x = 1
         (0, 4, 5), (0, 5, 1), (2, 3, 7), (2, 7, 6),   # y = 0, y = 1
         (0, 2, 6), (0, 6, 4), (1, 5, 7), (1, 7, 3)]   # z = 0, z = 1
    return AnalyticShape(ShapeKind.UNIT_CUBE, TriangleMesh(v, f), 1.0)


def tetrahedron() -> AnalyticShape:
    v = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
    f = [(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)]
    return AnalyticShape(ShapeKind.TETRAHEDRON, TriangleMesh(v, f), 1.0 / 6.0)


def icosphere_shape(subdivisions: int = 3, radius: float = 1.0) -> AnalyticShape:
    v, f = icosphere(subdivisions, radius)
    return AnalyticShape(ShapeKind.ICOSPHERE, TriangleMesh(v, f), divergence_volume(v, f),
                         (subdivisions, radius))


def capsule(half_length: float = 0.5, radius: float = 0.3, segments: int = 32,
            rings: int = 8) -> AnalyticShape:
    """Z-aligned capsule; the defaults give 1024 triangles."""
    verts = [(0.0, 0.0, half_length + radius)]
    lats = []
    for k in range(1, rings + 1):           # top hemisphere down to its equator
        lats.append((math.pi / 2 * k / rings, half_length))
    for k in range(rings, 0, -1):           # bottom equator down toward the pole
        lats.append((math.pi - math.pi / 2 * k / rings, -half_length))
    for theta, dz in lats:
        for s in range(segments):
            phi = 2 * math.pi * s / segments
            verts.append((radius * math.sin(theta) * math.cos(phi),
                          radius * math.sin(theta) * math.sin(phi),
                          radius * math.cos(theta) + dz))
    verts.append((0.0, 0.0, -half_length - radius))
    bottom = len(verts) - 1

    def ring(i: int, s: int) -> int:
        return 1 + i * segments + (s % segments)

    faces = []
    for s in range(segments):
        faces.append((0, ring(0, s), ring(0, s + 1)))
    for i in range(len(lats) - 1):
        for s in range(segments):
            a, b = ring(i, s), ring(i, s + 1)
            c, d = ring(i + 1, s), ring(i + 1, s + 1)
            faces += [(a, c, d), (a, d, b)]
    last = len(lats) - 1
    for s in range(segments):
        faces.append((bottom, ring(last, s + 1), ring(last, s)))
    v = np.array(verts)
    return AnalyticShape(ShapeKind.CAPSULE, TriangleMesh(v, faces), divergence_volume(v, faces),
                         (half_length, radius))


def convex_contains(mesh: TriangleMesh, points) -> np.ndarray:
    """Exact inside test for convex meshes: strictly behind every face plane."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    tri = mesh.vertices[mesh.faces]
    centroid = mesh.vertices.mean(axis=0)
    inside = np.ones(len(pts), dtype=bool)
    for a, b, c in tri:
        n = np.cross(b - a, c - a)
        if np.linalg.norm(n) == 0.0:
            continue
        if (centroid - a) @ n > 0:
            n = -n
        inside &= (pts - a) @ n < 0.0
    return inside


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


# ---------------------------------------------------------------- loss oracles


def reference_terms(samples: SampleSet, centers, radii, dtype=np.longdouble) -> tuple:
    """The six loss terms evaluated straight from their definitions."""
    P = np.asarray(samples.interior_points).astype(dtype)
    Q = np.asarray(samples.surface_points).astype(dtype)
    nq = np.asarray(samples.surface_normals).astype(dtype)
    c = np.asarray(centers).astype(dtype)
    r = np.asarray(radii).astype(dtype)
    n = len(r)

    sd_p = np.stack([np.sqrt(np.sum((P - c[i]) ** 2, axis=1)) - r[i] for i in range(n)], axis=1)
    cover = np.mean(np.maximum(0, sd_p.min(axis=1)))

    sd_q = np.stack([np.sqrt(np.sum((Q - c[i]) ** 2, axis=1)) - r[i] for i in range(n)], axis=1)
    m = sd_q.min(axis=1)
    bound = np.mean(np.maximum(0, -m))
    surf = np.mean(np.abs(m))
    k = sd_q.argmin(axis=1)
    sqem = np.mean((np.sum((Q - c[k]) * nq, axis=1) - r[k]) ** 2)

    overlap = contain = dtype(0)
    if n > 1:
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                dij = np.sqrt(np.sum((c[i] - c[j]) ** 2))
                overlap += max(dtype(0), r[i] + r[j] - dij)
                contain += max(dtype(0), r[j] - (dij + r[i])) ** 2
        overlap /= n * (n - 1)
        contain /= n * (n - 1)
    return cover, overlap, bound, surf, contain, sqem


def reference_total(samples: SampleSet, centers, radii, weights: WeightConfig,
                    dtype=np.longdouble):
    w = (weights.w_c, weights.w_o, weights.w_b, weights.w_s, weights.w_t, weights.w_q)
    terms = reference_terms(samples, centers, radii, dtype)
    return sum(dtype(wi) * ti for wi, ti in zip(w, terms))


def finite_difference_gradient(samples: SampleSet, spheres: SphereSet, weights: WeightConfig,
                               h: float) -> LossGradient:
    """Central differences of the total loss over every center coordinate and radius."""
    centers = spheres.centers.astype(np.longdouble)
    radii = spheres.radii.astype(np.longdouble)
    hh = np.longdouble(h)
    d_center = np.zeros(centers.shape)
    d_radius = np.zeros(radii.shape)
    for i in range(len(radii)):
        for a in range(3):
            cp, cm = centers.copy(), centers.copy()
            cp[i, a] += hh
            cm[i, a] -= hh
            d_center[i, a] = float((reference_total(samples, cp, radii, weights)
                                    - reference_total(samples, cm, radii, weights)) / (2 * hh))
        rp, rm = radii.copy(), radii.copy()
        rp[i] += hh
        rm[i] -= hh
        d_radius[i] = float((reference_total(samples, centers, rp, weights)
                             - reference_total(samples, centers, rm, weights)) / (2 * hh))
    return LossGradient(d_center, d_radius)


def kink_margin(samples: SampleSet, spheres: SphereSet) -> float:
    """How far (in loss-argument units) the configuration sits from any kink.

    Each sphere parameter moves every signed distance by at most its own
    change, so central differences with step ``h`` stay on one smooth piece
    whenever this margin exceeds ``4 h``.
    """
    c = spheres.centers
    r = spheres.radii
    margins = [np.inf]

    def sorted_sd(pts):
        sd = np.stack([np.linalg.norm(pts - c[i], axis=1) - r[i] for i in range(len(r))], axis=1)
        sd.sort(axis=1)
        return sd

    sd = sorted_sd(samples.interior_points)
    lo = sd[:, 0]
    gap = sd[:, 1] - sd[:, 0] if sd.shape[1] > 1 else np.full(len(lo), np.inf)
    # below zero the coverage hinge is flat whichever sphere is nearest
    margins.append(np.min(np.where(lo <= 0, -lo, np.minimum(lo, gap))))

    sd = sorted_sd(samples.surface_points)
    gap = sd[:, 1] - sd[:, 0] if sd.shape[1] > 1 else np.full(len(sd), np.inf)
    margins.append(np.min(np.minimum(np.abs(sd[:, 0]), gap)))

    n = len(r)
    for i in range(n):
        for j in range(n):
            if i != j:
                dij = np.linalg.norm(c[i] - c[j])
                margins.append(abs(r[i] + r[j] - dij) / 2)
                margins.append(abs(r[j] - dij - r[i]) / 2)
    return float(min(margins))


def brute_force_worst_gap(samples: SampleSet, spheres: SphereSet) -> tuple[np.ndarray, float]:
    """Interior sample farthest outside every sphere, and its signed gap."""
    best_gap = -np.inf
    best_point = None
    for p in samples.interior_points:
        gap = min(math.dist(p, s.center) - s.radius for s in spheres)
        if gap > best_gap:
            best_gap = gap
            best_point = p
    return np.array(best_point), float(best_gap)


def sphere_tessellation_deficit(mesh: TriangleMesh, radius: float = 1.0,
                                resolution: int = 60) -> tuple[float, float]:
    """Area-weighted mean and max of ``radius - |x|`` over a sphere-inscribed mesh.

    Deterministic midpoint quadrature on a barycentric grid of
    ``resolution**2`` sub-triangles per face; this is the exact answer a
    surface-distance estimate of the mesh against its own sphere converges to.
    """
    k = resolution
    uv = []
    for i in range(k):
        for j in range(k - i):
            uv.append(((i + 1 / 3) / k, (j + 1 / 3) / k))
            if i + j < k - 1:
                uv.append(((i + 2 / 3) / k, (j + 2 / 3) / k))
    uv = np.array(uv)
    tri = mesh.vertices[mesh.faces]
    a = tri[:, None, 0]
    pts = a + uv[None, :, :1] * (tri[:, None, 1] - a) + uv[None, :, 1:] * (tri[:, None, 2] - a)
    depth = radius - np.linalg.norm(pts, axis=2)
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    mean = float(np.sum(depth.mean(axis=1) * areas) / areas.sum())
    return mean, float(np.abs(depth).max())
