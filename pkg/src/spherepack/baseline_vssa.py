"""VSSA-lite: a simplified variational sphere-set baseline.

Lloyd clustering of interior samples, one sphere per cluster. Each sphere
sits at its cluster centroid with the radius that covers 99% of the
cluster, then a golden-section search shrinks the radius to trade outside
volume (SOV) against the share of the cluster it still covers:

    minimise  alpha * SOV(c, r) - covered(r) * V_mesh / n_points

This is not the original fitting subproblem, only a cheap stand-in with the
same objective direction; comparisons against it should be labelled VSSA-lite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import SampleSet, TriangleMesh, contains_points, derive_seed
from .model import Generator, Sphere, SphereSet

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class VssaConfig:
    n_spheres: int
    max_lloyd_iters: int = 20
    sov_samples_per_sphere: int = 256
    seed: int = 0
    alpha: float = 1.0
    coverage_quantile: float = 0.99
    shrink_floor: float = 0.5
    golden_iters: int = 16

    def __post_init__(self):
        for name in ("n_spheres", "max_lloyd_iters", "sov_samples_per_sphere", "golden_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class VssaRun:
    spheres: SphereSet
    sov_history: list[float] = field(default_factory=list)
    sov_sigma: list[float] = field(default_factory=list)
    sse_history: list[tuple[float, float]] = field(default_factory=list)
    iterations: int = 0


def _unit_ball(n: int, rng: np.random.Generator) -> np.ndarray:
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.random(n)[:, None] ** (1.0 / 3.0)


def sov(mesh: TriangleMesh, sphere: Sphere, n_samples: int, seed: int) -> float:
    """Monte Carlo volume of ``sphere`` lying outside ``mesh``."""
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    rng = np.random.default_rng(seed)
    pts = np.asarray(sphere.center) + sphere.radius * _unit_ball(n_samples, rng)
    outside = ~contains_points(mesh, pts)
    return float(outside.mean()) * sphere.volume


def assign(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the nearest center for every point (ties to the lowest index)."""
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    return np.argmin(d2, axis=1)


def within_cluster_sse(points: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    diff = points - centers[labels]
    return float(np.sum(diff * diff))


def _batched_sov(mesh, centers, radii, ball, with_sigma=False):
    pts = centers[:, None, :] + radii[:, None, None] * ball[None, :, :]
    outside = ~contains_points(mesh, pts.reshape(-1, 3)).reshape(len(centers), -1)
    frac = outside.mean(axis=1)
    vol = 4.0 / 3.0 * math.pi * radii ** 3
    if not with_sigma:
        return frac * vol
    # binomial standard error of the summed estimate
    sigma = math.sqrt(float(np.sum(vol ** 2 * frac * (1 - frac) / ball.shape[0])))
    return frac * vol, sigma


def _fit(mesh, points, labels, k, ball, cfg, unit_volume, r_min):
    centers = np.zeros((k, 3))
    hi = np.zeros(k)
    dists = []
    for j in range(k):
        members = points[labels == j]
        centers[j] = members.mean(axis=0)
        d = np.sort(np.linalg.norm(members - centers[j], axis=1))
        dists.append(d)
        hi[j] = max(float(np.quantile(d, cfg.coverage_quantile)), r_min)
    lo = np.maximum(cfg.shrink_floor * hi, r_min)

    def objective(r):
        covered = np.array([np.searchsorted(dists[j], r[j], side="right") for j in range(k)])
        return cfg.alpha * _batched_sov(mesh, centers, r, ball) - covered * unit_volume

    # golden-section search, vectorised across clusters
    a, b = lo.copy(), hi.copy()
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = objective(x1), objective(x2)
    for _ in range(cfg.golden_iters):
        left = f1 <= f2
        a, b = np.where(left, a, x1), np.where(left, x2, b)
        nx1 = np.where(left, b - _GOLDEN * (b - a), x2)
        nx2 = np.where(left, x1, a + _GOLDEN * (b - a))
        fn = objective(np.where(left, nx1, nx2))
        f1, f2 = np.where(left, fn, f2), np.where(left, f1, fn)
        x1, x2 = nx1, nx2
    # fall back to the 99% radius when the search found nothing better
    cand = np.where(f1 <= f2, x1, x2)
    fc = np.minimum(f1, f2)
    fh = objective(hi)
    radii = np.where(fc < fh, cand, hi)
    return centers, radii


def vssa_run(mesh: TriangleMesh, samples: SampleSet, config: VssaConfig) -> VssaRun:
    points = samples.interior_points
    k = config.n_spheres
    if len(points) < k:
        raise ValueError("fewer interior samples than requested spheres")
    rng = np.random.default_rng(derive_seed(config.seed, 30))
    ball = _unit_ball(config.sov_samples_per_sphere, np.random.default_rng(derive_seed(config.seed, 31)))
    unit_volume = mesh.volume / len(points)
    r_min = 1e-6 * mesh.diagonal

    centers = points[rng.choice(len(points), size=k, replace=False)].copy()
    labels = None
    run = VssaRun(spheres=None)  # type: ignore[arg-type]
    fitted = None
    for it in range(config.max_lloyd_iters):
        sse_before = within_cluster_sse(points, centers, labels) if labels is not None else math.inf
        new_labels = assign(points, centers)
        _reseed_empty(points, centers, new_labels, k)
        run.sse_history.append((sse_before, within_cluster_sse(points, centers, new_labels)))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        c, r = _fit(mesh, points, labels, k, ball, config, unit_volume, r_min)
        per_sphere, sigma = _batched_sov(mesh, c, r, ball, with_sigma=True)
        run.sov_history.append(float(np.sum(per_sphere)))
        run.sov_sigma.append(sigma)
        fitted = (c, r)
        centers = c
        run.iterations = it + 1
    c, r = fitted
    run.spheres = SphereSet.from_arrays(c, r, mesh.mesh_id, config.seed, Generator.VSSA)
    return run


def _reseed_empty(points, centers, labels, k):
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        d = np.linalg.norm(points - centers[labels], axis=1)
        d[np.bincount(labels, minlength=k)[labels] <= 1] = -1.0
        far = int(np.argmax(d))
        labels[far] = j
        centers[j] = points[far]


def vssa_pack(mesh: TriangleMesh, samples: SampleSet, config: VssaConfig) -> SphereSet:
    return vssa_run(mesh, samples, config).spheres
