"""The six-term packing loss and its analytic gradient.

Point terms (coverage, boundary, surface, SQEM) are means over the
pre-drawn samples and run in the compiled kernel; the pairwise terms
(overlap, containment) are means over all ordered pairs ``i != j`` and are
cheap enough for numpy.

Non-smooth points use fixed subgradients: ``min``/``argmin`` route gradient
to the lowest-index minimiser, hinges contribute nothing at or below zero,
and terms whose direction vector is undefined (coincident point and center)
contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import EmptyDomain
from .geometry import SampleSet
from .model import Sphere, SphereSet, WeightConfig

_COINCIDENT = 1e-12


@dataclass(frozen=True)
class LossBreakdown:
    cover: float
    overlap: float
    bound: float
    surf: float
    contain: float
    sqem: float
    total: float

    def components(self) -> tuple[float, ...]:
        return (self.cover, self.overlap, self.bound, self.surf, self.contain, self.sqem)


@dataclass(frozen=True, eq=False)
class LossGradient:
    d_center: np.ndarray
    d_radius: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.d_center.ravel(), self.d_radius])


def signed_distance(point, sphere: Sphere) -> float:
    """Distance from ``point`` to the sphere surface; negative inside."""
    diff = np.asarray(point, dtype=np.float64) - np.asarray(sphere.center)
    return float(np.sqrt(diff @ diff) - sphere.radius)


def _pairwise(centers: np.ndarray, radii: np.ndarray, w_o: float, w_t: float, want_grad: bool):
    n = len(radii)
    grad_c = np.zeros((n, 3))
    grad_r = np.zeros(n)
    if n < 2:
        return 0.0, 0.0, grad_c, grad_r
    n_pairs = n * (n - 1)
    diff = centers[:, None, :] - centers[None, :, :]          # c_i - c_j
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    off = ~np.eye(n, dtype=bool)
    rsum = radii[:, None] + radii[None, :]
    ov = np.where(off, rsum - dist, 0.0)
    ov_active = ov > 0.0
    overlap = float(np.sum(np.where(ov_active, ov, 0.0))) / n_pairs
    # pair (i, j) is active when sphere i lies inside sphere j
    ct = np.where(off, radii[None, :] - (dist + radii[:, None]), 0.0)
    ct_active = ct > 0.0
    contain = float(np.sum(np.where(ct_active, ct * ct, 0.0))) / n_pairs
    if want_grad:
        unit = diff / np.where(dist > _COINCIDENT, dist, 1.0)[:, :, None]
        unit[dist <= _COINCIDENT] = 0.0
        # overlap: d/dr_i = d/dr_j = 1, d/dc_i = -unit_ij, d/dc_j = +unit_ij
        a = np.where(ov_active, w_o / n_pairs, 0.0)
        grad_r += a.sum(axis=1) + a.sum(axis=0)
        g = a[:, :, None] * unit
        grad_c += -g.sum(axis=1) + g.sum(axis=0)
        # containment t = r_j - |c_i - c_j| - r_i, loss t^2
        b = np.where(ct_active, 2.0 * w_t / n_pairs * ct, 0.0)
        grad_r += -b.sum(axis=1) + b.sum(axis=0)
        g = b[:, :, None] * unit
        grad_c += -g.sum(axis=1) + g.sum(axis=0)
    return overlap, contain, grad_c, grad_r


def loss_and_grad(samples: SampleSet, centers: np.ndarray, radii: np.ndarray,
                  weights: WeightConfig, want_grad: bool = True,
                  sqem_center_closest: bool = False):
    """Array-level evaluation used by the optimiser's inner loop."""
    if len(samples.interior_points) == 0 or len(samples.surface_points) == 0:
        raise EmptyDomain("interior and surface samples must both be non-empty")
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    radii = np.ascontiguousarray(radii, dtype=np.float64)
    cover, bound, surf, sqem, gc, gr = kernels.point_losses(
        samples.interior_points, samples.surface_points, samples.surface_normals,
        centers, radii, weights.w_c, weights.w_b, weights.w_s, weights.w_q,
        bool(sqem_center_closest), bool(want_grad))
    overlap, contain, pc, pr = _pairwise(centers, radii, weights.w_o, weights.w_t, want_grad)
    total = (weights.w_c * cover + weights.w_o * overlap + weights.w_b * bound
             + weights.w_s * surf + weights.w_t * contain + weights.w_q * sqem)
    breakdown = LossBreakdown(cover, overlap, bound, surf, contain, sqem, total)
    if not want_grad:
        return breakdown, None
    return breakdown, LossGradient(gc + pc, gr + pr)


def evaluate_losses(samples: SampleSet, spheres: SphereSet, weights: WeightConfig,
                    sqem_center_closest: bool = False) -> LossBreakdown:
    breakdown, _ = loss_and_grad(samples, spheres.centers, spheres.radii, weights,
                                 want_grad=False, sqem_center_closest=sqem_center_closest)
    return breakdown


def evaluate_gradients(samples: SampleSet, spheres: SphereSet, weights: WeightConfig,
                       sqem_center_closest: bool = False) -> tuple[LossBreakdown, LossGradient]:
    return loss_and_grad(samples, spheres.centers, spheres.radii, weights,
                         want_grad=True, sqem_center_closest=sqem_center_closest)
