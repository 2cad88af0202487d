"""Fidelity metrics for a sphere set against its source mesh.

Surface distances come from area-weighted surface samples; the three volume
ratios come from one shared set of uniform points in the joint bounding box
of mesh and spheres, so ``r_union == 1 + r_outside`` and
``r_inside + uncovered == 1`` hold exactly on every estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import DegenerateEstimate
from .geometry import TriangleMesh, contains_points, derive_seed, sample_surface
from .model import SphereSet

DEFAULT_VOLUME_SAMPLES = 200_000
DEFAULT_SURFACE_SAMPLES = 20_000
BOX_INFLATION = 0.01


@dataclass(frozen=True)
class VolumeEstimate:
    r_inside: float
    r_outside: float
    r_union: float
    uncovered: float
    se_inside: float
    se_outside: float
    se_union: float
    n_samples: int


@dataclass(frozen=True)
class FidelityReport:
    t_comp: float
    d_max: float
    d_avg: float
    r_inside: float
    r_outside: float
    r_union: float
    n_volume_samples: int
    n_surface_samples: int
    seed: int
    se_inside: float = 0.0
    se_outside: float = 0.0
    se_union: float = 0.0
    uncovered: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "FidelityReport":
        return cls(**data)


def surface_distance_metrics(mesh: TriangleMesh, spheres: SphereSet, n_samples: int,
                             seed: int) -> tuple[float, float]:
    """``(d_max, d_avg)`` of unsigned surface-sample distances to the nearest sphere surface."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    pts, _ = sample_surface(mesh, n_samples, seed)
    d = kernels.nearest_unsigned(pts, np.ascontiguousarray(spheres.centers),
                                 np.ascontiguousarray(spheres.radii))
    return float(d.max()), float(d.mean())


def _joint_box(mesh: TriangleMesh, spheres: SphereSet):
    c = spheres.centers
    r = spheres.radii[:, None]
    lo = np.minimum(mesh.aabb[0], (c - r).min(axis=0))
    hi = np.maximum(mesh.aabb[1], (c + r).max(axis=0))
    pad = BOX_INFLATION * (hi - lo)
    return lo - pad, hi + pad


def classify_volume_samples(mesh: TriangleMesh, spheres: SphereSet, n_samples: int, seed: int):
    """Uniform joint-box samples with their (in mesh, in any sphere) flags."""
    lo, hi = _joint_box(mesh, spheres)
    rng = np.random.default_rng(seed)
    pts = lo + rng.random((n_samples, 3)) * (hi - lo)
    in_mesh = contains_points(mesh, pts)
    in_sphere = kernels.any_sphere_contains(pts, np.ascontiguousarray(spheres.centers),
                                            np.ascontiguousarray(spheres.radii))
    return pts, in_mesh, in_sphere


def volume_ratios(mesh: TriangleMesh, spheres: SphereSet, n_samples: int, seed: int) -> VolumeEstimate:
    """Monte Carlo ``r_inside``, ``r_outside`` and ``r_union`` with standard errors.

    Standard errors use the delta method on multinomial cell counts:
    ``R(1-R)/(n f_mesh)`` for the nested inside ratio and ``R(1+R)/(n f_mesh)``
    for the disjoint outside ratio (the union ratio shares it).
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    _, in_mesh, in_sphere = classify_volume_samples(mesh, spheres, n_samples, seed)
    n_mesh = int(np.count_nonzero(in_mesh))
    if n_mesh == 0:
        raise DegenerateEstimate("no volume sample fell inside the mesh")
    n_both = int(np.count_nonzero(in_mesh & in_sphere))
    n_out = int(np.count_nonzero(in_sphere & ~in_mesh))
    n_union = int(np.count_nonzero(in_mesh | in_sphere))
    n_uncov = n_mesh - n_both
    r_in = n_both / n_mesh
    r_out = n_out / n_mesh
    f_mesh = n_mesh / n_samples
    se_in = math.sqrt(r_in * (1 - r_in) / (n_samples * f_mesh))
    se_out = math.sqrt(r_out * (1 + r_out) / (n_samples * f_mesh))
    return VolumeEstimate(r_in, r_out, n_union / n_mesh, n_uncov / n_mesh,
                          se_in, se_out, se_out, n_samples)


def fidelity(mesh: TriangleMesh, spheres: SphereSet, wall_time: float,
             n_volume_samples: int = DEFAULT_VOLUME_SAMPLES,
             n_surface_samples: int = DEFAULT_SURFACE_SAMPLES, seed: int = 0) -> FidelityReport:
    d_max, d_avg = surface_distance_metrics(mesh, spheres, n_surface_samples, derive_seed(seed, 20))
    vol = volume_ratios(mesh, spheres, n_volume_samples, derive_seed(seed, 21))
    return FidelityReport(
        t_comp=float(wall_time), d_max=d_max, d_avg=d_avg,
        r_inside=vol.r_inside, r_outside=vol.r_outside, r_union=vol.r_union,
        n_volume_samples=n_volume_samples, n_surface_samples=n_surface_samples, seed=int(seed),
        se_inside=vol.se_inside, se_outside=vol.se_outside, se_union=vol.se_union,
        uncovered=vol.uncovered)
