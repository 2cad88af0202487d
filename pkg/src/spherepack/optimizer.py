"""Sphere packing by Adam descent on the composite loss, with density control."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import AllPruned, InsufficientInterior
from .geometry import SampleSet, TriangleMesh, contains_points, derive_seed, sample_interior
from .loss import LossBreakdown, LossGradient, loss_and_grad
from .model import Generator, SphereSet, WeightConfig

# Defaults expressed as multiples of the mesh bounding-box diagonal.
_SCALE_AWARE = {"lr_center": 5e-3, "lr_radius": 2e-3, "r_threshold": 1e-2, "coverage_gap_tol": 1e-2}
# zero density events is a legitimate way to switch density control off
_NONNEG_FIELDS = {"max_density_events"}


@dataclass(frozen=True)
class OptimizerConfig:
    """Optimiser settings. ``None`` length-scale fields resolve against the mesh."""

    lr_center: float | None = None
    lr_radius: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    max_iters: int = 2000
    grad_clip_norm: float = 1.0
    plateau_window: int = 50
    plateau_rel_tol: float = 1e-3
    density_interval_min: int = 100
    r_threshold: float | None = None
    coverage_gap_tol: float | None = None
    max_density_events: int = 5
    loss_stop_rel_tol: float = 1e-5
    radius_sigma: float = 0.3
    n_interior_samples: int = 20_000
    n_surface_samples: int = 20_000
    sqem_center_closest: bool = False
    deterministic: bool = True

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None or isinstance(v, bool):
                continue
            ok = v >= 0 if f.name in _NONNEG_FIELDS else v > 0
            if not (math.isfinite(v) and ok):
                raise ValueError(f"{f.name} must be positive, got {v!r}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        for name in ("max_iters", "plateau_window", "density_interval_min",
                     "n_interior_samples", "n_surface_samples"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ValueError(f"{name} must be an integer")

    def resolved(self, mesh: TriangleMesh) -> "OptimizerConfig":
        diag = mesh.diagonal
        updates = {k: f * diag for k, f in _SCALE_AWARE.items() if getattr(self, k) is None}
        return replace(self, **updates)

    @classmethod
    def from_mapping(cls, data: dict) -> "OptimizerConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown optimizer config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path, base: "OptimizerConfig | None" = None) -> "OptimizerConfig":
        """Read overrides from a JSON object or flat ``key = value`` lines."""
        text = Path(path).read_text()
        stripped = text.lstrip()
        if stripped.startswith("{"):
            data = json.loads(text)
        else:
            data = {}
            for lineno, line in enumerate(text.splitlines(), 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" in line:
                    key, value = line.split("=", 1)
                elif ":" in line:
                    key, value = line.split(":", 1)
                else:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                data[key.strip()] = _coerce(value.strip())
        merged = asdict(base or cls())
        merged.update(data)
        return cls.from_mapping(merged)


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null", ""):
        return None
    try:
        return int(value)
    except ValueError:
        return float(value)


def mean_radius(volume: float, n: int) -> float:
    """Radius of ``n`` equal spheres whose volumes sum to ``volume``."""
    return (3.0 * volume / (4.0 * n * math.pi)) ** (1.0 / 3.0)


@dataclass
class AdamState:
    m_center: np.ndarray
    v_center: np.ndarray
    m_radius: np.ndarray
    v_radius: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros((n, 3)), np.zeros((n, 3)), np.zeros(n), np.zeros(n))

    def select(self, keep: np.ndarray, n_new: int) -> "AdamState":
        """Keep rows of surviving spheres and append fresh rows for added ones."""
        def cat(a, shape):
            return np.concatenate([a[keep], np.zeros(shape)])
        return AdamState(cat(self.m_center, (n_new, 3)), cat(self.v_center, (n_new, 3)),
                         cat(self.m_radius, (n_new,)), cat(self.v_radius, (n_new,)))


@dataclass
class PackResult:
    spheres: SphereSet
    history: list[LossBreakdown]
    density_events: list[tuple[int, int, int]]
    wall_time: float
    best_iteration: int = 0

    @property
    def set(self) -> SphereSet:
        return self.spheres


def initialize(mesh: TriangleMesh, samples: SampleSet, n: int, seed: int,
               radius_sigma: float = 0.3) -> SphereSet:
    """Centers drawn from the interior samples; log-normal radii rescaled to the mesh volume."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pool = samples.interior_points
    if len(pool) == 0:
        raise InsufficientInterior("no interior samples to draw centers from")
    rng = np.random.default_rng(derive_seed(seed, 10))
    if n <= len(pool):
        centers = pool[rng.choice(len(pool), size=n, replace=False)]
    else:
        extra = sample_interior(mesh, n - len(pool), derive_seed(seed, 11))
        centers = np.concatenate([pool, extra])
    r_bar = mean_radius(mesh.volume, n)
    radii = r_bar * np.exp(radius_sigma * rng.standard_normal(n))
    radii *= (mesh.volume / np.sum(4.0 / 3.0 * math.pi * radii ** 3)) ** (1.0 / 3.0)
    return SphereSet.from_arrays(centers, radii, mesh.mesh_id, seed, Generator.MORPHIT)


def _clip(grad_c: np.ndarray, grad_r: np.ndarray, limit: float):
    norm = math.sqrt(float(np.sum(grad_c * grad_c) + np.sum(grad_r * grad_r)))
    if norm > limit:
        scale = limit / norm
        return grad_c * scale, grad_r * scale
    return grad_c, grad_r


def _adam_arrays(centers, radii, grad_c, grad_r, state: AdamState,
                 cfg: OptimizerConfig, iteration: int):
    grad_c, grad_r = _clip(grad_c, grad_r, cfg.grad_clip_norm)
    b1, b2 = cfg.beta1, cfg.beta2
    m_c = b1 * state.m_center + (1 - b1) * grad_c
    v_c = b2 * state.v_center + (1 - b2) * grad_c * grad_c
    m_r = b1 * state.m_radius + (1 - b1) * grad_r
    v_r = b2 * state.v_radius + (1 - b2) * grad_r * grad_r
    bc1 = 1 - b1 ** iteration
    bc2 = 1 - b2 ** iteration
    centers = centers - cfg.lr_center * (m_c / bc1) / (np.sqrt(v_c / bc2) + cfg.eps_adam)
    radii = radii - cfg.lr_radius * (m_r / bc1) / (np.sqrt(v_r / bc2) + cfg.eps_adam)
    radii = np.maximum(radii, 0.5 * cfg.r_threshold)
    return centers, radii, AdamState(m_c, v_c, m_r, v_r)


def adam_step(spheres: SphereSet, gradient: LossGradient, state: AdamState,
              config: OptimizerConfig, iteration: int) -> tuple[SphereSet, AdamState]:
    """One clipped, bias-corrected Adam update; ``iteration`` counts from 1."""
    if config.lr_center is None or config.r_threshold is None:
        raise ValueError("config must be resolved against a mesh first")
    centers, radii, state = _adam_arrays(spheres.centers, spheres.radii, gradient.d_center,
                                         gradient.d_radius, state, config, iteration)
    out = SphereSet.from_arrays(centers, radii, spheres.mesh_id, spheres.seed, spheres.generator)
    return out, state


class DensityOutcome(NamedTuple):
    spheres: SphereSet
    pruned: int
    added: int
    kept: np.ndarray


def _density_arrays(mesh, samples, centers, radii, target_n, cfg):
    keep = (radii >= cfg.r_threshold) & contains_points(mesh, centers)
    kept_idx = np.flatnonzero(keep)
    c = centers[kept_idx]
    r = radii[kept_idx]
    pts = samples.interior_points
    if len(c):
        gap, _ = kernels.nearest_signed(pts, np.ascontiguousarray(c), np.ascontiguousarray(r))
    else:
        gap = np.full(len(pts), np.inf)
    r_cap = mean_radius(mesh.volume, target_n)
    new_c, new_r = [], []
    while len(c) + len(new_c) < target_n:
        uncovered = gap > cfg.coverage_gap_tol
        if not uncovered.any():
            break
        # farthest uncovered sample; ties go to the lowest sample index
        k = int(np.argmax(np.where(uncovered, gap, -np.inf)))
        p = pts[k]
        d_surf = float(np.sqrt(np.min(np.sum((samples.surface_points - p) ** 2, axis=1))))
        rad = max(min(d_surf, r_cap), cfg.r_threshold)
        new_c.append(p.copy())
        new_r.append(rad)
        gap = np.minimum(gap, np.linalg.norm(pts - p, axis=1) - rad)
    if len(c) + len(new_c) == 0:
        raise AllPruned("density control pruned every sphere and found no coverage gap to refill")
    if new_c:
        c = np.concatenate([c, np.array(new_c)])
        r = np.concatenate([r, np.array(new_r)])
    return c, r, kept_idx, len(centers) - len(kept_idx), len(new_c)


def density_control(mesh: TriangleMesh, samples: SampleSet, spheres: SphereSet, target_n: int,
                    config: OptimizerConfig, seed: int = 0) -> DensityOutcome:
    """Prune small or escaped spheres, then refill the worst coverage gaps.

    Spheres with ``r < r_threshold`` or a center outside the mesh are
    removed. New spheres go, one at a time, on the interior sample farthest
    outside all current spheres, with radius ``min(distance to the nearest
    surface sample, mean radius for target_n)``, until ``target_n`` spheres
    exist or no sample is uncovered by more than ``coverage_gap_tol``.
    The procedure is deterministic, so ``seed`` only tags the output set.
    """
    cfg = config.resolved(mesh)
    c, r, kept, pruned, added = _density_arrays(mesh, samples, spheres.centers, spheres.radii,
                                                target_n, cfg)
    out = SphereSet.from_arrays(c, r, spheres.mesh_id, spheres.seed, spheres.generator)
    return DensityOutcome(out, pruned, added, kept)


def _rel_drop(history: list[LossBreakdown], window: int) -> float:
    old = history[-window - 1].total
    new = history[-1].total
    return (old - new) / max(abs(old), 1e-300)


def pack(mesh: TriangleMesh, n: int, weights: WeightConfig,
         config: OptimizerConfig | None = None, seed: int = 0,
         samples: SampleSet | None = None) -> PackResult:
    """Fit ``n`` spheres to ``mesh``; returns the lowest-loss iterate seen."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cfg = (config or OptimizerConfig()).resolved(mesh)
    start = time.perf_counter()
    if samples is None:
        samples = SampleSet.draw(mesh, cfg.n_interior_samples, cfg.n_surface_samples, seed)
    init = initialize(mesh, samples, n, seed, cfg.radius_sigma)
    centers, radii = init.centers, init.radii
    state = AdamState.zeros(n)

    history: list[LossBreakdown] = []
    events: list[tuple[int, int, int]] = []
    best = (math.inf, centers, radii, 0)
    last_event = 0
    window = cfg.plateau_window
    step = 0
    for it in range(cfg.max_iters):
        breakdown, grad = loss_and_grad(samples, centers, radii, weights,
                                        sqem_center_closest=cfg.sqem_center_closest)
        history.append(breakdown)
        if breakdown.total < best[0]:
            best = (breakdown.total, centers, radii, it)

        since = it - last_event
        if len(history) > window and since >= window:
            drop = _rel_drop(history, window)
            if (len(events) < cfg.max_density_events and since >= cfg.density_interval_min
                    and drop < cfg.plateau_rel_tol):
                centers, radii, kept, pruned, added = _density_arrays(
                    mesh, samples, centers, radii, n, cfg)
                state = state.select(kept, added)
                events.append((it, pruned, added))
                last_event = it
                continue
            if len(events) >= cfg.max_density_events and abs(drop) < cfg.loss_stop_rel_tol:
                break

        step += 1
        centers, radii, state = _adam_arrays(centers, radii, grad.d_center, grad.d_radius,
                                             state, cfg, step)

    _, bc, br, best_it = best
    result = SphereSet.from_arrays(bc, br, mesh.mesh_id, seed, Generator.MORPHIT)
    return PackResult(result, history, events, time.perf_counter() - start, best_it)
