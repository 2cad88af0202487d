"""Spheres, sphere sets and loss-weight configurations."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from enum import Enum

import numpy as np

from .errors import UnknownPreset


class Generator(str, Enum):
    MORPHIT = "MORPHIT"
    VSSA = "VSSA"
    MANUAL = "MANUAL"


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        c = tuple(float(x) for x in self.center)
        if len(c) != 3 or not all(math.isfinite(x) for x in c):
            raise ValueError(f"invalid sphere center {self.center!r}")
        r = float(self.radius)
        if not (math.isfinite(r) and r > 0.0):
            raise ValueError(f"sphere radius must be positive and finite, got {self.radius!r}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius ** 3


@dataclass(frozen=True)
class SphereSet:
    """Ordered, non-empty collection of spheres tied to the mesh it approximates."""

    spheres: tuple[Sphere, ...]
    mesh_id: str = ""
    seed: int = 0
    generator: Generator = Generator.MANUAL

    def __post_init__(self):
        spheres = tuple(self.spheres)
        if not spheres:
            raise ValueError("a SphereSet needs at least one sphere")
        object.__setattr__(self, "spheres", spheres)
        object.__setattr__(self, "generator", Generator(self.generator))
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def from_arrays(cls, centers, radii, mesh_id: str = "", seed: int = 0,
                    generator: Generator = Generator.MANUAL) -> "SphereSet":
        centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
        radii = np.asarray(radii, dtype=np.float64).reshape(-1)
        spheres = tuple(Sphere(tuple(c.tolist()), float(r)) for c, r in zip(centers, radii))
        return cls(spheres, mesh_id, seed, generator)

    @property
    def centers(self) -> np.ndarray:
        return np.array([s.center for s in self.spheres], dtype=np.float64)

    @property
    def radii(self) -> np.ndarray:
        return np.array([s.radius for s in self.spheres], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.spheres)

    def __iter__(self):
        return iter(self.spheres)


@dataclass(frozen=True)
class WeightConfig:
    """Weights of the six loss terms: coverage, overlap, boundary, surface,
    containment and SQEM."""

    w_c: float = 0.0
    w_o: float = 0.0
    w_b: float = 0.0
    w_s: float = 0.0
    w_t: float = 0.0
    w_q: float = 0.0

    def __post_init__(self):
        vals = []
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"weight {f.name} must be finite and >= 0, got {v}")
            object.__setattr__(self, f.name, v)
            vals.append(v)
        if not any(v > 0.0 for v in vals):
            raise ValueError("at least one weight must be positive")

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def scaled(self, factor: float) -> "WeightConfig":
        return WeightConfig(**{k: v * factor for k, v in asdict(self).items()})

    @classmethod
    def from_dict(cls, data: dict) -> "WeightConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown weight keys: {sorted(unknown)}")
        return cls(**data)


PRESETS: dict[str, WeightConfig] = {
    # volume-first: conservative padding for collision avoidance
    "V": WeightConfig(w_c=4e3, w_o=1e-1, w_b=1e1, w_s=1e-1, w_t=5e1, w_q=1e2),
    # surface-first: tight fit for contact modelling
    "S": WeightConfig(w_c=1e-2, w_o=1e-2, w_b=5e3, w_s=1e2, w_t=1.0, w_q=1e3),
    # balanced default
    "B": WeightConfig(w_c=1e2, w_o=1.0, w_b=5.0, w_s=5.0, w_t=5.0, w_q=8e2),
}


def preset(name: str) -> WeightConfig:
    try:
        return PRESETS[name.upper()]
    except (KeyError, AttributeError):
        raise UnknownPreset(f"unknown preset {name!r}; expected one of V, S, B") from None
