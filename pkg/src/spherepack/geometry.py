"""Triangle meshes, point-in-mesh queries and sample generation."""

from __future__ import annotations

import hashlib
import io
import os
import struct
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from . import kernels
from .errors import DegenerateMesh, NumericalAmbiguity, ParseError, RejectionBudgetExceeded

DEGENERATE_AREA = 1e-12
RAY_TOL = 1e-9
MAX_RECASTS = 8
MIN_FILL_RATIO = 1e-4
REJECTION_TRIALS = 1_000_000

Source = Union[str, os.PathLike, bytes, BinaryIO]


class NotWatertightWarning(UserWarning):
    pass


def derive_seed(seed: int, *tags: int) -> int:
    """Deterministically derive an independent 64-bit seed from ``seed`` and tags."""
    ss = np.random.SeedSequence([int(seed), *[int(t) for t in tags]])
    return int(ss.generate_state(1, np.uint64)[0])


class TriangleMesh:
    """Indexed triangle mesh with derived per-face quantities.

    Instances are treated as immutable; the arrays are flagged read-only.
    Faces are reoriented on construction so that the signed volume is
    positive, which makes ``face_normals`` point outward on closed meshes.
    """

    def __init__(self, vertices, faces):
        vertices = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ParseError("face index out of range")
        if not np.all(np.isfinite(vertices)):
            raise ParseError("non-finite vertex coordinate")

        tri = vertices[faces]
        if _signed_volume(tri) < 0.0:
            faces = faces[:, [0, 2, 1]]
            tri = vertices[faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norm = np.linalg.norm(cross, axis=1)
        areas = 0.5 * norm
        degenerate = areas < DEGENERATE_AREA
        normals = np.zeros_like(cross)
        ok = norm > 0.0
        normals[ok] = cross[ok] / norm[ok, None]

        self.vertices = vertices
        self.faces = faces
        self.face_areas = areas
        self.face_normals = normals
        self.degenerate = degenerate
        self.aabb = (vertices.min(axis=0), vertices.max(axis=0)) if len(vertices) else (np.zeros(3), np.zeros(3))
        self.volume = compute_volume(self)
        self.watertight = _is_watertight(faces[~degenerate])
        for arr in (self.vertices, self.faces, self.face_areas, self.face_normals, self.degenerate, *self.aabb):
            arr.flags.writeable = False

    @property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    @property
    def diagonal(self) -> float:
        lo, hi = self.aabb
        return float(np.linalg.norm(hi - lo))

    @cached_property
    def mesh_id(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.faces, dtype="<i8").tobytes())
        return h.hexdigest()

    @cached_property
    def _ray_frames(self) -> dict:
        return {}

    def _frame(self, attempt: int) -> "_RayFrame":
        frames = self._ray_frames
        if attempt not in frames:
            frames[attempt] = _RayFrame.build(self.triangles[~self.degenerate], attempt)
        return frames[attempt]

    def transformed(self, matrix=None, offset=None, scale: float = 1.0) -> "TriangleMesh":
        v = self.vertices * scale
        if matrix is not None:
            v = v @ np.asarray(matrix, dtype=np.float64).T
        if offset is not None:
            v = v + np.asarray(offset, dtype=np.float64)
        return TriangleMesh(v, self.faces)

    def __repr__(self) -> str:
        return f"TriangleMesh(vertices={len(self.vertices)}, faces={len(self.faces)}, volume={self.volume:.6g})"


def _signed_volume(tri: np.ndarray) -> float:
    if len(tri) == 0:
        return 0.0
    return float(np.sum(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])))) / 6.0


def compute_volume(mesh: TriangleMesh) -> float:
    """Enclosed volume by summing origin-anchored tetrahedra."""
    return abs(_signed_volume(mesh.vertices[mesh.faces]))


def _is_watertight(faces: np.ndarray) -> bool:
    if len(faces) == 0:
        return False
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    # every directed edge must appear once and be matched by its reverse
    uniq, counts = np.unique(directed, axis=0, return_counts=True)
    if np.any(counts != 1):
        return False
    rev = np.ascontiguousarray(uniq[:, ::-1])
    view = np.ascontiguousarray(uniq).view([("a", np.int64), ("b", np.int64)]).ravel()
    rview = rev.view([("a", np.int64), ("b", np.int64)]).ravel()
    return bool(np.all(np.isin(rview, view)))


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


@dataclass
class _RayFrame:
    """Triangles in a rotated frame where the cast ray is +x, binned on a (y, z) grid."""

    rotation: np.ndarray
    tris: np.ndarray
    cell_start: np.ndarray
    cell_faces: np.ndarray
    lo: tuple[float, float]
    inv: tuple[float, float]
    grid: int

    @classmethod
    def build(cls, tris: np.ndarray, attempt: int) -> "_RayFrame":
        # attempt 0 uses a fixed generic direction; re-casts draw fresh ones
        rng = np.random.default_rng([0x5EED, attempt])
        rot = _random_rotation(rng)
        rt = np.ascontiguousarray(tris @ rot.T)
        n_faces = len(rt)
        grid = int(max(1, min(128, round(np.sqrt(n_faces)))))
        ymin = rt[:, :, 1].min(axis=1) - RAY_TOL
        ymax = rt[:, :, 1].max(axis=1) + RAY_TOL
        zmin = rt[:, :, 2].min(axis=1) - RAY_TOL
        zmax = rt[:, :, 2].max(axis=1) + RAY_TOL
        lo_y, hi_y = float(ymin.min()), float(ymax.max())
        lo_z, hi_z = float(zmin.min()), float(zmax.max())
        inv_y = grid / max(hi_y - lo_y, 1e-300)
        inv_z = grid / max(hi_z - lo_z, 1e-300)
        iy0 = np.clip(np.floor((ymin - lo_y) * inv_y), 0, grid - 1).astype(np.int64)
        iy1 = np.clip(np.floor((ymax - lo_y) * inv_y), 0, grid - 1).astype(np.int64)
        iz0 = np.clip(np.floor((zmin - lo_z) * inv_z), 0, grid - 1).astype(np.int64)
        iz1 = np.clip(np.floor((zmax - lo_z) * inv_z), 0, grid - 1).astype(np.int64)
        cells: list[list[int]] = [[] for _ in range(grid * grid)]
        for f in range(n_faces):
            for a in range(iy0[f], iy1[f] + 1):
                row = a * grid
                for b in range(iz0[f], iz1[f] + 1):
                    cells[row + b].append(f)
        counts = np.array([len(c) for c in cells], dtype=np.int64)
        cell_start = np.zeros(grid * grid + 1, dtype=np.int64)
        np.cumsum(counts, out=cell_start[1:])
        flat = [f for c in cells for f in c]
        cell_faces = np.array(flat, dtype=np.int64)
        return cls(rot, rt, cell_start, cell_faces, (lo_y, lo_z), (inv_y, inv_z), grid)

    def classify(self, points: np.ndarray) -> np.ndarray:
        rp = np.ascontiguousarray(points @ self.rotation.T)
        return kernels.ray_parity(self.tris, rp, self.cell_start, self.cell_faces,
                                  self.lo[0], self.lo[1], self.inv[0], self.inv[1],
                                  self.grid, RAY_TOL)


def _classify(mesh: TriangleMesh, points: np.ndarray) -> np.ndarray:
    """Codes per point: 1 inside, 0 outside, 2 still ambiguous after all re-casts."""
    points = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    codes = mesh._frame(0).classify(points)
    pending = np.flatnonzero(codes == 2)
    attempt = 1
    while pending.size and attempt <= MAX_RECASTS:
        sub = mesh._frame(attempt).classify(points[pending])
        codes[pending] = sub
        pending = pending[sub == 2]
        attempt += 1
    return codes


def contains_point(mesh: TriangleMesh, point) -> bool:
    """True iff ``point`` lies strictly inside ``mesh`` (ray-crossing parity)."""
    code = _classify(mesh, np.asarray(point, dtype=np.float64).reshape(1, 3))[0]
    if code == 2:
        raise NumericalAmbiguity(f"every ray re-cast from {tuple(point)} grazed an edge")
    return bool(code == 1)


def contains_points(mesh: TriangleMesh, points) -> np.ndarray:
    """Vectorised ``contains_point``; unresolved ambiguities count as outside."""
    return _classify(mesh, points) == 1


def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted uniform surface samples and their face normals."""
    points, normals, _ = sample_surface_faces(mesh, n, seed)
    return points, normals


def sample_surface_faces(mesh: TriangleMesh, n: int, seed: int):
    """Like ``sample_surface`` but also returns the sampled face indices."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    weights = np.where(mesh.degenerate, 0.0, mesh.face_areas)
    cdf = np.cumsum(weights)
    total = cdf[-1]
    face = np.searchsorted(cdf, rng.random(n) * total, side="right")
    face = np.minimum(face, len(cdf) - 1)
    uv = rng.random((n, 2))
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]
    tri = mesh.vertices[mesh.faces[face]]
    points = tri[:, 0] + uv[:, :1] * (tri[:, 1] - tri[:, 0]) + uv[:, 1:] * (tri[:, 2] - tri[:, 0])
    return points, mesh.face_normals[face].copy(), face


def sample_interior(mesh: TriangleMesh, n: int, seed: int) -> np.ndarray:
    """Uniform interior samples by rejection from the bounding box."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = mesh.aabb
    box_volume = float(np.prod(hi - lo))
    fill = mesh.volume / box_volume if box_volume > 0 else 0.0
    if fill < MIN_FILL_RATIO:
        raise RejectionBudgetExceeded(f"mesh fills {fill:.2e} of its bounding box")
    rng = np.random.default_rng(seed)
    accepted: list[np.ndarray] = []
    n_accepted = 0
    trials = 0
    hits = 0
    while n_accepted < n:
        want = n - n_accepted
        batch = int(min(max(1.1 * want / fill + 64, 256), 250_000))
        cand = lo + rng.random((batch, 3)) * (hi - lo)
        inside = contains_points(mesh, cand)
        trials += batch
        hits += int(inside.sum())
        cand = cand[inside]
        accepted.append(cand[:want])
        n_accepted += min(len(cand), want)
        if trials >= REJECTION_TRIALS and hits < MIN_FILL_RATIO * trials:
            raise RejectionBudgetExceeded(
                f"acceptance rate {hits / trials:.2e} after {trials} trials")
    return np.concatenate(accepted)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Pre-drawn interior and surface samples the losses are averaged over."""

    interior_points: np.ndarray
    surface_points: np.ndarray
    surface_normals: np.ndarray
    seed: int = 0

    @classmethod
    def draw(cls, mesh: TriangleMesh, n_interior: int = 20_000,
             n_surface: int = 20_000, seed: int = 0) -> "SampleSet":
        interior = sample_interior(mesh, n_interior, derive_seed(seed, 1))
        surface, normals = sample_surface(mesh, n_surface, derive_seed(seed, 2))
        return cls(interior, surface, normals, seed)

    def __post_init__(self):
        for name in ("interior_points", "surface_points", "surface_normals"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64).reshape(-1, 3)
            object.__setattr__(self, name, arr)
        if len(self.surface_normals) != len(self.surface_points):
            raise ValueError("surface_normals and surface_points differ in length")


# ---------------------------------------------------------------- file I/O


def load_mesh(source: Source, format: str | None = None, scale: float = 1.0) -> TriangleMesh:
    """Read an OBJ or STL mesh from a path, raw bytes or a binary file object.

    ``format`` is ``"obj"`` or ``"stl"``; it is inferred from the file suffix
    when ``source`` is a path. Warns with ``NotWatertightWarning`` for open or
    non-manifold meshes.
    """
    if isinstance(source, (str, os.PathLike)):
        path = Path(source)
        fmt = (format or path.suffix.lstrip(".")).lower()
        data = path.read_bytes()
    elif isinstance(source, (bytes, bytearray)):
        fmt = (format or "").lower()
        data = bytes(source)
    else:
        fmt = (format or "").lower()
        data = source.read()
    if fmt == "obj":
        vertices, faces = _parse_obj(data)
    elif fmt == "stl":
        vertices, faces = _parse_stl(data)
    else:
        raise ParseError(f"unsupported mesh format: {fmt!r}")

    if len(faces) < 4:
        raise DegenerateMesh(f"mesh has {len(faces)} faces; at least 4 required")
    mesh = TriangleMesh(np.asarray(vertices) * scale, faces)
    if int(np.sum(~mesh.degenerate)) < 4:
        raise DegenerateMesh("fewer than 4 non-degenerate faces")
    if not mesh.volume > 0.0:
        raise DegenerateMesh("mesh encloses zero volume")
    if not mesh.watertight:
        warnings.warn("mesh is not a closed two-manifold; inside tests may be unreliable",
                      NotWatertightWarning, stacklevel=2)
    return mesh


def _parse_obj(data: bytes):
    vertices: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("OBJ is not valid UTF-8") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "v":
                vertices.append([float(x) for x in parts[1:4]])
                if len(vertices[-1]) != 3:
                    raise ValueError("vertex needs 3 coordinates")
            elif tag == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    i = i - 1 if i > 0 else len(vertices) + i
                    if i < 0 or i >= len(vertices):
                        raise ParseError(f"line {lineno}: face index {tok} out of range")
                    idx.append(i)
                if len(idx) < 3:
                    raise ValueError("face needs at least 3 vertices")
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    if not vertices:
        raise ParseError("OBJ has no vertices")
    return np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64).reshape(-1, 3)


def _parse_stl(data: bytes):
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if 84 + 50 * count == len(data):
            return _weld(_parse_stl_binary(data, count))
    head = data[:512].lstrip().lower()
    if head.startswith(b"solid"):
        return _weld(_parse_stl_ascii(data))
    raise ParseError("not a valid binary or ASCII STL")


def _parse_stl_binary(data: bytes, count: int) -> np.ndarray:
    dtype = np.dtype([("normal", "<f4", 3), ("tri", "<f4", (3, 3)), ("attr", "<u2")])
    recs = np.frombuffer(data, dtype=dtype, count=count, offset=84)
    return recs["tri"].astype(np.float64)


def _parse_stl_ascii(data: bytes) -> np.ndarray:
    coords = []
    try:
        for raw in io.BytesIO(data).read().decode("ascii", errors="replace").splitlines():
            parts = raw.split()
            if parts and parts[0] == "vertex":
                coords.append([float(x) for x in parts[1:4]])
    except ValueError as exc:
        raise ParseError(f"bad STL vertex: {exc}") from exc
    if not coords or len(coords) % 3:
        raise ParseError("ASCII STL vertex count is not a multiple of 3")
    return np.array(coords, dtype=np.float64).reshape(-1, 3, 3)


def _weld(tris: np.ndarray):
    """Merge bit-identical vertices so STL soups become indexed meshes."""
    flat = tris.reshape(-1, 3)
    vertices, inverse = np.unique(flat, axis=0, return_inverse=True)
    return vertices, inverse.reshape(-1, 3)


# ---------------------------------------------------------------- shapes


def icosphere(subdivisions: int = 3, radius: float = 1.0):
    """Vertices and outward-wound faces of a subdivided icosahedron."""
    t = (1.0 + 5.0 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = v[a] + v[b]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(v) * radius, np.array(faces, dtype=np.int64)
