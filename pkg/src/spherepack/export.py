"""Sphere-set serialisation: JSON documents, URDF collision rewriting, OBJ meshes."""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import LinkNotFound, SchemaError, XmlError
from .geometry import icosphere
from .metrics import FidelityReport
from .model import Generator, Sphere, SphereSet, WeightConfig

SCHEMA_VERSION = "1"


@dataclass(frozen=True)
class SphereSetDocument:
    spheres: SphereSet
    weights: WeightConfig | None = None
    fidelity: FidelityReport | None = None
    schema_version: str = SCHEMA_VERSION


def to_json(spheres: SphereSet, weights: WeightConfig | None = None,
            fidelity: FidelityReport | None = None) -> bytes:
    """Serialise to a UTF-8 JSON document.

    Floats are written with Python's shortest round-trip repr, so
    ``from_json(to_json(s)) == s`` bit for bit.
    """
    doc = {
        "schema_version": SCHEMA_VERSION,
        "mesh_id": spheres.mesh_id,
        "generator": spheres.generator.value,
        "seed": spheres.seed,
        "weights": weights.as_dict() if weights is not None else None,
        "spheres": [{"center": list(s.center), "radius": s.radius} for s in spheres],
        "fidelity": fidelity.to_dict() if fidelity is not None else None,
    }
    return (json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n").encode("utf-8")


def read_document(data: bytes | str) -> SphereSetDocument:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("document root must be an object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {doc.get('schema_version')!r}")
    for key in ("mesh_id", "generator", "seed", "spheres"):
        if key not in doc:
            raise SchemaError(f"missing field {key!r}")
    raw = doc["spheres"]
    if not isinstance(raw, list) or not raw:
        raise SchemaError("spheres must be a non-empty list")
    try:
        spheres = []
        for k, item in enumerate(raw):
            if "center" not in item or "radius" not in item:
                raise SchemaError(f"sphere {k} lacks center or radius")
            spheres.append(Sphere(tuple(item["center"]), item["radius"]))
        sset = SphereSet(tuple(spheres), str(doc["mesh_id"]), int(doc["seed"]),
                         Generator(doc["generator"]))
        weights = WeightConfig.from_dict(doc["weights"]) if doc.get("weights") else None
        fidelity = FidelityReport.from_dict(doc["fidelity"]) if doc.get("fidelity") else None
    except SchemaError:
        raise
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc)) from exc
    return SphereSetDocument(sset, weights, fidelity)


def from_json(data: bytes | str) -> SphereSet:
    return read_document(data).spheres


# ---------------------------------------------------------------- URDF


def _fmt(x: float) -> str:
    return repr(float(x))


def _collision_element(link: str, k: int, sphere: Sphere, indent: str, unit: str) -> ET.Element:
    col = ET.Element("collision", {"name": f"spherepack_{link}_{k}"})
    inner = indent + unit
    col.text = inner
    origin = ET.SubElement(col, "origin", {"xyz": " ".join(_fmt(c) for c in sphere.center),
                                           "rpy": "0 0 0"})
    origin.tail = inner
    geom = ET.SubElement(col, "geometry")
    geom.text = inner + unit
    sph = ET.SubElement(geom, "sphere", {"radius": _fmt(sphere.radius)})
    sph.tail = inner
    geom.tail = indent
    return col


def _indent_of(text: str | None, fallback: str) -> str:
    if text is not None and text.strip() == "" and "\n" in text:
        return text
    return fallback


def rewrite_urdf(urdf_text: str, link_sets: Mapping[str, SphereSet]) -> str:
    """Replace the collision geometry of the mapped links with spheres.

    Sphere centers are written in the link frame as given. Unmapped links and
    all other elements are left untouched; attribute order and comments
    survive, but whitespace inside rewritten links is normalised.
    """
    try:
        parser = ET.XMLParser(target=ET.TreeBuilder(insert_comments=True))
        root = ET.fromstring(urdf_text, parser=parser)
    except ET.ParseError as exc:
        raise XmlError(f"URDF is not well-formed XML: {exc}") from exc
    if root.tag != "robot":
        raise XmlError(f"root element is <{root.tag}>, expected <robot>")
    links = {el.get("name"): el for el in root.findall("link")}
    for name in link_sets:
        if name not in links:
            raise LinkNotFound(name)

    root_indent = _indent_of(root.text, "\n  ")
    for name, sset in link_sets.items():
        link = links[name]
        children = list(link)
        base = root_indent
        child_indent = _indent_of(link.text, base + "  ")
        unit = child_indent[len(base):] if child_indent.startswith(base) and len(child_indent) > len(base) else "  "
        closing = children[-1].tail if children else None
        closing = _indent_of(closing, base)
        positions = [i for i, c in enumerate(children) if c.tag == "collision"]
        insert_at = positions[0] if positions else len(children)
        for c in children:
            if c.tag == "collision":
                link.remove(c)
        for k, sphere in enumerate(sset):
            link.insert(insert_at + k, _collision_element(name, k, sphere, child_indent, unit))
        link.text = child_indent
        kids = list(link)
        for i, c in enumerate(kids):
            c.tail = closing if i == len(kids) - 1 else child_indent

    body = ET.tostring(root, encoding="unicode")
    stripped = urdf_text.lstrip()
    if stripped.startswith("<?xml"):
        decl = stripped[: stripped.index("?>") + 2]
        return decl + "\n" + body + "\n"
    return body + "\n"


def urdf_spheres(urdf_text: str) -> dict[str, list[Sphere]]:
    """Collision spheres per link, read back from a URDF."""
    try:
        root = ET.fromstring(urdf_text)
    except ET.ParseError as exc:
        raise XmlError(str(exc)) from exc
    out: dict[str, list[Sphere]] = {}
    for link in root.findall("link"):
        found = []
        for col in link.findall("collision"):
            sph = col.find("geometry/sphere")
            if sph is None:
                continue
            origin = col.find("origin")
            xyz = (0.0, 0.0, 0.0)
            if origin is not None and origin.get("xyz"):
                xyz = tuple(float(v) for v in origin.get("xyz").split())
            found.append(Sphere(xyz, float(sph.get("radius"))))
        out[link.get("name")] = found
    return out


# ---------------------------------------------------------------- OBJ


def to_obj_viz(spheres: SphereSet, subdivisions: int = 2) -> bytes:
    """One icosphere object per sphere, named ``sphere_<k>``."""
    if not 0 <= subdivisions <= 4:
        raise ValueError("subdivisions must be in [0, 4]")
    unit_v, unit_f = icosphere(subdivisions, 1.0)
    lines = ["# spherepack sphere set"]
    offset = 1
    for k, s in enumerate(spheres):
        lines.append(f"o sphere_{k}")
        verts = unit_v * s.radius + np.asarray(s.center)
        lines.extend(f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in verts)
        lines.extend(f"f {a + offset} {b + offset} {c + offset}" for a, b, c in unit_f)
        offset += len(unit_v)
    return ("\n".join(lines) + "\n").encode("ascii")


@dataclass(frozen=True)
class LinkCollision:
    """First mesh collision of a URDF link, with its placement in the link frame."""

    filename: str
    scale: float
    xyz: tuple[float, float, float]
    rpy: tuple[float, float, float]
    n_collisions: int

    def rotation(self) -> np.ndarray:
        r, p, y = self.rpy
        rx = np.array([[1, 0, 0], [0, np.cos(r), -np.sin(r)], [0, np.sin(r), np.cos(r)]])
        ry = np.array([[np.cos(p), 0, np.sin(p)], [0, 1, 0], [-np.sin(p), 0, np.cos(p)]])
        rz = np.array([[np.cos(y), -np.sin(y), 0], [np.sin(y), np.cos(y), 0], [0, 0, 1]])
        return rz @ ry @ rx


def link_collision(urdf_text: str, link: str) -> LinkCollision:
    try:
        root = ET.fromstring(urdf_text)
    except ET.ParseError as exc:
        raise XmlError(str(exc)) from exc
    el = next((l for l in root.findall("link") if l.get("name") == link), None)
    if el is None:
        raise LinkNotFound(link)
    cols = el.findall("collision")
    for col in cols:
        mesh = col.find("geometry/mesh")
        if mesh is None:
            continue
        scale = [1.0]
        if mesh.get("scale"):
            scale = [float(v) for v in mesh.get("scale").split()]
            if len(set(scale)) != 1:
                raise XmlError(f"link {link}: only uniform mesh scale is supported")
        origin = col.find("origin")
        xyz = rpy = (0.0, 0.0, 0.0)
        if origin is not None:
            if origin.get("xyz"):
                xyz = tuple(float(v) for v in origin.get("xyz").split())
            if origin.get("rpy"):
                rpy = tuple(float(v) for v in origin.get("rpy").split())
        return LinkCollision(mesh.get("filename", ""), scale[0], xyz, rpy, len(cols))
    raise XmlError(f"link {link} has no <collision> with a <mesh> geometry")
