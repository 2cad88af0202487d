"""Command-line interface: pack, eval, compare, export-urdf, export-obj.

Exit codes: 0 success, 2 invalid flags, 3 input errors, 4 optimisation
failures. Diagnostics go to stderr as single lines ``ERROR:<code>:<kind>:<msg>``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__, kernels
from .baseline_vssa import VssaConfig, vssa_pack
from .errors import InputError, OptimizationError, SpherePackError
from .export import link_collision, read_document, rewrite_urdf, to_json, to_obj_viz
from .geometry import SampleSet, TriangleMesh, load_mesh
from .metrics import DEFAULT_SURFACE_SAMPLES, DEFAULT_VOLUME_SAMPLES, fidelity
from .model import PRESETS, WeightConfig, preset
from .optimizer import OptimizerConfig, pack

MAX_SPHERES = 100
CSV_COLUMNS = ["algo", "n_spheres", "seed", "t_comp", "d_max", "d_avg",
               "r_inside", "r_outside", "r_union", "error"]


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(2, "usage", message)


@dataclass
class RunManifest:
    command_line: list[str]
    config: dict
    seeds: list[int]
    input_hashes: dict[str, str]
    tool_version: str = __version__
    kernel_backend: str = kernels.BACKEND
    started: str = ""
    finished: str = ""
    outputs: list[str] = field(default_factory=list)

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(2, "usage", f"{flag} expects a comma-separated list of integers") from None
    if not values:
        raise CliError(2, "usage", f"{flag} is empty")
    return values


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _load_mesh(path, scale: float) -> TriangleMesh:
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            mesh = load_mesh(path, scale=scale)
    except OSError as exc:
        raise CliError(3, "InputError", f"cannot read mesh {path}: {exc.strerror or exc}") from None
    for w in caught:
        print(f"WARNING:{w.category.__name__}:{w.message}", file=sys.stderr)
    return mesh


def _optimizer_config(args) -> OptimizerConfig:
    cfg = OptimizerConfig()
    if getattr(args, "config", None):
        try:
            cfg = OptimizerConfig.from_file(args.config)
        except (OSError, ValueError, TypeError) as exc:
            raise CliError(3, "ConfigError", f"{args.config}: {exc}") from None
    overrides = {}
    if getattr(args, "interior_samples", None):
        overrides["n_interior_samples"] = args.interior_samples
    if getattr(args, "train_surface_samples", None):
        overrides["n_surface_samples"] = args.train_surface_samples
    if getattr(args, "deterministic", False):
        overrides["deterministic"] = True
    if overrides:
        cfg = OptimizerConfig.from_mapping({**asdict(cfg), **overrides})
    return cfg


def _resolve_algo(algo: str, preset_name: str | None, weights_file: str | None):
    """Map an algorithm identifier to ``("morphit", weights)`` or ``("vssa", None)``."""
    low = algo.lower()
    if low == "vssa":
        return "vssa", None
    if low.startswith("morphit-"):
        return "morphit", preset(algo.split("-", 1)[1])
    if low == "morphit":
        if weights_file:
            try:
                data = json.loads(Path(weights_file).read_text())
                return "morphit", WeightConfig.from_dict(data)
            except (OSError, ValueError, TypeError) as exc:
                raise CliError(3, "InputError", f"weights file {weights_file}: {exc}") from None
        if preset_name:
            return "morphit", preset(preset_name)
        raise CliError(2, "usage", "--algo morphit needs --preset or --weights")
    raise CliError(2, "usage", f"unknown algorithm {algo!r}")


def _run_algo(mesh, kind, weights, n, seed, cfg):
    if kind == "morphit":
        result = pack(mesh, n, weights, cfg, seed=seed)
        return result.spheres, result.wall_time
    start = time.perf_counter()
    samples = SampleSet.draw(mesh, cfg.n_interior_samples, cfg.n_surface_samples, seed)
    sset = vssa_pack(mesh, samples, VssaConfig(n_spheres=n, seed=seed))
    return sset, time.perf_counter() - start


# ---------------------------------------------------------------- commands


def cmd_pack(args) -> int:
    started = _now()
    if args.spheres < 1:
        raise CliError(2, "usage", "--spheres must be >= 1")
    if args.spheres > MAX_SPHERES and not args.allow_large:
        raise CliError(2, "usage", f"--spheres above {MAX_SPHERES} needs --allow-large")
    kind, weights = _resolve_algo(args.algo, args.preset, args.weights)
    cfg = _optimizer_config(args)
    inputs = {}
    if args.urdf:
        if not args.link:
            raise CliError(2, "usage", "--urdf needs --link")
        mesh, inputs = _urdf_link_mesh(args)
    elif args.mesh:
        mesh = _load_mesh(args.mesh, args.scale)
        inputs[str(args.mesh)] = _sha256(args.mesh)
    else:
        raise CliError(2, "usage", "one of --mesh or --urdf is required")

    sset, wall = _run_algo(mesh, kind, weights, args.spheres, args.seed, cfg)
    report = fidelity(mesh, sset, wall, args.volume_samples, args.surface_samples, args.seed)
    out = Path(args.out)
    out.write_bytes(to_json(sset, weights, report))
    RunManifest(sys.argv if args.argv is None else args.argv,
                {"algo": args.algo, "optimizer": asdict(cfg.resolved(mesh)),
                 "weights": weights.as_dict() if weights else None,
                 "spheres": args.spheres, "volume_samples": args.volume_samples,
                 "surface_samples": args.surface_samples, "scale": args.scale},
                [args.seed], inputs, started=started, finished=_now(),
                outputs=[str(out)]).write(_manifest_path(out))
    return 0


def _urdf_link_mesh(args):
    urdf_path = Path(args.urdf)
    try:
        text = urdf_path.read_text()
    except OSError as exc:
        raise CliError(3, "InputError", f"cannot read {urdf_path}: {exc.strerror}") from None
    col = link_collision(text, args.link)
    if col.n_collisions > 1:
        print(f"WARNING:MultipleCollisions:link {args.link} has {col.n_collisions} "
              "collisions; packing the first mesh", file=sys.stderr)
    fname = col.filename
    if fname.startswith("package://"):
        fname = fname[len("package://"):].split("/", 1)[-1]
    elif fname.startswith("file://"):
        fname = fname[len("file://"):]
    mesh_path = Path(args.mesh) if args.mesh else (urdf_path.parent / fname)
    mesh = _load_mesh(mesh_path, args.scale * col.scale)
    mesh = mesh.transformed(matrix=col.rotation(), offset=col.xyz)
    return mesh, {str(urdf_path): _sha256(urdf_path), str(mesh_path): _sha256(mesh_path)}


def cmd_eval(args) -> int:
    started = _now()
    mesh = _load_mesh(args.mesh, args.scale)
    try:
        doc = read_document(Path(args.spheres_file).read_bytes())
    except OSError as exc:
        raise CliError(3, "InputError", f"cannot read {args.spheres_file}: {exc.strerror}") from None
    if doc.spheres.mesh_id and doc.spheres.mesh_id != mesh.mesh_id and not args.force:
        raise CliError(3, "MeshMismatch",
                       f"spheres were packed for mesh {doc.spheres.mesh_id[:12]}, "
                       f"got {mesh.mesh_id[:12]} (use --force)")
    t_comp = doc.fidelity.t_comp if doc.fidelity else 0.0
    report = fidelity(mesh, doc.spheres, t_comp, args.volume_samples, args.surface_samples, args.seed)
    print(report.to_json())
    manifest = Path(args.manifest) if args.manifest else _manifest_path(Path(args.spheres_file + ".eval"))
    RunManifest(sys.argv if args.argv is None else args.argv,
                {"volume_samples": args.volume_samples, "surface_samples": args.surface_samples,
                 "force": args.force, "scale": args.scale},
                [args.seed], {args.mesh: _sha256(args.mesh), args.spheres_file: _sha256(args.spheres_file)},
                started=started, finished=_now()).write(manifest)
    return 0


def _compare_cell(mesh, algo, n, seed, cfg, volume_samples, surface_samples):
    row = {"algo": algo, "n_spheres": n, "seed": seed, "error": ""}
    try:
        kind, weights = _resolve_algo(algo, None, None)
        sset, wall = _run_algo(mesh, kind, weights, n, seed, cfg)
        rep = fidelity(mesh, sset, wall, volume_samples, surface_samples, seed)
        row.update(t_comp=rep.t_comp, d_max=rep.d_max, d_avg=rep.d_avg, r_inside=rep.r_inside,
                   r_outside=rep.r_outside, r_union=rep.r_union)
    except (SpherePackError, CliError, ValueError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    return row


def _worker_count() -> int:
    env = os.environ.get("SPHEREPACK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliError(2, "usage", "SPHEREPACK_THREADS must be an integer") from None
    return os.cpu_count() or 1


def cmd_compare(args) -> int:
    started = _now()
    counts = _int_list(args.spheres, "--spheres")
    seeds = _int_list(args.seeds, "--seeds")
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    if not algos:
        raise CliError(2, "usage", "--algos is empty")
    for n in counts:
        if n < 1:
            raise CliError(2, "usage", "--spheres values must be >= 1")
        if n > MAX_SPHERES and not args.allow_large:
            raise CliError(2, "usage", f"--spheres value {n} exceeds {MAX_SPHERES}; pass --allow-large")
    for a in algos:
        low = a.lower()
        if low != "vssa" and not (low.startswith("morphit-") and low[8:].upper() in PRESETS):
            raise CliError(2, "usage", f"--algos entry {a!r}; expected morphit-V/S/B or vssa")
    mesh = _load_mesh(args.mesh, args.scale)
    cfg = _optimizer_config(args)
    cells = [(a, n, s) for a in algos for n in counts for s in seeds]
    workers = min(_worker_count(), len(cells))
    job = (cfg, args.volume_samples, args.surface_samples)
    if workers <= 1:
        rows = [_compare_cell(mesh, a, n, s, *job) for a, n, s in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_compare_cell, mesh, a, n, s, *job) for a, n, s in cells]
            rows = [f.result() for f in futures]
    rows.sort(key=lambda r: (r["algo"], r["n_spheres"], r["seed"]))
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    RunManifest(sys.argv if args.argv is None else args.argv,
                {"algos": algos, "spheres": counts, "optimizer": asdict(cfg),
                 "volume_samples": args.volume_samples, "surface_samples": args.surface_samples,
                 "workers": workers},
                seeds, {args.mesh: _sha256(args.mesh)}, started=started, finished=_now(),
                outputs=[str(out)]).write(_manifest_path(out))
    failed = [r for r in rows if r["error"]]
    for r in failed:
        print(f"ERROR:4:CellFailed:{r['algo']} n={r['n_spheres']} seed={r['seed']}: {r['error']}",
              file=sys.stderr)
    return 0 if len(failed) < len(rows) else 4


def _parse_map(text: str) -> dict[str, str]:
    mapping = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise CliError(2, "usage", f"--map entry {item!r} is not link=file")
        link, path = item.split("=", 1)
        mapping[link.strip()] = path.strip()
    if not mapping:
        raise CliError(2, "usage", "--map is empty")
    return mapping


def cmd_export_urdf(args) -> int:
    started = _now()
    mapping = _parse_map(args.map)
    try:
        text = Path(args.urdf).read_text(encoding="utf-8")
        sets = {link: read_document(Path(p).read_bytes()).spheres for link, p in mapping.items()}
    except OSError as exc:
        raise CliError(3, "InputError", f"{exc.filename}: {exc.strerror}") from None
    out = Path(args.out)
    out.write_text(rewrite_urdf(text, sets), encoding="utf-8")
    hashes = {args.urdf: _sha256(args.urdf), **{p: _sha256(p) for p in mapping.values()}}
    RunManifest(sys.argv if args.argv is None else args.argv, {"map": mapping}, [], hashes,
                started=started, finished=_now(), outputs=[str(out)]).write(_manifest_path(out))
    return 0


def cmd_export_obj(args) -> int:
    started = _now()
    try:
        sset = read_document(Path(args.spheres_file).read_bytes()).spheres
    except OSError as exc:
        raise CliError(3, "InputError", f"{exc.filename}: {exc.strerror}") from None
    if not 0 <= args.subdivisions <= 4:
        raise CliError(2, "usage", "--subdivisions must be in [0, 4]")
    out = Path(args.out)
    out.write_bytes(to_obj_viz(sset, args.subdivisions))
    RunManifest(sys.argv if args.argv is None else args.argv, {"subdivisions": args.subdivisions},
                [], {args.spheres_file: _sha256(args.spheres_file)},
                started=started, finished=_now(), outputs=[str(out)]).write(_manifest_path(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spherepack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"spherepack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pack", help="fit a sphere set to a mesh")
    p.add_argument("--mesh")
    p.add_argument("--urdf", help="take the mesh from this URDF's --link collision, in the link frame")
    p.add_argument("--link")
    p.add_argument("--spheres", type=int, required=True)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--weights", help="JSON file with w_c, w_o, w_b, w_s, w_t, w_q")
    p.add_argument("--algo", default="morphit")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--config", help="optimizer overrides (JSON or key = value lines)")
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--interior-samples", type=int)
    p.add_argument("--train-surface-samples", type=int)
    p.add_argument("--volume-samples", type=int, default=DEFAULT_VOLUME_SAMPLES)
    p.add_argument("--surface-samples", type=int, default=DEFAULT_SURFACE_SAMPLES)
    p.add_argument("--allow-large", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("eval", help="score a sphere set against a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--spheres-file", required=True)
    p.add_argument("--volume-samples", type=int, default=DEFAULT_VOLUME_SAMPLES)
    p.add_argument("--surface-samples", type=int, default=DEFAULT_SURFACE_SAMPLES)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--force", action="store_true")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="sweep algorithms, sphere counts and seeds into a CSV")
    p.add_argument("--mesh", required=True)
    p.add_argument("--spheres", required=True)
    p.add_argument("--algos", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--interior-samples", type=int)
    p.add_argument("--train-surface-samples", type=int)
    p.add_argument("--volume-samples", type=int, default=DEFAULT_VOLUME_SAMPLES)
    p.add_argument("--surface-samples", type=int, default=DEFAULT_SURFACE_SAMPLES)
    p.add_argument("--allow-large", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-urdf", help="replace link collisions with sphere sets")
    p.add_argument("--urdf", required=True)
    p.add_argument("--map", required=True, help='"link=spheres.json,..."')
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_urdf)

    p = sub.add_parser("export-obj", help="write sphere sets as an OBJ mesh for viewing")
    p.add_argument("--spheres-file", required=True)
    p.add_argument("--subdivisions", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_obj)
    return parser


def _report(code: int, kind: str, message: str) -> int:
    line = " ".join(str(message).split())
    print(f"ERROR:{code}:{kind}:{line}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.argv = None if argv is None else ["spherepack", *argv]
        return args.func(args)
    except CliError as exc:
        return _report(exc.code, exc.kind, str(exc))
    except InputError as exc:
        return _report(3, type(exc).__name__, str(exc))
    except OptimizationError as exc:
        return _report(4, type(exc).__name__, str(exc))
    except SpherePackError as exc:
        return _report(4, type(exc).__name__, str(exc))
    except OSError as exc:
        return _report(3, type(exc).__name__, f"{exc.filename or ''}: {exc.strerror or exc}")


if __name__ == "__main__":
    sys.exit(main())
