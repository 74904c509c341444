"""Command-line interface: ``udfsw make-field | extract | eval | bench | rerun``.

Exit codes: 0 success, 2 bad input, 3 empty level set, 4 numerical failure.
"""

import argparse
import json
import logging
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, fixtures
from .errors import EmptyLevelSet, NonFiniteLoss, ParameterError, ParseError, UdfswError
from .field import (
    PRIMITIVES, UNIT_BOX, GridField, MeshField, NoiseSpec, PointCloudField, estimate_d_max,
    load_udfgrid, make_primitive_field, sample_grid, save_udfgrid, validate_iso_value,
)
from .mesh import load_mesh, save_mesh, topology_stats
from .metrics import average_row, mesh_report, reports_to_csv, reports_to_table
from .optimizer import ExtractionConfig, run_extraction, write_log_csv

logger = logging.getLogger("udfsw")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EMPTY = 3
EXIT_NUMERIC = 4

MESH_SUFFIXES = (".obj", ".ply")
POINT_SUFFIXES = (".xyz", ".txt", ".npy", ".pts")

# CLI flag dest -> ExtractionConfig field
CONFIG_FLAGS = {
    "r": "r",
    "k": "k",
    "lambda1": "lambda1",
    "iters": "max_iterations",
    "post_iters": "post_iterations",
    "lr": "learning_rate",
    "ws": "w_s",
    "wt": "w_t",
    "s1": "s1",
    "s2": "s2",
    "reset_n": "N_reset",
    "beta_m": "beta_m",
    "min_cluster_faces": "min_cluster_faces",
    "laplacian_weight_mode": "laplacian_weight_mode",
    "seed": "seed",
    "threads": "threads",
}
SWITCH_FLAGS = {
    "no_topo": "topology_correction_enabled",
    "no_subdiv": "subdivision_enabled",
    "no_mask": "mask_enabled",
    "no_dircorr": "direction_correction_enabled",
    "no_adaptive": "self_adaptive_enabled",
}


class InputError(UdfswError):
    """Bad command-line input (maps to exit code 2)."""


# --------------------------------------------------------------------------
# helpers


def version_string():
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def resolve_threads(value):
    if value is not None:
        return int(value)
    env = os.environ.get("UDFSW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"UDFSW_THREADS must be an integer, got {env!r}") from None
    return 1


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc.strerror}") from None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key = value", path, no)
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def build_config(args):
    """Defaults, overridden by the config file, overridden by flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for dest, name in CONFIG_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    for dest, name in SWITCH_FLAGS.items():
        if getattr(args, dest, False):
            values[name] = False
    if getattr(args, "bbox", None) is not None:
        values["bbox"] = np.asarray(args.bbox, float).reshape(2, 3).tolist()
    values["threads"] = resolve_threads(values.get("threads"))
    return ExtractionConfig.from_dict(values)


def primitive_params(args):
    """Shape keyword arguments from the dedicated flags and ``--param k=v``."""
    p = {}
    for dest in ("radius", "gap", "major_radius", "minor_radius", "width", "depth"):
        v = getattr(args, dest, None)
        if v is not None:
            p[dest] = v
    if getattr(args, "center", None) is not None:
        p["center"] = tuple(args.center)
    for item in getattr(args, "param", None) or []:
        if "=" not in item:
            raise InputError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        vals = [float(x) for x in v.split(",")]
        p[k.strip().replace("-", "_")] = vals[0] if len(vals) == 1 else tuple(vals)
    return p


def load_points(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    if path.suffix == ".npy":
        pts = np.load(path)
    else:
        try:
            pts = np.loadtxt(path, ndmin=2)
        except ValueError as exc:
            raise ParseError(str(exc), str(path)) from None
    pts = np.asarray(pts, float)
    if pts.ndim != 2 or pts.shape[1] < 3 or len(pts) == 0:
        raise ParseError("expected rows of x y z", str(path))
    return pts[:, :3]


def load_geometry(path):
    """A TriMesh for mesh files, an (n, 3) array for point files."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    suf = path.suffix.lower()
    if suf in MESH_SUFFIXES:
        return load_mesh(path)
    if suf in POINT_SUFFIXES:
        return load_points(path)
    raise InputError(f"unsupported file type {suf!r} for {path}")


def source_field(args):
    """Field described by --primitive / --mesh / --points / --grid. Returns (field, source dict)."""
    picked = [x for x in ("primitive", "mesh", "points", "grid") if getattr(args, x, None)]
    if len(picked) != 1:
        raise InputError("give exactly one of --primitive, --mesh, --points" +
                         (", --grid" if hasattr(args, "grid") else ""))
    kind = picked[0]
    if kind == "primitive":
        params = primitive_params(args)
        return make_primitive_field(args.primitive, **params), {
            "primitive": args.primitive, "params": {k: v for k, v in params.items()}}
    if kind == "mesh":
        m = load_geometry(args.mesh)
        if isinstance(m, np.ndarray):
            raise InputError(f"{args.mesh} is not a mesh file")
        return MeshField(m.vertices, m.faces), {"mesh": str(args.mesh)}
    if kind == "points":
        return PointCloudField(load_points(args.points)), {"points": str(args.points)}
    path = Path(args.grid)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    return load_udfgrid(path), {"grid": str(path)}


def write_manifest(path, payload, argv=None):
    payload = dict(payload)
    payload["version"] = version_string()
    if argv is not None:
        payload["argv"] = list(argv)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _stem_path(out, suffix):
    out = Path(out)
    return out.with_name(out.stem + suffix)


def _add_source_flags(p, with_grid=False):
    g = p.add_argument_group("field source")
    g.add_argument("--primitive", choices=PRIMITIVES)
    g.add_argument("--mesh", help="OBJ/PLY whose exact distance is the field")
    g.add_argument("--points", help="point cloud (xyz text or .npy) whose nearest-point distance is the field")
    if with_grid:
        g.add_argument("--grid", help=".udfgrid file")
    g.add_argument("--radius", type=float)
    g.add_argument("--gap", type=float)
    g.add_argument("--major-radius", type=float)
    g.add_argument("--minor-radius", type=float)
    g.add_argument("--width", type=float)
    g.add_argument("--depth", type=float)
    g.add_argument("--center", type=float, nargs=3)
    g.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="extra shape parameter (comma-separated for vectors)")
    g.add_argument("--noise-sigma", type=float, default=0.0)
    g.add_argument("--noise-seed", type=int, default=None, help="defaults to --seed")


# --------------------------------------------------------------------------
# commands


def cmd_make_field(args):
    field, source = source_field(args)
    dims = args.dims
    bbox = np.asarray(args.bbox, float).reshape(2, 3) if args.bbox else UNIT_BOX
    seed = args.seed if args.noise_seed is None else args.noise_seed
    noise = NoiseSpec(args.noise_sigma, seed) if args.noise_sigma > 0 else None
    threads = resolve_threads(args.threads)
    out = Path(args.out)
    t0 = time.perf_counter()
    clean = sample_grid(field, dims, bbox, threads=threads)
    grid = clean if noise is None else sample_grid(field, dims, bbox, noise=noise, threads=threads)
    t_sample = time.perf_counter() - t0
    t0 = time.perf_counter()
    save_udfgrid(grid, out)
    t_io = time.perf_counter() - t0
    d_max = estimate_d_max(grid, clean, max(grid.dims))
    print(f"wrote {out} ({'x'.join(map(str, grid.dims))}, {out.stat().st_size} bytes)")
    print(f"d_max estimate (advisory): {d_max:.6g}")
    write_manifest(_stem_path(out, ".manifest.json"), {
        "command": "make-field",
        "source": source,
        "dims": list(grid.dims),
        "bbox": grid.bbox.tolist(),
        "noise": None if noise is None else {"sigma": noise.sigma, "seed": noise.seed},
        "seed": seed,
        "outputs": {"grid": str(out)},
        "timings": {"sampling": t_sample, "io": t_io},
        "d_max_estimate": d_max,
    }, args.argv)
    return EXIT_OK


def _extraction_inputs(args, config):
    """(field queried by the loss, grid used for marching cubes, source dict)."""
    field, source = source_field(args)
    if isinstance(field, GridField):
        return field, field, source
    seed = config.seed if args.noise_seed is None else args.noise_seed
    noise = NoiseSpec(args.noise_sigma, seed) if args.noise_sigma > 0 else None
    grid = sample_grid(field, config.k, np.array(config.bbox), noise=noise, threads=config.threads)
    if noise is not None:
        source["noise"] = {"sigma": noise.sigma, "seed": noise.seed}
        return grid, grid, source
    return field, grid, source


def _grid_boundary_min(grid):
    v = grid.values
    faces = [v[0], v[-1], v[:, 0], v[:, -1], v[:, :, 0], v[:, :, -1]]
    return min(float(f.min()) for f in faces)


def cmd_extract(args):
    config = build_config(args)
    out = Path(args.out)
    if out.suffix.lower() not in MESH_SUFFIXES:
        raise InputError(f"--out must end in .obj or .ply, got {out.name}")
    field, grid, source = _extraction_inputs(args, config)
    gt = load_geometry(args.gt) if args.gt else None

    k_eff = max(grid.dims)
    check = validate_iso_value(config.r, k_eff, args.d_max, args.eta_min)
    if not check.ok:
        print(f"warning: {check.message}", file=sys.stderr)
    if _grid_boundary_min(grid) <= config.r:
        print(f"warning: field drops to r={config.r:g} on the grid boundary; the extracted "
              "surface will be open there", file=sys.stderr)

    def tick(rec, mesh, state):
        if args.verbose and (rec.iter % 10 == 0 or rec.event):
            print(f"[{rec.iter}] dist={rec.distance_term:.6g} lap={rec.laplacian_term:.6g} "
                  f"active={rec.active_vertices}/{rec.vertex_count} {rec.event}", file=sys.stderr)

    try:
        res = run_extraction(field, config, callbacks=[tick], grid=grid)
    except EmptyLevelSet as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"advisory: choose r in [{check.lower:g}, {check.upper:g}]"
              " (at least 1/(2k) and the noise level, at most half the smallest gap)", file=sys.stderr)
        return EXIT_EMPTY
    except NonFiniteLoss as exc:
        path = _stem_path(out, ".last_good" + out.suffix)
        if exc.last_good_mesh is not None:
            save_mesh(exc.last_good_mesh, path)
        print(f"error: {exc}", file=sys.stderr)
        print(f"last good mesh: {path}", file=sys.stderr)
        return EXIT_NUMERIC

    t0 = time.perf_counter()
    save_mesh(res.mesh, out)
    log_path = _stem_path(out, ".log.csv")
    write_log_csv(res.log, log_path)
    t_io = time.perf_counter() - t0

    if res.log:
        last = res.log[-1]
        print(f"final loss: total={last.distance_term + last.laplacian_term:.6g} "
              f"distance={last.distance_term:.6g} laplacian={last.laplacian_term:.6g} "
              f"active={last.active_vertices}")
    st = topology_stats(res.mesh)
    print(f"mesh: {res.mesh.n_vertices} vertices, {res.mesh.n_faces} faces, {st.components} components, "
          f"non-manifold v/e {st.non_manifold_vertices}/{st.non_manifold_edges}, "
          f"boundaries {st.boundary_loops}")
    report = None
    if gt is not None:
        report = mesh_report(res.mesh, gt, seed=config.seed)
        print(reports_to_table([report.row()]))
    write_manifest(_stem_path(out, ".manifest.json"), {
        "command": "extract",
        "config": config.to_dict(),
        "source": source,
        "seed": config.seed,
        "inputs": {"gt": args.gt},
        "outputs": {"mesh": str(out), "log": str(log_path)},
        "timings": {"mc": res.timings["mc"], "optimization": res.timings["optimization"],
                    "topology": res.timings["topology"], "io": t_io},
        "events": res.events,
        "report": None if report is None else report.row(),
    }, args.argv)
    return EXIT_OK


def _eval_pairs(pred, gt):
    pred, gt = Path(pred), Path(gt)
    if pred.is_dir():
        if not gt.is_dir():
            raise InputError("batch mode needs --gt to be a directory too")
        pairs = []
        for p in sorted(pred.iterdir()):
            if p.suffix.lower() not in MESH_SUFFIXES:
                continue
            match = [q for q in sorted(gt.iterdir()) if q.stem == p.stem
                     and q.suffix.lower() in MESH_SUFFIXES + POINT_SUFFIXES]
            if not match:
                raise InputError(f"no ground truth for {p.name} in {gt}")
            pairs.append((p.stem, p, match[0]))
        if not pairs:
            raise InputError(f"no meshes found in {pred}")
        return pairs
    return [(pred.stem, pred, gt)]


def cmd_eval(args):
    rows, names = [], []
    for name, p, g in _eval_pairs(args.pred, args.gt):
        pm = load_geometry(p)
        if isinstance(pm, np.ndarray):
            raise InputError(f"{p} is not a mesh file")
        rep = mesh_report(pm, load_geometry(g), n_samples=args.samples, seed=args.seed)
        rows.append(rep.row())
        names.append(name)
    if len(rows) > 1:
        rows.append(average_row(rows))
        names.append("avg.")
    text = reports_to_csv(rows, names)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(reports_to_table(rows, names), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


BENCH_FIELDS = ("fixture", "config", "cd_gt_to_pred", "cd_pred_to_gt", "cd_avg", "wall_s",
                "nm_vertices", "nm_edges", "boundaries", "genus", "components", "vertices", "faces")


def run_bench(fixture_names, config_names, k, base_config=None, noisy=False, log=None):
    """Run the ablation matrix; returns a list of row dicts (CD scaled by 1e3)."""
    rows = []
    for name in fixture_names:
        fx = fixtures.make_fixture(name, k=k, noisy=noisy, config=base_config)
        grid = fx.grid
        gt = fx.ground_truth()
        cfgs = fixtures.bench_configs(fx.config)
        for cname in config_names:
            if cname not in cfgs:
                raise InputError(f"unknown bench config {cname!r}; expected one of {', '.join(cfgs)}")
            t0 = time.perf_counter()
            res = run_extraction(fx.field, cfgs[cname], grid=grid)
            wall = time.perf_counter() - t0
            rep = mesh_report(res.mesh, gt, seed=fx.config.seed).row()
            row = {"fixture": name, "config": cname, "wall_s": wall, **rep}
            rows.append(row)
            if log is not None:
                log(row)
    return rows


def cmd_bench(args):
    names = args.fixtures.split(",") if args.fixtures else list(fixtures.SUITES.get(args.suite, ()))
    if args.suite not in fixtures.SUITES:
        raise InputError(f"unknown suite {args.suite!r}")
    config_names = args.configs.split(",")
    base = build_config(args)
    out = Path(args.out)

    def echo(row):
        print(f"{row['fixture']:>15} {row['config']:>15}  cd_avg={row['cd_avg']:.3f}e-3  "
              f"wall={row['wall_s']:.1f}s  nm={row['nm_vertices']}/{row['nm_edges']}  "
              f"b={row['boundaries']}", file=sys.stderr)

    rows = run_bench(names, config_names, base.k, base, args.noisy, echo)
    import csv

    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_FIELDS)
        for r in rows:
            w.writerow([f"{r[c]:.3f}" if isinstance(r[c], float) else r[c] for c in BENCH_FIELDS])
    write_manifest(_stem_path(out, ".manifest.json"), {
        "command": "bench",
        "suite": args.suite,
        "fixtures": names,
        "configs": config_names,
        "config": base.to_dict(),
        "noisy": args.noisy,
        "seed": base.seed,
        "outputs": {"csv": str(out)},
    }, args.argv)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_rerun(args):
    """Replay the command recorded in a manifest, optionally to a new output path."""
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", str(path), exc.lineno) from None
    argv = manifest.get("argv")
    if not isinstance(argv, list) or not argv:
        raise InputError(f"{path} records no command line")
    argv = list(argv)
    if args.out:
        if "--out" not in argv:
            raise InputError(f"the command in {path} has no --out to replace")
        argv[argv.index("--out") + 1] = args.out
    if args.verbose:
        print("rerun: udfsw " + " ".join(argv), file=sys.stderr)
    return main(argv)


# --------------------------------------------------------------------------
# parser


def _add_config_flags(p):
    g = p.add_argument_group("extraction parameters")
    g.add_argument("--config", help="key = value file of ExtractionConfig fields")
    g.add_argument("--r", type=float)
    g.add_argument("--k", "--resolution", dest="k", type=int)
    g.add_argument("--lambda1", type=float)
    g.add_argument("--iters", type=int)
    g.add_argument("--post-iters", type=int, help="extra iterations without the Laplacian or edits")
    g.add_argument("--lr", type=float)
    g.add_argument("--ws", type=float)
    g.add_argument("--wt", type=float)
    g.add_argument("--s1", type=int)
    g.add_argument("--s2", type=int)
    g.add_argument("--reset-n", type=int)
    g.add_argument("--beta-m", type=int)
    g.add_argument("--min-cluster-faces", type=int)
    g.add_argument("--laplacian-weight-mode", choices=("uniform", "self_adaptive"))
    g.add_argument("--no-topo", action="store_true")
    g.add_argument("--no-subdiv", action="store_true")
    g.add_argument("--no-mask", action="store_true")
    g.add_argument("--no-dircorr", action="store_true")
    g.add_argument("--no-adaptive", action="store_true", help="uniform point weights")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int, help="worker threads (default: $UDFSW_THREADS or 1)")
    g.add_argument("--bbox", type=float, nargs=6, metavar=("X0", "Y0", "Z0", "X1", "Y1", "Z1"))


def build_parser():
    ap = argparse.ArgumentParser(prog="udfsw", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-field", help="sample a field onto a .udfgrid file")
    _add_source_flags(p)
    p.add_argument("--dims", type=int, default=128)
    p.add_argument("--bbox", type=float, nargs=6, metavar=("X0", "Y0", "Z0", "X1", "Y1", "Z1"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_field)

    p = sub.add_parser("extract", help="extract the zero level set as a double-cover mesh")
    _add_source_flags(p, with_grid=True)
    _add_config_flags(p)
    p.add_argument("--gt", help="ground-truth mesh or points for a report")
    p.add_argument("--d-max", type=float, default=0.0, help="noise level for the iso-value check")
    p.add_argument("--eta-min", type=float, default=None, help="smallest gap for the iso-value check")
    p.add_argument("--out", required=True, help="output mesh (.obj or .ply)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="Chamfer distance and topology report")
    p.add_argument("--pred", required=True, help="mesh file, or a directory for batch mode")
    p.add_argument("--gt", required=True, help="mesh/points file, or a directory for batch mode")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="full / components-off / DCUDF-mode matrix over a fixture suite")
    p.add_argument("--suite", default="synthetic-default")
    p.add_argument("--fixtures", help="comma-separated subset of the suite")
    p.add_argument("--configs", default="full,components_off,dcudf")
    p.add_argument("--noisy", action="store_true")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rerun", help="replay the command recorded in a run manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="write to this path instead of the recorded one")
    p.set_defaults(func=cmd_rerun)
    return ap


def main(argv=None):
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = ap.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EmptyLevelSet as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ParameterError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
