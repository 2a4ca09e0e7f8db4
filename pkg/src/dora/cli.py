"""``dora`` command-line entry point.

Subcommands: ``sample``, ``classify``, ``eval``, ``bench`` and ``train-toy``.
Every JSON output carries the tool version, the fully resolved config and
SHA-256 hashes of its input files. Exit status is 0 on success, 1 for user
errors (bad flags, unreadable or invalid inputs) and 2 for internal errors.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, resolve_config

log = logging.getLogger("dora")

MESH_SUFFIXES = (".obj", ".ply")
_DEFAULTS = RunConfig()


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ parser


def _flag(p, suppress, *names, key=None, **kw):
    """Add a flag whose default is the RunConfig value (or suppressed)."""
    key = key or names[0].lstrip("-").replace("-", "_")
    if suppress:
        kw["default"] = argparse.SUPPRESS
    elif "default" not in kw and hasattr(_DEFAULTS, key):
        kw["default"] = getattr(_DEFAULTS, key)
    if kw.get("action") not in ("store_true",) and "help" in kw and not suppress:
        kw["help"] += " (default: %(default)s)"
    elif kw.get("action") == "store_true" and "help" in kw:
        kw["help"] += " (default: off)"
    p.add_argument(*names, dest=key, **kw)


def _common(p, s):
    _flag(p, s, "--seed", type=int, help="random seed; falls back to $DORA_SEED")
    _flag(p, s, "--jobs", type=int, help="parallel workers for per-mesh work")
    _flag(p, s, "--reproducible", action="store_true", help="omit timestamps and timings from outputs")
    p.add_argument("--config", default=None if not s else argparse.SUPPRESS,
                   help="YAML file with flag values; explicit flags win (default: none)")
    p.add_argument("-v", "--verbose", action="store_true", default=False if not s else argparse.SUPPRESS,
                   help="log progress to stderr (default: off)")


def _eval_flags(p, s):
    _flag(p, s, "--eval-points", type=int, help="surface samples per mesh for F-score and Chamfer")
    _flag(p, s, "--fscore-r", type=float, nargs="+", help="F-score distance thresholds")
    _flag(p, s, "--cd-mode", choices=("symmetric", "pred-to-gt"), help="Chamfer distance direction")
    _flag(p, s, "--views", type=int, help="number of normal-map views")
    _flag(p, s, "--res", type=int, help="normal-map resolution in pixels")
    _flag(p, s, "--canny-low", type=float, help="Canny low threshold")
    _flag(p, s, "--canny-high", type=float, help="Canny high threshold")
    _flag(p, s, "--dilate-radius", type=int, help="edge-mask dilation radius in pixels")


def build_parser(suppress: bool = False) -> argparse.ArgumentParser:
    s = suppress
    parser = _Parser(prog="dora", description="Sharp edge sampling, complexity benchmarking and toy VAE training.")
    parser.add_argument("--version", action="version", version=f"dora {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="sharp-edge (or uniform) surface sampling of one mesh")
    p.add_argument("mesh", help="input OBJ or PLY mesh")
    p.add_argument("-o", "--output", default=None if not s else argparse.SUPPRESS,
                   help="point-cloud path (default: <mesh stem>.points.<format> in the working directory)")
    p.add_argument("--stats", default=None if not s else argparse.SUPPRESS,
                   help="stats JSON path (default: <output>.json)")
    _flag(p, s, "--tau", type=float, help="dihedral angle threshold in degrees")
    _flag(p, s, "--n-total", type=int, help="total points N_d")
    _flag(p, s, "--n-desired", type=int, help="salient point budget")
    _flag(p, s, "--uniform", action="store_true", help="uniform sampling only")
    _flag(p, s, "--blue-noise", action="store_true", help="blue-noise uniform part via sample elimination")
    _flag(p, s, "--format", choices=("ply", "bin"), help="point-cloud file format")
    _common(p, s)

    p = sub.add_parser("classify", help="salient-edge complexity levels of a mesh collection")
    p.add_argument("paths", nargs="*", help="mesh files or directories (searched recursively)")
    p.add_argument("-o", "--output", default=None if not s else argparse.SUPPRESS,
                   help="manifest JSON path (default: stdout)")
    p.add_argument("--name", default="" if not s else argparse.SUPPRESS,
                   help="dataset name stored in the manifest (default: empty)")
    _flag(p, s, "--tau", type=float, help="dihedral angle threshold in degrees")
    _common(p, s)

    p = sub.add_parser("eval", help="F-score, Chamfer distance and SNE of one mesh pair")
    p.add_argument("gt", help="ground-truth mesh")
    p.add_argument("pred", help="reconstructed mesh")
    p.add_argument("-o", "--output", default=None if not s else argparse.SUPPRESS,
                   help="report JSON path (default: stdout)")
    _eval_flags(p, s)
    _common(p, s)

    p = sub.add_parser("bench", help="per-level metric table over a manifest")
    p.add_argument("manifest", help="manifest JSON from `dora classify`")
    src = p.add_mutually_exclusive_group(required=not s)
    src.add_argument("--pred-dir", default=None if not s else argparse.SUPPRESS,
                     help="directory with predictions named like the ground-truth files")
    src.add_argument("--pairs", default=None if not s else argparse.SUPPRESS,
                     help="JSON object mapping mesh id to prediction path")
    p.add_argument("-o", "--output", default=None if not s else argparse.SUPPRESS,
                   help="report JSON path (default: stdout)")
    p.add_argument("--table", default=None if not s else argparse.SUPPRESS,
                   help="text table path (default: stdout when -o is given)")
    _eval_flags(p, s)
    _common(p, s)

    p = sub.add_parser("train-toy", help="train the occupancy VAE on procedural shapes")
    p.add_argument("-o", "--output", default=None if not s else argparse.SUPPRESS,
                   help="run directory (default: dora-train-<arm>-s<seed>)")
    _flag(p, s, "--arm", choices=("full", "no-dca", "no-ses"), help="ablation arm")
    _flag(p, s, "--profile", choices=("toy", "paper"), help="named size and budget profile")
    _flag(p, s, "--epochs", type=int, help="training epochs")
    _flag(p, s, "--dataset", choices=("bump", "sphere"), help="procedural shape family")
    _flag(p, s, "--n-shapes", type=int, help="number of training shapes")
    _flag(p, s, "--dataset-seed", type=int, help="seed of the procedural dataset")
    _flag(p, s, "--optimizer", choices=("adam", "sgd"), help="first-order optimizer")
    _flag(p, s, "--kl-weight", type=float, help="KL term weight")
    _flag(p, s, "--eval-every", type=int, help="F-score every k epochs, 0 for final only")
    _flag(p, s, "--tau", type=float, help="dihedral angle threshold in degrees")
    _common(p, s)
    return parser


def _explicit_flags(argv: list[str]) -> dict:
    """Flags actually present on the command line, keyed by config name."""
    ns = vars(build_parser(suppress=True).parse_args(argv))
    ns.pop("command", None)
    return ns


# ------------------------------------------------------------- provenance


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


_COMMON_KEYS = ("seed", "jobs", "reproducible")
_EVAL_KEYS = ("eval_points", "fscore_r", "cd_mode", "views", "res", "canny_low", "canny_high", "dilate_radius")
COMMAND_KEYS = {
    "sample": ("tau", "n_total", "n_desired", "uniform", "blue_noise", "format") + _COMMON_KEYS,
    "classify": ("tau",) + _COMMON_KEYS,
    "eval": _EVAL_KEYS + _COMMON_KEYS,
    "bench": _EVAL_KEYS + _COMMON_KEYS,
    "train-toy": (
        "arm", "profile", "epochs", "dataset", "n_shapes", "dataset_seed",
        "optimizer", "kl_weight", "eval_every", "tau",
    ) + _COMMON_KEYS,
}


def provenance(cfg: RunConfig, inputs: dict[str, str], command: str) -> dict:
    """Version, the config keys ``command`` uses and input file hashes."""
    full = cfg.to_dict()
    out = {
        "tool": "dora",
        "version": __version__,
        "command": command,
        "config": {k: full[k] for k in sorted(COMMAND_KEYS[command])},
        "inputs": {name: file_sha256(path) for name, path in inputs.items()},
    }
    if not cfg.reproducible:
        out["created"] = dt.datetime.now(dt.timezone.utc).isoformat()
    return out


def _dump_json(data: dict, path) -> None:
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# ------------------------------------------------------------- commands


def cmd_sample(args, cfg: RunConfig) -> int:
    from .mesh import load_mesh
    from .sampling import detect_salient_edges, save_points_bin, save_points_ply, sample_uniform, ses_sample

    t0 = time.perf_counter()
    mesh = load_mesh(args.mesh)
    t_load = time.perf_counter()
    gamma = detect_salient_edges(mesh, cfg.tau)
    t_detect = time.perf_counter()
    if cfg.uniform:
        cloud = sample_uniform(mesh, cfg.n_total, cfg.seed, cfg.blue_noise)
    else:
        cloud = ses_sample(mesh, cfg.n_total, cfg.n_desired, cfg.tau, cfg.seed, cfg.blue_noise, gamma)
    t_sample = time.perf_counter()
    out = Path(args.output or f"{Path(args.mesh).stem}.points.{cfg.format}")
    if cfg.format == "bin":
        save_points_bin(cloud, out)
    else:
        save_points_ply(cloud, out)
    stats = provenance(cfg, {"mesh": args.mesh}, "sample")
    stats.update(
        {
            "output": str(out),
            "n_gamma": gamma.count,
            "n_salient": cloud.n_salient,
            "n_uniform": cloud.n_uniform,
            "n_points": len(cloud),
            "mode": "uniform" if cfg.uniform else "ses",
        }
    )
    if not cfg.reproducible:
        stats["timings"] = {
            "load": t_load - t0,
            "detect": t_detect - t_load,
            "sample": t_sample - t_detect,
        }
    _dump_json(stats, args.stats or f"{out}.json")
    log.info("wrote %d points (%d salient) to %s", len(cloud), cloud.n_salient, out)
    return 0


def _expand_mesh_paths(paths) -> list[str]:
    out = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            out.extend(str(f) for f in sorted(path.rglob("*")) if f.suffix.lower() in MESH_SUFFIXES and f.is_file())
        elif path.exists():
            out.append(str(path))
        else:
            raise FileNotFoundError(f"no such file or directory: {p}")
    return out


def cmd_classify(args, cfg: RunConfig) -> int:
    from .bench import build_manifest

    paths = _expand_mesh_paths(args.paths)
    manifest = build_manifest(paths, cfg.tau, args.name, cfg.jobs)
    data = provenance(cfg, {p: p for p in paths}, "classify")
    data.update(manifest.to_dict())
    _dump_json(data, args.output)
    return 0


def evaluate_pair(gt_mesh, pred_mesh, cfg: RunConfig) -> dict:
    """Raw metric values for one pair; both meshes are sampled with the run seed."""
    from .metrics import chamfer, default_views, fscore, mesh_points, sne

    gt_pts = mesh_points(gt_mesh, cfg.eval_points, cfg.seed)
    pred_pts = mesh_points(pred_mesh, cfg.eval_points, cfg.seed)
    out = {f"fscore_{r:g}": fscore(pred_pts, gt_pts, r) for r in cfg.fscore_r}
    out["cd"] = chamfer(pred_pts, gt_pts, cfg.cd_mode)
    out["sne"] = sne(
        gt_mesh,
        pred_mesh,
        default_views(cfg.views),
        cfg.res,
        low=cfg.canny_low,
        high=cfg.canny_high,
        dilate_radius=cfg.dilate_radius,
    )
    return out


def _scaled(raw: dict) -> dict:
    out = {}
    for key, value in raw.items():
        if key.startswith("fscore_"):
            out[f"F-score({key[7:]})x100"] = value * 100.0
        elif key == "cd":
            out["CDx10000"] = value * 1e4
        elif key == "sne":
            out["SNEx100"] = value * 100.0
    return out


def cmd_eval(args, cfg: RunConfig) -> int:
    from .mesh import load_mesh

    gt, pred = load_mesh(args.gt), load_mesh(args.pred)
    t0 = time.perf_counter()
    raw = evaluate_pair(gt, pred, cfg)
    report = provenance(cfg, {"gt": args.gt, "pred": args.pred}, "eval")
    report.update({"raw": raw, "table": _scaled(raw)})
    if not cfg.reproducible:
        report["timings"] = {"eval": time.perf_counter() - t0}
    _dump_json(report, args.output)
    return 0


def _pred_paths(manifest, args) -> dict[str, str]:
    ids = {e.mesh_id for e in manifest.entries}
    if args.pairs:
        pairs = json.loads(Path(args.pairs).read_text(encoding="utf-8"))
        if not isinstance(pairs, dict):
            raise ConfigError("--pairs must hold a JSON object of id -> path")
        unknown = sorted(set(pairs) - ids)
        if unknown:
            raise ConfigError(f"pairs reference ids missing from the manifest: {unknown}")
        return {k: str(v) for k, v in pairs.items()}
    pred_dir = Path(args.pred_dir)
    if not pred_dir.is_dir():
        raise FileNotFoundError(f"prediction directory not found: {pred_dir}")
    stems = {f.stem for f in pred_dir.iterdir() if f.suffix.lower() in MESH_SUFFIXES}
    unknown = sorted(stems - ids)
    if unknown:
        raise ConfigError(f"predictions without a manifest entry: {unknown}")
    return {e.mesh_id: str(pred_dir / Path(e.path).name) for e in manifest.entries}


def cmd_bench(args, cfg: RunConfig) -> int:
    from .bench import BenchManifest, aggregate_report
    from .mesh import MeshError, load_mesh
    from .metrics import EmptyMaskError

    try:
        manifest = BenchManifest.from_dict(json.loads(Path(args.manifest).read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed manifest {args.manifest}: {exc}") from None
    preds = _pred_paths(manifest, args)

    def work(entry):
        pred = preds.get(entry.mesh_id)
        if pred is None or not Path(pred).is_file():
            return {"id": entry.mesh_id, "failed": True, "reason": f"missing prediction {pred}"}
        try:
            raw = evaluate_pair(load_mesh(entry.path), load_mesh(pred), cfg)
        except (MeshError, EmptyMaskError, OSError, ValueError) as exc:
            return {"id": entry.mesh_id, "failed": True, "reason": str(exc)}
        return {"id": entry.mesh_id, **raw}

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        rows = list(pool.map(work, manifest.entries))
    report = aggregate_report(manifest, rows)
    inputs = {"manifest": args.manifest}
    inputs.update({f"pred:{k}": v for k, v in preds.items() if Path(v).is_file()})
    data = provenance(cfg, inputs, "bench")
    data.update(report.to_dict())
    _dump_json(data, args.output)
    table = report.render_text()
    if args.table:
        Path(args.table).write_text(table, encoding="utf-8")
    elif args.output:
        sys.stdout.write(table)
    return 0


def cmd_train_toy(args, cfg: RunConfig) -> int:
    import torch

    from .neural.checkpoint import save_checkpoint
    from .neural.model import get_profile
    from .neural.train import make_dataset, train_toy, write_jsonl

    if cfg.reproducible:
        torch.use_deterministic_algorithms(True)
    profile = get_profile(cfg.profile, kl_weight=cfg.kl_weight, eval_every=cfg.eval_every)
    out = Path(args.output or f"dora-train-{cfg.arm}-s{cfg.seed}")
    out.mkdir(parents=True, exist_ok=True)
    dataset = make_dataset(cfg.dataset, cfg.n_shapes, cfg.dataset_seed, cfg.tau)
    sampling = "uniform" if cfg.arm == "no-ses" else "ses"
    header = {
        "event": "run",
        "arm": cfg.arm,
        "sampling": sampling,
        "profile": profile.to_dict(),
        "seed": cfg.seed,
        "shapes": [s.name for s in dataset],
    }
    records = [header]

    def on_epoch(rec):
        rec = {"event": "epoch", "sampling": sampling, **rec}
        if cfg.reproducible:
            rec.pop("seconds", None)
        records.append(rec)
        log.info("epoch %d loss %.5f acc %.4f", rec["epoch"], rec["loss"], rec["acc"])

    result = train_toy(dataset, profile, cfg.arm, cfg.epochs, cfg.seed, cfg.optimizer, cfg.eval_every, on_epoch)
    final = {"event": "final", **result.final}
    records.append(final)
    write_jsonl(records, out / "log.jsonl")
    save_checkpoint(out / "model.ckpt", result.model, {"arm": cfg.arm, "profile": cfg.profile, "seed": cfg.seed})
    summary = provenance(cfg, {}, "train-toy")
    summary.update(
        {
            "arm": cfg.arm,
            "sampling": sampling,
            "checkpoint": str(out / "model.ckpt"),
            "log": str(out / "log.jsonl"),
            "final": result.final,
        }
    )
    _dump_json(summary, out / "result.json")
    _dump_json(summary, None)
    return 0


COMMANDS = {
    "sample": cmd_sample,
    "classify": cmd_classify,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "train-toy": cmd_train_toy,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        explicit = _explicit_flags(argv)
        explicit.pop("config", None)
        explicit.pop("verbose", None)
        flags = {k: v for k, v in explicit.items() if hasattr(_DEFAULTS, k)}
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(flags, args.config)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ConfigError, OSError, ValueError, KeyError) as exc:
        # MeshError, EmptyMaskError and EmptySurfaceError are ValueErrors
        print(f"dora: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"dora: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
