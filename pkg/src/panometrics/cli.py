"""Command-line interface.

Subcommands: eval, compare, filter-split, warp, icosphere, loss. Every flag
can also be given in a TOML config file (one table per subcommand, keys named
like the flags with dashes replaced by underscores); explicit flags override
the config, which overrides built-in defaults.

Exit codes: 0 on success, 1 for usage errors (bad flags, unknown metrics,
bad config keys), 2 for data errors (unreadable or malformed files,
mismatched manifests, degenerate inputs).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import losses as loss_mod
from .depthio import (
    DepthIOError,
    filter_split,
    load_depth,
    load_manifest,
    save_manifest,
    write_pfm,
    write_rawf32,
)
from .icosphere import build_icosphere
from .metrics.geom import TriangleMesh, save_mesh_obj, save_mesh_ply
from .report import EvalOptions, MetricsReport, evaluate, indicators, rank_models
from .warp import apply_displacement, read_field


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2; usage problems are 1 here
        raise UsageError(message)


DEFAULTS = {
    "eval": {
        "model": None,
        "out": None,
        "d_max": 10.0,
        "weights": "none",
        "ico": 6,
        "no_ico": False,
        "geom": False,
        "m2m_samples": 10000,
        "seed": 0,
        "disc_thresh": 0.1,
        "canny_sigma": 1.0,
        "canny_lo": 0.05,
        "canny_hi": 0.10,
        "dbe_trunc": 10.0,
        "edge_tol": 1.0,
        "jobs": 1,
        "per_sample_mean": False,
    },
    "compare": {
        "columns": "rmse,abs_rel,delta_1.25",
        "format": "md",
        "out": None,
    },
    "filter-split": {
        "max_invalid": 0.10,
        "jobs": 1,
        "dropped": None,
    },
    "warp": {
        "d_max": 10.0,
        "scale": None,
    },
    "icosphere": {
        "order": 6,
        "out": None,
    },
    "loss": {
        "d_max": 10.0,
        "n_triplets": 2000,
        "seed": 0,
        "fd_check": False,
        "fd_pixels": 48,
        "fd_step": 1e-5,
        "grad_out": None,
        "scale": None,
    },
}


def _config_table(path: str | None, section: str) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as f:
            cfg = tomllib.load(f)
    except OSError as exc:
        raise DepthIOError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"bad TOML in {path}: {exc}") from exc
    table = cfg.get(section, {})
    if not isinstance(table, dict):
        raise UsageError(f"config section [{section}] must be a table")
    unknown = set(table) - set(DEFAULTS[section])
    if unknown:
        raise UsageError(f"unknown config keys in [{section}]: {', '.join(sorted(unknown))}")
    return table


class _Resolver:
    """Flag > config > default, with flags parsed to None when absent."""

    def __init__(self, args, section: str):
        self.args = args
        self.table = _config_table(args.config, section)
        self.defaults = DEFAULTS[section]

    def __call__(self, name: str):
        v = getattr(self.args, name, None)
        if v is not None:
            return v
        if name in self.table:
            return self.table[name]
        return self.defaults[name]


def build_parser() -> _Parser:
    parser = _Parser(prog="panometrics", description=__doc__)
    parser.add_argument("--version", action="version", version="%(prog)s 0.1.0")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate a prediction manifest against ground truth")
    p.add_argument("--pred", required=True, help="prediction manifest (JSON Lines)")
    p.add_argument("--gt", required=True, help="ground-truth manifest (JSON Lines)")
    p.add_argument("--out", help="write the JSON report here (default: stdout)")
    p.add_argument("--model", help="model name recorded in the report")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--d-max", type=float, dest="d_max", help="depth range cap in meters")
    p.add_argument("--weights", choices=["none", "spherical"], help="pixel weighting scheme")
    p.add_argument("--ico", type=int, help="icosphere subdivision order for vertex accuracies")
    p.add_argument("--no-ico", action="store_true", default=None, dest="no_ico",
                   help="skip icosphere accuracies")
    p.add_argument("--geom", action="store_true", default=None,
                   help="also compute 3D metrics (c2c, m2m)")
    p.add_argument("--m2m-samples", type=int, dest="m2m_samples", help="surface samples per mesh")
    p.add_argument("--seed", type=int, help="RNG seed for mesh sampling")
    p.add_argument("--disc-thresh", type=float, dest="disc_thresh",
                   help="relative depth gap that cuts mesh triangles")
    p.add_argument("--canny-sigma", type=float, dest="canny_sigma")
    p.add_argument("--canny-lo", type=float, dest="canny_lo")
    p.add_argument("--canny-hi", type=float, dest="canny_hi")
    p.add_argument("--dbe-trunc", type=float, dest="dbe_trunc",
                   help="truncation (pixels) for boundary error distances")
    p.add_argument("--edge-tol", type=float, dest="edge_tol",
                   help="match radius (pixels) for edge precision/recall")
    p.add_argument("--jobs", type=int, help="worker threads over samples")
    p.add_argument("--per-sample-mean", action="store_true", default=None, dest="per_sample_mean",
                   help="average per-sample metrics instead of pixel pooling")

    p = sub.add_parser("compare", help="rank models from saved reports")
    p.add_argument("--reports", nargs="+", required=True, help="report JSON files")
    p.add_argument("--columns", help="comma-separated metric names")
    p.add_argument("--format", choices=["md", "csv", "json"], help="table format")
    p.add_argument("--out", help="write the table here (default: stdout)")
    p.add_argument("--config", help="TOML config file")

    p = sub.add_parser("filter-split", help="drop samples with too many invalid pixels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="kept-records manifest")
    p.add_argument("--dropped", help="write dropped records here")
    p.add_argument("--max-invalid", type=float, dest="max_invalid",
                   help="largest allowed invalid fraction (default 0.10)")
    p.add_argument("--jobs", type=int)
    p.add_argument("--config", help="TOML config file")

    p = sub.add_parser("warp", help="warp a depth map by a displacement field")
    p.add_argument("--depth", required=True)
    p.add_argument("--field", required=True, help="displacement field file")
    p.add_argument("--out", required=True, help="output depth (.pfm or .raw)")
    p.add_argument("--d-max", type=float, dest="d_max")
    p.add_argument("--scale", type=float, help="meters per count for png16 input")
    p.add_argument("--config", help="TOML config file")

    p = sub.add_parser("icosphere", help="build an icosphere, print counts, optionally export")
    p.add_argument("--order", type=int)
    p.add_argument("--out", help="mesh file (.obj or .ply)")
    p.add_argument("--config", help="TOML config file")

    p = sub.add_parser("loss", help="compute a reference loss (and gradient) for one pair")
    p.add_argument("--kind", required=True,
                   choices=["l1", "log-l1", "berhu", "grad", "cosine", "vnl",
                            "combined", "combined-vnl"])
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--d-max", type=float, dest="d_max")
    p.add_argument("--scale", type=float, help="meters per count for png16 inputs")
    p.add_argument("--n-triplets", type=int, dest="n_triplets")
    p.add_argument("--seed", type=int)
    p.add_argument("--grad-out", dest="grad_out", help="write the gradient as raw float32")
    p.add_argument("--fd-check", action="store_true", default=None, dest="fd_check",
                   help="compare the analytic gradient against finite differences")
    p.add_argument("--fd-pixels", type=int, dest="fd_pixels",
                   help="how many pixels the finite-difference check probes")
    p.add_argument("--fd-step", type=float, dest="fd_step")
    p.add_argument("--config", help="TOML config file")
    return parser


def cmd_eval(args) -> int:
    opt = _Resolver(args, "eval")
    options = EvalOptions(
        d_max=opt("d_max"),
        weights=opt("weights"),
        ico_order=None if opt("no_ico") else opt("ico"),
        geom=bool(opt("geom")),
        m2m_samples=opt("m2m_samples"),
        seed=opt("seed"),
        disc_thresh=opt("disc_thresh"),
        canny_sigma=opt("canny_sigma"),
        canny_lo=opt("canny_lo"),
        canny_hi=opt("canny_hi"),
        dbe_trunc=opt("dbe_trunc"),
        edge_tol=opt("edge_tol"),
        jobs=opt("jobs"),
        per_sample_mean=bool(opt("per_sample_mean")),
    )
    report = evaluate(load_manifest(args.pred), load_manifest(args.gt), options,
                      model=opt("model"))
    text = report.to_json()
    out = opt("out")
    if out:
        Path(out).write_text(text + "\n")
        ind = indicators(report)
        print(f"samples: {report.sample_count}")
        print(f"rmse: {report.direct['rmse']:.6g}  abs_rel: {report.direct['abs_rel']:.6g}")
        print(f"dbe_acc: {report.boundary['dbe_acc']:.6g}  rmse_deg: {report.smoothness['rmse_deg']:.6g}")
        print(f"indicators: depth {ind.depth:.4g}, boundary {ind.boundary:.4g}, "
              f"smoothness {ind.smoothness:.4g}")
        print(f"report written to {out}")
    else:
        print(text)
    return 0


def cmd_compare(args) -> int:
    opt = _Resolver(args, "compare")
    reports = {}
    for path in args.reports:
        try:
            report = MetricsReport.from_json(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DepthIOError(f"cannot load report {path}: {exc}") from exc
        name = report.model or Path(path).stem
        if name in reports:
            raise UsageError(f"duplicate model name {name!r} among reports")
        reports[name] = report
    columns = [c.strip() for c in opt("columns").split(",") if c.strip()]
    if not columns:
        raise UsageError("no metric columns requested")
    try:
        table = rank_models(reports, columns)
    except KeyError as exc:
        raise UsageError(str(exc)) from exc
    fmt = opt("format")
    text = {"md": table.to_markdown, "csv": table.to_csv, "json": table.to_json}[fmt]()
    out = opt("out")
    if out:
        Path(out).write_text(text)
    else:
        print(text, end="" if text.endswith("\n") else "\n")
    return 0


def cmd_filter_split(args) -> int:
    opt = _Resolver(args, "filter-split")
    manifest = load_manifest(args.manifest)
    result = filter_split(manifest, max_invalid=opt("max_invalid"), jobs=opt("jobs"))
    save_manifest(result.kept, args.out)
    dropped_path = opt("dropped")
    if dropped_path:
        save_manifest(type(manifest)(records=result.dropped), dropped_path)
    for w in result.warnings:
        print(w, file=sys.stderr)
    print(f"kept {len(result.kept)} of {len(manifest)} samples -> {args.out}")
    return 0


def cmd_warp(args) -> int:
    opt = _Resolver(args, "warp")
    depth = load_depth(args.depth, scale=opt("scale"), d_max=opt("d_max"))
    field = read_field(args.field)
    warped = apply_displacement(depth, field)
    out = Path(args.out)
    if out.suffix.lower() == ".pfm":
        write_pfm(out, warped.values)
    elif out.suffix.lower() in (".raw", ".f32", ".bin"):
        write_rawf32(out, warped.values)
    else:
        raise UsageError(f"unsupported warp output format: {out.suffix}")
    print(f"warped {args.depth} -> {out} ({warped.invalid_fraction():.2%} invalid)")
    return 0


def cmd_icosphere(args) -> int:
    opt = _Resolver(args, "icosphere")
    try:
        sphere = build_icosphere(opt("order"))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"order {sphere.order}: {len(sphere.vertices)} vertices, {len(sphere.faces)} faces")
    out = opt("out")
    if out:
        mesh = TriangleMesh(vertices=np.array(sphere.vertices), triangles=np.array(sphere.faces))
        suffix = Path(out).suffix.lower()
        if suffix == ".obj":
            save_mesh_obj(out, mesh)
        elif suffix == ".ply":
            save_mesh_ply(out, mesh)
        else:
            raise UsageError(f"unsupported mesh format: {suffix}")
        print(f"mesh written to {out}")
    return 0


def cmd_loss(args) -> int:
    opt = _Resolver(args, "loss")
    gt = load_depth(args.gt, scale=opt("scale"), d_max=opt("d_max"), clamp=False)
    pred = load_depth(args.pred, scale=opt("scale"), d_max=opt("d_max"), clamp=True)
    if pred.values.shape != gt.values.shape:
        raise ValueError("prediction and ground truth shapes differ")
    mask = pred.mask & gt.mask
    config = loss_mod.VnlConfig(n_triplets=opt("n_triplets"), seed=opt("seed"))
    kinds = {
        "l1": loss_mod.depth_l1,
        "log-l1": loss_mod.depth_log_l1,
        "berhu": loss_mod.berhu,
        "grad": loss_mod.multiscale_gradient,
        "cosine": loss_mod.normal_cosine,
        "vnl": lambda p, g, m: loss_mod.virtual_normal(p, g, m, config),
        "combined": loss_mod.combined,
        "combined-vnl": lambda p, g, m: loss_mod.combined_with_virtual_normal(p, g, m, config),
    }
    fn = kinds[args.kind]
    result = fn(pred.values, gt.values, mask)
    print(f"{args.kind}: {result.value:.9g}")
    grad_out = opt("grad_out")
    if grad_out:
        write_rawf32(grad_out, result.gradient)
        print(f"gradient written to {grad_out}")
    if opt("fd_check"):
        # Probe a random subset of valid pixels; full finite differences cost
        # two loss evaluations per pixel.
        rng = np.random.default_rng(opt("seed"))
        jj, ii = np.nonzero(mask)
        take = min(opt("fd_pixels"), len(jj))
        pick = rng.choice(len(jj), size=take, replace=False)
        step = opt("fd_step")
        worst = 0.0
        scale_ref = max(float(np.abs(result.gradient).max()), 1e-12)
        for j, i in zip(jj[pick], ii[pick]):
            bumped = pred.values.copy()
            bumped[j, i] += step
            hi = fn(bumped, gt.values, mask).value
            bumped[j, i] = pred.values[j, i] - step
            lo = fn(bumped, gt.values, mask).value
            fd_val = (hi - lo) / (2.0 * step)
            worst = max(worst, abs(fd_val - result.gradient[j, i]) / scale_ref)
        print(f"fd check over {take} pixels: max relative discrepancy {worst:.3g}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "eval": cmd_eval,
            "compare": cmd_compare,
            "filter-split": cmd_filter_split,
            "warp": cmd_warp,
            "icosphere": cmd_icosphere,
            "loss": cmd_loss,
        }[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DepthIOError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
