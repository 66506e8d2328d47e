"""Command-line interface.

Commands: prepare, train, eval, robustness, ablate, complete, gradcheck,
toydata. Exit codes: 0 success, 1 usage/config error, 2 runtime error,
3 gradient-check failure. Every command is deterministic under fixed flags
and seeds; reruns produce byte-identical CSV/SVG outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .cloudio import load_cloud_bin, load_cloud_xyz, save_cloud_bin, save_cloud_xyz
from .evaluation import aggregate_by_category, evaluate_model, mean_chamfer
from .mesh import load_mesh, normalize_mesh, sample_surface
from .metrics import METRIC_SCALE
from .models import load_model
from .sampling import farthest_point_sample
from .svgplot import polyline_svg
from .training import (
    TAG_SURFACE,
    ConfigError,
    TrainConfig,
    generate_toy_dataset,
    load_manifest_dataset,
    parse_config_file,
    train,
)

logger = logging.getLogger("partfill")

SCALE_COMMENT = "# metric values scaled by 10000"
DEFAULT_RADII = "0.25,0.30,0.35,0.40,0.45,0.50,0.55"


class CLIError(Exception):
    """Usage or configuration problem (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(f"{self.prog}: {message}")


def build_parser() -> _Parser:
    parser = _Parser(prog="partfill", description="Missing-part point cloud completion pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[], help="sample normalized clouds from a mesh manifest")
    p.add_argument("manifest", help="CSV with columns path,category,split (paths relative to it)")
    p.add_argument("out_dir")
    p.add_argument("--n_points", type=int, default=8192)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a completion model")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--resume", help="checkpoint to continue from")
    for f in dataclasses.fields(TrainConfig):
        kind = {"int": int, "float": float, "str": str}[f.type]
        p.add_argument(f"--{f.name}", type=kind, default=None, help=f"override config key {f.name}")

    p = sub.add_parser("eval", help="per-category completion metrics on a dataset")
    _add_eval_args(p)
    p.add_argument("--radius", type=float, default=0.35)
    p.add_argument("--out", default="eval.csv")

    p = sub.add_parser("robustness", help="chamfer distance across a sweep of split radii")
    _add_eval_args(p)
    p.add_argument("--radii", default=DEFAULT_RADII, help="comma-separated, strictly increasing")
    p.add_argument("--out_csv", default="robustness.csv")
    p.add_argument("--out_svg", default="robustness.svg")

    p = sub.add_parser("ablate", help="metrics with and without the refinement stage")
    _add_eval_args(p)
    p.add_argument("--radius", type=float, default=0.35)
    p.add_argument("--out", default="ablation.csv")

    p = sub.add_parser("complete", help="complete one partial cloud file")
    p.add_argument("checkpoint")
    p.add_argument("cloud", help=".xyz or .bin point cloud with at least 2048 points")
    p.add_argument("--out_prefix", default="completed")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gradcheck", help="finite-difference checks of every backward pass")

    p = sub.add_parser("toydata", help="write a procedural toy dataset")
    p.add_argument("out_dir")
    p.add_argument("--n_shapes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _add_eval_args(p):
    p.add_argument("checkpoint")
    p.add_argument("dataset", help="manifest CSV of prepared clouds or meshes")
    p.add_argument("--split", default="test", help="which manifest split to evaluate")
    p.add_argument("--seed", type=int, default=0)


def _load_eval_dataset(args):
    dataset = load_manifest_dataset(args.dataset).filter_split(args.split)
    if len(dataset) == 0:
        raise ValueError(f"no shapes in split {args.split!r} of {args.dataset}")
    return dataset


def _scaled(value: float) -> str:
    return f"{value * METRIC_SCALE:.6f}"


def cmd_prepare(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    with open(args.manifest, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or not {"path", "category", "split"}.issubset(reader.fieldnames):
            raise CLIError(f"{args.manifest}: manifest needs columns path,category,split")
        entries = list(reader)
    root = Path(args.manifest).parent
    counts: dict[str, int] = {}
    for i, row in enumerate(entries):
        source = root / row["path"]
        try:
            mesh = normalize_mesh(load_mesh(source))
            cloud = sample_surface(mesh, args.n_points, [args.seed, TAG_SURFACE, i])
        except (OSError, ValueError) as exc:
            logger.warning("skipping %s: %s", source, exc)
            continue
        name = f"{i:05d}_{source.stem}.bin"
        save_cloud_bin(out_dir / name, cloud)
        rows.append({"path": name, "category": row["category"], "split": row["split"]})
        counts[row["category"]] = counts.get(row["category"], 0) + 1
    if not rows:
        raise RuntimeError("prepare produced an empty dataset (all meshes unreadable?)")
    _write_manifest(out_dir / "manifest.csv", rows)
    with open(out_dir / "summary.csv", "w", encoding="utf-8", newline="") as handle:
        handle.write("category,count\n")
        for category in sorted(counts):
            handle.write(f"{category},{counts[category]}\n")
    print(f"prepared {len(rows)} clouds in {out_dir}")
    return 0


def _write_manifest(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("path,category,split\n")
        for row in rows:
            handle.write(f"{row['path']},{row['category']},{row['split']}\n")


def cmd_train(args) -> int:
    config = parse_config_file(args.config) if args.config else TrainConfig()
    for f in dataclasses.fields(TrainConfig):
        override = getattr(args, f.name)
        if override is not None:
            config = dataclasses.replace(config, **{f.name: override})
    errors = config.validate()
    if errors:
        raise CLIError("invalid configuration:\n" + "\n".join(f"  - {e}" for e in errors))
    train(config, resume_path=args.resume)
    return 0


def cmd_eval(args) -> int:
    model, _ = load_model(args.checkpoint)
    dataset = _load_eval_dataset(args)
    rows = aggregate_by_category(evaluate_model(model, dataset, radius=args.radius, seed=args.seed))
    with open(args.out, "w", encoding="utf-8", newline="") as handle:
        handle.write(SCALE_COMMENT + "\n")
        handle.write("category,pred_to_gt,gt_to_pred,chamfer\n")
        for r in rows:
            handle.write(f"{r.category},{_scaled(r.pred_to_gt)},{_scaled(r.gt_to_pred)},{_scaled(r.chamfer)}\n")
    print(f"wrote {args.out}")
    return 0


def cmd_robustness(args) -> int:
    try:
        radii = [float(tok) for tok in args.radii.split(",") if tok.strip()]
    except ValueError:
        raise CLIError(f"bad --radii value {args.radii!r}")
    if not radii:
        raise CLIError("--radii is empty")
    for r in radii:
        if not 0.0 < r < 1.0:
            raise CLIError(f"radius {r} outside (0, 1)")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise CLIError("--radii must be strictly increasing")
    model, _ = load_model(args.checkpoint)
    dataset = _load_eval_dataset(args)
    values = []
    for r in radii:
        values.append(mean_chamfer(evaluate_model(model, dataset, radius=r, seed=args.seed)) * METRIC_SCALE)
    with open(args.out_csv, "w", encoding="utf-8", newline="") as handle:
        handle.write(SCALE_COMMENT + "\n")
        handle.write("radius,mean_chamfer\n")
        for r, v in zip(radii, values):
            handle.write(f"{r:.6g},{v:.6f}\n")
    svg = polyline_svg(radii, values, "split radius", "mean chamfer (x10000)", title="robustness to missing-part size")
    Path(args.out_svg).write_text(svg, encoding="utf-8")
    print(f"wrote {args.out_csv} and {args.out_svg}")
    return 0


def cmd_ablate(args) -> int:
    model, _ = load_model(args.checkpoint)
    dataset = _load_eval_dataset(args)
    refined = aggregate_by_category(evaluate_model(model, dataset, radius=args.radius, seed=args.seed))
    unrefined = aggregate_by_category(
        evaluate_model(model, dataset, radius=args.radius, seed=args.seed, mu_override=0.0)
    )
    with open(args.out, "w", encoding="utf-8", newline="") as handle:
        handle.write(SCALE_COMMENT + "\n")
        handle.write(
            "category,refined_pred_to_gt,refined_gt_to_pred,refined_chamfer,"
            "unrefined_pred_to_gt,unrefined_gt_to_pred,unrefined_chamfer\n"
        )
        for a, b in zip(refined, unrefined):
            handle.write(
                f"{a.category},{_scaled(a.pred_to_gt)},{_scaled(a.gt_to_pred)},{_scaled(a.chamfer)},"
                f"{_scaled(b.pred_to_gt)},{_scaled(b.gt_to_pred)},{_scaled(b.chamfer)}\n"
            )
    print(f"wrote {args.out}")
    return 0


def cmd_complete(args) -> int:
    model, _ = load_model(args.checkpoint)
    path = Path(args.cloud)
    if path.suffix.lower() == ".bin":
        cloud, _labels = load_cloud_bin(path)
    else:
        cloud, _labels = load_cloud_xyz(path)
    if len(cloud) < 2048:
        raise ValueError(f"{path}: need at least 2048 points, got {len(cloud)}")
    if len(cloud) > 2048:
        cloud, _ = farthest_point_sample(cloud, 2048, [args.seed, 0])
    missing_pred, merged, refined = model.complete(cloud, seed=[args.seed, 1])
    prefix = args.out_prefix
    save_cloud_xyz(f"{prefix}_missing.xyz", missing_pred)
    save_cloud_xyz(f"{prefix}_merged.xyz", merged.points, merged.labels)
    save_cloud_xyz(f"{prefix}_refined.xyz", refined)
    print(f"wrote {prefix}_missing.xyz, {prefix}_merged.xyz, {prefix}_refined.xyz")
    return 0


def cmd_gradcheck(args) -> int:
    from .checks import run_all

    reports = run_all()
    for report in reports:
        print(report)
    failures = [r for r in reports if not r.passed]
    if failures:
        print(f"{len(failures)} of {len(reports)} gradient checks FAILED")
        return 3
    print(f"all {len(reports)} gradient checks passed")
    return 0


def cmd_toydata(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = generate_toy_dataset(args.n_shapes, args.seed)
    rows = []
    for i, (cloud, category, split) in enumerate(zip(dataset.clouds, dataset.categories, dataset.splits)):
        name = f"{i:05d}_{category}.bin"
        save_cloud_bin(out_dir / name, cloud)
        rows.append({"path": name, "category": category, "split": split})
    _write_manifest(out_dir / "manifest.csv", rows)
    print(f"wrote {len(rows)} toy clouds to {out_dir}")
    return 0


_HANDLERS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "robustness": cmd_robustness,
    "ablate": cmd_ablate,
    "complete": cmd_complete,
    "gradcheck": cmd_gradcheck,
    "toydata": cmd_toydata,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except (CLIError, ConfigError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help and friends
        code = exc.code if isinstance(exc.code, int) else 0
        return code
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
