"""Command line entry points.

Subcommands:
  run    segment one image and write boundaries/overlay/audit
  ablate stage ablation table against ground truth
  train  cross-validate and fit the Ag / non-Ag classifier
  eval   score an existing detection GeoJSON against ground truth
  synth  generate a synthetic scene with ground truth

Exit codes: 0 success, 2 configuration error, 3 input error,
4 model error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import synth
from .edges import save_edge_map
from .errors import ConfigError, FieldSegError
from .evaluate import evaluate_parcels
from .pipeline import (RunConfig, StageToggles, emit_run, load_config,
                       run_ablation, train_command)
from .raster import read_rgb, write_rgb
from .vector import geojson_to_parcels, load_geojson, save_geojson


def _parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="fieldseg")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--image", type=Path, required=True)
        p.add_argument("--edge-map", type=Path, action="append", default=[],
                       help="probability map PNG; repeatable, maps are fused")
        p.add_argument("--mask", type=Path, default=None,
                       help="cropland mask PNG; omitted = whole frame")
        p.add_argument("--gt", type=Path, default=None,
                       help="ground-truth GeoJSON for metrics output")
        p.add_argument("--model", type=Path, default=None)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--stages", type=str, default=None,
                       help="comma list from pp,mc,lcd,nonag")
        p.add_argument("--debug-cuts", action="store_true")

    common(sub.add_parser("run", help="segment one image"))

    ablate = sub.add_parser("ablate", help="stage ablation table")
    common(ablate)

    train = sub.add_parser("train", help="fit the Ag / non-Ag classifier")
    train.add_argument("manifest", type=Path,
                       help="CSV with id,label rows next to {id}.png chips")
    train.add_argument("--out", type=Path, default=Path("model.json"))
    train.add_argument("--folds", type=int, default=5)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--trees", type=int, default=100)
    train.add_argument("--depth", type=int, default=12)

    ev = sub.add_parser("eval", help="score detections against ground truth")
    ev.add_argument("detected", type=Path)
    ev.add_argument("--gt", type=Path, required=True)
    ev.add_argument("--image", type=Path, required=True,
                    help="defines the pixel frame for rasterization")
    ev.add_argument("--config", type=Path, default=None)

    sy = sub.add_parser("synth", help="generate a synthetic scene")
    sy.add_argument("scene", choices=("grid", "two-tone", "dumbbell"))
    sy.add_argument("--out", type=Path, default=Path("."))
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--rows", type=int, default=10)
    sy.add_argument("--cols", type=int, default=10)
    sy.add_argument("--cell-px", type=int, default=60)
    sy.add_argument("--boundary-px", type=int, default=2)
    sy.add_argument("--jitter", type=int, default=6)
    sy.add_argument("--pockets", type=int, default=0,
                    help="grid cells replaced by non-Ag clutter")
    return top


def _stage_toggles(arg: str) -> StageToggles:
    names = [s for s in arg.split(",") if s]
    if not names:
        raise ConfigError("--stages must name at least one stage")
    return StageToggles.from_names(names)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: dict = {
        "input_image": args.image,
        "edge_maps": tuple(args.edge_map),
        "cropland_mask": args.mask,
        "output_dir": args.out,
        "debug_cuts": args.debug_cuts,
    }
    if args.model is not None:
        overrides["model_path"] = args.model
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.stages is not None:
        overrides["stages"] = _stage_toggles(args.stages)
    return load_config(args.config, **overrides)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    out_dir = emit_run(cfg, args.gt)
    print(f"wrote {out_dir / 'boundaries.geojson'}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    if args.gt is None:
        raise ConfigError("ablate requires --gt")
    cfg = _config_from_args(args)
    rows = run_ablation(cfg, args.gt)
    for row in rows:
        print(f"{row['stages']:<10} f1={row['f1']} "
              f"detection_rate={row['detection_rate']}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    report, model = train_command(args.manifest, args.out, args.folds,
                                  args.seed, args.trees, args.depth)
    print(f"cv accuracy={report.accuracy:.4f} "
          f"macro_f1={report.macro_f1:.4f}")
    print("confusion [true x pred], classes Ag,NonAg:")
    for row in report.confusion:
        print("  " + " ".join(f"{int(v):6d}" for v in row))
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    img = read_rgb(args.image)
    frame = (img.height, img.width)
    gt = geojson_to_parcels(load_geojson(args.gt), frame)
    det = geojson_to_parcels(load_geojson(args.detected), frame)
    report = evaluate_parcels(gt, det, cfg.link_min_overlap, cfg.log_base,
                              frame)
    print(f"precision={report.precision:.6f} recall={report.recall:.6f} "
          f"f1={report.f1:.6f}")
    print(f"agglomeration={report.agglomeration:.6f} "
          f"fragmentation={report.fragmentation:.6f} "
          f"detection_rate={report.detection_rate:.6f}")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.scene == "grid":
        img, gt = synth.make_grid_scene(
            rows=args.rows, cols=args.cols, cell_px=args.cell_px,
            boundary_px=args.boundary_px, jitter=args.jitter,
            n_nonag_pockets=args.pockets, seed=args.seed,
        )
    elif args.scene == "two-tone":
        img, gt = synth.make_two_tone_scene(seed=args.seed)
    else:
        img, emap, gt = synth.make_dumbbell_scene()
        save_edge_map(emap, out / "edges.png")
    write_rgb(img, out / "image.png")
    save_geojson(gt, out / "gt.geojson")
    print(f"wrote {out / 'image.png'}")
    return 0


_DISPATCH = {
    "run": _cmd_run,
    "ablate": _cmd_ablate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "synth": _cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except FieldSegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
