"""
Command-line entry points.

    fuelmap synth   --out data/               synthetic scenes with dense truth
    fuelmap prepare --clc clc --out gt/        scribbles (+ points) from label sources
    fuelmap train   --config train.json --out run/
    fuelmap infer   --checkpoint run/student --image img --out pred/ [--tta]
    fuelmap eval    --pred pred/ --points gt/points --dense gt/dense --out report/

Failures exit with status 1 and print one JSON line ``{"error": ..., "message": ...}``
on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from fuelmap import annotations as annot
from fuelmap.inference import infer_image
from fuelmap.metrics import evaluate_run
from fuelmap.net import load_checkpoint
from fuelmap.raster import LabelRaster, MultiSpectralImage, SourceRaster, read_raster, write_raster
from fuelmap.render import save_png
from fuelmap.selftrain import Sample, TrainConfig, train
from fuelmap.selftrain.config import read_config_file
from fuelmap.synth import SynthConfig, generate, write_dataset

log = logging.getLogger("fuelmap")


def _read(path, kind):
    raster = read_raster(path)
    if not isinstance(raster, kind):
        names = " or ".join(k.__name__ for k in (kind if isinstance(kind, tuple) else (kind,)))
        raise TypeError(f"{path}: expected {names}, got {type(raster).__name__}")
    return raster


def cmd_synth(args) -> dict:
    cfg = SynthConfig.load(args.config) if args.config else SynthConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.n_scenes is not None:
        cfg = replace(cfg, n_scenes=args.n_scenes)
    scenes = generate(cfg)
    write_dataset(scenes, args.out, cfg)
    frac = sum(s.scribbles.labeled.mean() for s in scenes) / len(scenes)
    return {"scenes": len(scenes), "out": str(args.out), "scribble_fraction": round(float(frac), 4)}


def cmd_prepare(args) -> dict:
    cfg = annot.load_pipeline_config(args.config)
    out = Path(args.out)
    result = {}
    if args.clc:
        clc = _read(args.clc, (SourceRaster, LabelRaster))
        image = _read(args.image, MultiSpectralImage) if args.image else None
        ua = _read(args.ua, LabelRaster) if args.ua else None
        hrl = _read(args.hrl, LabelRaster) if args.hrl else None
        scribbles = annot.build_scribbles(clc, image, ua, hrl, cfg)
        write_raster(scribbles, out / "scribbles")
        result["scribble_pixels"] = int(scribbles.labeled.sum())
        shape = scribbles.shape
    if args.points_csv:
        if args.clc:
            h, w = shape
        elif args.shape:
            h, w = args.shape
        else:
            raise ValueError("--shape is required when rasterizing points without --clc")
        points = annot.rasterize_points(annot.read_points_csv(args.points_csv), h, w)
        write_raster(points, out / "points")
        result["points"] = int(points.labeled.sum())
    if not result:
        raise ValueError("nothing to do: pass --clc and/or --points-csv")
    return result


def load_samples(data_dir, names=None) -> list[Sample]:
    data_dir = Path(data_dir)
    if names is None:
        names = sorted(p.stem for p in (data_dir / "images").glob("*.json"))
    samples = []
    for name in names:
        dense_path = data_dir / "dense" / f"{name}.json"
        points_path = data_dir / "points" / f"{name}.json"
        samples.append(
            Sample(
                image=_read(data_dir / "images" / name, MultiSpectralImage),
                scribbles=_read(data_dir / "scribbles" / name, LabelRaster),
                points=_read(points_path, LabelRaster) if points_path.exists() else None,
                dense=_read(dense_path, LabelRaster) if dense_path.exists() else None,
                name=name,
            )
        )
    if not samples:
        raise FileNotFoundError(f"no scenes under {data_dir / 'images'}")
    return samples


def cmd_train(args) -> dict:
    if not args.config:
        raise ValueError("train needs --config")
    path = Path(args.config)
    cfg = TrainConfig.load(path)
    data = read_config_file(path).get("data", {})
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    base = path.parent
    train_dir = base / data.get("dir", ".")
    samples = load_samples(train_dir)
    val = []
    if "val_dir" in data:
        val = load_samples(base / data["val_dir"])
    elif "val_fraction" in data:
        samples, val = annot.split_train_val(samples, 1 - data["val_fraction"], cfg.seed)
    _, _, rows = train(samples, cfg, val, out_dir=args.out)
    last = next((r["val_miou"] for r in reversed(rows) if r["val_miou"] is not None), None)
    return {"iterations": cfg.total_iters, "out": str(args.out), "val_miou": last}


def cmd_infer(args) -> dict:
    model, _ = load_checkpoint(args.checkpoint)
    src = Path(args.image)
    headers = sorted(src.glob("*.json")) if src.is_dir() else [src]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    done = []
    for header in headers:
        image = _read(header, MultiSpectralImage)
        name = Path(header).stem if Path(header).suffix == ".json" else Path(header).name
        probs = infer_image(model, image, args.tile, args.overlap, args.tta)
        labels = probs.argmax()
        write_raster(labels, out / name)
        write_raster(probs, out / "probs" / name)
        if not args.no_png:
            save_png(labels, out / f"{name}.png", image)
        done.append(name)
    return {"images": done, "out": str(out)}


def cmd_eval(args) -> dict:
    report = evaluate_run(args.pred, args.points, args.dense, args.out)
    return {k: report[k] for k in ("mean_iou", "macro_f1", "weighted_f1", "n_pixels", "n_points")}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON/TOML configuration file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    parser = argparse.ArgumentParser(prog="fuelmap", description=__doc__.split("\n\n")[0])
    parser.add_argument("--config", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="out")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic benchmark")
    p.add_argument("--n-scenes", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", parents=[common], help="build scribbles and point labels")
    p.add_argument("--clc", help="source-id raster (CLC codes)")
    p.add_argument("--image", help="multispectral image for NDVI/NDWI filtering")
    p.add_argument("--ua", help="urban label raster in fuel classes")
    p.add_argument("--hrl", help="leaf-type raster (Broadleaves/Coniferous ids)")
    p.add_argument("--points-csv", help="row,col,lucas_id records")
    p.add_argument("--shape", type=int, nargs=2, metavar=("H", "W"))
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="run teacher-student training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="predict fuel maps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="image raster or directory of rasters")
    p.add_argument("--tta", action="store_true", help="average flipped and rotated views")
    p.add_argument("--tile", type=int, default=512)
    p.add_argument("--overlap", type=int, default=32)
    p.add_argument("--no-png", action="store_true")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="score predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--points")
    p.add_argument("--dense")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
