"""Command-line pipeline.

    cadspot [--config FILE] [--set key=value ...] COMMAND ...

Commands: synth (generate annotated scenes), train (fit the predictor
and plot its curves), detect (tile images and write detections CSV),
group (detections -> rectangle symbols JSON), eval (metrics CSV),
render (SVG overlay), ablate (schedule/offset comparison matrix).

Global options come before the command name. Every command resolves
one RunConfig from defaults <- config file <- --set pairs <- the
CADSPOT_OUT_DIR / CADSPOT_THREADS environment overrides, and is
deterministic given that config.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ConfigError, RunConfig, apply_thread_limit, load_run_config
from .detect import (
    ModelPredictor,
    PatchGrid,
    detect_image,
    read_detections_csv,
    tile,
    write_detections_csv,
)
from .grouping import group_symbols
from .metrics import MetricsRow, evaluate_keypoint_sets, write_metrics_csv
from .model import (
    CheckpointError,
    Predictor,
    TrainingDivergedError,
    TrainReport,
    load_checkpoint,
    save_checkpoint,
    train,
    write_train_report_csv,
)
from .primitives import Keypoint, RectangleSymbol
from .raster import load_png, save_pgm, save_png
from .render import render_overlay
from .report import save_ablation_chart, save_loss_curves, save_schedule_curves
from .rng import seed_stream
from .schedule import KernelSchedule
from .synth import (
    AnnotatedImage,
    AnnotationError,
    GenerationError,
    generate_scene,
    load_annotations,
    save_annotations,
)

SPLITS = ("train", "val", "test")


# ------------------------------------------------------------- helpers


def _scene_seed(root_seed: int, split: str, index: int) -> int:
    """Stable per-scene seed: independent of how many scenes are made."""
    return int(seed_stream(root_seed, f"synth/{split}/{index}").integers(0, 2**31 - 1))


def _load_split(config: RunConfig, split: str) -> list[tuple[str, AnnotatedImage]]:
    d = config.data_dir / split
    if not d.is_dir():
        raise FileNotFoundError(f"dataset split directory not found: {d}")
    paths = sorted(d.glob("*.json"))
    if not paths:
        raise FileNotFoundError(f"no annotation files in {d}")
    return [(p.stem, load_annotations(p)) for p in paths]


def _evaluate_predictor(
    predictor: Predictor,
    samples: Sequence[tuple[str, AnnotatedImage]],
    config: RunConfig,
) -> list[MetricsRow]:
    mp = ModelPredictor(predictor)
    grid = PatchGrid(patch_size=mp.patch_size)
    pairs = []
    for _, ann in samples:
        dets = detect_image(
            mp,
            ann.raster,
            grid,
            threshold=config.threshold,
            dedup_radius=config.dedup_radius,
        )
        pairs.append(([d.as_keypoint() for d in dets], ann.keypoints))
    return evaluate_keypoint_sets(pairs, tau_p=config.tau_p)


def _keypoint_json(p: Keypoint) -> dict:
    return {"x": p.x, "y": p.y, "type_id": int(p.type_id), "score": p.score}


# ------------------------------------------------------------ commands


def cmd_synth(config: RunConfig, count: int, split: str) -> int:
    if count < 1:
        raise ConfigError("--count must be >= 1")
    out = config.data_dir / split
    out.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        spec = replace(config.synth, rng_seed=_scene_seed(config.rng_seed, split, i))
        ann = generate_scene(spec)
        name = f"scene_{i:04d}"
        save_png(ann.raster, out / f"{name}.png")
        save_annotations(ann, out / f"{name}.json", f"{name}.png")
    print(f"wrote {count} scenes to {out}")
    return 0


def cmd_train(config: RunConfig) -> int:
    train_set = _load_split(config, "train")
    val_set = _load_split(config, "val")
    predictor = Predictor(config.predictor)
    report = train(
        predictor,
        [ann for _, ann in train_set],
        [ann for _, ann in val_set],
        config.schedule,
    )
    config.out_dir.mkdir(parents=True, exist_ok=True)
    config.checkpoint.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(predictor, config.checkpoint)
    write_train_report_csv(report, config.out_dir / "train_report.csv")
    save_loss_curves({report.schedule_variant: report}, config.out_dir / "loss_curves.png")
    save_schedule_curves(
        {config.schedule.variant: config.schedule}, config.out_dir / "schedule.png"
    )
    print(
        f"trained {report.epochs} epochs ({report.schedule_variant}); "
        f"final val loss {report.val_losses[-1]:.6g}; "
        f"checkpoint {config.checkpoint} (id {report.checkpoint_id})"
    )
    return 0


def _stitched_heatmap(mp: ModelPredictor, arr: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Max response over classes, stitched to image scale / R (overlaps
    keep the larger value). Diagnostic output only."""
    r_factor = mp.net.config.down_sample
    h, w = arr.shape
    ch = -(-h // r_factor)
    cw = -(-w // r_factor)
    cells = mp.patch_size // r_factor
    canvas = np.zeros((ch + cells, cw + cells))
    for patch, (ox, oy) in tile(arr, grid):
        hm, _ = mp.predict_patch(patch, (ox, oy))
        sub = hm.values.max(axis=0)
        cy, cx = oy // r_factor, ox // r_factor
        region = canvas[cy : cy + cells, cx : cx + cells]
        np.maximum(region, sub, out=region)
    return (np.clip(canvas[:ch, :cw], 0.0, 1.0) * 255.0).round().astype(np.uint8)


def cmd_detect(config: RunConfig, images: Sequence[str], dump_heatmaps: bool) -> int:
    if not images:
        raise ConfigError("detect needs at least one image path")
    if not config.checkpoint.is_file():
        raise FileNotFoundError(f"checkpoint not found: {config.checkpoint}")
    predictor = load_checkpoint(config.checkpoint)
    mp = ModelPredictor(predictor)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    by_image: dict[str, list] = {}
    total = 0
    for image_path in images:
        p = Path(image_path)
        if not p.is_file():
            raise FileNotFoundError(f"image not found: {p}")
        arr = load_png(p)
        dets = detect_image(
            mp,
            arr,
            config.grid,
            threshold=config.threshold,
            dedup_radius=config.dedup_radius,
        )
        by_image[p.name] = dets
        total += len(dets)
        if dump_heatmaps:
            hm_dir = config.out_dir / "heatmaps"
            hm_dir.mkdir(exist_ok=True)
            save_pgm(_stitched_heatmap(mp, arr, config.grid), hm_dir / f"{p.stem}.pgm")
    out_csv = config.out_dir / "detections.csv"
    write_detections_csv(by_image, out_csv)
    print(f"{total} detections over {len(by_image)} image(s) -> {out_csv}")
    return 0


def cmd_group(config: RunConfig, detections: str, annotations: str | None) -> int:
    dets_path = Path(detections)
    if not dets_path.is_file():
        raise FileNotFoundError(f"detections file not found: {dets_path}")
    by_image = read_detections_csv(dets_path)
    doc: dict = {"images": {}}
    n_symbols = 0
    for image in sorted(by_image):
        points = [d.as_keypoint() for d in by_image[image]]
        boxes = None
        if annotations is not None:
            ann_path = Path(annotations) / (Path(image).stem + ".json")
            if not ann_path.is_file():
                raise FileNotFoundError(f"annotation not found: {ann_path}")
            boxes = load_annotations(ann_path, with_raster=False).region_boxes
        result = group_symbols(points, boxes)
        n_symbols += len(result.symbols)
        doc["images"][image] = {
            "symbols": [
                {
                    "class": s.symbol_class,
                    "keypoints": [_keypoint_json(p) for p in s.keypoints],
                }
                for s in result.symbols
            ],
            "unmatched": [_keypoint_json(p) for p in result.unmatched],
        }
    config.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = config.out_dir / "symbols.json"
    out_path.write_text(json.dumps(doc, indent=2) + "\n")
    print(f"{n_symbols} symbols over {len(by_image)} image(s) -> {out_path}")
    return 0


def _load_gt_keypoints(gt: str) -> dict[str, list[Keypoint]]:
    path = Path(gt)
    if path.is_dir():
        out: dict[str, list[Keypoint]] = {}
        for ann_path in sorted(path.glob("*.json")):
            ann = load_annotations(ann_path, with_raster=False)
            doc = json.loads(ann_path.read_text())
            out[doc["image"]] = list(ann.keypoints)
        if not out:
            raise FileNotFoundError(f"no annotation files in {path}")
        return out
    if path.is_file():
        return {
            image: [d.as_keypoint() for d in dets]
            for image, dets in read_detections_csv(path).items()
        }
    raise FileNotFoundError(f"ground truth not found: {path}")


def cmd_eval(config: RunConfig, pred: str, gt: str) -> int:
    pred_path = Path(pred)
    if not pred_path.is_file():
        raise FileNotFoundError(f"predictions file not found: {pred_path}")
    pred_by_image = read_detections_csv(pred_path)
    gt_by_image = _load_gt_keypoints(gt)
    images = sorted(set(pred_by_image) | set(gt_by_image))
    pairs = []
    for image in images:
        pred_kps = [d.as_keypoint() for d in pred_by_image.get(image, [])]
        pairs.append((pred_kps, gt_by_image.get(image, [])))
    rows = evaluate_keypoint_sets(pairs, tau_p=config.tau_p)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = config.out_dir / "metrics.csv"
    write_metrics_csv(rows, out_path)
    overall = rows[-1]
    apek_text = "nan" if math.isnan(overall.apek) else f"{overall.apek:.4f}"
    print(
        f"P={overall.precision:.4f} R={overall.recall:.4f} F1={overall.f1:.4f} "
        f"APEK={apek_text} ({len(images)} image(s)) -> {out_path}"
    )
    return 0


def _symbols_from_json(path: Path, image: str) -> list[RectangleSymbol]:
    doc = json.loads(path.read_text())
    entry = doc.get("images", {}).get(image)
    if entry is None:
        return []
    out = []
    for s in entry["symbols"]:
        kps = tuple(
            Keypoint(p["x"], p["y"], p["type_id"], p.get("score", 1.0))
            for p in s["keypoints"]
        )
        out.append(RectangleSymbol(s["class"], kps))
    return out


def cmd_render(
    config: RunConfig,
    image: str,
    detections: str | None,
    symbols: str | None,
    out: str | None,
) -> int:
    p = Path(image)
    if not p.is_file():
        raise FileNotFoundError(f"image not found: {p}")
    arr = load_png(p)
    kps: list[Keypoint] = []
    if detections is not None:
        by_image = read_detections_csv(detections)
        kps = [d.as_keypoint() for d in by_image.get(p.name, [])]
    syms: list[RectangleSymbol] = []
    if symbols is not None:
        syms = _symbols_from_json(Path(symbols), p.name)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = Path(out) if out else config.out_dir / f"{p.stem}_overlay.svg"
    render_overlay(arr, kps, syms, out_path)
    print(f"{len(kps)} keypoints, {len(syms)} symbols -> {out_path}")
    return 0


def _ablation_schedules(config: RunConfig) -> list[tuple[str, KernelSchedule]]:
    base = config.schedule
    switch = base.switch_epoch if base.switch_epoch is not None else max(1, base.total_epochs // 3)
    return [
        ("pgk", KernelSchedule.pgk(base.sigma_max, base.sigma_min, base.total_epochs, base.alpha)),
        (f"fixed_s{base.sigma_min:g}", KernelSchedule.fixed(base.sigma_min, base.total_epochs)),
        (f"fixed_s{base.sigma_max:g}", KernelSchedule.fixed(base.sigma_max, base.total_epochs)),
        (
            "naive_switch",
            KernelSchedule.naive_switch(
                base.sigma_max, base.sigma_min, base.total_epochs, switch
            ),
        ),
    ]


def cmd_ablate(config: RunConfig) -> int:
    train_pairs = _load_split(config, "train")
    val_pairs = _load_split(config, "val")
    test_pairs = _load_split(config, "test")
    train_anns = [ann for _, ann in train_pairs]
    val_anns = [ann for _, ann in val_pairs]

    config.out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[tuple[str, str, float, float, float]] = []
    reports: dict[str, TrainReport] = {}
    for label, schedule in _ablation_schedules(config):
        for offsets_on in (True, False):
            pcfg = replace(config.predictor, predict_offsets=offsets_on)
            predictor = Predictor(pcfg)
            report = train(predictor, train_anns, val_anns, schedule, schedule_label=label)
            tag = f"{label}/{'offsets' if offsets_on else 'no-offsets'}"
            if offsets_on:
                reports[label] = report
            metric_rows = _evaluate_predictor(predictor, test_pairs, config)
            overall = metric_rows[-1]
            rows.append((label, "on" if offsets_on else "off", report.val_losses[-1],
                         overall.f1, overall.apek))
            print(
                f"{tag}: val loss {report.val_losses[-1]:.6g} "
                f"F1 {overall.f1:.4f} APEK "
                f"{'nan' if math.isnan(overall.apek) else f'{overall.apek:.4f}'}"
            )

    table = config.out_dir / "ablation.csv"
    with open(table, "w", newline="") as f:
        f.write("schedule,offsets,final_val_loss,f1,apek\n")
        for label, offsets, vloss, f1, apek_v in rows:
            apek_text = "nan" if math.isnan(apek_v) else f"{apek_v:.6f}"
            f.write(f"{label},{offsets},{vloss:.9f},{f1:.6f},{apek_text}\n")
    save_loss_curves(reports, config.out_dir / "ablation_losses.png")
    save_schedule_curves(dict(_ablation_schedules(config)), config.out_dir / "schedules.png")
    save_ablation_chart(
        [(f"{label} ({offsets})", f1, apek_v) for label, offsets, _, f1, apek_v in rows],
        config.out_dir / "ablation_chart.png",
    )
    print(f"ablation table -> {table}")
    return 0


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cadspot",
        description="Keypoint spotting for CAD rasters: synth, train, detect, "
        "group, eval, render, ablate.",
    )
    parser.add_argument("--config", metavar="FILE", help="key = value config file")
    parser.add_argument(
        "--set",
        metavar="KEY=VALUE",
        action="append",
        default=[],
        help="override one config key (repeatable)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate an annotated synthetic split")
    p.add_argument("--count", type=int, required=True, help="number of scenes")
    p.add_argument("--split", choices=SPLITS, default="train")

    sub.add_parser("train", help="train the predictor; write checkpoint, CSV, figures")

    p = sub.add_parser("detect", help="run inference over images, write detections CSV")
    p.add_argument("images", nargs="+", metavar="IMAGE")
    p.add_argument(
        "--dump-heatmaps",
        action="store_true",
        help="also write stitched max-class heatmaps as PGM",
    )

    p = sub.add_parser("group", help="group detections into rectangle symbols")
    p.add_argument("detections", metavar="DETECTIONS_CSV")
    p.add_argument(
        "--annotations",
        metavar="DIR",
        help="take region boxes from this annotation directory",
    )

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("pred", metavar="PRED_CSV")
    p.add_argument("gt", metavar="GT", help="annotations directory or detections CSV")

    p = sub.add_parser("render", help="write an SVG overlay for one image")
    p.add_argument("image", metavar="IMAGE")
    p.add_argument("--detections", metavar="CSV")
    p.add_argument("--symbols", metavar="JSON")
    p.add_argument("--out", metavar="SVG")

    sub.add_parser("ablate", help="schedule x offset comparison matrix")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides: dict[str, str] = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, _, value = item.partition("=")
            overrides[key.strip()] = value.strip()
        config = load_run_config(args.config, overrides)
        apply_thread_limit(config.threads)
        if args.command == "synth":
            return cmd_synth(config, args.count, args.split)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "detect":
            return cmd_detect(config, args.images, args.dump_heatmaps)
        if args.command == "group":
            return cmd_group(config, args.detections, args.annotations)
        if args.command == "eval":
            return cmd_eval(config, args.pred, args.gt)
        if args.command == "render":
            return cmd_render(config, args.image, args.detections, args.symbols, args.out)
        if args.command == "ablate":
            return cmd_ablate(config)
        raise AssertionError(f"unhandled command {args.command}")
    except (
        ConfigError,
        GenerationError,
        AnnotationError,
        CheckpointError,
        TrainingDivergedError,
        FileNotFoundError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
