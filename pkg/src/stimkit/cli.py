"""Command-line surface: import, flowviz, synth, train, cv, predict.

Exit codes are a stable contract: 0 success, 2 configuration or usage
problem, 3 numeric failure, 4 I/O failure. Output files are written via
temp-file-plus-rename and all content is canonical, so identical inputs
and seeds reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import imageio
from .config import load_run_config
from .data import WindowParams, build_dataset
from .errors import (
    ConfigError,
    ConflictError,
    InvalidSequenceError,
    KeypointFormatError,
    KeypointParseError,
    NumericError,
    SchemaError,
    SizeError,
    StimkitError,
    ValidationError,
)
from .evaluate import cross_validate
from .flow import farneback_dense, lucas_kanade_grid
from .flowviz import flow_to_hsv, render_arrows
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.train import classify, predict, train
from .pose import filter_head, load_clip_frames, load_manifest, sample_windows
from .raster import rasterize
from .synth import gen_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class _UsageError(StimkitError):
    pass


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _write_json(path: Path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


# ClipRecord validates labels on construction, so load_manifest already
# rejects UNSET placeholders left by `stimkit import`.


def cmd_import(args) -> int:
    src = Path(args.openpose_dir)
    if not src.is_dir():
        raise _UsageError(f"{src}: not a directory")
    clip_dirs = sorted(p for p in src.iterdir() if p.is_dir())
    if not clip_dirs:
        raise _UsageError(f"{src}: no clip subdirectories found")
    out = Path(args.out)
    (out / "keypoints").mkdir(parents=True, exist_ok=True)

    records = []
    max_x = max_y = 0.0
    for clip_dir in clip_dirs:
        frames = load_clip_frames(clip_dir)
        if not frames:
            print(f"{clip_dir.name}: 0 frames, skipped", file=sys.stderr)
            continue
        docs = []
        for f in frames:
            flat = [float(v) for v in f.keypoints.reshape(-1)]
            docs.append({"people": [{"pose_keypoints_2d": flat}] if any(flat) else []})
            pts = f.keypoints[f.keypoints[:, 2] > 0]
            if len(pts):
                max_x = max(max_x, float(pts[:, 0].max()))
                max_y = max(max_y, float(pts[:, 1].max()))
        rel = f"keypoints/{clip_dir.name}.json"
        _atomic_write_text(out / rel, json.dumps(docs, sort_keys=True, separators=(",", ":")) + "\n")
        records.append(
            {
                "id": clip_dir.name,
                "subject": "UNSET",
                "label": "UNSET",
                "fps": args.fps,
                "keypoints": rel,
                "start_frame": 0,
                "end_frame": len(frames) - 1,
            }
        )
        print(f"{clip_dir.name}: {len(frames)} frames")

    if not records:
        raise _UsageError(f"{src}: no usable clips")
    manifest = {
        "version": 1,
        "frame_width": args.frame_width or int(np.ceil(max_x)) + 1,
        "frame_height": args.frame_height or int(np.ceil(max_y)) + 1,
        "clips": records,
    }
    _write_json(out / "manifest.json", manifest)
    print(f"wrote {out / 'manifest.json'} (fill in subject/label fields before training)")
    return EXIT_OK


def cmd_flowviz(args) -> int:
    if len(args.frames) < 2:
        raise _UsageError("flowviz needs at least 2 frames")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images = [imageio.to_gray01(imageio.read_image(p)) for p in args.frames]
    ext = "ppm" if args.ppm else "png"

    for n, (prev, nxt) in enumerate(zip(images, images[1:])):
        if args.method == "lk":
            flow = lucas_kanade_grid(prev, nxt, spacing=args.spacing)
            overlay = render_arrows(flow, background=prev, scale=args.scale)
            isolated = render_arrows(flow, shape=prev.shape, scale=args.scale)
            imageio.write_image(out / f"lk_overlay_{n:03d}.{ext}", _to_u8(overlay))
            imageio.write_image(out / f"lk_isolated_{n:03d}.{ext}", _to_u8(isolated))
        else:
            flow = farneback_dense(prev, nxt)
            imageio.write_image(out / f"dense_hsv_{n:03d}.{ext}", _to_u8(flow_to_hsv(flow)))
        if args.dump_flow:
            _write_json(out / f"flow_{args.method}_{n:03d}.json", flow.to_dict())
        print(f"pair {n}: method={args.method} valid={int(flow.valid.sum())}/{len(flow.valid)}")
    return EXIT_OK


def _to_u8(img01):
    return np.clip(np.asarray(img01) * 255.0 + 0.5, 0, 255).astype(np.uint8)


def cmd_synth(args) -> int:
    manifest = gen_dataset(
        args.out,
        n_subjects=args.subjects,
        clips_per_subject=args.clips_per_subject,
        seed=args.seed,
        camera_drift_sigma=args.drift,
    )
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    manifest = load_manifest(cfg.manifest_path)
    dataset = build_dataset(manifest, cfg.window)
    if not dataset.windows:
        raise ConfigError("manifest", "dataset produced no windows")
    known = {c.subject_id for c in manifest.clips}
    for s in cfg.holdout_subjects:
        if s not in known:
            raise ConfigError("holdout_subjects", f"unknown subject {s!r}")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)

    from .augment import make_training_augmenter

    holdout = set(cfg.holdout_subjects)
    train_windows = [w for w in dataset.windows if w.subject_id not in holdout]
    if not train_windows:
        raise ConfigError("holdout_subjects", "holdout leaves no training windows")
    clips = [rasterize(w, cfg.raster) for w in train_windows]
    augmenter = make_training_augmenter(cfg.augment) if cfg.augment else None
    checkpoint, history = train(cfg.model, clips, cfg.train, augmenter)
    checkpoint.training_metadata["raster"] = cfg.raster.to_dict()
    checkpoint.training_metadata["window"] = cfg.window.to_dict()

    ckpt_path = cfg.output_dir / "checkpoint.ckpt"
    save_checkpoint(checkpoint, ckpt_path)
    summary = {"epoch_mean_loss": history, "windows": len(clips), "seed": cfg.seed}
    if holdout:
        from .evaluate import confusion, precision_recall_f1

        held = [w for w in dataset.windows if w.subject_id in holdout]
        preds, labels = [], []
        for w in held:
            clip = rasterize(w, cfg.raster)
            preds.append(predict(checkpoint, clip.frames))
            labels.append(clip.label)
        cm = confusion(preds, labels)
        metrics = precision_recall_f1(cm)
        summary["holdout"] = {
            "subjects": sorted(holdout),
            "windows": len(held),
            "confusion": cm.to_dict(),
            "precision": metrics.precision,
            "recall": metrics.recall,
            "f1": metrics.f1,
        }
        print(f"holdout ({','.join(sorted(holdout))}): F1 {metrics.f1:.4f} over {len(held)} windows")
    _write_json(cfg.output_dir / "history.json", summary)
    print(f"trained on {len(clips)} windows for {cfg.train.epochs} epochs")
    print(f"wrote {ckpt_path}")
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = load_run_config(args.config)
    manifest = load_manifest(cfg.manifest_path)
    dataset = build_dataset(manifest, cfg.window)
    report = cross_validate(
        dataset,
        model_config=cfg.model,
        train_config=cfg.train,
        augment_spec=cfg.augment,
        k=cfg.k,
        seed=cfg.seed,
        raster_spec=cfg.raster,
    )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(cfg.output_dir / "report.json", report.to_json())
    rows = report.prediction_rows()
    _atomic_write_text(
        cfg.output_dir / "predictions.csv",
        "\n".join(",".join(str(v) for v in row) for row in rows) + "\n",
    )
    for fr in report.per_fold:
        save_checkpoint(fr.checkpoint, cfg.output_dir / f"fold_{fr.fold}.ckpt")

    print(f"{'fold':<5} {'test subjects':<30} {'tp':>3} {'fp':>3} {'fn':>3} {'tn':>3} "
          f"{'precision':>9} {'recall':>7} {'f1':>7}")
    for fr in report.per_fold:
        cm = fr.confusion
        print(
            f"{fr.fold:<5} {','.join(fr.test_subjects):<30.30} {cm.tp:>3} {cm.fp:>3} {cm.fn:>3} {cm.tn:>3} "
            f"{fr.metrics.precision:>9.4f} {fr.metrics.recall:>7.4f} {fr.metrics.f1:>7.4f}"
        )
    print(f"mean F1 (windows): {report.mean_f1:.4f}")
    print(f"mean F1 (clip majority vote): {report.clip_mean_f1:.4f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    checkpoint = load_checkpoint(args.model)
    # the checkpoint's training metadata carries the window and raster
    # geometry it was trained with; explicit flags win over it
    meta_window = checkpoint.training_metadata.get("window", {})
    params = WindowParams(
        T=args.T if args.T is not None else int(meta_window.get("T", checkpoint.config.T)),
        stride=args.stride if args.stride is not None else int(meta_window.get("stride", 5)),
        hop=args.hop if args.hop is not None else int(meta_window.get("hop", 15)),
        confidence_threshold=float(meta_window.get("confidence_threshold", 0.1)),
    )
    frames = load_clip_frames(args.keypoints)
    heads = [filter_head(f, params.confidence_threshold) for f in frames]
    frame_size = None
    if args.frame_width and args.frame_height:
        frame_size = (args.frame_width, args.frame_height)
    windows = sample_windows(
        heads,
        T=params.T,
        stride=params.stride,
        hop=params.hop,
        clip_id=str(args.keypoints),
        frame_size=frame_size,
    )
    if not windows:
        print("no windows: clip shorter than one window span", file=sys.stderr)
        return EXIT_OK

    from .raster import RasterSpec

    meta_raster = dict(checkpoint.training_metadata.get("raster", {}))
    meta_raster.setdefault("width", checkpoint.config.width)
    meta_raster.setdefault("height", checkpoint.config.height)
    spec = RasterSpec(**meta_raster)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for w in windows:
            clip = rasterize(w, spec)
            p = predict(checkpoint, clip.frames)
            line = {
                "clip": str(args.keypoints),
                "origin_frame": w.origin_frame,
                "probability": p,
                "predicted": "positive" if classify(p) else "negative",
            }
            out.write(json.dumps(line, sort_keys=True) + "\n")
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stimkit",
        description="Head-motion window classification from pose keypoints, with optical-flow baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="consolidate per-frame keypoint JSON dirs into a dataset skeleton")
    p.add_argument("openpose_dir", help="directory with one subdirectory of per-frame JSON files per clip")
    p.add_argument("-o", "--out", required=True, help="output dataset directory")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--frame-width", type=int, default=0, help="source frame width (default: infer)")
    p.add_argument("--frame-height", type=int, default=0, help="source frame height (default: infer)")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("flowviz", help="render optical flow for consecutive image frames")
    p.add_argument("frames", nargs="+", help="2+ image files (PNG/PPM/PGM), in temporal order")
    p.add_argument("--method", choices=("lk", "dense"), default="lk")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--spacing", type=int, default=10, help="lattice spacing for lk")
    p.add_argument("--scale", type=float, default=1.0, help="arrow length multiplier")
    p.add_argument("--ppm", action="store_true", help="write PPM instead of PNG")
    p.add_argument("--dump-flow", action="store_true", help="also dump raw flow fields as JSON")
    p.set_defaults(func=cmd_flowviz)

    p = sub.add_parser("synth", help="generate the synthetic oracle dataset")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--subjects", type=int, default=12)
    p.add_argument("--clips-per-subject", type=int, default=6)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--drift", type=float, default=1.5, help="camera random-walk step sigma, px/frame")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model on every window of the dataset")
    p.add_argument("-c", "--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="subject-disjoint k-fold cross-validation")
    p.add_argument("-c", "--config", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", help="per-window probabilities for one clip")
    p.add_argument("-m", "--model", required=True, help="checkpoint file")
    p.add_argument("-k", "--keypoints", required=True, help="keypoint file or directory")
    p.add_argument("--T", type=int, default=None, help="window length (default: from checkpoint)")
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--hop", type=int, default=None)
    p.add_argument("--frame-width", type=int, default=0)
    p.add_argument("--frame-height", type=int, default=0)
    p.add_argument("-o", "--out", default="", help="write JSON lines here instead of stdout")
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, SchemaError, ValidationError, ConflictError, KeypointFormatError,
            InvalidSequenceError, SizeError, _UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, KeypointParseError, imageio.ImageFormatError) as e:
        print(f"i/o failure: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
