"""Command-line entry point: ``puckloc {generate,make-video,train,eval,infer}``.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from . import config as runcfg

log = logging.getLogger("puckloc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# flag aliases -> dotted config keys
ALIASES = {
    "stride": "window.stride_s",
    "window": "window.window_s",
    "frame_format": "generator.frame_format",
    "iters": "train.max_iters",
    "batch_size": "train.batch_size",
}


def _add_config_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="flat YAML/JSON file with dotted keys")
    g.add_argument("--tier", choices=runcfg.TIERS, default=argparse.SUPPRESS, dest="tier",
                   help="preset: paper (256 px, full model) or test (64 px, reduced)")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, dest="seed")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any dotted key")
    for key in runcfg.key_types():
        if "." in key:
            g.add_argument(f"--{key}", dest=key, default=argparse.SUPPRESS, metavar="V", help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="puckloc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="render a synthetic clip dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-clips", type=int, default=1000, dest="n_clips")
    p.add_argument("--class-weights", dest="class_weights", help="e.g. Play=0.55,Shot=0.2,Faceoff=0.15,Advance=0.1")
    p.add_argument("--format", dest="frame_format", default=argparse.SUPPRESS, choices=("png", "rawvid"))
    _add_config_flags(p)

    p = sub.add_parser("make-video", help="render an untrimmed synthetic video")
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--video-id", dest="video_id", default="video")
    p.add_argument("--stationary", action="store_true", help="puck rests at center ice")
    p.add_argument("--format", dest="frame_format", default=argparse.SUPPRESS, choices=("png", "rawvid"))
    _add_config_flags(p)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("localize_only", "multitask", "event_baseline"), default="localize_only")
    p.add_argument("--resume")
    p.add_argument("--iters", type=int, default=argparse.SUPPRESS)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=argparse.SUPPRESS)
    _add_config_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", required=True)
    _add_config_flags(p)

    p = sub.add_parser("infer", help="sliding-window inference on an untrimmed video")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--video", required=True, help="path to a <video_id>.video.json descriptor")
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=float, default=argparse.SUPPRESS)
    p.add_argument("--window", type=float, default=argparse.SUPPRESS)
    p.add_argument("--detector", choices=("oracle", "none"), default="oracle")
    _add_config_flags(p)
    return parser


def _collect_overrides(args) -> Dict[str, Any]:
    ns = vars(args)
    values: Dict[str, Any] = {}
    if ns.get("config"):
        values.update(runcfg.load_config_file(ns["config"]))
    for key in runcfg.key_types():
        if key in ns:
            values[key] = ns[key]
    for alias, key in ALIASES.items():
        if alias in ns:
            values[key] = ns[alias]
    for item in ns.get("set", []):
        if "=" not in item:
            raise runcfg.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v
    return values


def _checkpoint_id(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _model_overrides(values: Dict[str, Any]) -> Dict[str, Any]:
    return {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("model.")}


def _load_for_checkpoint(path: Path, cfg, values):
    from .model import ModelConfig, load_checkpoint, read_checkpoint

    expected = None
    overrides = _model_overrides(values)
    if overrides:
        stored = ModelConfig.from_dict(read_checkpoint(path)["model_config"]).to_dict()
        for k, v in overrides.items():
            stored[k] = runcfg.coerce(f"model.{k}", v)
        expected = ModelConfig.from_dict(stored)
    model, payload = load_checkpoint(path, expected)
    cfg.model = model.config
    return model, payload


# -- commands -----------------------------------------------------------------


def cmd_generate(args, cfg, values) -> int:
    from .synth import generate_dataset

    weights = None
    if args.class_weights:
        weights = {}
        for part in args.class_weights.split(","):
            k, v = part.split("=")
            weights[k.strip()] = float(v)
    out = Path(args.out)
    split = generate_dataset(args.n_clips, out, class_weights=weights, seed=cfg.seed, config=cfg.generator)
    cfg.save(out / "run_config.json")
    print(f"wrote {args.n_clips} clips to {out} (train/val/test = {'/'.join(map(str, split.sizes()))})")
    return EXIT_OK


def cmd_make_video(args, cfg, values) -> int:
    from .synth import generate_video

    out = Path(args.out)
    rec = generate_video(args.duration, out, cfg.generator, seed=cfg.seed, video_id=args.video_id,
                         stationary=args.stationary)
    cfg.save(out / f"{args.video_id}.run_config.json")
    print(f"wrote {rec.n_frames} frames to {out / (args.video_id + '.video.json')}")
    return EXIT_OK


def cmd_train(args, cfg, values) -> int:
    import torch

    from .model import PuckNet, read_checkpoint
    from .model.config import ModelConfig
    from .plotting import plot_training_log
    from .trainer import read_metrics_log, train

    out = Path(args.out)
    cfg.train.checkpoint_dir = str(out)
    if args.resume:
        cfg.model = ModelConfig.from_dict(read_checkpoint(args.resume)["model_config"])
    if args.mode != "localize_only" and not cfg.model.multitask:
        raise UsageError(f"--mode {args.mode} requires model.multitask=true")
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "run_config.json")
    torch.manual_seed(cfg.train.seed)
    model = PuckNet(cfg.model)
    result = train(model, args.data, cfg.train, mode=args.mode, resume=args.resume)
    if result.log_path is not None:
        plot_training_log(read_metrics_log(result.log_path), out / "training_curves.png")
    summary = {
        "mode": args.mode,
        "iterations": result.iterations,
        "best_metric": result.best_metric,
        "best_checkpoint": str(result.best_checkpoint) if result.best_checkpoint else None,
        "last_checkpoint": str(result.last_checkpoint) if result.last_checkpoint else None,
    }
    with open(out / "train_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_eval(args, cfg, values) -> int:
    from .data import load_dataset
    from .metrics import PHI_GRID, evaluate, phi_curve, write_phi_csv
    from .plotting import plot_phi_curves, plot_zone_accuracy
    from .trainer import ClipSource, predict

    ckpt = Path(args.checkpoint)
    model, _ = _load_for_checkpoint(ckpt, cfg, values)
    records, split = load_dataset(args.data)
    ids = split.ids(args.split)
    if not ids:
        raise runcfg.ConfigError(f"split {args.split!r} is empty")
    preds = predict(model, ClipSource([records[i] for i in ids], model.config))
    p_loc = [p.location for p in preds]
    g_loc = [p.gt_location for p in preds]
    events = (None, None)
    if preds[0].event is not None:
        events = ([p.event for p in preds], [p.gt_event for p in preds])
    report = evaluate(p_loc, g_loc, *events)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "run_config.json")
    doc = report.to_json()
    doc.update({"split": args.split, "checkpoint_id": _checkpoint_id(ckpt)})
    with open(out / "eval_report.json", "w") as fh:
        json.dump(doc, fh, indent=2)
    write_phi_csv(out / "phi_curve.csv", p_loc, g_loc)
    plot_phi_curves(
        PHI_GRID,
        {f"both (AUC {report.auc:.1f})": phi_curve(p_loc, g_loc),
         f"x (AUC {report.auc_x:.1f})": phi_curve(p_loc, g_loc, axis="x"),
         f"y (AUC {report.auc_y:.1f})": phi_curve(p_loc, g_loc, axis="y")},
        out / "phi_curve.png",
    )
    plot_zone_accuracy({"five_zone": report.zone5, "nine_zone": report.zone9}, out / "zone_accuracy.png")
    with open(out / "predictions.csv", "w") as fh:
        fh.write("clip_id,w_ft,h_ft,gt_w_ft,gt_h_ft,event,gt_event\n")
        for p in preds:
            ev = p.event.value if p.event is not None else ""
            fh.write(f"{p.clip_id},{p.location.w},{p.location.h},{p.gt_location.w},{p.gt_location.h},"
                     f"{ev},{p.gt_event.value}\n")
    print(json.dumps({k: doc[k] for k in ("n", "auc", "auc_x", "auc_y")} |
                     {"zone5": report.zone5["overall"], "zone9": report.zone9["overall"]}))
    return EXIT_OK


def cmd_infer(args, cfg, values) -> int:
    from .inference import infer_trajectory, write_trajectory
    from .plotting import plot_trajectory
    from .synth import VideoRecord

    ckpt = Path(args.checkpoint)
    model, _ = _load_for_checkpoint(ckpt, cfg, values)
    try:
        video = VideoRecord.load(args.video)
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        from .data import DataError

        raise DataError(f"cannot read video descriptor {args.video}: {exc}") from exc
    detector = "oracle" if args.detector == "oracle" else None
    traj = infer_trajectory(video, model, cfg.window, detector=detector, checkpoint_id=_checkpoint_id(ckpt))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "run_config.json")
    csv_path, side = write_trajectory(traj, out / "trajectory.csv", out / "trajectory.json")
    plot_trajectory(traj.points, out / "trajectory.png", gt_track=video.puck_track or None,
                    title=f"{video.video_id}: l={cfg.window.window_s:g}s, s={cfg.window.stride_s:g}s")
    for w in traj.metadata["warnings"][:5]:
        log.warning(w)
    print(f"wrote {len(traj)} trajectory points to {csv_path}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "make-video": cmd_make_video,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .data import DataError
    from .model import CheckpointMismatch
    from .trainer import NumericalError

    try:
        values = _collect_overrides(args)
        cfg = runcfg.resolve(values)
        return COMMANDS[args.command](args, cfg, values)
    except (runcfg.ConfigError, UsageError) as exc:
        print(f"puckloc {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointMismatch as exc:
        print(f"puckloc {args.command}: incompatible checkpoint: {exc}", file=sys.stderr)
        for k, (a, b) in sorted(exc.diff.items()):
            print(f"  {k}: checkpoint={a!r} requested={b!r}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"puckloc {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, ValueError) as exc:
        print(f"puckloc {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
