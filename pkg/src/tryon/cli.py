"""Command-line entry point binding the pipeline together.

Subcommands: capture-guide, build-dataset, validate-dataset, train, evaluate,
infer-video, serve. Flags override a JSON config file (``--config``), which
overrides defaults; every run prints the fully resolved config as JSON, and
that JSON is itself valid ``--config`` input.

Exit codes: 0 success, 1 input error, 2 configuration error, 3 backend error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, InputError, TryonError


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > config file > defaults; unknown file keys are rejected."""
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        p = Path(config_path)
        if not p.exists():
            raise InputError(f"config file not found: {p}")
        try:
            overlay = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        unknown = set(overlay) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(overlay)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    print(json.dumps(resolved, indent=1, default=str))
    return resolved


def _cmd_capture_guide(args) -> int:
    from .dataset import capture_session_guide, default_capture_protocol, guide_to_json

    defaults = {"out": "capture_guide.json", "total_duration_s": 120.0}
    cfg = _resolve(args, defaults)
    from .dataset import CaptureProtocol
    protocol = default_capture_protocol()
    protocol = CaptureProtocol(poses=protocol.poses, total_duration_s=float(cfg["total_duration_s"]))
    entries = capture_session_guide(protocol)
    Path(cfg["out"]).write_text(guide_to_json(entries))
    print(f"wrote {len(entries)}-pose guide to {cfg['out']}", file=sys.stderr)
    return 0


def _backends_from(cfg: dict, seed: int = 0):
    from .perception import PerceptionSet

    return PerceptionSet.from_names(cfg["pose_backend"], cfg["densepose_backend"],
                                    cfg["parse_backend"], seed=seed)


def _cmd_build_dataset(args) -> int:
    from .dataset import DatasetBuildConfig, build_dataset
    from .video import open_source

    defaults = {
        "video": None, "garment_id": "garment", "out": "dataset",
        "roi_side": 512, "working_short_side": 1024, "roi_pad": 0.15,
        "pose_backend": "stub", "densepose_backend": "stub", "parse_backend": "stub",
        "seed": 0, "workers": 1,
    }
    cfg = _resolve(args, defaults)
    if not cfg["video"]:
        raise InputError("build-dataset needs --video")
    video = str(cfg["video"])
    if not video.startswith(("synthetic:", "camera:")) and not Path(video).exists():
        raise InputError(f"video not found: {video}")
    source = open_source(video)
    backends = _backends_from(cfg, seed=int(cfg["seed"]))
    build_cfg = DatasetBuildConfig(
        garment_id=cfg["garment_id"], out_dir=cfg["out"], roi_side=int(cfg["roi_side"]),
        working_short_side=int(cfg["working_short_side"]), roi_pad=float(cfg["roi_pad"]),
        workers=int(cfg["workers"]))
    manifest = build_dataset(source, backends, build_cfg)
    print(f"built {len(manifest.records)} records ({len(manifest.skipped)} skipped) "
          f"-> {cfg['out']}", file=sys.stderr)
    return 0


def _cmd_validate_dataset(args) -> int:
    from .dataset import load_manifest, validate_dataset

    defaults = {"dataset": None}
    cfg = _resolve(args, defaults)
    if not cfg["dataset"]:
        raise InputError("validate-dataset needs --dataset")
    manifest = load_manifest(cfg["dataset"])
    report = validate_dataset(manifest, cfg["dataset"])
    print(json.dumps(report.to_dict(), indent=1))
    return 0 if report.ok else 1


def _cmd_train(args) -> int:
    from .training import TrainConfig, train

    defaults = {
        "dataset": None, "out": "run", "mode": "hybrid", "epochs": 100, "batch": 8,
        "lr": 2e-4, "seed": 0, "roi_side": 512, "base_width": 64, "n_downsample": 4,
        "n_blocks": 9, "max_steps": None, "perceptual": "identity", "gan_variant": "log",
    }
    cfg = _resolve(args, defaults)
    if not cfg["dataset"]:
        raise InputError("train needs --dataset")
    if not Path(cfg["dataset"]).exists():
        raise InputError(f"dataset not found: {cfg['dataset']}")
    tc = TrainConfig(
        epochs=int(cfg["epochs"]), batch_size=int(cfg["batch"]), learning_rate=float(cfg["lr"]),
        mode=cfg["mode"], seed=int(cfg["seed"]), roi_side=int(cfg["roi_side"]),
        base_width=int(cfg["base_width"]), n_downsample=int(cfg["n_downsample"]),
        n_blocks=int(cfg["n_blocks"]),
        max_steps=None if cfg["max_steps"] is None else int(cfg["max_steps"]),
        perceptual=cfg["perceptual"], gan_variant=cfg["gan_variant"])
    result = train(cfg["dataset"], tc, cfg["out"])
    print(f"trained {result.steps} steps; final checkpoint {result.final_checkpoint}",
          file=sys.stderr)
    return 0


def _cmd_evaluate(args) -> int:
    from .imaging import resize
    from .metrics import evaluate_sequences
    from .video import open_source

    defaults = {"pred": None, "gt": None, "metrics": "ssim,l1", "report": None,
                "resize": None}
    cfg = _resolve(args, defaults)
    if not cfg["pred"] or not cfg["gt"]:
        raise InputError("evaluate needs --pred and --gt")
    for key in ("pred", "gt"):
        spec = str(cfg[key])
        if not spec.startswith("synthetic:") and not Path(spec).exists():
            raise InputError(f"{key} not found: {spec}")
    names = [m.strip() for m in cfg["metrics"].split(",") if m.strip()]

    def frames(spec):
        # cross-method comparison mode resizes both streams, e.g. 512x384
        if cfg["resize"]:
            try:
                w, h = (int(v) for v in str(cfg["resize"]).lower().split("x"))
            except ValueError as exc:
                raise ConfigError(f"--resize expects WxH, got {cfg['resize']}") from exc
            return (resize(frame, h, w) for _, frame in open_source(spec))
        return (frame for _, frame in open_source(spec))

    reports = evaluate_sequences(frames(cfg["pred"]), frames(cfg["gt"]), names)
    payload = {r.name: r.to_dict() for r in reports}
    print(json.dumps(payload, indent=1))
    if cfg["report"]:
        Path(cfg["report"]).write_text(json.dumps(payload, indent=1))
    return 0


def _cmd_infer_video(args) -> int:
    from .engine import GarmentSelector, infer_video, load_catalog

    defaults = {
        "input": None, "out": None, "catalog": None, "garment": None,
        "pose_backend": "stub", "densepose_backend": "stub", "parse_backend": "stub",
        "latency_report": None, "seed": 0,
    }
    cfg = _resolve(args, defaults)
    for key in ("input", "out", "catalog"):
        if not cfg[key]:
            raise InputError(f"infer-video needs --{key.replace('_', '-')}")
    spec = str(cfg["input"])
    if not spec.startswith("synthetic:") and not Path(spec).exists():
        raise InputError(f"input not found: {spec}")
    selector = GarmentSelector(load_catalog(cfg["catalog"]))
    if cfg["garment"]:
        selector.select(cfg["garment"])
    backends = _backends_from(cfg, seed=int(cfg["seed"]))
    summary = infer_video(cfg["input"], cfg["out"], backends, selector,
                          latency_json=cfg["latency_report"])
    print(json.dumps(summary, indent=1))
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    defaults = {
        "catalog": None, "host": "127.0.0.1", "port": 8789,
        "pose_backend": "stub", "densepose_backend": "stub", "parse_backend": "stub",
        "seed": 0,
    }
    cfg = _resolve(args, defaults)
    if not cfg["catalog"]:
        raise InputError("serve needs --catalog")
    backends = _backends_from(cfg, seed=int(cfg["seed"]))
    serve(cfg["catalog"], host=cfg["host"], port=int(cfg["port"]), backends=backends)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tryon",
                                     description="per-garment virtual try-on pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, flags):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags take precedence")
        for flag, kwargs in flags.items():
            p.add_argument(flag, **kwargs)
        p.set_defaults(fn=fn)
        return p

    add("capture-guide", _cmd_capture_guide, {
        "--out": {}, "--total-duration-s": {"dest": "total_duration_s", "type": float}})
    add("build-dataset", _cmd_build_dataset, {
        "--video": {}, "--garment-id": {"dest": "garment_id"}, "--out": {},
        "--roi-side": {"dest": "roi_side", "type": int},
        "--working-short-side": {"dest": "working_short_side", "type": int},
        "--roi-pad": {"dest": "roi_pad", "type": float},
        "--pose-backend": {"dest": "pose_backend"},
        "--densepose-backend": {"dest": "densepose_backend"},
        "--parse-backend": {"dest": "parse_backend"},
        "--seed": {"type": int}, "--workers": {"type": int}})
    add("validate-dataset", _cmd_validate_dataset, {"--dataset": {}})
    add("train", _cmd_train, {
        "--dataset": {}, "--out": {}, "--mode": {"choices": ["hybrid", "vm", "vmdp", "sdp"]},
        "--epochs": {"type": int}, "--batch": {"type": int}, "--lr": {"type": float},
        "--seed": {"type": int}, "--roi-side": {"dest": "roi_side", "type": int},
        "--base-width": {"dest": "base_width", "type": int},
        "--n-downsample": {"dest": "n_downsample", "type": int},
        "--n-blocks": {"dest": "n_blocks", "type": int},
        "--max-steps": {"dest": "max_steps", "type": int},
        "--perceptual": {"choices": ["identity", "none", "vgg"]},
        "--gan-variant": {"dest": "gan_variant", "choices": ["log", "lsgan"]}})
    add("evaluate", _cmd_evaluate, {
        "--pred": {}, "--gt": {}, "--metrics": {}, "--report": {},
        "--resize": {"help": "compare at a fixed resolution, e.g. 512x384"}})
    add("infer-video", _cmd_infer_video, {
        "--in": {"dest": "input"}, "--input": {"dest": "input"},
        "--out": {}, "--catalog": {}, "--garment": {},
        "--pose-backend": {"dest": "pose_backend"},
        "--densepose-backend": {"dest": "densepose_backend"},
        "--parse-backend": {"dest": "parse_backend"},
        "--latency-report": {"dest": "latency_report"}, "--seed": {"type": int}})
    add("serve", _cmd_serve, {
        "--catalog": {}, "--host": {}, "--port": {"type": int},
        "--pose-backend": {"dest": "pose_backend"},
        "--densepose-backend": {"dest": "densepose_backend"},
        "--parse-backend": {"dest": "parse_backend"}, "--seed": {"type": int}})
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TryonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
