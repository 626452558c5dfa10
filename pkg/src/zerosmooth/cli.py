"""Command-line interface.

Every pipeline is reproducible from (config file, --seed); errors exit
nonzero with a single `ErrorClass: message` line on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import container
from .backbone import ToyDenoiser, train
from .cascade import CascadeRunner, ddnm_latent_baseline
from .errors import ConfigError, ZeroSmoothError
from .metrics import keyframe_consistency, psnr, ssim
from .operators import build_interp, build_sampling


def _load(args):
    cfg = config_mod.load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def _load_model(cfg, weights_path) -> ToyDenoiser:
    bc = config_mod.backbone_config_from(cfg)
    return ToyDenoiser.load(weights_path, bc)


def _runner(cfg, weights_path) -> CascadeRunner:
    model = _load_model(cfg, weights_path)
    schedule = config_mod.schedule_from(cfg)
    return CascadeRunner(config_mod.cascade_config_from(cfg), model, schedule,
                         cfg["seed"])


def _fmt(value: float) -> str:
    return f"{value:.6f}" if np.isfinite(value) else "inf"


def cmd_train_toy(args) -> int:
    cfg = _load(args)
    schedule = config_mod.schedule_from(cfg)
    bc = config_mod.backbone_config_from(cfg)
    # checkpoints store float32, so higher training precision would be lost
    result = train(bc, schedule, cfg["train.steps"], seed=cfg["seed"],
                   lr=cfg["train.lr"], heldout_count=cfg["train.heldout"],
                   log_every=args.log_every, dtype=np.float32)
    result.model.save(args.out)
    print(f"heldout_initial\t{result.initial_heldout:.6f}")
    print(f"heldout_final\t{result.final_heldout:.6f}")
    print(f"weights\t{args.out}")
    return 0


def cmd_generate_base(args) -> int:
    cfg = _load(args)
    results = _runner(cfg, args.weights).run(through_stage=1)
    container.write_video(args.out, results[0].video)
    print(f"video\t{args.out}")
    return 0


def cmd_upsample(args) -> int:
    cfg = _load(args)
    runner = _runner(cfg, args.weights)
    results = runner.run()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    print("stage\tframes\tfps\tpsnr\tssim\tpath")
    for res in results:
        path = out_dir / f"stage{res.stage}.zsv"
        container.write_video(path, res.video)
        if res.stage == 1:
            print(f"1\t{res.video.shape[0]}\t{res.fps}\t-\t-\t{path}")
        else:
            prev = results[res.stage - 2]
            op = build_sampling(prev.video.shape[0], runner.config.scale)
            p, s = keyframe_consistency(res.video, prev.video, op)
            print(f"{res.stage}\t{res.video.shape[0]}\t{res.fps}"
                  f"\t{_fmt(p)}\t{_fmt(s)}\t{path}")
    return 0


def cmd_baseline(args) -> int:
    cfg = _load(args)
    runner = _runner(cfg, args.weights)
    if args.kind == "direct":
        res = runner.direct_inference()
    else:
        if args.base is not None:
            base = container.read_video(args.base)
        else:
            base = runner.run(through_stage=1)[0].video
        res = runner.ddnm_latent(base)
    container.write_video(args.out, res.video)
    print(f"video\t{args.out}")
    return 0


def cmd_evaluate(args) -> int:
    pred = container.read_video(args.pred)
    ref = container.read_video(args.ref)
    if args.keyframe_scale:
        op = build_sampling(ref.shape[0], args.keyframe_scale)
        p, s = keyframe_consistency(pred, ref, op)
    else:
        p, s = psnr(pred, ref), ssim(pred, ref)
    print("psnr\tssim")
    print(f"{_fmt(p)}\t{_fmt(s)}")
    return 0


def cmd_inspect_operator(args) -> int:
    if args.kind == "sample":
        op = build_sampling(args.t0, args.scale)
    else:
        op = build_interp(args.t0, args.kind, scale=args.scale)

    def dump(title, mat):
        print(title)
        for row in mat:
            print(" ".join(f"{v:g}" for v in row))

    dump(f"matrix ({op.t0}x{op.t})", op.matrix)
    dump(f"pseudo_inverse ({op.t}x{op.t0})", op.pinv)
    a, pinv = op.matrix, op.pinv
    print(f"residual_AA+A-A\t{np.abs(a @ pinv @ a - a).max():.3e}")
    print(f"residual_A+AA+-A+\t{np.abs(pinv @ a @ pinv - pinv).max():.3e}")
    proj = op.null_proj
    print(f"residual_projector_idempotence\t{np.abs(proj @ proj - proj).max():.3e}")
    return 0


def cmd_export_frames(args) -> int:
    video = container.read_video(args.video)
    paths = container.export_frames(video, args.out_dir, prefix=args.prefix)
    print(f"frames\t{len(paths)}\t{args.out_dir}")
    return 0


def cmd_config(args) -> int:
    if args.defaults:
        sys.stdout.write(config_mod.format_defaults())
        return 0
    raise ConfigError("nothing to do; try --defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zerosmooth",
        description="Training-free frame-rate upscaling on a toy video diffuser.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, weights=True):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        if weights:
            p.add_argument("--weights", required=True, help="ZSWT checkpoint")

    p = sub.add_parser("train-toy", help="train the toy denoiser")
    common(p, weights=False)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("generate-base", help="sample the base (key-frame) video")
    common(p)
    p.add_argument("--out", required=True, help="video container output path")
    p.set_defaults(func=cmd_generate_base)

    p = sub.add_parser("upsample", help="run the full self-cascade")
    common(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_upsample)

    p = sub.add_parser("baseline", help="run a tuning-free baseline")
    p.add_argument("kind", choices=("direct", "ddnm"))
    common(p)
    p.add_argument("--base", default=None,
                   help="base video for ddnm (default: regenerate from seed)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", help="PSNR/SSIM between two containers")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--keyframe-scale", type=int, default=0,
                   help="compare only key frames extracted at this stride")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect-operator", help="dump a measurement operator")
    p.add_argument("--t0", type=int, required=True)
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--kind", choices=("sample", "a1", "a2"), required=True)
    p.set_defaults(func=cmd_inspect_operator)

    p = sub.add_parser("export-frames", help="write PGM/PPM frames")
    p.add_argument("--video", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--prefix", default="frame")
    p.set_defaults(func=cmd_export_frames)

    p = sub.add_parser("config", help="configuration helpers")
    p.add_argument("--defaults", action="store_true",
                   help="print every key with its default value")
    p.set_defaults(func=cmd_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ZeroSmoothError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
