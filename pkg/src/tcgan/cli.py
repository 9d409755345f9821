"""Command line interface.

Subcommands: train, sample, sr, harmonize, eval, schedule. Every
subcommand accepts --config (key=value file), --seed and --out; explicit
flags override config values. Exit codes: 0 success, 1 training/compute
failure, 2 usage or I/O error.
"""

import argparse
import sys

from . import __version__, tasks
from .checkpoint import CheckpointError
from .config import ConfigError, defaults, load_config, to_train_config
from .metrics import ExternalMetricError
from .schedule import ScheduleError
from .training import TrainingDivergedError

USAGE_ERRORS = (
    ConfigError,
    ScheduleError,
    CheckpointError,
    ValueError,
    OSError,
)


def _settings(args):
    cfg = load_config(args.config) if args.config else defaults()
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out", None):
        cfg["out"] = args.out
    return cfg


def _require(cfg, key, what):
    if not cfg.get(key):
        raise ConfigError(f"{what} required: set {key!r} in the config or pass the flag")
    return cfg[key]


def _parse_base(text):
    parts = text.lower().split("x")
    try:
        if len(parts) == 1:
            v = int(parts[0])
            return (v, v)
        if len(parts) == 2:
            return (int(parts[0]), int(parts[1]))
    except ValueError:
        pass
    raise ConfigError(f"bad base size {text!r}; expected N or HxW")


def cmd_train(args):
    cfg = _settings(args)
    if args.image:
        cfg["image"] = args.image
    image = _require(cfg, "image", "training image")
    out = _require(cfg, "out", "output directory")
    manifest = tasks.run_train(image, to_train_config(cfg), out)
    final = manifest.stages[-1]
    print(f"trained {len(manifest.stages)} stages; final size "
          f"{final['size'][0]}x{final['size'][1]}; outputs in {out}")
    return 0


def cmd_sample(args):
    cfg = _settings(args)
    count = args.count if args.count is not None else cfg["sample_count"]
    out = _require(cfg, "out", "output directory")
    paths = tasks.run_sample(
        args.checkpoint, count, cfg["seed"], out,
        deterministic=cfg["deterministic"],
    )
    print(f"wrote {len(paths)} samples to {out}")
    return 0


def cmd_sr(args):
    cfg = _settings(args)
    if args.image:
        cfg["image"] = args.image
    image = _require(cfg, "image", "input image")
    out = _require(cfg, "out", "output directory")
    target = args.target_max if args.target_max is not None else cfg["sr_target"]
    path, report = tasks.run_sr(image, target, to_train_config(cfg), out)
    print(f"super-resolved to {report.metrics['output_size']}: {path}")
    return 0


def cmd_harmonize(args):
    cfg = _settings(args)
    out = _require(cfg, "out", "output directory")
    stage = args.inject_stage if args.inject_stage is not None else cfg["inject_stage"]
    mask = args.mask or cfg["mask"] or None
    feather = args.feather or cfg["feather"]
    path, report = tasks.run_harmonize(
        args.checkpoint, args.composite, stage, out,
        mask_path=mask, feather=feather, deterministic=cfg["deterministic"],
    )
    print(f"harmonized (ssim vs composite {report.metrics['ssim_vs_composite']:.4f}): {path}")
    return 0


def cmd_eval(args):
    cfg = _settings(args)
    out = _require(cfg, "out", "output directory")
    rows, report = tasks.run_eval(
        args.dir_a, args.dir_b, out,
        ext_name=cfg["ext_metric_name"], ext_cmd=cfg["ext_metric_cmd"],
        deterministic=cfg["deterministic"],
    )
    if rows:
        print(f"{len(rows)} pairs, mean SSIM {report.metrics['mean_ssim']:.4f}")
    else:
        print("0 pairs")
    return 0


def cmd_schedule(args):
    cfg = _settings(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    csv_text, outputs = tasks.run_schedule(
        _parse_base(args.base), args.r, args.stages, methods,
        out_dir=cfg["out"] or None,
    )
    if outputs:
        print("\n".join(outputs))
    else:
        sys.stdout.write(csv_text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="tcgan",
        description="One-shot image generation: train on a single image, "
                    "then sample, super-resolve, and harmonize composites.",
    )
    p.add_argument("--version", action="version", version=f"tcgan {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("train", help="train the full pyramid on one image")
    common(sp)
    sp.add_argument("--image", help="training image (PNG/JPEG)")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("sample", help="draw random images from a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--count", type=int, help="number of samples")
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("sr", help="unsupervised super-resolution")
    common(sp)
    sp.add_argument("--image", help="input image")
    sp.add_argument("--target-max", type=int, help="target long-side size")
    sp.set_defaults(fn=cmd_sr)

    sp = sub.add_parser("harmonize", help="re-render a composite through a trained model")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--composite", required=True, help="naive paste composite image")
    sp.add_argument("--inject-stage", type=int, help="stage receiving the composite")
    sp.add_argument("--mask", help="paste-region mask image")
    sp.add_argument("--feather", action="store_true", help="feathered mask blending")
    sp.set_defaults(fn=cmd_harmonize)

    sp = sub.add_parser("eval", help="pairwise SSIM between two directories")
    common(sp)
    sp.add_argument("--dir-a", required=True)
    sp.add_argument("--dir-b", required=True)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("schedule", help="stage-size table for scaling methods")
    common(sp)
    sp.add_argument("--base", default="25", help="base size, N or HxW")
    sp.add_argument("--r", type=float, default=0.72, help="scaling scalar")
    sp.add_argument("--stages", type=int, default=6)
    sp.add_argument("--methods", default="tcgan,singan,consingan",
                    help="comma-separated subset of tcgan,singan,consingan")
    sp.set_defaults(fn=cmd_schedule)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TrainingDivergedError as e:
        print(f"tcgan {args.command}: {e}", file=sys.stderr)
        return 1
    except ExternalMetricError as e:
        print(f"tcgan {args.command}: {e}", file=sys.stderr)
        return 1
    except USAGE_ERRORS as e:
        print(f"tcgan {args.command}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
