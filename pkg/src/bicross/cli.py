"""Command-line entry point.

Subcommands: make-dataset, encode, train, eval, gradcheck, report.  Every
run prints its resolved configuration and seed; --dry-run prints the plan
and writes nothing.  Exit codes: 0 success, 1 runtime failure, 2 usage or
format error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import BicrossError, FormatError, InvalidParameterError
from .evalkit import report as render_report
from .fileio import read_lum, read_pgm
from .gradsuite import GRAD_TOL, run_gradient_suite
from .scenes import DatasetConfig, SceneConfig, make_dataset
from .spike import LuminanceSequence, interpolate_frames, simulate_spikes, write_spk
from .training import (
    TrainConfig,
    evaluate_checkpoint,
    pretrain_rgb,
    train_cross_domain,
    train_cross_modality,
    train_source_spike,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _resolved_seed(seed: int) -> int:
    env = os.environ.get("BICROSS_SEED")
    return int(env) if env else seed


def _emit_config(name: str, config: dict) -> None:
    print(f"[bicross {name}] resolved config:")
    print(json.dumps(config, indent=2, sort_keys=True))


def _cmd_make_dataset(args) -> int:
    seed = _resolved_seed(args.seed)
    cfg = DatasetConfig(
        scene=SceneConfig(
            height=args.height,
            width=args.width,
            t_lum=args.t_lum,
            theta=args.theta,
            freq_hz=args.freq,
        ),
        n_source=args.n_source,
        n_target=args.n_target,
        shift_kind=args.shift,
        shift_strength=args.strength,
        seed=seed,
    )
    _emit_config("make-dataset", {"out": args.out, **json.loads(json.dumps(cfg.__dict__, default=lambda o: o.__dict__))})
    if args.dry_run:
        print(f"dry-run: would write {args.n_source}+{args.n_target} samples to {args.out}")
        return EXIT_OK
    manifest = make_dataset(cfg, args.out)
    print(f"wrote {len(manifest.samples)} samples to {args.out}")
    return EXIT_OK


def _load_luminance(path: str) -> LuminanceSequence:
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.endswith(".pgm"))
        if not names:
            raise FileNotFoundError(f"no .pgm frames in {path}")
        frames = np.stack([read_pgm(os.path.join(path, n)).astype(np.float64) / 255.0 for n in names])
    else:
        frames = read_lum(path)
    return LuminanceSequence(frames, dt=1.0)


def _cmd_encode(args) -> int:
    _emit_config(
        "encode",
        {"input": args.input, "output": args.output, "theta": args.theta, "interp": args.interp},
    )
    if args.dry_run:
        print(f"dry-run: would encode {args.input} -> {args.output}")
        return EXIT_OK
    lum = _load_luminance(args.input)
    lum = LuminanceSequence(lum.frames, dt=1.0 / args.freq)
    stream = simulate_spikes(interpolate_frames(lum, args.interp), theta=args.theta)
    write_spk(stream, args.output)
    t, h, w = stream.shape
    print(f"encoded {t}x{h}x{w} stream ({int(stream.bits.sum())} spikes) -> {args.output}")
    return EXIT_OK


def _load_train_config(args) -> TrainConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            cfg = TrainConfig.from_flat(json.load(f))
    else:
        raise InvalidParameterError("train requires --config FILE")
    seed = _resolved_seed(cfg.seed)
    if seed != cfg.seed:
        cfg = TrainConfig.from_flat({**cfg.to_flat(), "seed": seed})
    return cfg


def _cmd_train(args) -> int:
    cfg = _load_train_config(args)
    _emit_config("train", {"stage": args.stage, **cfg.to_flat()})
    if args.dry_run:
        print(f"dry-run: would train stage {args.stage} into {cfg.out_dir}")
        return EXIT_OK
    if args.stage == "pretrain":
        out = pretrain_rgb(cfg, resume=args.resume)
    elif args.stage == "baseline":
        out = train_source_spike(cfg, resume=args.resume)
    elif args.stage == "modality":
        out = train_cross_modality(cfg, os.path.join(cfg.out_dir, "pretrain.ckpt"), resume=args.resume)
    else:
        out = train_cross_domain(cfg, os.path.join(cfg.out_dir, "modality.ckpt"), resume=args.resume)
    print(f"stage {args.stage} finished: {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _load_train_config(args)
    _emit_config("eval", {"checkpoint": args.checkpoint, "manifest": args.manifest, **cfg.to_flat()})
    if args.dry_run:
        print("dry-run: would evaluate and append to the metric log")
        return EXIT_OK
    metrics = evaluate_checkpoint(cfg, args.checkpoint, args.manifest, args.domain, args.stage, args.split)
    print(json.dumps(metrics.as_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    seed = _resolved_seed(args.seed)
    _emit_config("gradcheck", {"seed": seed, "tolerance": GRAD_TOL})
    if args.dry_run:
        print("dry-run: would run the finite-difference suite")
        return EXIT_OK
    results = run_gradient_suite(seed)
    width = max(len(k) for k in results)
    ok = True
    for name, err in results.items():
        status = "ok" if err < GRAD_TOL else "FAIL"
        ok &= err < GRAD_TOL
        print(f"{name:<{width}}  max_rel_err={err:.3e}  {status}")
    return EXIT_OK if ok else EXIT_RUNTIME


def _cmd_report(args) -> int:
    _emit_config("report", {"run_dir": args.run_dir})
    if args.dry_run:
        print(f"dry-run: would summarize {args.run_dir}")
        return EXIT_OK
    print(render_report(args.run_dir))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bicross", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-dataset", help="generate a synthetic paired dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-source", type=int, default=200)
    p.add_argument("--n-target", type=int, default=200)
    p.add_argument("--shift", choices=["none", "fog", "rain_noise", "layout"], default="fog")
    p.add_argument("--strength", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--t-lum", type=int, default=32)
    p.add_argument("--theta", type=float, default=0.1)
    p.add_argument("--freq", type=float, default=32.0)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(fn=_cmd_make_dataset)

    p = sub.add_parser("encode", help="reference spike encoding of a luminance input")
    p.add_argument("--input", required=True, help=".lum file or directory of .pgm frames")
    p.add_argument("--output", required=True)
    p.add_argument("--theta", type=float, default=0.4)
    p.add_argument("--interp", type=int, default=1)
    p.add_argument("--freq", type=float, default=1280.0, help="luminance sampling rate in Hz")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(fn=_cmd_encode)

    p = sub.add_parser("train", help="run one training stage")
    p.add_argument("--stage", choices=["pretrain", "baseline", "modality", "domain"], required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--resume", default=None)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--domain", choices=["source", "target"], default="target")
    p.add_argument("--stage", default="eval")
    p.add_argument("--split", default="target_test")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    p.add_argument("--all", action="store_true", help="run the full suite (default)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("report", help="render the metric tables of a run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except (FormatError, InvalidParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, BicrossError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
