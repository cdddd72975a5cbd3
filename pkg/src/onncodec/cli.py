"""Command line entry point: ``onncodec {train,encode,decode,noisegen,eval,bdrate}``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np


def _on_off(value: str) -> bool:
    v = value.lower()
    if v in ("on", "true", "1", "yes"):
        return True
    if v in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {value!r}")


def _levels(value: str) -> list[int]:
    try:
        levels = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {value!r}") from None
    if not levels or any(lv not in (1, 2, 3, 4) for lv in levels):
        raise argparse.ArgumentTypeError("levels must be a comma list drawn from 1,2,3,4")
    return levels


def cmd_train(args) -> int:
    from .training import TrainConfig, train_from_dir

    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    overrides = {k: v for k, v in (("steps", args.steps), ("seed", args.seed), ("quality", args.quality))
                 if v is not None}
    if overrides:
        cfg = cfg.replace(**overrides)
    _, history = train_from_dir(cfg, args.data, args.out, args.telemetry)
    last = history[-1]
    print(f"trained {cfg.steps} steps: loss {last['loss']:.4f} bpp {last['bpp']:.4f} psnr {last['psnr']:.2f} dB")
    return 0


def cmd_encode(args) -> int:
    from . import checkpoint
    from .bitstream import encode_image
    from .imageio import read_image

    model, cfg = checkpoint.load(args.ckpt)
    img = read_image(args.inp)
    res = encode_image(model, img, int(cfg.get("quality", 0)), denoise=args.denoise)
    with open(args.out, "wb") as fh:
        fh.write(res.data)
    h, w = img.shape[1:]
    print(f"{len(res.data)} bytes, {8 * len(res.data) / (h * w):.4f} bpp")
    if res.diagnostics["clipped_y"] or res.diagnostics["clipped_z"]:
        print(f"warning: clamped {res.diagnostics['clipped_y']} y and {res.diagnostics['clipped_z']} z symbols",
              file=sys.stderr)
    return 0


def cmd_decode(args) -> int:
    from . import checkpoint
    from .bitstream import decode_image
    from .imageio import write_image

    model, _ = checkpoint.load(args.ckpt)
    with open(args.inp, "rb") as fh:
        data = fh.read()
    x_hat, header = decode_image(model, data)
    write_image(args.out, x_hat)
    print(f"decoded {header.width}x{header.height}")
    return 0


def cmd_noisegen(args) -> int:
    from .imageio import read_image, write_image
    from .noise import NoiseParams, level_params, synthesize_noise

    if args.level is not None:
        params = level_params(args.level)
    elif args.sigma_r is not None and args.sigma_s is not None:
        params = NoiseParams(args.sigma_r, args.sigma_s)
    else:
        raise SystemExit("noisegen: give --level or both --sigma-r and --sigma-s")
    img = read_image(args.inp)
    write_image(args.out, synthesize_noise(img, params, np.random.default_rng(args.seed)))
    return 0


def cmd_eval(args) -> int:
    from .evaluate import evaluate, rd_curves

    rows = evaluate(args.ckpts, args.data, args.levels, args.out)
    for (dataset, level), pts in sorted(rd_curves(rows).items()):
        desc = ", ".join(f"{p.bpp:.3f} bpp / {p.psnr_db:.2f} dB" for p in pts)
        print(f"{dataset} level {level}: {desc}")
    return 0


def cmd_bdrate(args) -> int:
    from .evaluate import read_csv, rd_curves
    from .metrics import bd_rate

    ref = rd_curves(read_csv(args.ref))
    test = rd_curves(read_csv(args.test))
    common = sorted(set(ref) & set(test))
    if not common:
        raise SystemExit("bdrate: no (dataset, level) pairs shared by both files")
    for key in common:
        value = bd_rate(ref[key], test[key], args.metric)
        print(f"{key[0]} level {key[1]} BD-rate ({args.metric}): {value:+.2f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="onncodec", description="Joint denoising and learned image compression.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model on a directory of PPM/PGM images")
    t.add_argument("--config", help="JSON config file")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--telemetry", help="CSV file for loss/bpp/PSNR rows")
    t.add_argument("--steps", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--quality", type=int, choices=range(1, 7))
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("encode", help="compress an image to a .onnp bitstream")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--in", dest="inp", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--denoise", type=_on_off, default=True, metavar="on|off")
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help="reconstruct an image from a bitstream")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decode)

    n = sub.add_parser("noisegen", help="add synthetic sensor noise")
    n.add_argument("--in", dest="inp", required=True)
    n.add_argument("--out", required=True)
    n.add_argument("--level", type=int, choices=(1, 2, 3, 4))
    n.add_argument("--sigma-r", type=float)
    n.add_argument("--sigma-s", type=float)
    n.add_argument("--seed", type=int, default=0)
    n.set_defaults(func=cmd_noisegen)

    v = sub.add_parser("eval", help="rate-distortion evaluation over checkpoints and noise levels")
    v.add_argument("--ckpts", required=True, help="directory of checkpoints")
    v.add_argument("--data", required=True)
    v.add_argument("--levels", type=_levels, default=[1, 2, 3, 4])
    v.add_argument("--out", required=True, help="results CSV")
    v.set_defaults(func=cmd_eval)

    b = sub.add_parser("bdrate", help="BD-rate between two results CSVs")
    b.add_argument("--ref", required=True)
    b.add_argument("--test", required=True)
    b.add_argument("--metric", choices=("psnr", "msssim"), default="psnr")
    b.set_defaults(func=cmd_bdrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
