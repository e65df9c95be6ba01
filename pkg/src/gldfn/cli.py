"""Command line interface.

Subcommands: degrade, train, eval, infer, gradcheck.  Exit codes:
0 success, 2 usage, 3 file I/O, 4 bad values or shapes, 5 training
diverged, 6 gradient check failure, 21-24 weights-format errors
(bad magic / version / checksum / truncation).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import evaluate as ev
from .config import load_train_config
from .data import filename_seed, list_pngs
from .gradcheck import suite
from .images import crop_to_multiple, load_png, save_png
from .network import WeightStoreError, config_from_store
from .tensor import ShapeError, Tensor
from .train import TrainingDiverged, train, write_loss_csv
from .weights_io import WeightsFormatError, load_weights

EXIT_IO = 3
EXIT_VALUE = 4
EXIT_DIVERGED = 5
EXIT_GRADCHECK = 6


def _build_parser():
    parser = argparse.ArgumentParser(prog="gldfn")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="synthesize LR images from an HR directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--setting", choices=("iso", "aniso", "varying"), required=True)
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--sigma", type=float, default=0.0, help="AWGN level in 0-255 units")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--g8", type=int, default=ev.DEFAULT_G8_INDEX + 1,
                   help="Gaussian-8 kernel number (1-8) for the iso setting")

    p = sub.add_parser("train", help="train a model on a directory of HR PNGs")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="loss CSV path (default: <out>.log.csv)")
    for flag, typ in (("iters", int), ("seed", int), ("batch", int), ("patch", int),
                      ("setting", str), ("noise-sigma", float)):
        p.add_argument(f"--{flag}", type=typ, default=None)
    p.add_argument("--scale", type=int, default=None, help="overrides net.scale")

    p = sub.add_parser("eval", help="degrade, super-resolve and score a directory")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--setting", choices=("iso", "aniso", "varying"), required=True)
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--g8", default=str(ev.DEFAULT_G8_INDEX + 1),
                   help="Gaussian-8 kernel number (1-8) or 'all' to sweep")
    p.add_argument("--noise-range", default="0,5", help="varying-setting sigma range 'lo,hi'")
    p.add_argument("--shave", type=int, default=None)

    p = sub.add_parser("infer", help="super-resolve one PNG")
    p.add_argument("--weights", required=True)
    p.add_argument("--in", dest="in_png", required=True)
    p.add_argument("--out", dest="out_png", required=True)
    p.add_argument("--scale", type=int, required=True)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--module", default=None, help="substring filter, e.g. 'dynfilters'")
    return parser


def _cmd_degrade(args):
    os.makedirs(args.out_dir, exist_ok=True)
    for name in list_pngs(args.in_dir):
        hr = crop_to_multiple(load_png(os.path.join(args.in_dir, name)), args.scale)
        seed = filename_seed(name) ^ (args.seed & 0x7FFFFFFFFFFFFFFF)
        lr = ev.degrade_for_eval(hr, args.setting, args.scale, seed,
                                 sigma=args.sigma, g8_index=args.g8 - 1)
        save_png(Tensor(np.clip(lr.data, 0.0, 1.0)), os.path.join(args.out_dir, name))
        print(f"{name}: {hr.dims[2]}x{hr.dims[3]} -> {lr.dims[2]}x{lr.dims[3]}")
    return 0


def _cmd_train(args):
    overrides = {
        "iters": args.iters, "seed": args.seed, "batch": args.batch,
        "patch": args.patch, "setting": args.setting,
        "noise_sigma": args.noise_sigma, "net.scale": args.scale,
    }
    cfg = load_train_config(args.config, overrides)
    log = train(cfg, args.data, args.out,
                progress=lambda e: print(f"iter {e['iter']:>7d}  loss {e['loss']:.6f}  lr {e['lr']:.3g}"))
    csv_path = args.log or args.out + ".log.csv"
    write_loss_csv(log, csv_path)
    from .report import render_loss_curve
    render_loss_curve(log, os.path.splitext(csv_path)[0] + ".png")
    print(f"wrote {args.out} and {csv_path}")
    return 0


def _cmd_eval(args):
    store = load_weights(args.weights)
    cfg = config_from_store(store)
    if cfg.scale != args.scale:
        raise ValueError(f"weights were built for scale {cfg.scale}, asked for {args.scale}")
    g8_sweep = args.g8 == "all"
    g8_index = ev.DEFAULT_G8_INDEX if g8_sweep else int(args.g8) - 1
    lo, hi = (float(v) for v in args.noise_range.split(","))
    report = ev.evaluate(store, args.data, args.setting, args.scale, cfg,
                         sigma=args.sigma, g8_index=g8_index, g8_sweep=g8_sweep,
                         noise_range=(lo, hi), shave=args.shave)
    from .report import write_report
    paths = write_report(report, args.report)
    print(f"{len(report.records)} rows  mean PSNR {report.mean_psnr:.4f} dB  "
          f"mean SSIM {report.mean_ssim:.6f}")
    print("wrote " + "  ".join(paths.values()))
    return 0


def _cmd_infer(args):
    store = load_weights(args.weights)
    cfg = config_from_store(store)
    if cfg.scale != args.scale:
        raise ValueError(f"weights were built for scale {cfg.scale}, asked for {args.scale}")
    dims = ev.infer(store, cfg, args.in_png, args.out_png)
    print(f"wrote {args.out_png} ({dims[2]}x{dims[3]})")
    return 0


def _cmd_gradcheck(args):
    results = suite(module=args.module)
    if not results:
        print(f"error: no checks match '{args.module}'", file=sys.stderr)
        return EXIT_VALUE
    failed = 0
    for name, err, threshold in results:
        ok = err < threshold
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:<35s} max_rel_err {err:.3e}  (< {threshold:g})")
    return EXIT_GRADCHECK if failed else 0


_COMMANDS = {
    "degrade": _cmd_degrade,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except WeightsFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ShapeError, WeightStoreError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALUE
    except (FileNotFoundError, NotADirectoryError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
