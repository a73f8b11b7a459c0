"""Command-line interface: train / eval / infer / bench / synth.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import (BlurSpecError, ConfigError, DataError, NumericError,
                     PadeblurError)

logger = logging.getLogger("padeblur")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; we reserve that
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _build_parser() -> _Parser:
    p = _Parser(prog="padeblur",
                description="Adaptive image deblurring: train, evaluate, "
                            "infer, benchmark, and generate synthetic data.")
    sub = p.add_subparsers(dest="command")

    tr = sub.add_parser("train", help="train a network on a dataset")
    tr.add_argument("--config", help="key=value config file")
    tr.add_argument("--resume", help="checkpoint to resume from")
    tr.add_argument("--data", help="dataset directory (overrides config)")
    tr.add_argument("--out", help="output directory (overrides config)")
    tr.add_argument("--iterations", type=int)
    tr.add_argument("--mode", choices=["uniform", "nonuniform"])
    tr.add_argument("--seed", type=int)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--config", help="config the checkpoint was trained with")
    ev.add_argument("--report", help="write the metric report as JSON here")

    inf = sub.add_parser("infer", help="restore one image")
    inf.add_argument("--ckpt", required=True)
    inf.add_argument("--in", dest="in_path", required=True)
    inf.add_argument("--out", dest="out_path", required=True)
    inf.add_argument("--config")
    inf.add_argument("--dump-maps", dest="dump_maps",
                     help="directory for diagnostic PNG maps")

    be = sub.add_parser("bench", help="attention and kernel benchmarks")
    be.add_argument("--sweep", default="16,32,64",
                    help="comma-separated image sides for the attention sweep")
    be.add_argument("--out", default="bench_attention.csv")
    be.add_argument("--kernels", action="store_true",
                    help="also compare compiled vs numpy sampling kernels")
    be.add_argument("--runs", type=int, default=3)

    sy = sub.add_parser("synth", help="generate a synthetic blur dataset")
    sy.add_argument("--out", required=True)
    sy.add_argument("--count", type=int, required=True)
    sy.add_argument("--seed", type=int, required=True)
    sy.add_argument("--size", type=int, default=64)
    sy.add_argument("--hetero", action="store_true",
                    help="one heavy-blur region on a nearly sharp background")
    sy.add_argument("--blur-range", default="3,9",
                    help="min,max region kernel length in pixels")
    sy.add_argument("--bg-range", default="1,3",
                    help="min,max background kernel length in pixels")
    return p


def _load_runconfig(path: str | None, overrides: dict):
    from .harness import parse_config

    text = ""
    if path:
        try:
            text = Path(path).read_text()
        except FileNotFoundError as exc:
            raise DataError(f"config file not found: {exc}") from exc
    return parse_config(text, overrides)


def _cmd_train(args) -> int:
    from .harness import train

    cfg = _load_runconfig(args.config, {
        "data": args.data, "out": args.out, "iterations": args.iterations,
        "mode": args.mode, "seed": args.seed,
    })
    if not cfg.data:
        raise _UsageError("train needs a dataset (--data or config)")
    result = train(cfg, resume=args.resume)
    logger.info("trained %d iterations in %.1f s; checkpoint %s",
                cfg.iterations, result["seconds"], result["checkpoint"])
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .harness import RunConfig, evaluate
    from .network import Network
    from .synth import load_dataset
    from .tensorio import load_checkpoint

    cfg = _load_runconfig(args.config, {}) if args.config else RunConfig()
    net = Network(cfg.network_config())
    try:
        net.load_state_dict(load_checkpoint(args.ckpt))
    except FileNotFoundError as exc:
        raise DataError(f"cannot read checkpoint: {exc}") from exc
    report = evaluate(net, load_dataset(args.data))
    print(f"images={report['count']} psnr={report['psnr']:.4f} "
          f"ssim={report['ssim']:.4f} input_psnr={report['input_psnr']:.4f} "
          f"input_ssim={report['input_ssim']:.4f}")
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2))
    return EXIT_OK


def _cmd_infer(args) -> int:
    from .harness import RunConfig, infer

    cfg = _load_runconfig(args.config, {}) if args.config else RunConfig()
    try:
        infer(args.ckpt, args.in_path, args.out_path, cfg,
              dump_dir=args.dump_maps)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    return EXIT_OK


def _cmd_bench(args) -> int:
    from .bench import (ATTENTION_COLUMNS, KERNEL_COLUMNS, bench_attention,
                        bench_kernels, write_csv)

    try:
        sides = tuple(int(t) for t in args.sweep.split(",") if t)
    except ValueError:
        raise _UsageError(f"bad --sweep value {args.sweep!r}")
    rows = bench_attention(sides=sides, runs=args.runs)
    write_csv(args.out, rows, ATTENTION_COLUMNS)
    for row in rows:
        print(f"hw={row['hw']} naive={row['naive_ms']:.2f}ms "
              f"linear={row['linear_ms']:.2f}ms "
              f"flop_ratio={row['naive_flops'] / row['linear_flops']:.1f}")
    print(f"wrote {args.out}")
    if args.kernels:
        krows = bench_kernels(runs=args.runs)
        kpath = str(Path(args.out).with_name("bench_kernels.csv"))
        write_csv(kpath, krows, KERNEL_COLUMNS)
        for row in krows:
            speed = row.get("speedup", "n/a")
            print(f"{row['kernel']} C={row['C']} L={row['L']}: "
                  f"numpy={row['numpy_ms']:.2f}ms speedup={speed}x")
        print(f"wrote {kpath}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .synth import generate_dataset

    def _range(text, flag):
        try:
            lo, hi = (float(t) for t in text.split(","))
        except ValueError:
            raise _UsageError(f"bad {flag} value {text!r}, expected min,max")
        return lo, hi

    generate_dataset(args.out, args.count, args.seed, size=args.size,
                     heterogeneous=args.hetero,
                     length_range=_range(args.blur_range, "--blur-range"),
                     bg_length_range=_range(args.bg_range, "--bg-range"))
    print(f"wrote {args.count} samples to {Path(args.out) / 'samples'}")
    return EXIT_OK


_COMMANDS = {"train": _cmd_train, "eval": _cmd_eval, "infer": _cmd_infer,
             "bench": _cmd_bench, "synth": _cmd_synth}


def cli_dispatch(argv: list[str]) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, BlurSpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PadeblurError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))
