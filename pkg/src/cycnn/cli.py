"""Command-line entry point.

Subcommands: ``polar``, ``train``, ``eval``, ``rf``, ``bench``, ``selftest``
and ``mnist-sample``. Exit status is 0 on success, 1 when a check fails and
2 on usage or I/O errors.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines named
after its long flags (``batch-size = 32``). Flags given on the command line
win over the file.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
AUGMENT_CHOICES = ("none", "r", "t", "rt", "rotate", "translate", "rotate_translate")


class UsageError(Exception):
    pass


def read_config(path) -> dict:
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, argv, args):
    """Re-parse with config values as defaults so that explicit flags win."""
    cfg = read_config(args.config)
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r} for '{args.command}'")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*"):
            defaults[key] = [action.type(v) if action.type else v for v in value.split()]
        else:
            v = action.type(value) if action.type else value
            if action.choices is not None and v not in action.choices:
                raise UsageError(f"config {key} = {value!r} is not one of {list(action.choices)}")
            defaults[key] = v
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# -- subcommands ----------------------------------------------------------------

REQUIRED = {"polar": ("input", "out"), "train": ("out",), "eval": ("ckpt",),
            "mnist-sample": ("out",)}


def _check_required(args) -> None:
    missing = [n for n in REQUIRED.get(args.command, ()) if getattr(args, n, None) in (None, "")]
    if missing:
        flags = ", ".join("--" + ("in" if n == "input" else n.replace("_", "-")) for n in missing)
        raise UsageError(f"missing required option(s): {flags} (on the command line or in --config)")


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--size must look like HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise UsageError("--size must be positive")
    return h, w


def cmd_polar(args) -> int:
    from .pnm import read_pnm, write_pnm
    from .polar import PolarConfig, display_flip, to_polar

    img = read_pnm(args.input)
    c, h, w = img.shape
    out_h, out_w = _parse_size(args.size) if args.size else (h, w)
    rho = args.rho_max if args.rho_max is not None else min(h, w) / 2
    cfg = PolarConfig(args.mode, out_h, out_w, rho)
    out = display_flip(to_polar(img, cfg))
    write_pnm(args.out, out)
    print(f"wrote {args.out} ({args.mode}, {out_h}x{out_w}, rho_max {rho:g})")
    return EXIT_OK


def _train_config(args):
    from .training import TrainConfig

    augment = {"r": "rotate", "t": "translate", "rt": "rotate_translate"}.get(args.augment, args.augment)
    return TrainConfig(lr0=args.lr, momentum=args.momentum, weight_decay=args.weight_decay,
                       lr_halve_patience=args.lr_patience, early_stop_patience=args.stop_patience,
                       batch_size=args.batch_size, seed=args.seed, augment=augment,
                       max_epochs=args.epochs, val_fraction=args.val_fraction)


def _load(args, split):
    from .datasets import limit
    from .experiment import load_dataset

    ds = load_dataset(args.dataset, split, args.data_dir, synth_size=args.synth_size, seed=args.seed)
    return limit(ds, args.limit, args.seed)


def cmd_train(args) -> int:
    from .experiment import build_model, parse_variant
    from .model import save_model
    from .training import METRIC_FIELDS, train

    parse_variant(args.variant)
    cfg = _train_config(args)
    ds = _load(args, "train")
    model = build_model(args.variant, ds.images.shape[1], ds.class_count, ds.images.shape[-1],
                        algorithm=args.algorithm, seed=args.seed)
    if args.double:
        model.astype(np.float64)
    model.meta.update(dataset=args.dataset, augment=cfg.augment, seed=args.seed)
    metrics_path = args.metrics or os.path.splitext(args.out)[0] + ".metrics.csv"
    os.makedirs(os.path.dirname(os.path.abspath(metrics_path)), exist_ok=True)
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_FIELDS)

        def log_row(row):
            writer.writerow([row["epoch"], f"{row['train_loss']:.6f}", f"{row['val_loss']:.6f}",
                             f"{row['val_acc']:.6f}", f"{row['lr']:.6g}"])
            fh.flush()
            if not args.quiet:
                print(f"epoch {row['epoch']:3d}  train_loss {row['train_loss']:.4f}  "
                      f"val_loss {row['val_loss']:.4f}  val_acc {row['val_acc']:.4f}  lr {row['lr']:.4g}",
                      flush=True)

        model, metrics = train(model, ds, cfg, callback=log_row)
    save_model(model, args.out)
    print(f"saved {args.out} after {len(metrics)} epochs; metrics in {metrics_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .experiment import test_split
    from .model import load_model
    from .training import evaluate

    model = load_model(args.ckpt)
    ds = _load(args, args.split)
    if ds.images.shape[1] != model.input_shape[0] or ds.class_count != model.num_classes:
        raise UsageError(f"checkpoint expects {model.input_shape[0]} channels and "
                         f"{model.num_classes} classes; dataset {args.dataset} has "
                         f"{ds.images.shape[1]} and {ds.class_count}")
    ds = test_split(ds, args.rotate_test, args.seed)
    _, acc, preds = evaluate(model, ds)
    tag = f"{args.dataset}-{args.split}{'-r' if args.rotate_test else ''}"
    print(f"accuracy {acc:.4f} ({int(np.sum(preds == ds.labels))}/{len(ds)}) on {tag}")
    path = args.per_class or os.path.splitext(args.ckpt)[0] + f".{tag}.per_class.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "count", "correct", "accuracy"])
        for k in range(ds.class_count):
            mask = ds.labels == k
            n = int(mask.sum())
            correct = int(np.sum(preds[mask] == k))
            w.writerow([k, n, correct, f"{correct / n:.6f}" if n else ""])
    print(f"per-class results in {path}")
    return EXIT_OK


def cmd_rf(args) -> int:
    from .receptive_field import format_csv, format_table, parse_stack, rf_propagate, rf_rows

    stack = parse_stack(args.stack)
    rows = rf_rows(stack, args.input_h)
    if args.seed_rf:
        seed = tuple(int(v) for v in args.seed_rf.lower().split("x"))
        for row, (w, h) in zip(rows, rf_propagate(stack, seed)):
            row["rf_w"], row["rf_h"] = w, h
    text = format_csv(rows) if args.csv else format_table(rows) + "\n"
    sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import ALGORITHMS, DEFAULT_GEOMETRIES, bench_conv, parse_geometry

    geoms = [parse_geometry(g) for g in args.geometry] if args.geometry else list(DEFAULT_GEOMETRIES)
    algs = args.algorithms or list(ALGORITHMS)
    for a in algs:
        if a not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}")
    report = bench_conv(geoms, algs, args.repeats, args.warmup,
                        np.float64 if args.double else np.float32, args.seed)
    text = report.to_csv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(report.summary(), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import SUITES, format_results, run_selftest

    suites = args.suite or list(SUITES)
    for s in suites:
        if s not in SUITES:
            raise UsageError(f"unknown suite {s!r}; choose from {', '.join(SUITES)}")
    results = run_selftest(args.double, suites, args.seed, perturb_winograd=args.perturb_winograd)
    print(format_results(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_mnist_sample(args) -> int:
    from .datasets import mlxtend_mnist_subset

    mlxtend_mnist_subset(args.out, n_test=args.n_test, seed=args.seed)
    print(f"wrote the 5000-image MNIST sample to {args.out} ({5000 - args.n_test} train, "
          f"{args.n_test} test)")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def _data_flags(p):
    p.add_argument("--dataset", choices=("mnist", "cifar10", "synth"), default="synth")
    p.add_argument("--data-dir", help="directory with the IDX or CIFAR-10 binary files")
    p.add_argument("--limit", type=int, help="use at most this many images")
    p.add_argument("--synth-size", type=int, default=2000, help="synthetic training set size")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cycnn", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress details")
    subs = parser.add_subparsers(dest="command")

    p = subs.add_parser("polar", help="convert a PGM/PPM image to polar or log-polar form")
    p.add_argument("--in", dest="input")
    p.add_argument("--out")
    p.add_argument("--mode", choices=("polar", "logpolar"), default="polar")
    p.add_argument("--rho-max", type=float)
    p.add_argument("--size", help="output size HxW (default: input size)")
    p.set_defaults(func=cmd_polar)

    p = subs.add_parser("train", help="train a MiniVGG variant")
    _data_flags(p)
    p.add_argument("--arch", choices=("minivgg",), default="minivgg")
    p.add_argument("--variant", default="base", help="base, p, lp, cy-p or cy-lp")
    p.add_argument("--augment", choices=AUGMENT_CHOICES, default="none")
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--metrics", help="metrics CSV path (default: next to the checkpoint)")
    p.add_argument("--epochs", type=int, default=200, help="maximum number of epochs")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-5)
    p.add_argument("--lr-patience", type=int, default=5)
    p.add_argument("--stop-patience", type=int, default=15)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--algorithm", choices=("direct", "winograd"), default="winograd")
    p.add_argument("--double", action="store_true", help="train in float64")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval", help="evaluate a checkpoint")
    _data_flags(p)
    p.add_argument("--ckpt")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--rotate-test", action="store_true", help="rotate every image by a random angle")
    p.add_argument("--per-class", help="per-class CSV path")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("rf", help="receptive-field and boundary-coverage table")
    p.add_argument("--stack", default="3x3,3x3,2x2/2x2,3x3,3x3,2x2/2x2,3x3,3x3",
                   help="comma-separated layers KWxKH[/SWxSH]")
    p.add_argument("--input-h", type=int, help="input height for the coverage columns")
    p.add_argument("--seed-rf", help="receptive field WxH to start from (default 1x1)")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_rf)

    p = subs.add_parser("bench", help="time the convolution algorithms")
    p.add_argument("--geometry", action="append", help="N,C,H,W,O (repeatable)")
    p.add_argument("--algorithms", nargs="+")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--double", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_bench)

    p = subs.add_parser("selftest", help="run the built-in consistency suites")
    p.add_argument("--double", action="store_true", help="float64 with tighter tolerances")
    p.add_argument("--suite", action="append")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb-winograd", action="store_true",
                   help="fault injection: nudge the Winograd filter transform")
    p.set_defaults(func=cmd_selftest)

    p = subs.add_parser("mnist-sample", help="write the mlxtend 5000-image MNIST sample as IDX files")
    p.add_argument("--out")
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mnist_sample)

    for sub in subs.choices.values():
        sub.add_argument("--config", help="key = value file mirroring the flags")
    return parser


def main(argv=None) -> int:
    from .datasets import DatasetFormatError
    from .experiment import VariantError
    from .model import CheckpointError
    from .pnm import PNMError

    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            sub = parser._subparsers._group_actions[0].choices[args.command]
            args = _apply_config(parser, sub, argv, args)
        _check_required(args)
        return args.func(args)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (UsageError, VariantError, OSError, PNMError, DatasetFormatError, CheckpointError,
            ValueError) as exc:
        print(f"cycnn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
