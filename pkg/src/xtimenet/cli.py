"""Command-line pipeline: synth -> preprocess -> train -> eval, plus
count-params and gradcheck verification.

Exit codes are a stable scripting contract: 0 success, 1 usage error,
2 data error, 3 numerical failure.

Every subcommand accepts ``--config FILE`` holding ``key = value`` lines
(keys are the long flag names, ``#`` starts a comment); explicit flags
override config values, which override built-in defaults.
"""

import argparse
import sys

import numpy as np

from . import __version__
from .data import (SplitSpec, WindowedDataset, generate_synthetic,
                   load_record, save_record, split_by_repetition)
from .errors import DataError, NumericsError
from .model import (XTimeNetworkSpec, build_xtime_network, count_parameters,
                    load_checkpoint, parameter_breakdown, save_checkpoint)
from .preprocess import preprocess_record
from .training import TrainConfig, evaluate, train
from .verify import TOLERANCE, layer_checks, network_check


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_config(path, parser):
    """Parse `key = value` lines into parser defaults."""
    valid = {}
    flags = {}
    for action in parser._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                valid[opt[2:]] = action.dest
                flags[opt[2:]] = isinstance(
                    action, (argparse._StoreTrueAction,
                             argparse._StoreFalseAction))
    defaults = {}
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config file: {exc}") from None
    for no, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{no}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in valid:
            raise DataError(f"{path}:{no}: unknown option {key!r} for this "
                            f"command")
        if flags[key]:
            if value.lower() not in ("true", "false", "0", "1"):
                raise DataError(f"{path}:{no}: boolean expected for {key!r}")
            defaults[valid[key]] = value.lower() in ("true", "1")
        else:
            defaults[valid[key]] = value
    return defaults


def _int_list(text):
    try:
        return tuple(int(part) for part in text.split(",") if part != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, "
                                         f"got {text!r}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, parser):
    if args.classes < 2:
        parser.error("--classes must be >= 2")
    if not 1 <= args.reps <= 10:
        parser.error("--reps must be in 1..10")
    record = generate_synthetic(args.classes, channels=args.channels,
                                reps=args.reps, seed=args.seed,
                                gesture_s=args.gesture_s,
                                rest_s=args.rest_s, snr_db=args.snr_db)
    save_record(record, args.out)
    print(f"wrote {args.out}: {record.num_samples} samples, "
          f"{args.classes * args.reps} gesture segments, "
          f"{record.num_channels} channels")
    return 0


def cmd_preprocess(args, parser):
    record = load_record(args.input)
    ds, stats = preprocess_record(
        record, window_ms=args.window_ms, step_ms=args.step_ms,
        norm=args.norm, mu=args.mu, fc=args.fc, two_pass=args.two_pass,
        test_repetitions=args.test_reps, num_classes=args.num_classes)
    ds.save(args.out)
    print(f"wrote {args.out}: {len(ds)} windows of "
          f"{ds.window_samples} samples ({ds.window_ms} ms), "
          f"{ds.num_classes} classes, norm={args.norm}")
    return 0


def _load_windows(path):
    try:
        return WindowedDataset.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot load dataset {path}: {exc}") from None


def cmd_train(args, parser):
    paths = [p for p in args.data.split(",") if p]
    if not paths:
        parser.error("--data requires at least one dataset path")
    datasets = [_load_windows(p) for p in paths]
    trains = []
    for ds in datasets:
        tr, _ = split_by_repetition(ds, SplitSpec(ds.test_repetitions))
        trains.append(tr)
    first = trains[0]
    spec = XTimeNetworkSpec(input_channels=first.num_channels,
                            num_classes=first.num_classes,
                            variant=args.variant)
    net = build_xtime_network(spec, rng=np.random.default_rng(args.seed))
    cfg = TrainConfig(lr0=args.lr, cycle_epochs=args.cycle_epochs,
                      batch_size=args.batch_size, epochs=args.epochs,
                      seed=args.seed)
    metrics_path = args.metrics or args.out + ".metrics.tsv"
    window_set = sorted({ds.window_ms for ds in trains})
    if not args.quiet:
        print(f"training variant={args.variant} on "
              f"{sum(len(t) for t in trains)} windows "
              f"(lengths {window_set} ms), {cfg.epochs} epochs")
    log = train(net, trains, cfg, metrics_path=metrics_path,
                on_epoch=None if args.quiet else
                lambda row: print(f"epoch {row.epoch}: loss={row.loss:.4f} "
                                  f"acc={row.accuracy:.4f} lr={row.lr:.6f}"))
    save_checkpoint(net, args.out, extra_meta={
        "preprocess": datasets[0].stats,
        "window_lengths_ms": window_set,
        "seed": args.seed})
    final = log[-1]
    print(f"wrote {args.out} and {metrics_path}; final train "
          f"accuracy {final.accuracy:.4f}")
    return 0


def cmd_eval(args, parser):
    net, _ = load_checkpoint(args.ckpt)
    ds = _load_windows(args.data)
    if ds.num_channels != net.spec.input_channels:
        raise DataError(f"checkpoint expects {net.spec.input_channels} "
                        f"channels, dataset has {ds.num_channels}")
    if ds.labels.max() >= net.num_classes:
        raise DataError(f"dataset labels reach {ds.labels.max()}, checkpoint "
                        f"has {net.num_classes} classes")
    if args.split != "all":
        tr, te = split_by_repetition(ds, SplitSpec(ds.test_repetitions))
        ds = te if args.split == "test" else tr
    if len(ds) == 0:
        raise DataError(f"selected split {args.split!r} is empty")
    result = evaluate(net, ds, batch_size=args.batch_size)
    print(f"accuracy: {result.accuracy:.6f} "
          f"({int(np.trace(result.confusion))}/{len(ds)} windows, "
          f"split={args.split}, window={ds.window_ms} ms)")
    if args.report:
        _write_report(args.report, result, ds)
        print(f"wrote {args.report}")
    return 0


def _write_report(path, result, ds):
    k = result.confusion.shape[0]
    support = result.confusion.sum(axis=1)
    with open(path, "w") as fh:
        fh.write("# xtimenet eval report v1\n")
        fh.write(f"# windows: {len(ds)}  window_ms: {ds.window_ms}  "
                 f"split_test_reps: {list(ds.test_repetitions)}\n")
        fh.write(f"accuracy\t{result.accuracy!r}\n")
        fh.write("# per-class accuracy:\nclass\tsupport\taccuracy\n")
        for c in range(k):
            fh.write(f"{c}\t{support[c]}\t{result.per_class_accuracy[c]!r}\n")
        fh.write("# confusion matrix (rows true, cols predicted):\n")
        for row in result.confusion:
            fh.write("\t".join(str(v) for v in row) + "\n")


def cmd_count_params(args, parser):
    spec = XTimeNetworkSpec(input_channels=args.channels,
                            num_classes=args.classes, variant=args.variant)
    net = build_xtime_network(spec)
    total = count_parameters(net)
    print(f"variant={args.variant} classes={args.classes} "
          f"channels={args.channels}")
    if args.breakdown:
        width = max(len(name) for name, _ in parameter_breakdown(net))
        for name, count in parameter_breakdown(net):
            print(f"  {name:<{width}}  {count:>9}")
    print(f"total trainable parameters: {total}")
    return 0


def cmd_gradcheck(args, parser):
    failures = 0
    print(f"tolerance: max relative error < {TOLERANCE}")
    for name, err in layer_checks(args.seed).items():
        status = "PASS" if err < TOLERANCE else "FAIL"
        failures += status == "FAIL"
        print(f"  {name:<24} {err:.3e}  {status}")
    worst, errors = network_check(args.seed,
                                  coords_per_tensor=args.coords)
    if args.verbose:
        for name, err in sorted(errors.items(), key=lambda kv: -kv[1]):
            print(f"    {name:<40} {err:.3e}")
    status = "PASS" if worst < TOLERANCE else "FAIL"
    failures += status == "FAIL"
    print(f"  {'full_network':<24} {worst:.3e}  {status} "
          f"({args.coords} coords/tensor)")
    print(f"gradcheck: {'PASS' if failures == 0 else 'FAIL'}")
    return 0 if failures == 0 else 3


# ---------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="xtimenet",
                     description="XceptionTime sEMG gesture-recognition "
                                 "pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func, _subparser=p)
        p.add_argument("--config", metavar="FILE",
                       help="key = value defaults file")
        return p

    p = add("synth", cmd_synth, "generate a synthetic DB1-schema CSV")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--channels", type=int, default=10)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gesture-s", type=float, default=5.0)
    p.add_argument("--rest-s", type=float, default=3.0)
    p.add_argument("--snr-db", type=float, default=10.0)
    p.add_argument("--out", required=True)

    p = add("preprocess", cmd_preprocess,
            "filter, normalize and segment a recording CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window-ms", type=int, default=200)
    p.add_argument("--step-ms", type=int, default=10)
    p.add_argument("--norm", choices=("mu-law", "minmax", "none"),
                   default="mu-law")
    p.add_argument("--mu", type=float, default=256.0)
    p.add_argument("--fc", type=float, default=1.0)
    p.add_argument("--two-pass", action="store_true",
                   help="zero-phase (forward+backward) filtering")
    p.add_argument("--test-reps", type=_int_list, default=(2, 5, 7),
                   help="repetitions held out of normalization statistics")
    p.add_argument("--num-classes", type=int, default=None)

    p = add("train", cmd_train, "train on preprocessed dataset(s)")
    p.add_argument("--data", required=True,
                   help="dataset path(s), comma-separated for mixed "
                        "window-length training")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", default=None,
                   help="metrics log path (default: <out>.metrics.tsv)")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--cycle-epochs", type=int, default=20)
    p.add_argument("--variant", choices=("base", "v2"), default="base")
    p.add_argument("--quiet", action="store_true")

    p = add("eval", cmd_eval, "evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", default=None,
                   help="write per-class accuracy + confusion matrix here")
    p.add_argument("--split", choices=("test", "train", "all"),
                   default="test")
    p.add_argument("--batch-size", type=int, default=256)

    p = add("count-params", cmd_count_params,
            "exact trainable-parameter count")
    p.add_argument("--variant", choices=("base", "v2"), default="base")
    p.add_argument("--classes", type=int, default=52)
    p.add_argument("--channels", type=int, default=10)
    p.add_argument("--breakdown", action="store_true",
                   help="print the per-layer table")

    p = add("gradcheck", cmd_gradcheck,
            "layer and full-network finite-difference gradient checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coords", type=int, default=5,
                   help="sampled coordinates per parameter tensor")
    p.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            defaults = _read_config(args.config, args._subparser)
            args._subparser.set_defaults(**defaults)
            args = parser.parse_args(argv)
        return args.func(args, args._subparser)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except (DataError, OSError, ValueError) as exc:
        print(f"xtimenet: data error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"xtimenet: numerical failure: {exc}", file=sys.stderr)
        return 3


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
