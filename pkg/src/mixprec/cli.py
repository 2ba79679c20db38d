"""Command-line harness: ``mixprec {inspect,bench,density,train,pcm}``.

Exit codes: 0 ok, 2 usage, 3 data, 4 divergence, 5 stagnation.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from . import bench, codec, pcm, training
from .config import Config, ConfigError
from .fixed import make_rng

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGENCE, EXIT_STAGNATION = 0, 2, 3, 4, 5

log = logging.getLogger("mixprec")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# -- inspect -----------------------------------------------------------------

def inspect_report(text: str, fmt: codec.FloatFormat) -> str:
    if codec.looks_like_pattern(text, fmt):
        p = codec.parse_pattern(text, fmt)
    else:
        p = codec.encode(text, fmt)
    cls = codec.classify(p, fmt)
    f = codec.fields(p, fmt)
    value = codec.decode(p, fmt)
    lines = [
        f"format: {fmt} ({fmt.total_bits} bits, e={fmt.exponent_bits}, f={fmt.fraction_bits}, bias={fmt.bias})",
        f"bits: {codec.format_pattern(p, fmt)}",
        f"hex: {codec.format_hex(p)}",
        f"class: {cls.value}",
        f"sign: {'-' if f.sign < 0 else '+'}",
        f"biased_exponent: {f.biased_exponent}",
        f"fraction: {f.fraction}",
        f"exact: {value}",
        f"decimal: {codec.exact_decimal(value)}",
    ]
    if cls is not codec.FloatClass.NAN:
        for name, fn in (("next_up", codec.next_up), ("next_down", codec.next_down)):
            q = fn(p, fmt)
            lines.append(f"{name}: {codec.format_pattern(q, fmt)} = {codec.exact_decimal(codec.decode(q, fmt), 60)}")
    return "\n".join(lines) + "\n"


def cmd_inspect(args) -> str:
    fmt = _format_arg(args.format)
    try:
        return inspect_report(args.value, fmt)
    except codec.FormatError as exc:
        raise UsageError(str(exc)) from exc


# -- bench -------------------------------------------------------------------

BENCH_KEYS = {"sizes", "formats", "repetitions", "warmup", "seed"}


def cmd_bench(args) -> str:
    cfg = _load_config(args, BENCH_KEYS)
    try:
        bc = bench.BenchConfig(
            sizes=_list_arg(args.sizes, int) or cfg.int_list("sizes", [30, 100, 200, 400]),
            formats=_list_arg(args.formats, str) or cfg.str_list("formats", ["half", "single", "double"]),
            repetitions=args.repetitions or cfg.int("repetitions", 5),
            warmup=args.warmup if args.warmup is not None else cfg.int("warmup", 1),
            seed=_seed(args, cfg),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return bench.records_csv(bench.run_bench(bc))


# -- density -----------------------------------------------------------------

def density_rows(fmt: codec.FloatFormat, lo: int | None = None, hi: int | None = None) -> list[tuple[int, int]]:
    """Per-binade value counts: enumerated for small formats, formula otherwise."""
    lo = fmt.emin if lo is None else lo
    hi = fmt.emax if hi is None else hi
    if lo > hi or lo < fmt.emin or hi > fmt.emax:
        raise codec.FormatError(f"binade range [{lo}, {hi}] outside [{fmt.emin}, {fmt.emax}]")
    if fmt.total_bits <= codec.MAX_ENUMERABLE_BITS:
        counts = codec.binade_counts_enumerated(fmt)
        return [(n, counts.get(n, 0)) for n in range(lo, hi + 1)]
    return [(n, codec.binade_count(fmt, n)) for n in range(lo, hi + 1)]


def cmd_density(args) -> str:
    fmt = _format_arg(args.format)
    try:
        rows = density_rows(fmt, args.min, args.max)
    except codec.FormatError as exc:
        raise UsageError(str(exc)) from exc
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "count"])
    w.writerows(rows)
    return buf.getvalue()


# -- train -------------------------------------------------------------------

TRAIN_KEYS = {
    "layer_sizes", "activation", "storage", "rounding", "loss_scale_exponent", "master_copy",
    "accumulate_widened", "clip_threshold", "epochs", "batch_size", "learning_rate", "seed",
    "dataset", "n_samples", "n_features", "n_classes", "test_fraction", "data_seed",
}


def training_setup(cfg: Config, seed: int):
    """Build (model, dataset, policy, train kwargs) from a training config."""
    try:
        policy = training.PrecisionPolicy(
            storage=cfg.str("storage", "float32"),
            rounding=cfg.str("rounding", "nearest"),
            loss_scale_exponent=cfg.int("loss_scale_exponent", 0),
            master_copy=cfg.bool("master_copy", False),
            accumulate_widened=cfg.bool("accumulate_widened", True),
            clip_threshold=cfg.optional_float("clip_threshold"),
        )
        data = _dataset(cfg)
        sizes = cfg.int_list("layer_sizes", [data.x_train.shape[1], 16, data.n_classes])
        model = training.init_model(sizes, policy, seed, cfg.str("activation", "relu"))
        kwargs = dict(
            epochs=cfg.int("epochs", 50),
            seed=seed,
            batch_size=cfg.int("batch_size", 32),
            learning_rate=cfg.float("learning_rate", 0.1),
        )
    except (OSError,) as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if kwargs["epochs"] < 0 or kwargs["batch_size"] < 1:
        raise UsageError("epochs must be >= 0 and batch_size >= 1")
    if sizes[0] != data.x_train.shape[1] or sizes[-1] < data.n_classes:
        raise UsageError(f"layer_sizes {sizes} do not fit the dataset")
    return model, data, policy, kwargs


def _dataset(cfg: Config) -> training.Dataset:
    kind = cfg.str("dataset", "separable")
    n = cfg.int("n_samples", 1000)
    tf = cfg.float("test_fraction", 0.25)
    ds = cfg.int("data_seed", 1)
    if kind == "separable":
        return training.make_separable(n, cfg.int("n_features", 2), test_fraction=tf, seed=ds)
    if kind == "blobs":
        return training.make_blobs(n, cfg.int("n_features", 2), cfg.int("n_classes", 3), test_fraction=tf, seed=ds)
    if kind == "moons":
        return training.make_moons(n, test_fraction=tf, seed=ds)
    if kind.startswith("csv:"):
        return training.load_csv_dataset(kind[4:], tf, ds)
    raise ValueError(f"unknown dataset {kind!r}")


def cmd_train(args):
    cfg = _load_config(args, TRAIN_KEYS, required=True)
    model, data, policy, kwargs = training_setup(cfg, _seed(args, cfg))
    report = training.train(model, data, policy, **kwargs)
    if report.diverged:
        return report.to_csv(), EXIT_DIVERGENCE, f"training diverged: {report.divergence_reason}"
    return report.to_csv()


# -- pcm ---------------------------------------------------------------------

PCM_KEYS = {
    "experiment", "K", "trials", "write_sigma", "read_sigma", "output", "n", "tol", "max_outer",
    "inner_iterations", "seed", "eig_min", "eig_max",
}


def cmd_pcm(args):
    cfg = _load_config(args, PCM_KEYS, required=True)
    seed = _seed(args, cfg)
    try:
        model = pcm.PcmDeviceModel(cfg.float("write_sigma", 0.02), cfg.float("read_sigma", 0.01))
        kind = cfg.str("experiment", "scalar")
        if kind == "scalar":
            ks = cfg.int_list("K", [1, 4, 16])
            trials = cfg.int("trials", 1024)
            if trials < 2 or min(ks) < 1:
                raise ValueError("need trials >= 2 and K >= 1")
            rng = make_rng(seed)
            results = [pcm.scalar_experiment(k, model, rng, trials) for k in ks]
            out = cfg.str("output", "trials")
            if out == "summary":
                return pcm.scalar_summary_csv(results)
            if out != "trials":
                raise ValueError(f"output must be trials or summary, got {out!r}")
            return pcm.scalar_csv(results)
        if kind == "solve":
            n = cfg.int("n", 100)
            rng = make_rng(seed)
            A = pcm.random_spd(n, rng, cfg.float("eig_min", 1.0), cfg.float("eig_max", 3.0))
            b = A @ rng.standard_normal(n)
            ks = cfg.int_list("K", [4])
            if len(ks) != 1:
                raise ValueError("solve takes a single K")
            result = pcm.mixed_precision_solve(
                A, b, ks[0], model, rng,
                tol=cfg.float("tol", 1e-10),
                max_outer=cfg.int("max_outer", 50),
                inner_iterations=cfg.int("inner_iterations", 10),
            )
        else:
            raise ValueError(f"experiment must be scalar or solve, got {kind!r}")
    except pcm.ConditioningError as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = pcm.residual_csv(result)
    if not result.converged:
        return text, EXIT_STAGNATION, f"solver stopped at relative residual {result.best_residual:.3g}"
    return text


# -- plumbing ----------------------------------------------------------------

def _format_arg(name: str) -> codec.FloatFormat:
    try:
        return codec.get_format(name)
    except codec.FormatError as exc:
        raise UsageError(str(exc)) from exc


def _list_arg(text, conv):
    if not text:
        return None
    try:
        return [conv(p.strip()) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise UsageError(f"bad list {text!r}") from exc


def _load_config(args, allowed, required=False) -> Config:
    if args.config is None:
        if required:
            raise UsageError(f"{args.command} needs --config")
        return Config({})
    try:
        return Config.load(args.config, allowed)
    except OSError as exc:
        raise DataError(f"cannot read config: {exc}") from exc
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def _seed(args, cfg: Config) -> int:
    if args.seed is not None:
        return args.seed
    try:
        return cfg.int("seed", 0)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output path (default: stdout)")
    common.add_argument("--config", default=argparse.SUPPRESS, help="key=value config file")

    p = argparse.ArgumentParser(prog="mixprec", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=_u64, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("inspect", parents=[common], help="decode/encode one value")
    sp.add_argument("value", help="0x-hex, grouped binary pattern, or decimal number")
    sp.add_argument("--format", default="single")
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("bench", parents=[common], help="time N x N matmul per format")
    sp.add_argument("--sizes")
    sp.add_argument("--formats")
    sp.add_argument("--repetitions", type=int)
    sp.add_argument("--warmup", type=int)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("density", parents=[common], help="values per binade")
    sp.add_argument("--format", default="half")
    sp.add_argument("--min", type=int)
    sp.add_argument("--max", type=int)
    sp.set_defaults(func=cmd_density)

    sp = sub.add_parser("train", parents=[common], help="run a training config")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("pcm", parents=[common], help="PCM scalar experiment or hybrid solve")
    sp.set_defaults(func=cmd_pcm)
    return p


@contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        result = args.func(args)
    except UsageError as exc:
        print(f"mixprec {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"mixprec {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    code, message = EXIT_OK, None
    if isinstance(result, tuple):
        result, code, message = result
    try:
        with _output(args.out) as fh:
            fh.write(result)
    except OSError as exc:
        print(f"mixprec: cannot write output: {exc}", file=sys.stderr)
        return EXIT_DATA
    if message:
        print(f"mixprec {args.command}: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
