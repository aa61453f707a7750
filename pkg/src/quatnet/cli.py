"""Batch command line: compression, training, evaluation, gradient checks, demos.

Exit codes: 0 success, 1 I/O error, 2 data/config format error,
3 verification or training failure.  All randomness flows from one seed,
taken from ``--seed`` or the ``QUATNET_SEED`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import autodiff, backprop, ghr, io
from .compression import compress, mean_downsample, zscore
from .config import ConfigError, parse_run_config
from .layers import Activation, Model, QLinear
from .quaternion import I, ONE, QTensor, Quaternion, conjugate, hamilton
from .training import (
    EngineRelationError,
    TrainingDiverged,
    build_model,
    count_parameters,
    cross_entropy_with_grad,
    dataset_dims,
    evaluate,
    prepare_run_data,
    train,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_FORMAT = 2
EXIT_VERIFY = 3


def _seed_from(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("QUATNET_SEED")
    return int(env) if env else 0


def _fmt_quat(q: Quaternion) -> str:
    return (f"{q.q0:+.6f} {q.q1:+.6f}i {q.q2:+.6f}j {q.q3:+.6f}k")


def cmd_compress(args) -> int:
    try:
        series = io.read_series_csv(args.input)
    except io.CsvFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.zscore:
        series = zscore(series)
    try:
        if args.baseline == "mean":
            if args.format != "csv":
                print("error: the mean baseline is written as a series CSV only",
                      file=sys.stderr)
                return EXIT_FORMAT
            io.write_series_csv(mean_downsample(series, args.chunk_len), args.out)
            print(f"wrote mean-downsampled series to {args.out}")
        else:
            packed = compress(series, args.chunk_len)
            if args.format == "csv":
                io.write_compressed_csv(packed, args.out)
            else:
                io.write_compressed_binary(packed, args.out)
            print(f"compressed {series.n_channels}x{series.n_samples} -> "
                  f"{packed.n_channels}x{packed.n_chunks} quaternions ({args.out})")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _load_run_config(path):
    with open(path) as fh:
        return parse_run_config(json.load(fh))


def cmd_train(args) -> int:
    try:
        run = _load_run_config(args.config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (json.JSONDecodeError, ConfigError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    if args.seed is not None:
        run.train.seed = args.seed
    if args.engine is not None:
        run.train.engine = args.engine
    try:
        train_ds, test_ds = prepare_run_data(run)
        run.model.in_channels, run.model.in_length = dataset_dims(train_ds)
        model = build_model(run.model, np.random.default_rng((run.train.seed, 0)))
        spec = run.train
        if spec.engine == "ad":
            # the component-level gradients are 4x the GHR ones; scale the
            # step so both engines walk the same trajectory
            spec.learning_rate = spec.learning_rate / 4.0
            print(f"engine ad: learning rate scaled to {spec.learning_rate:g}")
        history = train(model, train_ds, spec, test_ds)
    except io.CsvFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingDiverged, EngineRelationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    io.save_model(model, run.checkpoint)
    io.write_history(history, run.history)
    last = history[-1]
    print(f"trained {count_parameters(model)} parameters for {len(history)} epochs")
    print(f"final loss {last['loss']:.6f} train_acc {last['train_acc']:.4f} "
          f"test_acc {last['test_acc']:.4f}")
    print(f"checkpoint: {run.checkpoint}\nhistory: {run.history}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        run = _load_run_config(args.config)
        train_ds, test_ds = prepare_run_data(run)
        data = train_ds if args.split == "train" else test_ds
        if data is None:
            print("error: no test split in this config", file=sys.stderr)
            return EXIT_FORMAT
        run.model.in_channels, run.model.in_length = dataset_dims(train_ds)
        model = build_model(run.model, np.random.default_rng((run.train.seed, 0)))
        io.load_model(model, args.checkpoint)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (json.JSONDecodeError, ConfigError, io.CsvFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    acc = evaluate(model, data)
    print(f"accuracy {acc:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    seed = _seed_from(args)
    report = run_gradcheck(seed=seed, trials=args.trials,
                           tol_rel=args.tol_rel, tol_abs=args.tol_abs)
    print(report.render())
    failed = not report.passed
    if args.config is not None:
        try:
            run = _load_run_config(args.config)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        except (json.JSONDecodeError, ConfigError) as exc:
            print(f"error: bad config: {exc}", file=sys.stderr)
            return EXIT_FORMAT
        rng = np.random.default_rng(seed)
        cfg = run.model
        cfg.in_channels = cfg.in_channels or run.data.synth.channels
        cfg.in_length = cfg.in_length or max(
            run.data.synth.length // run.data.chunk_len, 40)
        model = build_model(cfg, rng)
        x = QTensor(rng.uniform(-1, 1, (2, cfg.in_channels, cfg.in_length, 4)))
        labels = rng.integers(0, cfg.classes, size=2)
        rel = autodiff.verify_ghr_ad_relation(
            model, x, logits_grad_fn=lambda lg: cross_entropy_with_grad(lg, labels)[1])
        print()
        print(rel.render())
        failed = failed or not rel.passed
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_demos(args) -> int:
    seed = _seed_from(args)
    rng = np.random.default_rng(seed)
    rand_q = Quaternion.from_array(rng.uniform(-2, 2, 4))
    print("== naive componentwise derivative: the product rule fails ==")
    print("f(q) = q q*; the componentwise derivative gives 2q, the product")
    print("rule gives 4q - 2q*.")
    for label, q in (("q = i", I), ("seeded random q", rand_q)):
        rep = ghr.demo_product_rule_failure(q)
        print(f"  {label}:")
        print(f"    componentwise : {_fmt_quat(rep.naive)}")
        print(f"    product rule  : {_fmt_quat(rep.rule_value)}")
        print(f"    gap           : {rep.gap:.6f}"
              + ("  (degenerate: real q)" if rep.degenerate else ""))
    print()
    print("== naive componentwise derivative: the chain rule fails ==")
    print("f(x) = (xy)(xy)*; direct gives 2x|y|^2, chaining gives -4xyy*.")
    rand_x = Quaternion.from_array(rng.uniform(-2, 2, 4))
    rand_y = Quaternion.from_array(rng.uniform(-2, 2, 4))
    for label, (x, y) in (("x = 1, y = 1", (ONE, ONE)),
                          ("seeded random x, y", (rand_x, rand_y))):
        rep = ghr.demo_chain_rule_failure(x, y)
        print(f"  {label}:")
        print(f"    direct        : {_fmt_quat(rep.naive)}")
        print(f"    chained       : {_fmt_quat(rep.rule_value)}")
        print(f"    gap           : {rep.gap:.6f}")
    print()
    print("== GHR derivative of f(q) = q q* ==")
    partials = ghr.component_partials(lambda t: hamilton(t, conjugate(t)), rand_q)
    value = ghr.ghr_derivative(partials, ONE)
    print(f"  q               : {_fmt_quat(rand_q)}")
    print(f"  d f / d q       : {_fmt_quat(value)}")
    print(f"  q*/2            : {_fmt_quat(conjugate(rand_q) * 0.5)}")
    print()
    print("== component-level gradients vs GHR gradients (factor 4) ==")
    model = Model([QLinear.init(2, 3, rng), Activation("tanh"),
                   QLinear.init(3, 2, rng)])
    x = QTensor(rng.uniform(-1, 1, (2, 2, 4)))
    d = QTensor(rng.uniform(-1, 1, (2, 2, 4)))
    tape = []
    out = model.forward(x, tape=tape)
    ghr_grads, ghr_msgs, _ = backprop.backward(
        model, tape, output_message=backprop.mse_output_message(out, d),
        collect_messages=True)
    ad_grads, ad_msgs, _ = autodiff.backward(
        model, tape, output_message=autodiff.ad_loss_grad(out, d),
        collect_messages=True)
    print(f"  {'layer':<12}{'tensor':<8}{'|component|/|ghr|':<20}max-rel-dev vs 4x")
    for i, layer in enumerate(model.layers):
        if ghr_grads[i] is None:
            continue
        for tensor in ("w", "b"):
            a, g = ad_grads[i][tensor], ghr_grads[i][tensor]
            ratio = np.max(np.abs(a)) / np.max(np.abs(g))
            dev = np.max(np.abs(a - 4.0 * g)) / np.max(np.abs(a))
            print(f"  {model.layer_name(i):<12}{tensor:<8}{ratio:<20.12f}{dev:.3e}")
    rel = autodiff.relation_report(model, ghr_grads, ghr_msgs, ad_grads, ad_msgs)
    print(f"  backward messages are 4x the conjugated GHR messages: "
          f"max deviation {rel.max_deviation:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quatnet",
        description="Quaternion time-series compression and neural networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a series CSV into quaternions")
    p.add_argument("input", help="input CSV (header of channel names, one row per step)")
    p.add_argument("--chunk-len", type=int, default=8, dest="chunk_len")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.add_argument("--baseline", choices=("mean",), default=None,
                   help="write the per-chunk mean series instead")
    p.add_argument("--zscore", action="store_true",
                   help="standardise each channel before compressing")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--engine", choices=("ghr", "ad", "both"), default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a config's data")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck",
                       help="finite-difference and engine-relation checks")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tol-rel", type=float, default=1e-5, dest="tol_rel")
    p.add_argument("--tol-abs", type=float, default=1e-8, dest="tol_abs")
    p.add_argument("--config", default=None,
                   help="also check the engine relation on this run config's model")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("demos", help="derivative rule counterexamples and the "
                                     "component-vs-GHR gradient relation")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_demos)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
