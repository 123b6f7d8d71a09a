"""``horq`` command-line entry point.

Exit status: 0 on success, 1 on a domain or I/O error, 2 on a usage error.
Reports go to stdout as ``key=value`` lines; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from .errors import HorqError


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _arch(text: str) -> tuple[int, ...]:
    if not text.startswith("fc:"):
        raise argparse.ArgumentTypeError(f"architecture must look like fc:IN-H1-...-OUT, got {text!r}")
    try:
        sizes = tuple(int(t) for t in text[3:].split("-"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad layer sizes in {text!r}")
    if len(sizes) < 2 or min(sizes) < 1:
        raise argparse.ArgumentTypeError(f"need at least two positive sizes in {text!r}")
    return sizes


def _emit(key: str, value) -> None:
    if isinstance(value, float):
        value = f"{value:.8g}"
    print(f"{key}={value}")


# -- subcommands ----------------------------------------------------------------

def cmd_quantize(args) -> int:
    from .quantize import quantize_horq, residual_norms, save_code
    from .tensor import load_tensor

    x = load_tensor(args.input).data.reshape(-1)
    code = quantize_horq(x, args.order)
    save_code(args.output, code)
    if args.report:
        sq = residual_norms(x, args.order)
        _emit("n", code.n)
        _emit("K", code.order)
        for i, beta in enumerate(code.betas, start=1):
            _emit(f"beta_{i}", beta)
        for i in range(1, args.order + 1):
            _emit(f"rel_residual_{i}", float(sq[i] / sq[0]) if sq[0] > 0 else 0.0)
    return 0


def cmd_conv(args) -> int:
    from .conv import conv_float, conv_horq
    from .tensor import ConvGeometry, load_tensor, save_tensor

    X = load_tensor(args.input)
    W = load_tensor(args.weights)
    g = ConvGeometry.for_operands(X.shape, W.shape, stride=args.stride, pad=args.pad)
    ref = conv_float(X, W, g)
    Y = conv_horq(X, W, g, args.order) if args.mode == "horq" else ref
    save_tensor(args.output, Y)
    if args.report:
        diff = float(np.linalg.norm(Y.data.astype(np.float64) - ref.data))
        norm = float(np.linalg.norm(ref.data.astype(np.float64)))
        _emit("mode", args.mode)
        _emit("order", args.order)
        _emit("output_shape", "x".join(map(str, Y.shape)))
        _emit("frobenius_error", diff)
        _emit("relative_error", diff / norm if norm > 0 else 0.0)
    return 0


def cmd_train(args) -> int:
    from .train import TrainConfig, train_loop, write_metrics

    cfg = TrainConfig(arch=args.arch, quantize=tuple(args.quantize), order=args.order,
                      loss=args.loss, lr=args.lr, epochs=args.epochs, seed=args.seed,
                      batch_size=args.batch_size, activation=args.activation,
                      dataset=args.dataset, n_train=args.n_train, n_test=args.n_test)
    result = train_loop(cfg)
    if args.metrics:
        write_metrics(args.metrics, result.trace)
    final = result.final
    _emit("epochs", final.epoch)
    _emit("train_loss", final.train_loss)
    _emit("train_acc", final.train_acc)
    if final.test_acc is not None:
        _emit("test_loss", final.test_loss)
        _emit("test_acc", final.test_acc)
    for idx, rel in zip([i for i, s in enumerate(result.specs) if s.quantized], final.rel_residual):
        _emit(f"rel_residual_layer{idx}", rel)
    return 0


def cmd_model_speedup(args) -> int:
    from .perf import PUBLISHED_NOTE, PUBLISHED_SPEEDUPS, SpeedupQuery, sweep

    base = SpeedupQuery(args.cin, args.cout, args.w, args.h, K=1, word_width=args.word_width)
    rows = sweep("K", range(1, args.kmax + 1), base)
    for k, eta in rows:
        _emit(f"eta_K{k}", round(eta, 4))
    for k, ref in PUBLISHED_SPEEDUPS.items():
        _emit(f"published_reference_K{k}", ref)
    _emit("note", PUBLISHED_NOTE)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["K", "eta", "published_reference"])
            for k, eta in rows:
                writer.writerow([k, f"{eta:.6f}", PUBLISHED_SPEEDUPS.get(k, "")])
    return 0


def cmd_model_storage(args) -> int:
    from .perf import parse_layer, storage_model

    layers = [parse_layer(t) for t in args.layers.split(",") if t.strip()]
    flags = [bool(f) for f in args.binarize] if args.binarize is not None else [True] * len(layers)
    report = storage_model(layers, flags)
    _emit("float_bytes", report.float_bytes)
    _emit("binary_bytes", report.binary_bytes)
    _emit("ratio", report.ratio)
    return 0


def cmd_bench_gemm(args) -> int:
    from .perf import bench_gemm

    result = bench_gemm(args.m, args.n, args.k, args.order, args.reps, seed=args.seed)
    row = result.as_row()
    for key, value in row.items():
        _emit(key, value)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(row))
            writer.writeheader()
            writer.writerow(row)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="horq", description="High-order residual binary quantization tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="order-K code of a tensor file (flattened)")
    p.add_argument("--input", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--output", required=True)
    p.add_argument("--report", action="store_true")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("conv", help="binary or float convolution of tensor files")
    p.add_argument("--input", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--pad", type=int, default=0)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--mode", choices=("horq", "float"), default="horq")
    p.add_argument("--output", required=True)
    p.add_argument("--report", action="store_true")
    p.set_defaults(func=cmd_conv)

    p = sub.add_parser("train", help="train a small fully-connected network")
    p.add_argument("--dataset", default="blobs", help="blobs, xor or csv:PATH")
    p.add_argument("--arch", type=_arch, default=(2, 16, 2), help="fc:IN-H1-...-OUT")
    p.add_argument("--quantize", type=_csv_ints, default=[0], help="0-based layer indices")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--loss", choices=("hinge", "softmax"), default="hinge")
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=50)
    p.add_argument("--activation", choices=("hardtanh", "relu", "none"), default="hardtanh")
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--metrics", help="per-epoch CSV output")
    p.set_defaults(func=cmd_train)

    model = sub.add_parser("model", help="analytical models").add_subparsers(dest="model", required=True)
    p = model.add_parser("speedup", help="speedup ratio for orders 1..kmax")
    p.add_argument("--cin", type=int, required=True)
    p.add_argument("--cout", type=int, required=True)
    p.add_argument("--w", type=int, required=True)
    p.add_argument("--h", type=int, required=True)
    p.add_argument("--kmax", type=int, default=4)
    p.add_argument("--word-width", type=int, default=64)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_model_speedup)

    p = model.add_parser("storage", help="float vs binary weight storage")
    p.add_argument("--layers", required=True, help="comma-separated ROWSxCOLS or N per layer")
    p.add_argument("--binarize", type=_csv_ints, help="comma-separated 0/1 flags (default all 1)")
    p.set_defaults(func=cmd_model_storage)

    bench = sub.add_parser("bench", help="micro-benchmarks").add_subparsers(dest="bench", required=True)
    p = bench.add_parser("gemm", help="float32 vs packed binary GEMM")
    p.add_argument("--m", type=int, default=1024)
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--k", type=int, default=1024)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_bench_gemm)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (HorqError, OSError) as exc:
        print(f"horq: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
