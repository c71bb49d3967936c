"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 internal
invariant violation (including failed gradient checks).
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, gradsuite
from .bitstream import load_model, save_model, unpack
from .codec import decode_image, decode_prior, encode_image
from .errors import CodecError, FormatError, OperatorError
from .imageio import read_pgm, read_ppm, write_ppm
from .semantic_prior import SemanticMap
from .synthetic import write_dataset
from .trainer import load_config, train

log = logging.getLogger("spcodec")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _bpp_lines(report):
    return [f"{part:<11} {size:>8} B  {bpp} bpp" for part, size, bpp in report.rows()[1:]]


def cmd_synth_data(args):
    stems = write_dataset(args.out, args.count, args.size, args.classes, args.seed)
    print(f"wrote {len(stems)} scenes to {args.out}")


def cmd_train(args):
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed

    def progress(row):
        print(f"epoch {row['epoch']:>4}  loss {row['loss']:.6g}  bits {row['bits']:.1f}  "
              f"distortion {row['distortion']:.6g}", flush=True)

    result = train(config, progress=progress)
    save_model(args.out, result.params, result.config)
    if args.log:
        with open(args.log, "w") as f:
            f.write("epoch,loss,bits,prior_bits,hyper_bits,distortion\n")
            for row in result.history:
                f.write(",".join(repr(row[k]) if k != "epoch" else str(row[k]) for k in (
                    "epoch", "loss", "bits", "prior_bits", "hyper_bits", "distortion")) + "\n")
    if args.png:
        from .plotting import training_figure
        print(f"wrote {training_figure(result.history, args.png)}")
    print(f"best epoch {result.best_epoch}; model written to {args.out}")


def cmd_encode(args):
    params, config = load_model(args.model)
    image = read_ppm(args.image)
    labels = read_pgm(args.map)
    if labels.shape != image.shape[1:]:
        raise FormatError(f"map {labels.shape} and image {image.shape[1:]} sizes differ")
    if labels.max() >= config.num_classes:
        raise FormatError(f"map label {labels.max()} exceeds the model's {config.num_classes} classes")
    result = encode_image(image, SemanticMap(labels, config.num_classes), params, config)
    Path(args.out).write_bytes(result.data)
    report = analysis.rate_report(result.data)
    print("\n".join(_bpp_lines(report)))
    print(f"symbols: prior {report.prior_symbols}, hyperprior {report.hyper_symbols}")


def cmd_decode(args):
    if (args.swap_region is None) != (args.ref is None):
        raise UsageError("--swap-region and --ref must be given together")
    params, config = load_model(args.model)
    reference = None
    if args.ref is not None:
        reference, _, _, _ = decode_prior(unpack(Path(args.ref).read_bytes()), params, config)
    result = decode_image(Path(args.input).read_bytes(), params, config, reference, args.swap_region)
    write_ppm(args.out, result.image)
    print(f"decoded {result.smap.width}x{result.smap.height} image to {args.out}")


def cmd_inspect(args):
    data = Path(args.input).read_bytes()
    params = config = None
    if args.model:
        params, config = load_model(args.model)
    report = analysis.rate_report(data, params, config)
    print(report.to_csv() if args.csv else report.to_text(), end="" if args.csv else "\n")


def cmd_analyze_corr(args):
    params, config = load_model(args.model)
    corr = analysis.channel_correlation(args.data, params, args.class_id, config.num_classes,
                                        limit=args.limit, seed=args.seed)
    stem = Path(args.out)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path, pgm_path = analysis.export_heatmap(corr, stem)
    print(f"class {args.class_id}: mean |corr| off-diagonal {analysis.mean_abs_offdiag(corr):.4f}")
    print(f"wrote {csv_path} and {pgm_path}")
    if args.png:
        from .plotting import correlation_figure
        print(f"wrote {correlation_figure(corr, stem.with_suffix('.png'), args.class_id)}")


def cmd_ablate(args):
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed

    def progress(variant, step, loss):
        print(f"{variant:<10} step {step:>5}  train bits/column {loss:.2f}", flush=True)

    result = analysis.run_ablation(config, progress)
    print(f"hyperprior: {result.hyperprior_bits} bits over {result.columns} columns "
          f"({result.hyperprior_bits / result.columns:.2f} per column)")
    print(f"factorized: {result.factorized_bits} bits over {result.columns} columns "
          f"({result.factorized_bits / result.columns:.2f} per column)")
    print(f"bits saving of the hyperprior: {100 * result.saving:.1f}%")
    if args.png:
        from .plotting import ablation_figure
        print(f"wrote {ablation_figure(result, args.png)}")


def cmd_gradcheck(args):
    results = gradsuite.run_all(args.seed)
    for r in results:
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name:<15} max rel. error {r.max_error:.2e}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} suite(s) failed: {', '.join(failed)}")
        return EXIT_INTERNAL
    print(f"all {len(results)} suites passed")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="spcodec", description="Semantic-prior conceptual image codec.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-data", help="write synthetic PPM scenes and PGM maps")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--classes", type=int, default=19)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train a model from a key=value config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write the per-epoch log as CSV")
    p.add_argument("--png", help="write a per-epoch bits/distortion figure")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode an image and its semantic map")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a .spc stream to PPM")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--swap-region", type=int, metavar="CLASS")
    p.add_argument("--ref", help=".spc stream supplying the swapped region's prior")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("inspect", help="rate breakdown of a .spc stream")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", help="model for per-class bits")
    p.add_argument("--csv", action="store_true", help="print CSV instead of text")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("analyze-corr", help="channel correlation of one class's prior")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--class", dest="class_id", type=int, required=True)
    p.add_argument("--out", required=True, help="output stem for .csv and .pgm")
    p.add_argument("--limit", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--png", action="store_true", help="also render a PNG heatmap")
    p.set_defaults(func=cmd_analyze_corr)

    p = sub.add_parser("ablate", help="hyperprior vs factorized-only texture bits")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--png", help="write a training-curve figure")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="run every finite-difference suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OperatorError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (CodecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AssertionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
