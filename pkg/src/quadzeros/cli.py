"""Command-line entry point: ``quadzeros <subcommand> [flags]``.

Exit codes: 0 success, 1 usage, 2 verification failure, 3 I/O or checkpoint error.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys
import warnings

from . import density as dens
from . import pipeline as pl

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _family(args) -> dens.Family:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return dens.Family(args.x_min, args.span)


def _job(args) -> pl.JobConfig:
    return pl.JobConfig(x_min=args.x_min, span=args.span, digits=args.digits, t_max=args.t_max,
                        step_divisor=args.step_divisor, batch_size=args.batch,
                        workers=args.workers, output=args.out, checkpoint=args.checkpoint)


def cmd_discriminants(args) -> int:
    job = pl.JobConfig(x_min=args.x_min, span=args.span, output=args.out or "-")
    with _output(args.out) as out:
        count = pl.list_discriminants(job, out)
    print(f"count={count}", file=sys.stderr)
    return EXIT_OK


def cmd_count(args) -> int:
    count = pl.window_count(args.x_min, args.span)
    print(f"count={count}")
    if (args.x_min, args.span) == (10**12, 10**7):
        print(f"published count for this window: {pl.PUBLISHED_COUNT_1E12}")
    return EXIT_OK


def cmd_zeros(args) -> int:
    zf = pl.run_zeros(_job(args))
    print(f"{len(zf.records)} discriminants, "
          f"{sum(len(o) for o in zf.records.values())} zeros -> {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    zf = pl.ZeroFile.read(args.zeros_file)
    report = pl.verify(zf, args.sample, seed=args.seed)
    for row in report.checked:
        print(f"{row['disc']} t={pl.format_ordinate(row['t'])} |Z|/scale={row['abs_z']:.3e} "
              f"fast-direct={row['deviation']:.3e}")
    print(f"max |Z(t*)|/scale = {report.max_abs_z:.3e} (threshold {report.zero_threshold:.0e})")
    print(f"max deviation = {report.max_deviation:.3e} (threshold {report.threshold:.0e})")
    return EXIT_OK if report.ok else EXIT_VERIFY


def cmd_histogram(args) -> int:
    zf = pl.ZeroFile.read(args.zeros_file)
    with _output(args.out) as out:
        pl.write_histogram_csv(zf, args.bin_width, out, args.tau_max)
    return EXIT_OK


def cmd_predict(args) -> int:
    grid = pl.predict_grid(args.tau_min, args.tau_max, args.grid_step)
    columns = args.curves.split(",") if args.curves else pl.PREDICT_COLUMNS
    with _output(args.out) as out:
        pl.write_predict_csv(_family(args), grid, out, columns, args.variant)
    return EXIT_OK


def cmd_integral_check(args) -> int:
    report = pl.integral_table(_family(args), args.sigma, variant=args.variant)
    with _output(args.out) as out:
        out.write(f"# X={args.x_min} DX={args.span} sigma={args.sigma} t_cut={report.t_cut:.1f}\n")
        out.write("delta,integral,reference\n")
        for delta, value in report.excisions:
            out.write(f"{delta:g},{value:.10f},{report.reference:g}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quadzeros", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    add = sub.add_parser
    sub.add_parser = lambda *a, **k: add(*a, parents=[common], **k)

    def rng(p, x_min=10**8, span=10**5):
        p.add_argument("--x-min", type=int, default=x_min)
        p.add_argument("--span", type=int, default=span)

    p = sub.add_parser("discriminants", help="list negative fundamental discriminants in a window")
    rng(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_discriminants)

    p = sub.add_parser("count", help="count discriminants in a window without listing them")
    rng(p, 10**12, 10**7)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("zeros", help="compute zeros with t < t_max (checkpointed)")
    rng(p)
    p.add_argument("--digits", type=int, default=15)
    p.add_argument("--t-max", type=float, default=1.0)
    p.add_argument("--step-divisor", type=int, default=50)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_zeros)

    p = sub.add_parser("verify", help="re-check a sample of recorded zeros by direct summation")
    p.add_argument("zeros_file")
    p.add_argument("--sample", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("histogram", help="histogram of rescaled zeros as CSV")
    p.add_argument("zeros_file")
    p.add_argument("--bin-width", type=float, default=dens.DEFAULT_BIN_WIDTH)
    p.add_argument("--tau-max", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("predict", help="prediction curves on a tau grid as CSV")
    rng(p, 10**12, 10**7)
    p.add_argument("--tau-min", type=float, default=dens.TAU_MIN)
    p.add_argument("--tau-max", type=float, default=4.4)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--curves", default=None, help="comma-separated subset of " + ",".join(pl.PREDICT_COLUMNS))
    p.add_argument("--variant", choices=dens.RATIOS_VARIANTS, default="derived")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("integral-check", help="excision table for the test-function integral")
    rng(p, 10**12, 10**7)
    p.add_argument("--sigma", type=float, default=0.4)
    p.add_argument("--variant", choices=dens.RATIOS_VARIANTS, default="derived")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_integral_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except pl.CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
