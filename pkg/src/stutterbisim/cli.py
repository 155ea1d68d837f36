"""Command-line front end.

Exit codes: 0 success, 1 unreadable input or bad arguments, 2 equivalence
does not fit the input format, 3 naive engine size cap exceeded, 4 state id
out of range, 10 states not equivalent.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .bench import (SEQUENCE_SIZES, TREE_DEPTHS, csv_writer, doubling_ratios, files_suite,
                    run_bench, sequence_suite, tree_suite)
from .equiv import (METRICS_FIELDS, Equivalence, EquivalenceMismatch, InvalidStateError,
                    NaiveCapExceeded, check_state, compare, metrics_row, timed_reduce)
from .generate import SHAPES, GenSpec
from .model import FormatError, read_system, write_system

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MISMATCH = 2
EXIT_CAP = 3
EXIT_BAD_ID = 4
EXIT_NOT_EQUIVALENT = 10

EQ_CHOICES = ("dbs", "stutter", "stuttering", "branching", "branching-div", "branching-divergence")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


class UsageError(Exception):
    pass


def _load(path: str):
    data = sys.stdin.buffer.read() if path == "-" else Path(path).read_bytes()
    return read_system(data)


def _emit(data: bytes, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(path).write_bytes(data)


def cmd_reduce(args) -> int:
    system = _load(args.input)
    result, seconds = timed_reduce(system, args.eq, args.engine, args.naive_cap, record=bool(args.trace))
    _emit(write_system(result.quotient), args.out)
    report = sys.stderr if args.out in (None, "-") else sys.stdout
    print(f"{result.n_classes} classes", file=report)
    if args.metrics:
        with open(args.metrics, "w", encoding="utf-8") as fh:
            csv_writer(fh, METRICS_FIELDS).writerow(metrics_row(Path(args.input).stem, system, result, seconds))
    if args.trace:
        Path(args.trace).write_text("".join(line + "\n" for line in result.stats.trace), encoding="utf-8")
    return EXIT_OK


def cmd_compare(args) -> int:
    system = _load(args.input)
    check_state(system, args.s)
    check_state(system, args.t)
    same = compare(system, args.eq, args.s, args.t, args.engine, args.naive_cap)
    print("equivalent" if same else "not-equivalent")
    return EXIT_OK if same else EXIT_NOT_EQUIVALENT


def cmd_gen(args) -> int:
    try:
        spec = GenSpec(args.shape, args.size, args.seed, args.density, args.labels, args.tau_density)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(write_system(spec.build()), args.out)
    return EXIT_OK


def _int_list(raw: Optional[str]) -> Optional[list[int]]:
    if raw is None:
        return None
    try:
        return [int(x) for x in raw.split(",") if x]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {raw!r}") from None


def cmd_bench(args) -> int:
    suite = args.suite[0]
    sizes = _int_list(args.sizes)
    if suite == "sequence" and len(args.suite) == 1:
        instances = sequence_suite(sizes or SEQUENCE_SIZES)
    elif suite == "tree" and len(args.suite) == 1:
        instances = tree_suite(sizes or TREE_DEPTHS)
    elif suite == "files" and len(args.suite) == 2:
        if not Path(args.suite[1]).is_dir():
            raise UsageError(f"not a directory: {args.suite[1]}")
        instances = files_suite(Path(args.suite[1]), args.eq)
    else:
        raise UsageError("--suite takes 'sequence', 'tree' or 'files DIR'")
    engines = [e for e in args.engines.split(",") if e]
    bad = [e for e in engines if e not in ("fast", "naive")]
    if bad or not engines:
        raise UsageError(f"unknown engine(s): {', '.join(bad) or '(none)'}")

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv_writer(out)

        def on_row(row):
            writer.writerow(row)
            out.flush()

        rows = run_bench(instances, engines, args.repeat, args.naive_cap, on_row)
    finally:
        if args.out:
            out.close()
    if suite in ("sequence", "tree"):
        for engine in engines:
            for a, b, ratio in doubling_ratios(rows, engine):
                print(f"ratio {engine} {a} {b} {ratio:.3f}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stutterbisim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def reduce_flags(p):
        p.add_argument("--eq", required=True, choices=EQ_CHOICES)
        p.add_argument("--engine", default="fast", choices=("fast", "naive"))
        p.add_argument("--in", dest="input", required=True, metavar="FILE", help="input system, '-' for stdin")
        p.add_argument("--naive-cap", type=int, default=None,
                       help="largest state count the naive engine accepts (default: env or 10000)")

    p = sub.add_parser("reduce", help="minimize a system")
    reduce_flags(p)
    p.add_argument("--out", metavar="FILE", help="quotient output, stdout by default")
    p.add_argument("--metrics", metavar="FILE", help="write a one-row CSV with sizes and timing")
    p.add_argument("--trace", metavar="FILE", help="write one line per refinement episode (fast engine)")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("compare", help="decide whether two states are equivalent")
    reduce_flags(p)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen", help="generate an instance")
    p.add_argument("shape", choices=SHAPES)
    p.add_argument("size", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density", type=float, default=2.0, help="expected out-degree of random shapes")
    p.add_argument("--labels", type=int, default=2, help="propositions (Kripke) or visible actions (LTS)")
    p.add_argument("--tau-density", type=float, default=0.4)
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="time reductions and print CSV rows")
    p.add_argument("--suite", nargs="+", required=True, metavar="SUITE",
                   help="'sequence', 'tree' or 'files DIR'")
    p.add_argument("--engines", default="fast")
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--sizes", help="comma-separated sizes (sequence) or depths (tree)")
    p.add_argument("--eq", default="branching", choices=EQ_CHOICES, help="equivalence for the files suite")
    p.add_argument("--naive-cap", type=int, default=None)
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "eq", None) is not None:
        args.eq = Equivalence.parse(args.eq)
    try:
        return args.func(args)
    except (FormatError, UnicodeDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EquivalenceMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except ValueError as exc:
        # reserved action names in divergence-sensitive mode
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NaiveCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except InvalidStateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_ID


if __name__ == "__main__":
    sys.exit(main())
