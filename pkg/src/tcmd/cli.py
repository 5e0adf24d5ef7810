"""``tcmd``: command-line access to the normalizer, the projective lab and PGLDf.

Exit status is 0 when a comparison finds the inputs equal (or a command
succeeds), 1 when they differ, and 2 on any input or engine error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .engine import DEFAULT_FUEL, Normalizer, normalize_traced
from .errors import TcmdError
from .pgldf import beh_eq_up_to, eliminate_jump_chains, extract, parse_program, render_program, run
from .projective import DEFAULT_DEPTH, Lab, NotEqualAt, distance
from .services import ServiceRegistry, load_environment, md_dump
from .syntax import parse_term
from .terms import Term

EXIT_EQUAL, EXIT_DIFFER, EXIT_ERROR = 0, 1, 2


def _nat(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a natural number, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def _capacity(text: str) -> int | None:
    return None if text == "unlimited" else _nat(text)


def _read_term(path: str) -> Term:
    return parse_term(Path(path).read_text())


def _registry(*paths: str) -> ServiceRegistry:
    base = Path(paths[0]).resolve().parent if paths else None
    return ServiceRegistry(base_dir=base)


def _lab(args, *paths: str) -> Lab:
    return Lab(_registry(*paths), args.fuel)


def cmd_normalize(args) -> int:
    t = _read_term(args.file)
    reg = _registry(args.file)
    if args.trace:
        result, trace = normalize_traced(t, registry=reg, fuel=args.fuel)
        if trace.steps:
            print(trace)
    else:
        result = Normalizer(reg, args.fuel).normalize(t)
    print(result)
    return EXIT_EQUAL


def cmd_project(args) -> int:
    t = _read_term(args.file)
    reg = _registry(args.file)
    if args.trace:
        result, trace = normalize_traced(t, mode="project", n=args.depth, registry=reg, fuel=args.fuel)
        if trace.steps:
            print(trace)
    else:
        result = Normalizer(reg, args.fuel).proj_normalize(args.depth, t)
    print(result)
    return EXIT_EQUAL


def cmd_eq(args) -> int:
    p, q = _read_term(args.left), _read_term(args.right)
    outcome = _lab(args, args.left).aip_refute(p, q, args.depth)
    if isinstance(outcome, NotEqualAt):
        print(f"differ at depth {outcome.depth}")
        return EXIT_DIFFER
    print(f"equal up to depth {args.depth}")
    return EXIT_EQUAL


def cmd_refute(args) -> int:
    p, q = _read_term(args.left), _read_term(args.right)
    outcome = _lab(args, args.left).aip_refute(p, q, args.depth)
    if isinstance(outcome, NotEqualAt):
        print(f"not equal: witness depth {outcome.depth}")
        return EXIT_DIFFER
    print(f"undistinguished up to depth {outcome.depth}")
    return EXIT_EQUAL


def cmd_fix(args) -> int:
    body = _read_term(args.file)
    seq = _lab(args, args.file).fix_approx(args.var, body, args.depth)
    print(seq.dump())
    return EXIT_EQUAL


def cmd_distance(args) -> int:
    lab = _lab(args, args.left)
    p = lab.embed(_read_term(args.left), args.depth)
    q = lab.embed(_read_term(args.right), args.depth)
    d = distance(p, q)
    print(d)
    return EXIT_EQUAL if d.below_resolution else EXIT_DIFFER


def cmd_extract(args) -> int:
    print(extract(parse_program(Path(args.program).read_text())))
    return EXIT_EQUAL


def cmd_run(args) -> int:
    program = parse_program(Path(args.program).read_text())
    env = load_environment(args.env)
    result = run(program, capacity=args.capacity, env=env, max_steps=args.max_steps, poll_this=args.poll_this)
    for line in result.trace_lines():
        print(line)
    print(f"outcome: {result.outcome}")
    print(json.dumps(md_dump(result.state), indent=2, sort_keys=True))
    return EXIT_EQUAL


def cmd_chain_elim(args) -> int:
    print(render_program(eliminate_jump_chains(parse_program(Path(args.program).read_text()))))
    return EXIT_EQUAL


def cmd_beh_eq(args) -> int:
    p = parse_program(Path(args.left).read_text())
    q = parse_program(Path(args.right).read_text())
    lab = _lab(args)
    for n in range(args.depth + 1):
        if not beh_eq_up_to(n, p, q, lab):
            print(f"differ at depth {n}")
            return EXIT_DIFFER
    print(f"equal up to depth {args.depth}")
    return EXIT_EQUAL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--fuel", type=_nat, default=DEFAULT_FUEL, help="rewrite-step budget")
    depth = argparse.ArgumentParser(add_help=False)
    depth.add_argument("-n", "--depth", type=_nat, default=DEFAULT_DEPTH, help="projection depth")
    trace = argparse.ArgumentParser(add_help=False)
    trace.add_argument("--trace", action="store_true", help="print every axiom application")

    parser = argparse.ArgumentParser(prog="tcmd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", parents=[common, trace], help="normalize a term to a basic term")
    p.add_argument("file")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("project", parents=[common, depth, trace], help="normalize the n-th projection")
    p.add_argument("file")
    p.set_defaults(func=cmd_project)

    for name, func, text in (
        ("eq", cmd_eq, "compare two terms at all depths up to n"),
        ("refute", cmd_refute, "search for a depth that distinguishes two terms"),
        ("distance", cmd_distance, "distance between two terms at resolution n"),
    ):
        p = sub.add_parser(name, parents=[common, depth], help=text)
        p.add_argument("left")
        p.add_argument("right")
        p.set_defaults(func=func)

    p = sub.add_parser("fix", parents=[common, depth], help="approximate a guarded fixed point")
    p.add_argument("var")
    p.add_argument("file", help="file holding the body")
    p.set_defaults(func=cmd_fix)

    p = sub.add_parser("extract", help="extract the thread of a program")
    p.add_argument("program")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("run", help="run a program against a molecular-dynamics service")
    p.add_argument("program")
    p.add_argument("--capacity", type=_capacity, default=None, help="atom capacity, or 'unlimited'")
    p.add_argument("--env", default="alltrue", help="alltrue, script:FILE or table:FILE")
    p.add_argument("--max-steps", type=_nat, default=10_000)
    p.add_argument("--poll-this", action="store_true", help="let forked threads poll the start flag via 'this'")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("chain-elim", help="eliminate jump chains")
    p.add_argument("program")
    p.set_defaults(func=cmd_chain_elim)

    p = sub.add_parser("beh-eq", parents=[common, depth], help="compare two programs behaviourally up to n")
    p.add_argument("left")
    p.add_argument("right")
    p.set_defaults(func=cmd_beh_eq)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TcmdError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    except (OSError, ValueError, RecursionError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
