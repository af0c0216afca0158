"""``spic``: parse, typecheck, run, explore and check synchronous pi-calculus modules.

Exit codes: 0 success, 1 check or typecheck failure, 2 usage or parse
error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from typing import Optional

from spic import harness
from spic.parser import ParseError, dump_module, parse_source, pretty_module
from spic.semantics import run
from spic.typecheck import check_module

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

CHECKS = ("sr", "confluence", "eoi", "determinacy", "obligations")


class UsageError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get("SPIC_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SPIC_SEED must be an integer, got {raw!r}") from None


def corpus_names() -> list:
    root = resources.files("spic") / "corpus"
    out = []
    for entry in root.iterdir():
        if entry.name.endswith(".spi"):
            out.append(entry.name[:-4])
    neg = root / "negative"
    for entry in neg.iterdir():
        if entry.name.endswith(".spi"):
            out.append("negative/" + entry.name[:-4])
    return sorted(out)


def read_input(args) -> tuple:
    """Source text and a display name, from a path, ``corpus:NAME`` or stdin."""
    if args.stdin:
        if args.file:
            raise UsageError("give either a file or --stdin, not both")
        return sys.stdin.read(), "<stdin>"
    if not args.file:
        raise UsageError("no input file (use a path, corpus:NAME or --stdin)")
    if args.file.startswith("corpus:"):
        name = args.file[len("corpus:"):]
        res = resources.files("spic") / "corpus" / f"{name}.spi"
        if not res.is_file():
            raise UsageError(f"no corpus module {name!r}; known: {', '.join(corpus_names())}")
        return res.read_text(encoding="utf-8"), args.file
    try:
        with open(args.file, encoding="utf-8") as fh:
            return fh.read(), args.file
    except OSError as exc:
        raise UsageError(f"cannot read {args.file}: {exc.strerror}") from None


def emit_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def load(args):
    text, name = read_input(args)
    return parse_source(text, name).module, name


def typecheck_or_report(module, name: str, args) -> Optional[int]:
    """None when the module may be executed, else the exit code after reporting."""
    if getattr(args, "unchecked", False):
        check_module(module)  # annotates what it can; errors are ignored
        return None
    result = check_module(module)
    if result.diagnostics:
        for d in result.diagnostics:
            print(f"{name}: {d}", file=sys.stderr)
        return EXIT_FAIL
    return None


# Subcommands -----------------------------------------------------------------


def cmd_parse(args) -> int:
    module, name = load(args)
    if args.json:
        emit_json({"file": name, "module": dump_module(module)})
    else:
        sys.stdout.write(pretty_module(module))
    return EXIT_OK


def cmd_typecheck(args) -> int:
    module, name = load(args)
    result = check_module(module)
    if args.json:
        emit_json(
            {
                "file": name,
                "ok": result.ok,
                "diagnostics": [d.to_record() for d in result.diagnostics],
                "obligations": [o.to_record() for o in result.obligations],
            }
        )
    else:
        for d in result.diagnostics:
            print(f"{name}: {d}")
        if result.ok:
            print(f"{name}: ok")
    return EXIT_OK if result.ok else EXIT_FAIL


def cmd_run(args) -> int:
    module, name = load(args)
    code = typecheck_or_report(module, name, args)
    if code is not None:
        return code
    seed = args.seed if args.seed is not None else default_seed()
    policy = args.policy or ("seeded" if args.seed is not None or os.environ.get("SPIC_SEED") else "leftmost")
    trace = run(
        module,
        args.instants,
        policy=policy,
        seed=seed,
        step_budget=args.budget,
        emit_states=args.emit_states,
        trace_tau=not args.instants_only,
    )
    sys.stdout.write(trace.to_jsonl())
    if trace.error:
        sys.stdout.write(json.dumps({"error": trace.error}, sort_keys=True) + "\n")
        return EXIT_FAIL
    return EXIT_OK


def cmd_explore(args) -> int:
    module, name = load(args)
    code = typecheck_or_report(module, name, args)
    if code is not None:
        return code
    rep = harness.explore(module, max_states=args.budget)
    if args.json:
        emit_json({"file": name, **rep.to_record()})
    else:
        print(rep.summary())
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_check(args) -> int:
    module, name = load(args)
    code = typecheck_or_report(module, name, args)
    if code is not None:
        return code
    seed = args.seed if args.seed is not None else default_seed()
    wanted = args.only or list(CHECKS)
    reports = []
    for check in wanted:
        if check == "sr":
            rep = harness.subject_reduction(module, max_depth=args.depth, max_states=args.budget, seed=seed)
        elif check == "confluence":
            rep = harness.confluence(module, max_states=args.budget, seed=seed)
        elif check == "eoi":
            rep = harness.eoi_determinacy(module, max_states=args.budget, seed=seed)
        elif check == "determinacy":
            rep = harness.whole_run(module, args.instants, budget=args.budget, seed=seed)
        else:
            rep = harness.check_obligations(module, seed=seed, samples=args.trials)
        reports.append(rep)
    ok = all(r.ok for r in reports)
    if args.json:
        emit_json({"file": name, "ok": ok, "seed": seed, "reports": [r.to_record() for r in reports]})
    else:
        for r in reports:
            print(r.summary())
    return EXIT_OK if ok else EXIT_FAIL


# Argument parsing ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spic", description=__doc__.splitlines()[0].replace("``", ""))
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, execute: bool = False):
        p.add_argument("file", nargs="?", help="module path, or corpus:NAME for a bundled module")
        p.add_argument("--stdin", action="store_true", help="read the module from standard input")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        if execute:
            p.add_argument("--unchecked", action="store_true", help="execute even if the module does not typecheck")

    p = sub.add_parser("parse", help="parse and pretty-print a module")
    common(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("typecheck", help="report typing diagnostics")
    common(p)
    p.set_defaults(func=cmd_typecheck)

    p = sub.add_parser("run", help="run the entry program and print a trace (JSON lines)")
    common(p, execute=True)
    p.add_argument("--instants", type=int, default=3)
    p.add_argument("--seed", type=int, default=None, help="seed for the seeded policy (default: SPIC_SEED or 0)")
    p.add_argument("--policy", choices=["leftmost", "seeded"], default=None)
    p.add_argument("--budget", type=int, default=100_000, help="tau steps allowed per instant")
    p.add_argument("--emit-states", action="store_true", help="include pretty-printed states in the trace")
    p.add_argument("--instants-only", action="store_true", help="omit tau steps from the trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("explore", help="enumerate reachable states of the closed program")
    common(p, execute=True)
    p.add_argument("--budget", type=int, default=20_000, help="maximum number of states")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("check", help="run the metatheory checks")
    common(p, execute=True)
    p.add_argument("--only", action="append", choices=CHECKS, help="run only this check (repeatable)")
    p.add_argument("--instants", type=int, default=2)
    p.add_argument("--depth", type=int, default=200, help="subject-reduction search depth")
    p.add_argument("--budget", type=int, default=20_000, help="state budget per check")
    p.add_argument("--trials", type=int, default=20, help="samples per obligation")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_check)
    return ap


def main(argv: Optional[list] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"spic: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        if getattr(args, "json", False):
            emit_json({"file": args.file or "<stdin>", "error": exc.to_record()})
        else:
            print(exc.describe(), file=sys.stderr)
        return EXIT_USAGE
    except RecursionError:
        print("spic: internal error: recursion limit exceeded", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort guard for the exit-code contract
        print(f"spic: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
