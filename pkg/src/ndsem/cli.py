"""Command-line front end: ``ndsem <command> [options]``.

Exit codes: 0 for a converging or passing verdict, 1 for a refuted or
failing one, 2 when evaluation ran out of fuel, 3 for usage errors and 4 for
parse or type errors.  Every option can be preset through an ``NDSEM_*``
environment variable (``NDSEM_MODE``, ``NDSEM_FUEL``, ``NDSEM_NAT_BOUND``,
``NDSEM_K``, ``NDSEM_SEED``, ``NDSEM_JSON``, ``NDSEM_TRACE``,
``NDSEM_BUDGET_STATES``, ``NDSEM_BUDGET_CARRIER``, ``NDSEM_BUDGET_RAW``).
"""

from __future__ import annotations

import argparse
import inspect
import json
import os
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from . import biorder as bo
from . import denot, ocds, suites
from .opsem import Converges, EvalConfig, FuelExhausted, StuckTerm, evaluate, replay
from .syntax import (
    SyntaxError_, Term, TypeCheckError, TypeExpr, builtin_corpus, corpus_defs, parse_term,
    parse_type, pretty, typecheck, type_str,
)

EXIT_OK, EXIT_FAIL, EXIT_FUEL, EXIT_USAGE, EXIT_INPUT = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class InputError(Exception):
    """Bad term, type or ocds text."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:   # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _env(name: str, default: Any, cast=str) -> Any:
    raw = os.environ.get("NDSEM_" + name)
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError:
        sys.stderr.write(f"ignoring bad NDSEM_{name}={raw!r}\n")
        return default


def _flag(raw: str) -> bool:
    return raw.strip().lower() in ("1", "true", "yes", "on")


# ------------------------------------------------------------------ inputs

def _read(arg: str) -> str:
    if arg.startswith("@"):
        try:
            return Path(arg[1:]).read_text()
        except OSError as e:
            raise InputError(f"cannot read {arg[1:]}: {e.strerror}") from None
    return arg


def load_term(arg: str) -> Term:
    """A corpus name, ``@file`` or inline term text."""
    corpus = builtin_corpus()
    if arg in corpus:
        return corpus[arg][0]
    try:
        return parse_term(_read(arg).strip(), corpus_defs())
    except SyntaxError_ as e:
        raise InputError(f"parse error: {e}") from None


def load_type(arg: str) -> TypeExpr:
    try:
        return parse_type(_read(arg).strip())
    except SyntaxError_ as e:
        raise InputError(f"parse error: {e}") from None


def load_ocds(arg: str) -> ocds.Ocds:
    text = _read(arg).strip()
    try:
        if text.startswith("{"):
            return ocds.ocds_from_json(text)
        return ocds.parse_ocds(text)
    except (ValueError, KeyError, SyntaxError_) as e:
        raise InputError(f"bad ocds: {e}") from None


def checked_type(t: Term) -> TypeExpr:
    try:
        return typecheck({}, t)
    except TypeCheckError as e:
        raise InputError(f"type error: {e}") from None


# ------------------------------------------------------------------ report

def _strip_timing(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if k != "seconds"}
    if isinstance(obj, (list, tuple)):
        return [_strip_timing(v) for v in obj]
    return obj


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = [_jsonable(v) for v in obj]
        return sorted(items, key=repr) if isinstance(obj, (set, frozenset)) else items
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return str(obj)


class RunReport:
    """What a command prints under ``--json``: the command line, the
    configuration, the verdicts and optionally the wall time."""

    def __init__(self, args: argparse.Namespace, argv: Sequence[str]):
        self.command = args.command
        self.argv = list(argv)
        self.config = {
            "mode": args.mode, "fuel": args.fuel, "nat_bound": args.nat_bound, "k": args.k,
            "seed": args.seed,
            "budgets": {"states": args.budget_states, "carrier": args.budget_carrier,
                        "raw": args.budget_raw},
        }
        self.result: dict = {}
        self.verdict = "ok"
        self.exit_code = EXIT_OK
        self.lines: list[str] = []
        self.seconds = 0.0

    def say(self, line: str = "") -> None:
        self.lines.append(line)

    def to_json(self, timing: bool) -> dict:
        out = {"command": self.command, "argv": self.argv, "config": self.config,
               "verdict": self.verdict, "exit_code": self.exit_code,
               "result": _jsonable(self.result)}
        if timing:
            out["seconds"] = round(self.seconds, 3)
        else:
            out = _strip_timing(out)
        return out


def _verdict(rep: RunReport, ok: bool) -> None:
    rep.verdict = "ok" if ok else "failed"
    rep.exit_code = EXIT_OK if ok else EXIT_FAIL


def _cfg(args: argparse.Namespace) -> EvalConfig:
    return EvalConfig(fuel=args.fuel, nat_bound=args.nat_bound)


def _modes(args: argparse.Namespace) -> list[str]:
    return ["may", "must"] if args.mode == "both" else [args.mode]


# ---------------------------------------------------------------- commands

def cmd_parse(args, rep: RunReport) -> None:
    t = load_term(args.term)
    rep.result = {"term": pretty(t)}
    rep.say(pretty(t))


def cmd_typecheck(args, rep: RunReport) -> None:
    t = load_term(args.term)
    T = checked_type(t)
    rep.result = {"term": pretty(t), "type": type_str(T)}
    rep.say(type_str(T))


def cmd_eval(args, rep: RunReport) -> None:
    t = load_term(args.term)
    T = checked_type(t)
    if type_str(T) != "o":
        raise InputError(f"eval needs a program of type o, got {type_str(T)}")
    rows = {}
    codes = []
    for mode in _modes(args):
        try:
            out = evaluate(t, mode, _cfg(args))
        except StuckTerm as e:
            raise InputError(str(e)) from None
        row: dict = {"outcome": out.name}
        if args.trace and getattr(out, "witness", None) is not None:
            steps = list(replay(t, out.witness.choices, args.nat_bound))
            row["trace"] = [[label, pretty(u)] for label, u in steps]
        rows[mode] = row
        codes.append(EXIT_OK if isinstance(out, Converges)
                     else EXIT_FUEL if isinstance(out, FuelExhausted) else EXIT_FAIL)
        rep.say(f"{mode}: {out.name}  (fuel {args.fuel}, nat-bound {args.nat_bound})")
        for label, u in row.get("trace", []):
            rep.say(f"  {label:>4}  {u}")
    rep.result = {"term": pretty(t), "outcomes": rows}
    rep.exit_code = max(codes)
    rep.verdict = " ".join(r["outcome"] for r in rows.values())


def cmd_denote(args, rep: RunReport) -> None:
    t = load_term(args.term)
    checked_type(t)
    rows = {}
    for mode in _modes(args):
        try:
            d = denot.denote_term(t, mode=mode, k=args.k)
        except denot.TruncationOverflow as e:
            raise UsageError(f"denotation leaves the truncated model (try a larger --k): {e}") from None
        B = d.type_biorder
        row = {"type": type_str(d.typ), "index": d.value, "label": d.label(), "size": B.size}
        if args.export:
            row["biorder"] = bo.biorder_to_json(B)
        rows[mode] = row
        rep.say(f"{mode}: {d.label()}  (element {d.value} of {B.size} in [{type_str(d.typ)}], k={args.k})")
    rep.result = {"term": pretty(t), "denotations": rows}


def cmd_equiv(args, rep: RunReport) -> None:
    s, t = load_term(args.left), load_term(args.right)
    checked_type(s), checked_type(t)
    rows = {}
    for mode in _modes(args):
        try:
            rows[mode] = denot.relation(s, t, mode, args.k)
        except TypeError as e:
            raise InputError(str(e)) from None
        rep.say(f"{mode}: {rows[mode]}")
    rep.result = {"left": pretty(s), "right": pretty(t), "relations": rows}
    _verdict(rep, all(r == "≃" for r in rows.values()))
    rep.verdict = " ".join(rows.values())


def cmd_check_adequacy(args, rep: RunReport) -> None:
    out = suites.adequacy(max_size=args.max_size, random_programs=args.random, seed=args.seed,
                          k=args.k, fuel=args.fuel)
    rep.result = out
    _verdict(rep, out["ok"])
    for mode, row in out.get("modes", {}).items():
        rep.say(f"{mode}: {row}")
    rep.say(f"adequacy: {rep.verdict}")


def cmd_check_retractions(args, rep: RunReport) -> None:
    out = suites.retractions(k=args.k, include_merge=not args.skip_merge)
    rep.result = out
    _verdict(rep, out["ok"])
    for row in out["cases"]:
        rep.say(f"{row['name']:<22} {row['mode']:<5} elements={row['elements']:<5} "
                f"K={row['K']:<3} {'ok' if row['ok'] else 'FAILED'}")


def cmd_enumerate_functions(args, rep: RunReport) -> None:
    if args.sigma is not None:
        F = bo.function_space(bo.sigma_power(args.sigma), bo.sigma(), args.budget_raw)
        name = f"[Σ^{args.sigma}, Σ]"
    else:
        if not args.type:
            raise UsageError("give a type or --sigma N")
        T = load_type(args.type)
        try:
            F = denot.denote_type(T, args.mode if args.mode != "both" else "must", args.k,
                                  args.budget_carrier)
        except bo.BudgetExceeded as e:
            raise UsageError(f"carrier budget exceeded: {e}") from None
        name = f"[{type_str(T)}]"
    rep.result = {"space": name, "size": F.size, "labels": list(F.labels)}
    if args.export:
        rep.result["biorder"] = bo.biorder_to_json(F)
    rep.say(f"{name}: {F.size} elements")
    for i, lab in enumerate(F.labels):
        rep.say(f"  {i:>4}  {lab}")


def cmd_ocds_exp(args, rep: RunReport) -> None:
    A, B = load_ocds(args.source), load_ocds(args.target)
    E = ocds.exponential(A, B, args.budget_states)
    rep.result = ocds.ocds_to_json(E)
    rep.say(f"{E.name}: {len(E.cells)} cells, {len(E.events)} events, {len(E.initial)} initial")
    for c in ocds._sorted(E.cells):
        vals = sorted(ocds.fmt(v) for (d, v) in E.events if d == c)
        rep.say(f"  {ocds.fmt(c)}: {', '.join(vals)}")


def cmd_ocds_enum(args, rep: RunReport) -> None:
    A = load_ocds(args.ocds)
    try:
        D = ocds.enumerate_states(A, args.filter, args.budget_states)
    except bo.BudgetExceeded as e:
        raise UsageError(f"state budget exceeded: {e}") from None
    rows = ocds.hasse_rows(D) if args.hasse else [D]
    rep.result = {"ocds": A.name, "filter": args.filter, "count": len(D),
                  "states": [[ocds.show_events(A, x.events) for x in row] for row in rows]}
    rep.say(f"{A.name}: {len(D)} {args.filter} states")
    for i, row in enumerate(rows):
        prefix = f"  row {i}: " if args.hasse else "  "
        for x in row:
            rep.say(prefix + ocds.show_events(A, x.events))


def _function_of_term(t: Term, k: int) -> tuple[ocds.Ocds, ocds.Ocds, dict]:
    """The denotation of ``t : S → P`` as a map between states of the ocds."""
    T = checked_type(t)
    if not hasattr(T, "domain"):
        raise InputError(f"need a function type, got {type_str(T)}")
    try:
        dom, cod = ocds.bridge(T.domain, k), ocds.bridge(T.codomain, k)
    except ValueError as e:
        raise InputError(str(e)) from None
    d = denot.denote_term(t, mode="must", k=k)
    table = {dom.state_of(a).events: cod.state_of(b) for a, b in zip(dom.model_keys, d.key)}
    return dom.ocds, cod.ocds, table


def cmd_ocds_strat(args, rep: RunReport) -> None:
    t = load_term(args.term)
    A, B, table = _function_of_term(t, args.k)
    sigma = ocds.strat(table, A, B)
    E = sigma.owner
    rep.result = {"term": pretty(t), "algorithm": ocds.state_to_json(sigma),
                  "shown": ocds.show_events(E, sigma.events)}
    rep.say(ocds.show_events(E, sigma.events))


def cmd_ocds_fun(args, rep: RunReport) -> None:
    if args.ocds:
        E = load_ocds(args.ocds)
        if not E.source:
            raise InputError("--ocds must be an exponential A => B")
        try:
            sigma = ocds.state_from_json(E, _read(args.algorithm))
        except (ValueError, KeyError) as e:
            raise InputError(f"bad algorithm: {e}") from None
    else:
        t = load_term(args.algorithm)
        T = checked_type(t)
        try:
            sigma = ocds.bridge(T, args.k).state_of(denot.denote_term(t, mode="must", k=args.k).key)
        except (ValueError, AttributeError) as e:
            raise InputError(str(e)) from None
        E = sigma.owner
    A = E.source
    rows = []
    for x in ocds.states(A):
        y = ocds.fun(sigma, x)
        rows.append([ocds.show_events(A, x.events), ocds.show_events(y.owner, y.events)])
        rep.say(f"  {rows[-1][0]}  ↦  {rows[-1][1]}")
    rep.result = {"ocds": E.name, "table": rows}


def cmd_ocds_roundtrip(args, rep: RunReport) -> None:
    A, B = load_ocds(args.source), load_ocds(args.target)
    r = ocds.check_iso(A, B, args.budget_states)
    rep.result = r.to_json()
    _verdict(rep, r.ok)
    rep.say(json.dumps(_jsonable(_strip_timing(rep.result)), ensure_ascii=False, indent=2))


def cmd_suite(args, rep: RunReport) -> None:
    fn = suites.SUITES[args.name]
    params = inspect.signature(fn).parameters
    wanted = {
        "k": args.k, "seed": args.seed, "fuel": args.fuel_override,
        "preset": args.preset, "ns": tuple(range(1, args.n + 1)) if args.n else None,
        "max_size": args.max_size, "random_programs": args.random,
    }
    kwargs = {name: v for name, v in wanted.items() if v is not None and name in params}
    out = fn(**kwargs)
    rep.result = out
    _verdict(rep, bool(out.get("ok")))
    if args.name == "hierarchy":
        rep.say(f"{out['states']} states in {out['rows_count']} rows (extensional order, bottom first)")
        for i, row in enumerate(out["rows"]):
            rep.say(f"  row {i}: " + "   ".join(row))
    else:
        rep.say(json.dumps(_jsonable(_strip_timing(out)), ensure_ascii=False, indent=2))
    rep.say(f"suite {args.name}: {rep.verdict}")


def cmd_corpus(args, rep: RunReport) -> None:
    corpus = builtin_corpus()
    if args.name:
        if args.name not in corpus:
            raise UsageError(f"no corpus entry {args.name!r}")
        t, T = corpus[args.name]
        rep.result = {"name": args.name, "type": type_str(T), "term": pretty(t)}
        rep.say(f"{args.name} : {type_str(T)} = {pretty(t)}")
        return
    rep.result = {"entries": {n: type_str(T) for n, (_, T) in corpus.items()}}
    for n, (_, T) in corpus.items():
        rep.say(f"{n} : {type_str(T)}")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("configuration")
    g.add_argument("--mode", choices=["may", "must", "both"], default=_env("MODE", "must"))
    g.add_argument("--fuel", type=int, default=_env("FUEL", 200, int),
                   help="branching points allowed along one path")
    g.add_argument("--nat-bound", type=int, default=_env("NAT_BOUND", 3, int),
                   help="numerals offered by ?N during evaluation")
    g.add_argument("--k", type=int, default=_env("K", 3, int),
                   help="truncation of the naturals in the model")
    g.add_argument("--seed", type=int, default=_env("SEED", 7, int))
    g.add_argument("--budget-states", type=int, default=_env("BUDGET_STATES", 10**6, int))
    g.add_argument("--budget-carrier", type=int, default=_env("BUDGET_CARRIER", 10**6, int))
    g.add_argument("--budget-raw", type=int, default=_env("BUDGET_RAW", 10**6, int),
                   help="cap on raw candidate tables during function-space search")
    g.add_argument("--json", action="store_true", default=_env("JSON", False, _flag))
    g.add_argument("--timing", action="store_true", default=_env("TIMING", False, _flag),
                   help="include wall times in JSON output")
    g.add_argument("--trace", action="store_true", default=_env("TRACE", False, _flag),
                   help="print the reduction path behind an eval verdict")

    p = _Parser(prog="ndsem", description="Semantics toolkit for a nondeterministic lambda calculus.")
    p.add_argument("--version", action="version", version=f"ndsem {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, fn, help: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, parents=[common], help=help)
        sp.set_defaults(fn=fn)
        return sp

    add("parse", cmd_parse, "parse and pretty-print a term").add_argument("term")
    add("typecheck", cmd_typecheck, "print the type of a term").add_argument("term")
    add("eval", cmd_eval, "may or must evaluation of a program of type o").add_argument("term")
    sp = add("denote", cmd_denote, "denotation of a term as a model element")
    sp.add_argument("term")
    sp.add_argument("--export", action="store_true", help="include the type's biorder")
    sp = add("equiv", cmd_equiv, "observational relation of two terms")
    sp.add_argument("left")
    sp.add_argument("right")
    sp = add("check-adequacy", cmd_check_adequacy, "evaluation against denotation on many programs")
    sp.add_argument("--max-size", type=int, default=8)
    sp.add_argument("--random", type=int, default=500, help="number of seeded random programs")
    sp = add("check-retractions", cmd_check_retractions, "definable retractions as identities")
    sp.add_argument("--skip-merge", action="store_true")
    sp = add("enumerate-functions", cmd_enumerate_functions, "list the elements of a type")
    sp.add_argument("type", nargs="?")
    sp.add_argument("--sigma", type=int, help="enumerate [Σ^N, Σ] instead")
    sp.add_argument("--export", action="store_true")
    sp = add("ocds-exp", cmd_ocds_exp, "build the exponential of two ocds")
    sp.add_argument("source")
    sp.add_argument("target")
    sp = add("ocds-enum", cmd_ocds_enum, "enumerate states of an ocds")
    sp.add_argument("ocds")
    sp.add_argument("--filter", default="all",
                    choices=["all", "total", "finite_branching", "finitely_safe", "complete"])
    sp.add_argument("--hasse", action="store_true", help="group by extensional Hasse rows")
    sp = add("ocds-fun", cmd_ocds_fun, "apply a sequential algorithm to every argument state")
    sp.add_argument("algorithm", help="a term, or algorithm JSON when --ocds is given")
    sp.add_argument("--ocds", help="the exponential the algorithm lives in")
    add("ocds-strat", cmd_ocds_strat, "sequential algorithm of a term's denotation").add_argument("term")
    sp = add("ocds-roundtrip", cmd_ocds_roundtrip, "check fun and strat are inverse isomorphisms")
    sp.add_argument("source")
    sp.add_argument("target")
    sp = add("suite", cmd_suite, "run a named experiment")
    sp.add_argument("name", choices=sorted(suites.SUITES))
    sp.add_argument("--n", type=int, help="largest arity for function-space suites")
    sp.add_argument("--preset", choices=["tiny", "full"])
    sp.add_argument("--max-size", type=int)
    sp.add_argument("--random", type=int)
    sp.add_argument("--suite-fuel", dest="fuel_override", type=int,
                    help="fuel for suites that evaluate (default: the suite's own)")
    add("corpus", cmd_corpus, "list named terms or show one").add_argument("name", nargs="?")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    rep = RunReport(args, argv)
    t0 = time.perf_counter()
    try:
        if args.fuel < 0 or args.nat_bound < 1 or args.k < 1:
            raise UsageError("--fuel must be >= 0, --nat-bound and --k must be >= 1")
        args.fn(args, rep)
    except InputError as e:
        rep.verdict, rep.exit_code = "input-error", EXIT_INPUT
        rep.result = {"error": str(e)}
        rep.lines = []
        sys.stderr.write(f"ndsem: {e}\n")
    except (UsageError, bo.BudgetExceeded) as e:
        rep.verdict, rep.exit_code = "usage-error", EXIT_USAGE
        rep.result = {"error": str(e)}
        rep.lines = []
        sys.stderr.write(f"ndsem: {e}\n")
    rep.seconds = time.perf_counter() - t0
    if args.json:
        print(json.dumps(rep.to_json(args.timing), ensure_ascii=False, sort_keys=True, indent=2))
    else:
        for line in rep.lines:
            print(line)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
