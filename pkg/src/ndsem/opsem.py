"""Fuel-bounded may and must evaluation of closed programs of type o.

Reduction is leftmost-outermost on the application spine.  Beta steps and
``Eq`` tests are deterministic and free; the only branching points are a
choice ``s + t``, an unfolding of ``Y``, and the numeral choice ``?N``.  Each
branching point costs one unit of fuel along the path that passes it.

A program converges when its head reaches ``Err``.  ``Omega`` is a stuck
term: it reduces only to itself, so a path that reaches it can never
converge and the evaluator refutes it immediately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from .syntax import (
    FF, TT, App, Bottom, Choice, Eq, Fix, Lam, NatChoice, Term, Top, apps, instantiate,
    numeral, numeral_value, pretty,
)


@dataclass(frozen=True)
class EvalConfig:
    fuel: int = 200
    nat_bound: int = 3
    loop_detection: bool = False

    def __post_init__(self):
        if self.fuel < 0:
            raise ValueError("fuel must be nonnegative")
        if self.nat_bound < 1:
            raise ValueError("nat_bound must be positive")


@dataclass(frozen=True)
class Witness:
    """A path through the branching points, plus the term it ends at."""
    choices: tuple[str, ...]
    final: Term

    def __str__(self) -> str:
        path = " ".join(self.choices) if self.choices else "(no branching)"
        return f"{path} => {pretty(self.final)}"


class EvalOutcome:
    name = "?"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Converges(EvalOutcome):
    witness: Witness | None = None
    name = "Converges"


@dataclass(frozen=True)
class Refuted(EvalOutcome):
    witness: Witness | None = None
    name = "Refuted"


@dataclass(frozen=True)
class FuelExhausted(EvalOutcome):
    name = "FuelExhausted"


class StuckTerm(Exception):
    """A closed term of type o whose head cannot reduce (ill-typed input)."""


def spine(t: Term) -> tuple[Term, list[Term]]:
    args = []
    while isinstance(t, App):
        args.append(t.arg)
        t = t.fn
    args.reverse()
    return t, args


def _eq_result(t: Eq) -> Term:
    m, n = numeral_value(t.lhs), numeral_value(t.rhs)
    if m is None or n is None:
        raise StuckTerm(f"Eq on non-numerals: {pretty(t)}")
    return TT if m == n else FF


def step(t: Term, nat_bound: int = 3) -> set[Term]:
    """All one-step leftmost-outermost reducts.

    ``Err`` and lambda values have none; ``Omega`` steps to itself.
    """
    return {r for _, r in _branches(t, nat_bound)}


def _branches(t: Term, nat_bound: int) -> list[tuple[str, Term]]:
    head, args = spine(t)
    match head:
        case Top():
            return []
        case Bottom():
            return [("Ω", t)]
        case Lam(_, _, body):
            if not args:
                return []
            return [("β", apps(instantiate(body, args[0]), *args[1:]))]
        case Choice(l, r):
            return [("L", apps(l, *args)), ("R", apps(r, *args))]
        case Fix():
            if not args:
                return []
            f = args[0]
            return [("Y", apps(f, App(head, f), *args[1:]))]
        case NatChoice():
            if not args:
                return []
            f = args[0]
            return [(f"n={n}", apps(f, numeral(n), *args[1:])) for n in range(nat_bound)]
        case Eq():
            return [("Eq", apps(_eq_result(head), *args))]
    raise StuckTerm(f"cannot reduce {pretty(t)}")


_CONV, _REF, _EXH = 0, 1, 2


def _normalize(t: Term) -> Term:
    """Run the free deterministic steps (beta and Eq) until a branching point."""
    while True:
        head, args = spine(t)
        if isinstance(head, Lam) and args:
            t = apps(instantiate(head.body, args[0]), *args[1:])
        elif isinstance(head, Eq):
            t = apps(_eq_result(head), *args)
        else:
            return t


class _Search:
    def __init__(self, must: bool, cfg: EvalConfig):
        self.must = must
        self.cfg = cfg
        self.memo: dict[tuple[Term, int], tuple[int, tuple[str, ...]]] = {}
        self.on_path: set[Term] = set()

    def run(self, t: Term, fuel: int) -> tuple[int, tuple[str, ...]]:
        t = _normalize(t)
        head, args = spine(t)
        if isinstance(head, Top):
            return _CONV, ()
        if isinstance(head, Bottom):
            return _REF, ()
        key = (t, fuel)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        if self.cfg.loop_detection and t in self.on_path:
            return _REF, ("loop",)
        branches = _branches(t, self.cfg.nat_bound)
        if not branches:
            raise StuckTerm(f"no reduction for {pretty(t)}")
        if fuel == 0:
            return _EXH, ()
        self.on_path.add(t)
        results = []
        try:
            for label, child in branches:
                verdict, path = self.run(child, fuel - 1)
                results.append((verdict, (label,) + path))
                # short-circuit on a decisive branch
                if self.must and verdict == _REF or not self.must and verdict == _CONV:
                    break
        finally:
            self.on_path.discard(t)
        out = self._combine(results)
        if not (self.cfg.loop_detection and "loop" in out[1]):
            self.memo[key] = out
        return out

    def _combine(self, results: list) -> tuple[int, tuple[str, ...]]:
        decisive = _REF if self.must else _CONV
        other = _CONV if self.must else _REF
        for v, p in results:
            if v == decisive:
                return v, p
        for v, p in results:
            if v == _EXH:
                return _EXH, ()
        return other, results[0][1]


def replay(t: Term, choices: tuple[str, ...], nat_bound: int) -> Iterator[tuple[str, Term]]:
    """Re-run a witness path, yielding every step (including free ones)."""
    yield "start", t
    todo = list(choices)
    while True:
        branches = _branches(t, nat_bound)
        if not branches or (isinstance(spine(t)[0], Bottom)):
            return
        if len(branches) == 1 and branches[0][0] in ("β", "Eq"):
            label, t = branches[0]
            yield label, t
            continue
        if not todo:
            return
        want = todo.pop(0)
        for label, child in branches:
            if label == want:
                t = child
                yield label, t
                break
        else:
            return


def _evaluate(t: Term, cfg: EvalConfig, must: bool) -> EvalOutcome:
    verdict, path = _Search(must, cfg).run(t, cfg.fuel)
    if verdict == _EXH:
        return FuelExhausted()
    final = t
    for _, final in replay(t, path, cfg.nat_bound):
        pass
    w = Witness(path, final)
    return Converges(w) if verdict == _CONV else Refuted(w)


def eval_may(t: Term, cfg: EvalConfig | None = None) -> EvalOutcome:
    """Converges iff some path reaches ``Err`` within fuel."""
    return _evaluate(t, cfg or EvalConfig(), must=False)


def eval_must(t: Term, cfg: EvalConfig | None = None) -> EvalOutcome:
    """Converges iff every path reaches ``Err`` within fuel."""
    return _evaluate(t, cfg or EvalConfig(), must=True)


def evaluate(t: Term, mode: str, cfg: EvalConfig | None = None) -> EvalOutcome:
    if mode == "may":
        return eval_may(t, cfg)
    if mode == "must":
        return eval_must(t, cfg)
    raise ValueError(f"unknown mode {mode!r}")
