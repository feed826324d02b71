"""Ordered concrete data structures and sequential algorithms.

An ocds has partially ordered cells and values, a set of events (cell,
value) and an enabling relation.  A state is an upward-closed set of events,
where any cell may also be filled with the failure marker ``•``, such that
every event sits above one with a finite proof.  States ordered by inclusion
and by the stable order form a biorder.  A sequential algorithm from ``A``
to ``B`` is a state of the exponential ``A ⇒ B``; :func:`fun` and
:func:`strat` translate between algorithms and monotone stable functions.

Every structure here is finite, so proofs are finite enabling chains.
"""

from __future__ import annotations

import itertools
import json
import re
import time
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .biorder import BudgetExceeded, FiniteBiorder, function_space, is_monotone_stable
from .syntax import Arrow, Ground, Nat, TypeExpr, type_str


class _Bullet:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "•"

    def __reduce__(self):
        return (_Bullet, ())


BULLET = _Bullet()
# tags on the values of an exponential: query an argument cell, or output a value
ASK, OUT = "ask", "out"


def canon(o: Any) -> str:
    """A deterministic text form, used for sorting and display."""
    if isinstance(o, frozenset):
        return "{" + ",".join(sorted(canon(e) for e in o)) + "}"
    if isinstance(o, tuple):
        return "(" + ",".join(canon(e) for e in o) + ")"
    if isinstance(o, str):
        return o
    return repr(o)


def _sorted(xs: Iterable) -> list:
    return sorted(xs, key=canon)


class Ocds:
    """A finite ocds.  Orders are given as reflexive up-sets.

    Instances compare by identity; the constructors below are memoized so
    that building the same structure twice yields the same object.
    """

    def __init__(self, cells: Iterable[Hashable], values: Iterable[Hashable],
                 events: Iterable[tuple], initial: Iterable[Hashable],
                 enabling: Iterable[tuple[tuple, Hashable]],
                 cell_up: Mapping[Hashable, Iterable] | None = None,
                 value_up: Mapping[Hashable, Iterable] | None = None,
                 name: str = ""):
        self.cells = tuple(_sorted(set(cells)))
        self.values = tuple(_sorted(set(values)))
        self.events = frozenset(events)
        self.initial = frozenset(initial)
        self.enabling = frozenset(enabling)
        self.cell_up = {c: frozenset((cell_up or {}).get(c, ())) | {c} for c in self.cells}
        self.value_up = {v: frozenset((value_up or {}).get(v, ())) | {v} for v in self.values}
        self.name = name
        # set by the constructors that have extra structure
        self.factors: tuple[Ocds, ...] | None = None
        self.source: Ocds | None = None
        self.target: Ocds | None = None
        self._validate()

    def __repr__(self) -> str:
        return f"Ocds({self.name or '?'}: {len(self.cells)} cells, {len(self.events)} events)"

    def _validate(self) -> None:
        cells, values = set(self.cells), set(self.values)
        if BULLET in values:
            raise ValueError("• cannot be an ordinary value")
        for c, v in self.events:
            if c not in cells or v not in values:
                raise ValueError(f"event {canon((c, v))} uses an unknown cell or value")
        if not self.initial <= cells:
            raise ValueError("initial cells must be cells")
        for e, c in self.enabling:
            if e not in self.events or c not in cells:
                raise ValueError(f"bad enabling {canon(e)} ⊢ {canon(c)}")
            if c == e[0] or c not in self.cell_up[e[0]]:
                raise ValueError(f"enabling {canon(e)} ⊢ {canon(c)} does not go strictly up")

    # ---- derived structure

    def cell_leq(self, c: Hashable, d: Hashable) -> bool:
        return d in self.cell_up[c]

    def filler_leq(self, a: Hashable, b: Hashable) -> bool:
        if a is BULLET:
            return True
        if b is BULLET:
            return False
        return b in self.value_up[a]

    def event_leq(self, e: tuple, f: tuple) -> bool:
        return self.cell_leq(e[0], f[0]) and self.filler_leq(e[1], f[1])

    @cached_property
    def bullet_events(self) -> tuple:
        """E(A)_•: the events plus every cell filled with ``•``."""
        return tuple(_sorted(set(self.events) | {(c, BULLET) for c in self.cells}))

    @cached_property
    def fills(self) -> dict:
        """The ordinary values each cell may hold."""
        out: dict = {c: [] for c in self.cells}
        for c, v in self.events:
            out[c].append(v)
        return {c: tuple(_sorted(vs)) for c, vs in out.items()}

    @cached_property
    def enables(self) -> dict:
        out: dict = {}
        for e, c in self.enabling:
            out.setdefault(e, set()).add(c)
        return {e: tuple(_sorted(cs)) for e, cs in out.items()}

    @cached_property
    def up(self) -> dict:
        """Up-set of each element of E(A)_• inside E(A)_•."""
        return {e: frozenset(f for f in self.bullet_events if self.event_leq(e, f))
                for e in self.bullet_events}

    def close(self, events: Iterable[tuple]) -> frozenset:
        """Upward closure inside E(A)_•."""
        out: set = set()
        for e in events:
            out |= self.up[e]
        return frozenset(out)


@dataclass(frozen=True)
class OcdsState:
    owner: Ocds
    events: frozenset

    def __repr__(self) -> str:
        return f"OcdsState({show_events(self.owner, self.events)})"

    def __contains__(self, e: tuple) -> bool:
        return e in self.events

    def __len__(self) -> int:
        return len(self.events)

    @property
    def is_total(self) -> bool:
        return all(a is not BULLET for _, a in self.events)


def state(A: Ocds, events: Iterable[tuple], close: bool = False) -> OcdsState:
    """Wrap an event set as a state of ``A``, checking the invariants."""
    evs = A.close(events) if close else frozenset(events)
    problem = state_violation(A, evs)
    if problem:
        raise ValueError(problem)
    return OcdsState(A, evs)


# --------------------------------------------------------------- predicates

def reached_cells(A: Ocds, events: frozenset) -> set:
    """Cells at the end of an enabling chain of ordinary events in ``events``."""
    by_cell: dict = {}
    for c, a in events:
        if a is not BULLET:
            by_cell.setdefault(c, []).append(a)
    seen = set(A.initial)
    todo = list(A.initial)
    while todo:
        c = todo.pop()
        for v in by_cell.get(c, ()):
            for d in A.enables.get((c, v), ()):
                if d not in seen:
                    seen.add(d)
                    todo.append(d)
    return seen


def state_violation(A: Ocds, events: frozenset) -> str | None:
    """Why ``events`` is not a state of ``A``, or None if it is one."""
    allowed = set(A.bullet_events)
    for e in events:
        if e not in allowed:
            return f"{canon(e)} is not an event of {A.name or 'the ocds'}"
        if not A.up[e] <= events:
            return f"not upward closed above {canon(e)}"
    R = reached_cells(A, events)
    for e in events:
        if not any(f[0] in R and A.event_leq(f, e) for f in events):
            return f"{canon(e)} has no proof"
    return None


def is_state(A: Ocds, events: Iterable[tuple]) -> bool:
    return state_violation(A, frozenset(events)) is None


def cells_of(x: OcdsState) -> tuple[frozenset, frozenset, frozenset]:
    """Filled, enabled and accessible cells ``(F(x), En(x), A(x))``."""
    A = x.owner
    R = reached_cells(A, x.events)
    filled = frozenset(c for c, _ in x.events)
    enabled = set(R)
    for c, a in x.events:
        if a is BULLET and c in R:
            enabled |= A.cell_up[c]
    enabled = frozenset(enabled)
    return filled, enabled, enabled - filled


def accessible(A: Ocds, events: frozenset) -> frozenset:
    return cells_of(OcdsState(A, events))[2]


def is_total(x: OcdsState) -> bool:
    return x.is_total


def is_complete(x: OcdsState) -> bool:
    """Every cell with a finite proof is filled."""
    filled, enabled, _ = cells_of(x)
    return enabled <= filled


def is_finite_branching(x: OcdsState) -> bool:
    # Finite ocds have finitely many values per cell and no infinite proofs,
    # so both clauses hold for every state.
    return True


_FILTERS: dict[str, Callable[[OcdsState], bool]] = {
    "all": lambda x: True,
    "total": is_total,
    "finite_branching": is_finite_branching,
    "finitely_safe": lambda x: True,
    "complete": is_complete,
}


def enumerate_states(A: Ocds, filter: str = "all", budget: int = 10**6) -> list[OcdsState]:
    """Every state of ``A`` passing ``filter``, sorted by size then text.

    Upward-closed sets are generated top down: an element may be chosen only
    if everything strictly above it already was.  Safety is checked on each
    complete candidate.  ``budget`` caps the number of candidates.
    """
    if filter not in _FILTERS:
        raise ValueError(f"unknown filter {filter!r}; expected one of {sorted(_FILTERS)}")
    keep = _FILTERS[filter]
    order = sorted(A.bullet_events, key=lambda e: (len(A.up[e]), canon(e)))
    if filter == "total":
        order = [e for e in order if e[1] is not BULLET]
    strict_up = {e: A.up[e] - {e} for e in order}
    found: list[frozenset] = []
    chosen: set = set()
    count = 0

    def rec(i: int) -> None:
        nonlocal count
        count += 1
        if count > budget:
            raise BudgetExceeded(f"state enumeration exceeded {budget} candidates")
        if i == len(order):
            evs = frozenset(chosen)
            if state_violation(A, evs) is None:
                found.append(evs)
            return
        e = order[i]
        rec(i + 1)
        if strict_up[e] <= chosen:
            chosen.add(e)
            rec(i + 1)
            chosen.discard(e)

    rec(0)
    out = [OcdsState(A, evs) for evs in found]
    out = [x for x in out if keep(x)]
    out.sort(key=lambda x: (len(x.events), canon(x.events)))
    return out


@lru_cache(maxsize=None)
def _states_cached(A: Ocds, filter: str) -> tuple[OcdsState, ...]:
    return tuple(enumerate_states(A, filter))


def states(A: Ocds, filter: str = "all") -> list[OcdsState]:
    """Memoized :func:`enumerate_states` with the default budget."""
    return list(_states_cached(A, filter))


# ------------------------------------------------------------ state algebra

def _same_owner(x: OcdsState, y: OcdsState) -> None:
    if x.owner is not y.owner:
        raise ValueError("states belong to different ocds")


def state_ext_leq(x: OcdsState, y: OcdsState) -> bool:
    _same_owner(x, y)
    return x.events <= y.events


def state_stable_leq(x: OcdsState, y: OcdsState) -> bool:
    """``x ≤_S y``: ``y ⊆ x`` and whatever ``x`` adds sits on a ``•`` cell."""
    _same_owner(x, y)
    if not y.events <= x.events:
        return False
    return all(e in y.events or (e[0], BULLET) in x.events for e in x.events)


def plus(x: OcdsState, c: Hashable, a: Hashable) -> OcdsState:
    """``x + (c, a)`` for an enabled cell ``c``."""
    A = x.owner
    if c not in cells_of(x)[1]:
        raise ValueError(f"cell {canon(c)} is not enabled")
    return OcdsState(A, x.events | A.up[(c, a)])


def with_bullets(x: OcdsState, C: Iterable[Hashable]) -> OcdsState:
    """``x_C``: fill every cell of ``C`` (each enabled in ``x``) with ``•``."""
    A = x.owner
    C = set(C)
    enabled = cells_of(x)[1]
    if not C <= enabled:
        raise ValueError("with_bullets needs cells enabled in x")
    evs = set(x.events)
    for c in C:
        evs |= A.up[(c, BULLET)]
    return OcdsState(A, frozenset(evs))


def is_stably_bounded(X: Iterable[OcdsState]) -> bool:
    """Whether a nonempty set of states has a stable upper bound.

    Each ordinary event of a member must either lie in every member or sit on
    a cell that member fills with ``•``.
    """
    X = list(X)
    if not X:
        raise ValueError("is_stably_bounded needs a nonempty set")
    for y in X[1:]:
        _same_owner(X[0], y)
    common = frozenset.intersection(*(x.events for x in X))
    return all(e in common or (e[0], BULLET) in x.events for x in X for e in x.events)


def state_meet(X: Iterable[OcdsState]) -> OcdsState:
    """Stable glb (the union) of a stably bounded set."""
    X = list(X)
    if not is_stably_bounded(X):
        raise ValueError("set is not stably bounded")
    return OcdsState(X[0].owner, frozenset().union(*(x.events for x in X)))


def state_join(X: Iterable[OcdsState]) -> OcdsState:
    """Stable lub (the intersection) of a stably bounded set."""
    X = list(X)
    if not is_stably_bounded(X):
        raise ValueError("set is not stably bounded")
    return OcdsState(X[0].owner, frozenset.intersection(*(x.events for x in X)))


def max_total(x: OcdsState) -> OcdsState:
    """``x^⊤``: the events of ``x`` on cells not filled with ``•``."""
    return OcdsState(x.owner, frozenset(e for e in x.events if (e[0], BULLET) not in x.events))


def states_biorder(D: Sequence[OcdsState]) -> FiniteBiorder:
    """The biorder on a list of states of one ocds (keys are event sets)."""
    n = len(D)
    ext = np.zeros((n, n), dtype=bool)
    stab = np.zeros((n, n), dtype=bool)
    for i, x in enumerate(D):
        for j, y in enumerate(D):
            ext[i, j] = x.events <= y.events
            stab[i, j] = state_stable_leq(x, y)
    labels = [show_events(x.owner, x.events) for x in D]
    return FiniteBiorder(labels, ext, stab, keys=[x.events for x in D])


# ------------------------------------------------------------ constructions

@lru_cache(maxsize=None)
def _hat(labels: tuple) -> Ocds:
    c = "c"
    name = "hat{" + ",".join(canon(l) for l in labels) + "}"
    return Ocds([c], labels, [(c, v) for v in labels], [c], [], name=name)


def hat(labels: Iterable[Hashable] = ()) -> Ocds:
    """One initial cell ``c`` that may hold any of ``labels`` (discretely ordered)."""
    return _hat(tuple(_sorted(set(labels))))


@lru_cache(maxsize=None)
def _product(factors: tuple[Ocds, ...]) -> Ocds:
    cells, values, events, initial, enabling = [], [], [], [], []
    cell_up, value_up = {}, {}
    for i, A in enumerate(factors):
        cells += [(i, c) for c in A.cells]
        values += [(i, v) for v in A.values]
        events += [((i, c), (i, v)) for c, v in A.events]
        initial += [(i, c) for c in A.initial]
        enabling += [(((i, c), (i, v)), (i, d)) for (c, v), d in A.enabling]
        cell_up.update({(i, c): [(i, d) for d in A.cell_up[c]] for c in A.cells})
        value_up.update({(i, v): [(i, w) for w in A.value_up[v]] for v in A.values})
    name = " × ".join(A.name or "?" for A in factors) or "1"
    P = Ocds(cells, values, events, initial, enabling, cell_up, value_up, name=name)
    P.factors = factors
    return P


def ocds_product(factors: Sequence[Ocds]) -> Ocds:
    """Disjoint union with every cell and value tagged by its factor index."""
    return _product(tuple(factors))


def product_state(P: Ocds, parts: Sequence[OcdsState]) -> OcdsState:
    if P.factors is None or len(parts) != len(P.factors):
        raise ValueError("not a matching product")
    evs = frozenset(((i, c), (i, a) if a is not BULLET else BULLET)
                    for i, x in enumerate(parts) for c, a in x.events)
    return OcdsState(P, evs)


def split_state(x: OcdsState) -> list[OcdsState]:
    P = x.owner
    if P.factors is None:
        raise ValueError("not a product state")
    parts: list[set] = [set() for _ in P.factors]
    for (i, c), a in x.events:
        parts[i].add((c, a if a is BULLET else a[1]))
    return [OcdsState(A, frozenset(p)) for A, p in zip(P.factors, parts)]


LIFT_CELL = "c⊥"


@lru_cache(maxsize=None)
def ocds_lift(A: Ocds) -> Ocds:
    """Add a new least, initial cell that no value can fill."""
    cell_up = {c: A.cell_up[c] for c in A.cells}
    cell_up[LIFT_CELL] = set(A.cells)
    L = Ocds(list(A.cells) + [LIFT_CELL], A.values, A.events,
             set(A.initial) | {LIFT_CELL}, A.enabling, cell_up, A.value_up,
             name=f"({A.name})↑")
    return L


@lru_cache(maxsize=None)
def universal_trunc(k: int) -> Ocds:
    """``k`` incomparable initial cells, each fillable only by ``⋆``."""
    if k < 1:
        raise ValueError("k must be positive")
    cells = [("u", i) for i in range(k)]
    return Ocds(cells, ["⋆"], [(c, "⋆") for c in cells], cells, [], name=f"U{k}")


@lru_cache(maxsize=None)
def lazy_nats(n: int) -> Ocds:
    """Lazy naturals cut off after ``n`` cells: ``c_i`` holds 0 or suc,
    and ``(c_i, suc)`` enables ``c_{i+1}``."""
    cells = [("n", i) for i in range(n)]
    cell_up = {("n", i): [("n", j) for j in range(i, n)] for i in range(n)}
    events = [(c, v) for c in cells for v in ("0", "suc")]
    enabling = [((("n", i), "suc"), ("n", i + 1)) for i in range(n - 1)]
    return Ocds(cells, ["0", "suc"], events, [("n", 0)], enabling, cell_up, name=f"lazynat{n}")


@lru_cache(maxsize=None)
def exponential(A: Ocds, B: Ocds, budget: int = 10**6) -> Ocds:
    """The ocds ``A ⇒ B`` of sequential algorithms.

    Cells are pairs (total state of ``A``, cell of ``B``).  A cell ``(x, c)``
    is filled either by ``(ask, c')`` for a cell ``c'`` accessible in ``x``
    or by ``(out, v)`` for a value ``v`` that may fill ``c``.  Asking ``c'``
    enables ``(x + (c', V), c)`` for each nonempty set ``V`` of values of
    ``c'``; outputting ``v`` enables ``(x, c'')`` when ``(c, v) ⊢ c''`` in
    ``B``.  The initial cells are ``(∅, c)`` for ``c`` initial in ``B``.
    """
    totals = [x.events for x in enumerate_states(A, "total", budget)]
    cells = [(x, c) for x in totals for c in B.cells]
    cell_up = {(x, c): [(y, d) for y in totals if x <= y for d in B.cell_up[c]]
               for x, c in cells}
    values = [(ASK, c) for c in A.cells] + [(OUT, v) for v in B.values]
    value_up: dict = {}
    for c in A.cells:
        # argument cells are ordered in reverse
        value_up[(ASK, c)] = [(ASK, d) for d in A.cells if A.cell_leq(d, c)]
    for v in B.values:
        value_up[(OUT, v)] = [(OUT, w) for w in B.value_up[v]]
    events, enabling = [], []
    total_set = set(totals)
    for x in totals:
        acc = accessible(A, x)
        for c in B.cells:
            for d in _sorted(acc):
                e = ((x, c), (ASK, d))
                events.append(e)
                vals = A.fills[d]
                for r in range(1, len(vals) + 1):
                    for V in itertools.combinations(vals, r):
                        y = A.close([(d, v) for v in V]) | x
                        if y not in total_set:
                            raise AssertionError("filling an accessible cell left the total states")
                        enabling.append((e, (y, c)))
            for v in B.fills[c]:
                e = ((x, c), (OUT, v))
                events.append(e)
                for c2 in B.enables.get((c, v), ()):
                    enabling.append((e, (x, c2)))
    initial = [(frozenset(), c) for c in B.initial]
    E = Ocds(cells, values, events, initial, enabling, cell_up, value_up,
             name=f"({A.name} ⇒ {B.name})")
    E.source, E.target = A, B
    return E


def _arrow_parts(S: Ocds) -> tuple[Ocds, Ocds]:
    if S.source is None or S.target is None:
        raise ValueError("not an exponential ocds")
    return S.source, S.target


# ---------------------------------------------------------------- fun/strat

def fun(sigma: OcdsState, x: OcdsState) -> OcdsState:
    """Apply the sequential algorithm ``sigma`` to the argument state ``x``.

    An event ``((x', c), a)`` with ``x' ⊆ x`` contributes ``(c, a)`` when
    ``a`` is an output value or ``•``.  When ``a`` asks a cell that ``x``
    fills with ``•``, it contributes every ``(c, a')`` in ``E(B)_•``.
    """
    A, B = _arrow_parts(sigma.owner)
    if x.owner is not A:
        raise ValueError("argument state belongs to the wrong ocds")
    out: set = set()
    for (xp, c), a in sigma.events:
        if not xp <= x.events:
            continue
        if a is BULLET:
            out.add((c, BULLET))
        elif a[0] == OUT:
            out.add((c, a[1]))
        elif (a[1], BULLET) in x.events:
            out.add((c, BULLET))
            out.update((c, v) for v in B.fills[c])
    return OcdsState(B, frozenset(out))


def fun_bullet_only(sigma: OcdsState, x: OcdsState) -> OcdsState:
    """Like :func:`fun`, but a query on a ``•`` cell adds only ``(c, •)``
    and the result is closed upward afterwards."""
    A, B = _arrow_parts(sigma.owner)
    out: set = set()
    for (xp, c), a in sigma.events:
        if not xp <= x.events:
            continue
        if a is BULLET or (a[0] == ASK and (a[1], BULLET) in x.events):
            out.add((c, BULLET))
        elif a[0] == OUT:
            out.add((c, a[1]))
    return OcdsState(B, B.close(out))


StateFn = Callable[[OcdsState], OcdsState]


def as_state_fn(f: StateFn | Mapping) -> StateFn:
    """Accept a callable on states or a mapping keyed by states or event sets."""
    if callable(f):
        return f
    table = dict(f)

    def look(x: OcdsState) -> OcdsState:
        y = table[x] if x in table else table[x.events]
        return y
    return look


def strat(f: StateFn | Mapping, A: Ocds, B: Ocds) -> OcdsState:
    """The sequential algorithm computing ``f : D(A) → D(B)``.

    It fills ``(x, c)`` with ``a`` when ``(c, a) ∈ f(x)``, and with ``ask c'``
    (for ``c'`` accessible in ``x``) when ``f`` answers ``•`` at ``c`` as soon
    as ``c'`` is filled with ``•``.
    """
    f = as_state_fn(f)
    AB = exponential(A, B)
    out: set = set()
    cache: dict = {}

    def at(evs: frozenset) -> frozenset:
        if evs not in cache:
            y = f(OcdsState(A, evs))
            if y.owner is not B:
                raise ValueError("function result belongs to the wrong ocds")
            cache[evs] = y.events
        return cache[evs]

    for x, c in AB.cells:
        fx = at(x)
        for c2, a in fx:
            if c2 == c:
                out.add(((x, c), a if a is BULLET else (OUT, a)))
        for d in accessible(A, x):
            if (c, BULLET) in at(x | A.up[(d, BULLET)]):
                out.add(((x, c), (ASK, d)))
    return OcdsState(AB, frozenset(out))


def fun_table(sigma: OcdsState, DA: Sequence[OcdsState], DB: FiniteBiorder) -> tuple[int, ...]:
    """``fun(sigma)`` as a table over ``DA`` of indices into ``DB``."""
    return tuple(DB.index(fun(sigma, x).events) for x in DA)


def table_fn(table: Sequence[int], DA: Sequence[OcdsState], DB: Sequence[OcdsState]) -> dict:
    return {x.events: DB[v] for x, v in zip(DA, table)}


@dataclass
class IsoReport:
    source: str
    target: str
    algorithms: int
    functions: int
    failures: list[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures and self.algorithms == self.functions

    def to_json(self) -> dict:
        return {"source": self.source, "target": self.target, "algorithms": self.algorithms,
                "functions": self.functions, "failures": self.failures, "ok": self.ok}


def check_iso(A: Ocds, B: Ocds, budget: int = 10**6, max_failures: int = 20) -> IsoReport:
    """Check that fun and strat are inverse order isomorphisms between
    ``D(A ⇒ B)`` and the monotone stable functions ``D(A) → D(B)``."""
    t0 = time.perf_counter()
    AB = exponential(A, B, budget)
    DA, DB = enumerate_states(A, "all", budget), enumerate_states(B, "all", budget)
    algs = enumerate_states(AB, "all", budget)
    BA, BB = states_biorder(DA), states_biorder(DB)
    F = function_space(BA, BB, budget)
    fails: list[str] = []

    def fail(msg: str) -> None:
        if len(fails) < max_failures:
            fails.append(msg)

    fun_of: list[int] = []
    for s in algs:
        try:
            t = fun_table(s, DA, BB)
        except KeyError:
            fail(f"fun({show_events(AB, s.events)}) leaves the states of the target")
            fun_of.append(-1)
            continue
        if not F.has_key(t):
            fail(f"fun({show_events(AB, s.events)}) is not monotone stable")
            fun_of.append(-1)
            continue
        fun_of.append(F.index(t))
        back = strat(table_fn(t, DA, DB), A, B)
        if back.events != s.events:
            fail(f"strat(fun(σ)) ≠ σ for σ = {show_events(AB, s.events)}")
    if len(set(fun_of)) != len(fun_of):
        fail("fun is not injective")
    alg_index = {s.events: i for i, s in enumerate(algs)}
    for g in range(F.size):
        t = F.table(g)
        s = strat(table_fn(t, DA, DB), A, B)
        problem = state_violation(AB, s.events)
        if problem:
            fail(f"strat of {F.labels[g]} is not a state: {problem}")
            continue
        if s.events not in alg_index:
            fail(f"strat of {F.labels[g]} was not enumerated")
            continue
        if fun_table(s, DA, BB) != t:
            fail(f"fun(strat(f)) ≠ f for f = {F.labels[g]}")
    for i, s in enumerate(algs):
        for j, u in enumerate(algs):
            fi, fj = fun_of[i], fun_of[j]
            if fi < 0 or fj < 0:
                continue
            if (s.events <= u.events) != bool(F.ext[fi, fj]):
                fail(f"⊆ vs ⊑ mismatch at {show_events(AB, s.events)}, {show_events(AB, u.events)}")
            if state_stable_leq(s, u) != bool(F.stab[fi, fj]):
                fail(f"≤_S mismatch at {show_events(AB, s.events)}, {show_events(AB, u.events)}")
    return IsoReport(A.name, B.name, len(algs), F.size, fails, time.perf_counter() - t0)


def explicit_sequentiality_check(f: StateFn | Mapping, A: Ocds, B: Ocds,
                                 DA: Sequence[OcdsState] | None = None) -> bool:
    """Whether ``f`` passes the explicit sequentiality clause.

    For total ``x ⪯ y`` and each ``(c, v) ∈ f(y)`` missing from ``f(x)``,
    some cell ``c'`` accessible in ``x`` and filled in ``y`` must force
    ``(c, •)`` in ``f(z)`` for every ``z`` stably compatible with ``x`` that
    fills ``c'`` with ``•``.
    """
    f = as_state_fn(f)
    DA = list(DA) if DA is not None else enumerate_states(A)
    totals = [x for x in DA if x.is_total]
    image = {x.events: f(x).events for x in DA}
    for x in totals:
        filled_x, _, acc_x = cells_of(x)
        compatible = [z for z in DA if is_stably_bounded([x, z])]
        for y in totals:
            if not _preceq(x, y, filled_x):
                continue
            filled_y = cells_of(y)[0]
            candidates = acc_x & filled_y
            for c, v in image[y.events] - image[x.events]:
                if not any(all((c, BULLET) in image[z.events]
                               for z in compatible if (c2, BULLET) in z.events)
                           for c2 in candidates):
                    return False
    return True


def _preceq(x: OcdsState, y: OcdsState, filled_x: frozenset) -> bool:
    if not x.events <= y.events:
        return False
    return all(e in x.events for e in y.events if e[0] in filled_x)


# --------------------------------------------------------- universal object

@dataclass
class EmbeddingReport:
    states: int
    cells: int
    injective: bool
    lands_in_states: bool
    left_inverse: bool

    @property
    def ok(self) -> bool:
        return self.injective and self.lands_in_states and self.left_inverse


def universal_embedding(A: Ocds) -> tuple[Ocds, Callable[[OcdsState], OcdsState],
                                           Callable[[OcdsState], OcdsState]]:
    """Code the states of ``A`` as states of a truncated universal ocds.

    ``E(A)_•`` is listed in canonical order; cell ``i`` holds ``⋆`` when the
    ``i``-th element is present and ``•`` too when that element is a ``•``
    event.  ``proj(y)`` is the union of all ``x`` with ``inj(x) ≤_S y``.
    """
    elems = A.bullet_events
    U = universal_trunc(max(1, len(elems)))
    DA = enumerate_states(A)

    def inj(x: OcdsState) -> OcdsState:
        evs = set()
        for i, e in enumerate(elems):
            if e in x.events:
                evs.add((("u", i), "⋆"))
                if e[1] is BULLET:
                    evs.add((("u", i), BULLET))
        return OcdsState(U, frozenset(evs))

    def proj(y: OcdsState) -> OcdsState:
        below = [x for x in DA if state_stable_leq(inj(x), y)]
        if not below:
            raise ValueError("no state of the source codes below this one")
        return OcdsState(A, frozenset.intersection(*(x.events for x in below)))
    return U, inj, proj


def check_universal_embedding(A: Ocds) -> EmbeddingReport:
    U, inj, proj = universal_embedding(A)
    DA = enumerate_states(A)
    images = [inj(x) for x in DA]
    return EmbeddingReport(
        states=len(DA),
        cells=len(U.cells),
        injective=len({y.events for y in images}) == len(DA),
        lands_in_states=all(is_state(U, y.events) for y in images),
        left_inverse=all(proj(y).events == x.events for x, y in zip(DA, images)),
    )


# ------------------------------------------------------------------ display

def generators(A: Ocds, events: frozenset) -> list:
    """The minimal elements of an event set."""
    return _sorted(e for e in events
                   if not any(f != e and A.event_leq(f, e) for f in events))


def fmt(o: Any) -> str:
    if o is BULLET:
        return "•"
    if isinstance(o, frozenset):
        return "{" + ", ".join(sorted(fmt(e) for e in o)) + "}"
    if isinstance(o, tuple):
        if len(o) == 2 and o[0] in (ASK, OUT):
            if o[0] == ASK:
                return "?" + fmt(o[1])
            # an output that is itself a query or output gets a marker
            tagged = isinstance(o[1], tuple) and len(o[1]) == 2 and o[1][0] in (ASK, OUT)
            return ("!" if tagged else "") + fmt(o[1])
        if len(o) == 2 and isinstance(o[0], int):
            return f"{fmt(o[1])}.{o[0]}"
        return "(" + ", ".join(fmt(e) for e in o) + ")"
    return str(o)


def show_events(A: Ocds, events: frozenset) -> str:
    """Upward-closure notation ``⌊generators⌋`` (plain braces if the set is
    its own generator set)."""
    gens = generators(A, events)
    body = "{" + ", ".join(fmt(e) for e in gens) + "}"
    return body if len(gens) == len(events) else "⌊" + body + "⌋"


# --------------------------------------------------------------------- JSON

def _enc(o: Any) -> Any:
    if o is BULLET:
        return {"bullet": True}
    if isinstance(o, frozenset):
        return {"set": [_enc(e) for e in _sorted(o)]}
    if isinstance(o, tuple):
        return {"tuple": [_enc(e) for e in o]}
    if isinstance(o, (str, int)):
        return o
    raise TypeError(f"cannot encode {o!r}")


def _dec(o: Any) -> Any:
    if isinstance(o, dict):
        if o.get("bullet"):
            return BULLET
        if "set" in o:
            return frozenset(_dec(e) for e in o["set"])
        if "tuple" in o:
            return tuple(_dec(e) for e in o["tuple"])
        raise ValueError(f"bad encoded object {o!r}")
    return o


def ocds_to_json(A: Ocds) -> dict:
    return {
        "name": A.name,
        "cells": [_enc(c) for c in A.cells],
        "values": [_enc(v) for v in A.values],
        "cell_order": [[_enc(c), _enc(d)] for c in A.cells for d in _sorted(A.cell_up[c]) if d != c],
        "value_order": [[_enc(v), _enc(w)] for v in A.values for w in _sorted(A.value_up[v]) if w != v],
        "events": [_enc(e) for e in _sorted(A.events)],
        "initial": [_enc(c) for c in _sorted(A.initial)],
        "enabling": [[_enc(e), _enc(c)] for e, c in _sorted(A.enabling)],
    }


def ocds_from_json(data: dict | str) -> Ocds:
    if isinstance(data, str):
        data = json.loads(data)
    cell_up: dict = {}
    for c, d in data.get("cell_order", []):
        cell_up.setdefault(_dec(c), []).append(_dec(d))
    value_up: dict = {}
    for v, w in data.get("value_order", []):
        value_up.setdefault(_dec(v), []).append(_dec(w))
    return Ocds([_dec(c) for c in data["cells"]], [_dec(v) for v in data["values"]],
                [_dec(e) for e in data["events"]], [_dec(c) for c in data["initial"]],
                [(_dec(e), _dec(c)) for e, c in data["enabling"]], cell_up, value_up,
                name=data.get("name", ""))


def state_to_json(x: OcdsState) -> dict:
    return {"ocds": x.owner.name, "events": [_enc(e) for e in _sorted(x.events)]}


def state_from_json(A: Ocds, data: dict | str) -> OcdsState:
    if isinstance(data, str):
        data = json.loads(data)
    return state(A, [_dec(e) for e in data["events"]])


# ---------------------------------------------------------- term bridge

@lru_cache(maxsize=None)
def ocds_of(T: TypeExpr, k: int = 3) -> Ocds:
    """The ocds interpreting a pointed type: ``o`` is ``hat(∅)``, an arrow
    is the exponential, and ``N → P`` is the ``k``-fold product of ``P``."""
    if isinstance(T, Ground):
        return hat(())
    if isinstance(T, Arrow):
        if isinstance(T.domain, Nat):
            return ocds_product([ocds_of(T.codomain, k)] * k)
        return exponential(ocds_of(T.domain, k), ocds_of(T.codomain, k))
    raise ValueError(f"type {type_str(T)} is not pointed")


class Bridge:
    """A bijection between the model carrier of ``T`` and ``D(ocds_of(T))``.

    Carrier elements are identified by their stripped denotation keys, so
    the bridge is independent of the testing mode.
    """

    def __init__(self, T: TypeExpr, k: int = 3, budget: int = 10**6):
        from .denot import semantics
        self.T, self.k = T, k
        self.ocds = ocds_of(T, k)
        self.states = enumerate_states(self.ocds, "all", budget)
        model = semantics("must", k).model_at(T, k, budget)
        self.carrier = model.biorder
        self.model_keys = list(model.skeys)
        self.key_of: dict = {}
        if isinstance(T, Ground):
            for x in self.states:
                self.key_of[x.events] = 1 if x.events else 0
        elif isinstance(T.domain, Nat):
            sub = bridge(T.codomain, k)
            for x in self.states:
                self.key_of[x.events] = tuple(sub.key_of[p.events] for p in split_state(x))
        else:
            dom, cod = bridge(T.domain, k), bridge(T.codomain, k)
            args = [dom.state_of(d) for d in dom.model_keys]
            for x in self.states:
                self.key_of[x.events] = tuple(cod.key_of[fun(x, a).events] for a in args)
        self.by_key = {key: evs for evs, key in self.key_of.items()}

    def state_of(self, key: Any) -> OcdsState:
        return OcdsState(self.ocds, self.by_key[key])

    def check(self) -> list[str]:
        """Bijectivity and agreement of both orders with the model."""
        problems = []
        if len(self.by_key) != len(self.states):
            problems.append("two states have the same meaning")
        if set(self.by_key) != set(self.model_keys):
            problems.append("states and carrier elements do not match")
            return problems
        B = self.carrier
        for i, a in enumerate(self.model_keys):
            for j, b in enumerate(self.model_keys):
                x, y = self.state_of(a), self.state_of(b)
                if (x.events <= y.events) != bool(B.ext[i, j]):
                    problems.append(f"extensional order differs at {i},{j}")
                if state_stable_leq(x, y) != bool(B.stab[i, j]):
                    problems.append(f"stable order differs at {i},{j}")
        return problems


@lru_cache(maxsize=None)
def bridge(T: TypeExpr, k: int = 3) -> Bridge:
    return Bridge(T, k)


def algorithm_of(den: Any) -> OcdsState:
    """The sequential algorithm of a term denotation (a ``denot.Denotation``)."""
    return bridge(den.typ, den.k).state_of(den.key)


# ------------------------------------------------------------- worked cases

def continuation_ocds() -> Ocds:
    """``(hat{tt,ff} ⇒ hat(∅)) ⇒ hat(∅)``."""
    return exponential(exponential(hat(["tt", "ff"]), hat(())), hat(()))


def continuation_listing() -> list[list[tuple[str, frozenset]]]:
    """The expected hierarchy, bottom row first, as (term, generators) pairs.

    Argument states of ``hat{tt,ff} ⇒ hat(∅)`` are written as event sets
    over its cells ``(x, c)``, where ``x`` is a set of ``(c, tt|ff)``.
    """
    E = frozenset()
    c = "c"
    inner_init = (E, c)                          # (∅, c) in hat{tt,ff} ⇒ hat(∅)
    q = (inner_init, (ASK, c))                   # that cell asks the argument
    X1 = frozenset({q})                          # total state {(∅, c) ↦ ?c}
    root, second = (E, c), (X1, c)               # outer cells

    def argcell(*vals: str) -> tuple:
        return (ASK, (frozenset((c, v) for v in vals), c))

    a = (root, (ASK, inner_init))
    b_tt, b_ff, b_both = (second, argcell("tt")), (second, argcell("ff")), (second, argcell("tt", "ff"))
    rows = [
        [("⊥E", E)],
        [("λf.f ⊥E", frozenset({a}))],
        [("λf.f tt", frozenset({a, b_tt})), ("λf.f ff", frozenset({a, b_ff}))],
        [("λf.f tt + λf.f ff", frozenset({a, b_tt, b_ff}))],
        [("λf.f (tt + ff)", frozenset({a, b_both}))],
        [("λf.f ⊤E", frozenset({a, (second, BULLET)}))],
        [("⊤E", frozenset({(root, BULLET)}))],
    ]
    return rows


def hasse_rows(D: Sequence[OcdsState]) -> list[list[OcdsState]]:
    """Group states by the length of the longest ⊆-chain below them."""
    rank: dict = {}
    for x in sorted(D, key=lambda s: len(s.events)):
        below = [rank[y.events] for y in D if y.events < x.events]
        rank[x.events] = 1 + max(below) if below else 0
    rows: list[list[OcdsState]] = [[] for _ in range(1 + max(rank.values(), default=-1))]
    for x in D:
        rows[rank[x.events]].append(x)
    return rows


@dataclass
class HierarchyReport:
    rows: list[list[str]]
    states: int
    matches: bool
    mismatch: str = ""

    def to_json(self) -> dict:
        return {"states": self.states, "rows": self.rows, "matches": self.matches,
                "mismatch": self.mismatch}


def hierarchy_report() -> HierarchyReport:
    A = continuation_ocds()
    D = enumerate_states(A)
    rows = hasse_rows(D)
    expected = continuation_listing()
    shown = [[show_events(A, x.events) for x in row] for row in rows]
    mismatch = ""
    if len(rows) != len(expected):
        mismatch = f"{len(rows)} rows, expected {len(expected)}"
    else:
        for i, (got, want) in enumerate(zip(rows, expected)):
            got_sets = {x.events for x in got}
            want_sets = {A.close(g) for _, g in want}
            if got_sets != want_sets:
                mismatch = f"row {i} differs"
                break
    labelled = []
    for row, want in zip(rows, expected + [[]] * len(rows)):
        names = {A.close(g): name for name, g in want}
        labelled.append([f"{names.get(x.events, '?')}: {show_events(A, x.events)}" for x in row])
    return HierarchyReport(labelled if not mismatch else shown, len(D), not mismatch, mismatch)


def union_identity(sigmas: Mapping[str, OcdsState]) -> tuple[bool, frozenset, frozenset]:
    """``σ00 ∪ σ11`` against ``σ01 ∪ σ10``."""
    lhs = sigmas["t00"].events | sigmas["t11"].events
    rhs = sigmas["t01"].events | sigmas["t10"].events
    return lhs == rhs, lhs, rhs


def uncurried_algorithm(den: Any) -> OcdsState:
    """For a denotation of type ``S → S' → P``, the algorithm on the
    product ``ocds_of(S) × ocds_of(S')`` computing the uncurried function."""
    T = den.typ
    if not (isinstance(T, Arrow) and isinstance(T.codomain, Arrow)):
        raise ValueError("expected a two-argument function type")
    S1, S2, P = T.domain, T.codomain.domain, T.codomain.codomain
    b1, b2, bp = bridge(S1, den.k), bridge(S2, den.k), bridge(P, den.k)
    pos1 = {k: i for i, k in enumerate(b1.model_keys)}
    pos2 = {k: i for i, k in enumerate(b2.model_keys)}
    A = ocds_product([b1.ocds, b2.ocds])

    def f(x: OcdsState) -> OcdsState:
        p1, p2 = split_state(x)
        key = den.key[pos1[b1.key_of[p1.events]]][pos2[b2.key_of[p2.events]]]
        return bp.state_of(key)
    return strat(f, A, bp.ocds)


@dataclass
class UnionIdentityReport:
    mode: str
    identity: bool
    sizes: dict
    extra_left: list[str]
    extra_right: list[str]
    returns_second: bool

    @property
    def ok(self) -> bool:
        return self.identity and self.returns_second

    def to_json(self) -> dict:
        return {"mode": self.mode, "identity": self.identity, "sizes": self.sizes,
                "extra_left": self.extra_left, "extra_right": self.extra_right,
                "returns_second": self.returns_second, "ok": self.ok}


def union_identity_report(mode: str = "must", k: int = 3) -> UnionIdentityReport:
    """The four two-argument boolean functions that evaluate one argument and
    return one argument, as algorithms, and the union identity between them.

    Also checks that ``t01`` applied to (tt, ff) answers ff.
    """
    from .denot import denote_term
    from .syntax import builtin_corpus
    corpus = builtin_corpus()
    sig = {n: uncurried_algorithm(denote_term(corpus[n][0], mode=mode, k=k))
           for n in ("t00", "t01", "t10", "t11")}
    same, lhs, rhs = union_identity(sig)
    owner = sig["t00"].owner
    bb = bridge(corpus["tt"][1], k)
    tt = bb.state_of(denote_term(corpus["tt"][0], mode=mode, k=k).key)
    ff = bb.state_of(denote_term(corpus["ff"][0], mode=mode, k=k).key)
    A = owner.source
    out = fun(sig["t01"], product_state(A, [tt, ff]))
    return UnionIdentityReport(
        mode=mode,
        identity=same,
        sizes={n: len(s.events) for n, s in sig.items()},
        extra_left=[fmt(e) for e in _sorted(lhs - rhs)],
        extra_right=[fmt(e) for e in _sorted(rhs - lhs)],
        returns_second=out.events == ff.events,
    )


# ------------------------------------------------------------ text syntax

_OCDS_TOKEN = re.compile(r"\s*(=>|[A-Za-z_][A-Za-z0-9_]*|\d+|[(),*\[\]])")


def parse_ocds(text: str) -> Ocds:
    """Build an ocds from a small expression language.

    ``hat(a, b)`` and ``hat()`` for flat structures, ``U(k)``,
    ``lazynat(n)``, ``lift(A)``, ``A * B`` for products, ``A => B``
    (right associative) for exponentials and ``[T]`` for the structure of a
    pointed type ``T``.
    """
    from .syntax import parse_type
    pos = 0
    toks: list[str] = []
    while pos < len(text):
        if text[pos] == "[":
            end = text.find("]", pos)
            if end < 0:
                raise ValueError("unclosed [")
            toks.append(text[pos:end + 1])
            pos = end + 1
            continue
        m = _OCDS_TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise ValueError(f"unexpected input at {text[pos:]!r}")
        toks.append(m.group(1))
        pos = m.end()
    toks.append("")
    i = 0

    def peek() -> str:
        return toks[i]

    def take(want: str | None = None) -> str:
        nonlocal i
        tok = toks[i]
        if want is not None and tok != want:
            raise ValueError(f"expected {want!r}, found {tok or 'end of input'!r}")
        i += 1
        return tok

    def expr() -> Ocds:
        left = prod()
        if peek() == "=>":
            take()
            return exponential(left, expr())
        return left

    def prod() -> Ocds:
        parts = [atom()]
        while peek() == "*":
            take()
            parts.append(atom())
        return parts[0] if len(parts) == 1 else ocds_product(parts)

    def atom() -> Ocds:
        tok = take()
        if tok.startswith("["):
            return ocds_of(parse_type(tok[1:-1]))
        if tok == "(":
            inner = expr()
            take(")")
            return inner
        if tok == "hat":
            take("(")
            labels = []
            while peek() != ")":
                if peek() in ("", "(", "*", "=>"):
                    raise ValueError(f"bad label {peek() or 'end of input'!r}")
                labels.append(take())
                if peek() == ",":
                    take()
            take(")")
            return hat(labels)
        if tok in ("U", "lazynat"):
            take("(")
            n = int(take())
            take(")")
            return universal_trunc(n) if tok == "U" else lazy_nats(n)
        if tok == "lift":
            take("(")
            inner = expr()
            take(")")
            return ocds_lift(inner)
        raise ValueError(f"unexpected {tok or 'end of input'!r}")

    out = expr()
    if peek() != "":
        raise ValueError(f"trailing input {peek()!r}")
    return out
