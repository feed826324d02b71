"""Denotational semantics into finite biorders, evaluated lazily.

``o`` denotes Σ, ``N`` the discrete biorder of numerals below a truncation
``K``, and arrows the monotone stable function spaces.  Rather than
tabulating every function, terms evaluate to small runtime objects:

* ``o`` values are ``0`` (extensional bottom) or ``1`` (stable bottom);
* ``N`` values are integers below ``K`` or :data:`OMEGA_N`, which stands for
  "some numeral at least ``K``";
* function values are :class:`Fn` objects that can be applied.

A function's canonical *key* is its table over the carrier of its domain.
Keys identify elements of the finite model and are used for comparisons.
Memoisation inside the evaluator uses cheaper structural labels instead.

Fixed points are computed on demand, one argument tuple at a time, by
unfolding the recursion.  Cycles start from the mode's base element and are
iterated locally until they settle (see :meth:`Semantics.fix_point`).  The
result is the least fixed point: in the stable order for must-testing, in
the extensional order for may-testing.

Numerals at or above ``K`` collapse to ``OMEGA_N``.  Comparing two such
numerals, or looking one up in a tabulated function, leaves the finite
model.  Under the ``"error"`` policy that raises :class:`TruncationOverflow`;
under ``"diverge"`` it yields the base element and is counted in
``Semantics.hits``.
"""

from __future__ import annotations

import enum
import gc
import sys
import threading
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Iterable, Mapping

from .biorder import FiniteBiorder, discrete, function_space, sigma
from .opsem import Converges, EvalConfig, FuelExhausted, evaluate
from .syntax import (
    FF, TT, App, Arrow, BVar, Bottom, Choice, Eq, Fix, Ground, Lam, Nat, NatChoice,
    Suc, Term, Top, TypeExpr, Var, Zero, abstract, arg_types, infer, parse_term,
    pretty, type_str, typecheck,
)


class Mode(enum.Enum):
    MAY = "may"
    MUST = "must"

    @classmethod
    def of(cls, m: "Mode | str") -> "Mode":
        return m if isinstance(m, Mode) else cls(m)


class TruncationOverflow(ArithmeticError):
    pass


class _OmegaProbe(Exception):
    """Internal: a lookup at OMEGA_N while computing a key's overflow column."""


class _Omega:
    __slots__ = ()

    def __repr__(self) -> str:
        return "ω"

    def __reduce__(self):
        return "OMEGA_N"


OMEGA_N = _Omega()
_BOOL = Arrow(Ground(), Arrow(Ground(), Ground()))
_INF = float("inf")
HIT = "hit"  # key entry for an overflow column that left the model


class Fn:
    """A function value.  ``typ`` is its (arrow) type."""

    typ: Arrow
    _key: Any = None
    _sid: Any = None

    def apply(self, arg: Any) -> Any:
        raise NotImplementedError


class Thunk:
    """A delayed ``o``-typed argument."""

    __slots__ = ("sem", "code", "env", "_value")

    def __init__(self, sem: "Semantics", code: Callable, env: tuple):
        self.sem, self.code, self.env = sem, code, env
        self._value = None

    def force(self) -> int:
        if self._value is not None:
            return self._value
        v, low = self.sem.tracked(lambda: self.code(self.env))
        if low == _INF:
            self._value = v
            self.env = None  # release captured scope
        return v


def force(v: Any) -> Any:
    return v.force() if isinstance(v, Thunk) else v


class Closure(Fn):
    __slots__ = ("lam", "env", "tenv", "code", "typ", "_key")

    def __init__(self, lam: Lam, env: tuple, tenv: tuple, code: Callable, typ: Arrow):
        self.lam, self.env, self.tenv, self.code, self.typ = lam, env, tenv, code, typ
        self._key = None

    def apply(self, arg: Any) -> Any:
        return self.code(self.env + (arg,))


class TableFn(Fn):
    """A function given by its canonical key."""

    __slots__ = ("sem", "typ", "_key")

    def __init__(self, sem: "Semantics", typ: Arrow, key: tuple):
        self.sem, self.typ, self._key = sem, typ, key

    def apply(self, arg: Any) -> Any:
        sem = self.sem
        dom = self.typ.domain
        if isinstance(dom, Ground):
            entry = self._key[force(arg)]
        elif isinstance(dom, Nat):
            entry = self._key[-1 if arg is OMEGA_N else arg]
            if entry == HIT:
                return sem.overflow(self.typ.codomain)
        else:
            entry = self._key[sem.model(dom).position(sem.strip(sem.key_of(arg, dom), dom))]
        return sem.from_key(entry, self.typ.codomain)


class EmbedFn(Fn):
    """An element of the model at truncation ``k`` viewed inside a larger one.

    Numerals at or above ``k`` are sent to the base element; function
    arguments are first cut down to truncation ``k``.
    """

    __slots__ = ("sem", "typ", "kkey", "k", "_key")

    def __init__(self, sem: "Semantics", typ: Arrow, kkey: tuple, k: int):
        self.sem, self.typ, self.kkey, self.k = sem, typ, kkey, k
        self._key = None

    def apply(self, arg: Any) -> Any:
        sem = self.sem
        dom, cod = self.typ.domain, self.typ.codomain
        if isinstance(dom, Ground):
            entry = self.kkey[force(arg)]
        elif isinstance(dom, Nat):
            if arg is OMEGA_N or arg >= self.k:
                return sem.base_value(cod)
            entry = self.kkey[arg]
        else:
            pos = sem.small_model(dom, self.k).position(sem.project_key(arg, dom, self.k))
            entry = self.kkey[pos]
        if isinstance(cod, Ground):
            return entry
        return EmbedFn(sem, cod, entry, self.k)


class ConstFn(Fn):
    __slots__ = ("typ", "value", "_key")

    def __init__(self, typ: Arrow, value: int):
        self.typ, self.value, self._key = typ, value, None

    def apply(self, arg: Any) -> Any:
        cod = self.typ.codomain
        return self.value if isinstance(cod, Ground) else ConstFn(cod, self.value)


class JoinFn(Fn):
    """Pointwise extensional join of two functions of the same type."""

    __slots__ = ("a", "b", "typ", "_key")

    def __init__(self, a: Fn, b: Fn):
        self.a, self.b, self.typ, self._key = a, b, a.typ, None

    def apply(self, arg: Any) -> Any:
        ra = self.a.apply(arg)
        if isinstance(self.typ.codomain, Ground):
            return ra if ra == 1 else max(ra, self.b.apply(arg))
        return JoinFn(ra, self.b.apply(arg))


class NatChoiceFn(Fn):
    __slots__ = ("sem", "typ", "_key")

    def __init__(self, sem: "Semantics", typ: Arrow):
        self.sem, self.typ, self._key = sem, typ, None

    def apply(self, f: Any) -> int:
        for n in range(self.sem.K):
            if f.apply(n) == 1:
                return 1
        return 0


class FixOp(Fn):
    """The constant ``Y[P]``."""

    __slots__ = ("sem", "typ", "point_type", "_key")

    def __init__(self, sem: "Semantics", point_type: TypeExpr):
        self.sem = sem
        self.point_type = point_type
        self.typ = Arrow(Arrow(point_type, point_type), point_type)
        self._key = None

    def apply(self, g: Any) -> Any:
        P = self.point_type
        if isinstance(P, Ground):
            v = self.sem.base
            for _ in range(4):
                nxt = g.apply(v)
                if nxt == v:
                    return v
                v = nxt
            raise AssertionError("fixed point iteration on Σ did not settle")
        return PartialFn(self.sem.solver_for(g, P), P, ())


class PartialFn(Fn):
    """The fixed point of a functional, collecting arguments until a full
    point is available."""

    __slots__ = ("solver", "typ", "args", "_key", "_sid")

    def __init__(self, solver: "_Solver", typ: TypeExpr, args: tuple):
        self.solver, self.typ, self.args = solver, typ, args
        self._key = self._sid = None

    def apply(self, arg: Any) -> Any:
        args = self.args + (arg,)
        if len(args) < self.solver.arity:
            return PartialFn(self.solver, self.typ.codomain, args)
        return self.solver.value(args)


class _Solver:
    """The fixed point of one functional ``g : P -> P``, one point at a time."""

    def __init__(self, sem: "Semantics", g: Fn, P: Arrow, uid: int):
        self.sem, self.g, self.P, self.uid = sem, g, P, uid
        self.arg_types = arg_types(P)
        self.arity = len(self.arg_types)
        self.final: dict = {}
        self.active = 0  # points of this solver currently being computed

    def value(self, args: tuple) -> int:
        sem = self.sem
        # Deep recursion through one solver switches function arguments to
        # extensional keys, which range over a finite set and so must cycle.
        extensional = self.active > sem.structural_depth
        key = []
        cargs = []
        for a, ty in zip(args, self.arg_types):
            if isinstance(ty, Ground):
                a = force(a)
                key.append(a)
            elif isinstance(ty, Nat):
                key.append(a)
            elif extensional:
                k = sem.key_of(a, ty)
                key.append(("x", sem.intern(k)))
                a = TableFn(sem, ty, k)
            else:
                key.append(sem.skey(a))
            cargs.append(a)
        return sem.fix_point(self, tuple(key), tuple(cargs))

    def compute(self, args: tuple) -> int:
        v = self.g.apply(PartialFn(self, self.P, ()))
        for a in args:
            v = v.apply(a)
        return v


class TypeModel:
    """The carrier of a type at truncation ``K``, with canonical keys."""

    def __init__(self, sem: "Semantics", typ: TypeExpr, K: int, budget: int):
        self.sem, self.typ, self.K = sem, typ, K
        if isinstance(typ, Ground):
            self.biorder = sigma()
            self.skeys: list = [0, 1]
        elif isinstance(typ, Nat):
            self.biorder = discrete(range(K))
            self.skeys = list(range(K))
        else:
            dom = sem.model_at(typ.domain, K, budget)
            cod = sem.model_at(typ.codomain, K, budget)
            self.biorder = function_space(dom.biorder, cod.biorder, budget)
            self.skeys = [tuple(cod.skeys[v] for v in t) for t in self.biorder.keys]
        self.pos = {k: i for i, k in enumerate(self.skeys)}

    def position(self, skey: Any) -> int:
        """Carrier index of a stripped key."""
        return self.pos[skey]

    def values(self) -> list:
        """Runtime values for every carrier element (overflow columns unknown)."""
        return [self.sem.from_stripped(k, self.typ) for k in self.skeys]


class Semantics:
    """Evaluation context: mode, truncation and overflow policy.

    ``K`` is the internal truncation.  ``headroom`` is informational: checks
    that compare against a smaller truncation ``k`` use ``K = k + headroom``.
    """

    def __init__(self, mode: Mode | str = Mode.MUST, K: int = 3, policy: str = "error",
                 budget: int = 10**6):
        if K < 1:
            raise ValueError("truncation must be positive")
        if policy not in ("error", "diverge"):
            raise ValueError("policy must be 'error' or 'diverge'")
        self.mode = Mode.of(mode)
        self.K = K
        self.policy = policy
        self.budget = budget
        self.err = 1 if self.mode is Mode.MAY else 0
        self.base = 0 if self.mode is Mode.MAY else 1
        self.hits = 0
        self._probe = 0
        self._closed: dict[Term, Any] = {}
        self._codes: dict[Any, Callable] = {}
        self._models: dict[tuple, TypeModel] = {}
        self._solvers: dict[Any, _Solver] = {}
        self._ids: dict[Any, int] = {}
        self.structural_depth = 4 * K + 16
        # fixed-point bookkeeping, see fix_point
        self._stack: list = []
        self._active: dict = {}
        self._approx: dict = {}
        self._prov: dict = {}
        self._prov_log: list = []
        self._lows: list = [_INF]

    # ----------------------------------------------------------- overflow

    def overflow(self, typ: TypeExpr) -> Any:
        if self._probe:
            raise _OmegaProbe
        if self.policy == "error":
            raise TruncationOverflow(f"numeral reached the truncation bound {self.K}")
        self.hits += 1
        return self.base_value(typ)

    def base_value(self, typ: TypeExpr) -> Any:
        return self.base if isinstance(typ, Ground) else ConstFn(typ, self.base)

    # -------------------------------------------------------------- models

    def model(self, typ: TypeExpr) -> TypeModel:
        return self.model_at(typ, self.K, self.budget)

    def small_model(self, typ: TypeExpr, k: int) -> TypeModel:
        return self.model_at(typ, k, self.budget)

    def model_at(self, typ: TypeExpr, K: int, budget: int) -> TypeModel:
        key = (typ, K)
        m = self._models.get(key)
        if m is None:
            m = TypeModel(self, typ, K, budget)
            self._models[key] = m
        return m

    # ---------------------------------------------------------------- keys

    def key_of(self, v: Any, typ: TypeExpr) -> Any:
        """Canonical key of a value.  Domains of type N get an extra last
        column for OMEGA_N (``HIT`` when that lookup leaves the model)."""
        if isinstance(typ, Ground):
            return force(v)
        if isinstance(typ, Nat):
            return v
        if v._key is not None:
            return v._key
        key, low = self.tracked(lambda: self._tabulate(v, typ))
        if low == _INF:
            v._key = key
        return key

    def _tabulate(self, v: Fn, typ: Arrow) -> tuple:
        dom, cod = typ.domain, typ.codomain
        if isinstance(dom, Nat):
            cols = [self.key_of(v.apply(n), cod) for n in range(self.K)]
            self._probe += 1
            try:
                cols.append(self.key_of(v.apply(OMEGA_N), cod))
            except _OmegaProbe:
                cols.append(HIT)
            finally:
                self._probe -= 1
        else:
            cols = [self.key_of(v.apply(a), cod) for a in self.model(dom).values()]
        return tuple(cols)

    def strip(self, key: Any, typ: TypeExpr) -> Any:
        """Drop overflow columns, leaving a key of the finite model."""
        if not isinstance(typ, Arrow):
            return key
        cols = key[:-1] if isinstance(typ.domain, Nat) else key
        if isinstance(typ.codomain, Ground):
            return tuple(cols)
        return tuple(self.strip(c, typ.codomain) if c != HIT else HIT for c in cols)

    def from_key(self, key: Any, typ: TypeExpr) -> Any:
        if isinstance(typ, Ground):
            return key
        if key == HIT:
            return self.overflow(typ)
        return TableFn(self, typ, key)

    def from_stripped(self, skey: Any, typ: TypeExpr) -> Any:
        if isinstance(typ, Ground):
            return skey
        return TableFn(self, typ, self._unstrip(skey, typ))

    def _unstrip(self, skey: Any, typ: TypeExpr) -> Any:
        if not isinstance(typ, Arrow):
            return skey
        cols = [self._unstrip(c, typ.codomain) for c in skey]
        if isinstance(typ.domain, Nat):
            cols.append(HIT)
        return tuple(cols)

    def project_key(self, v: Any, typ: TypeExpr, k: int) -> Any:
        """Stripped key at truncation ``k`` of a value computed at ``K >= k``.

        Numeral arguments range below ``k``; function arguments range over
        the truncation-``k`` carrier, embedded.
        """
        if isinstance(typ, Ground):
            return force(v)
        if isinstance(typ, Nat):
            return v
        dom, cod = typ.domain, typ.codomain
        if isinstance(dom, Nat):
            return tuple(self.project_key(v.apply(n), cod, k) for n in range(k))
        if isinstance(dom, Ground):
            return tuple(self.project_key(v.apply(a), cod, k) for a in (0, 1))
        return tuple(self.project_key(v.apply(self.embed(a, dom, k)), cod, k)
                     for a in self.small_model(dom, k).skeys)

    def embed(self, skey: Any, typ: TypeExpr, k: int) -> Any:
        """An element of the truncation-``k`` model as a value at ``K``."""
        if isinstance(typ, Ground):
            return skey
        return EmbedFn(self, typ, skey, k)

    # ---------------------------------------------------------- evaluation

    def solver_for(self, g: Any, P: Arrow) -> _Solver:
        ck = (self.skey(g), P)
        s = self._solvers.get(ck)
        if s is None:
            s = _Solver(self, g, P, len(self._solvers))
            self._solvers[ck] = s
        return s

    # ------------------------------------------------------ fixed points

    def fix_point(self, s: _Solver, key: tuple, args: tuple) -> int:
        """Value of the least fixed point of ``s`` at one point.

        Recursion is unfolded directly.  A point that is requested while it
        is still being computed answers with its current approximation
        (initially the base element).  Results that relied on an
        approximation stay provisional until the point that owns it settles;
        if its value moved, everything computed since is discarded and the
        point is recomputed.  Each Σ value can move at most once.
        """
        hit = s.final.get(key)
        if hit is not None:
            return hit
        pk = (s.uid, key)
        lows = self._lows
        prov = self._prov.get(pk)
        if prov is not None:
            if prov[1] < lows[-1]:
                lows[-1] = prov[1]
            return prov[0]
        idx = self._active.get(pk)
        if idx is not None:
            if idx < lows[-1]:
                lows[-1] = idx
            return self._approx[pk]
        idx = len(self._stack)
        self._stack.append(pk)
        self._active[pk] = idx
        self._approx[pk] = self.base
        start = len(self._prov_log)
        s.active += 1
        done = False
        try:
            for _ in range(3):
                lows.append(_INF)
                try:
                    v = s.compute(args)
                finally:
                    low = lows.pop()
                if low < idx:
                    self._prov[pk] = (v, low)
                    self._prov_log.append((s, key))
                    if low < lows[-1]:
                        lows[-1] = low
                    done = True
                    return v
                if low == idx and v != self._approx[pk]:
                    self._approx[pk] = v
                    self._drop_provisional(start)
                    continue
                s.final[key] = v
                for t, k in self._prov_log[start:]:
                    t.final[k] = self._prov.pop((t.uid, k))[0]
                del self._prov_log[start:]
                done = True
                return v
            raise AssertionError("fixed-point approximation moved twice")
        finally:
            s.active -= 1
            self._stack.pop()
            del self._active[pk]
            del self._approx[pk]
            if not done:
                self._drop_provisional(start)

    def _drop_provisional(self, start: int) -> None:
        for t, k in self._prov_log[start:]:
            self._prov.pop((t.uid, k), None)
        del self._prov_log[start:]

    def tracked(self, fn: Callable[[], Any]) -> tuple[Any, int]:
        """Run ``fn``, reporting the lowest in-progress approximation it used."""
        lows = self._lows
        lows.append(_INF)
        try:
            v = fn()
        finally:
            low = lows.pop()
            if low < lows[-1]:
                lows[-1] = low
        return v, low

    # ------------------------------------------------------ structural keys

    def intern(self, obj: Any) -> int:
        i = self._ids.get(obj)
        if i is None:
            i = len(self._ids)
            self._ids[obj] = i
        return i

    def skey(self, v: Any) -> Any:
        """A hashable label for a runtime value.  Equal labels imply equal
        values; the converse need not hold."""
        if isinstance(v, Thunk):
            return v._value if v._value is not None else ("thunk", self.intern(v))
        if not isinstance(v, Fn):
            return v
        sid = v._sid
        if sid is None:
            sid = self.intern(self._structure(v))
            v._sid = sid
        return sid

    def _structure(self, v: Fn) -> tuple:
        if isinstance(v, Closure):
            n = len(v.env)
            used = tuple((i, v.tenv[n - 1 - i], self.skey(v.env[n - 1 - i]))
                         for i in sorted(_free_indices(v.lam)))
            return ("lam", v.lam, used)
        if isinstance(v, PartialFn):
            return ("fix", v.solver.uid, v.typ, tuple(self.skey(a) for a in v.args))
        if isinstance(v, TableFn):
            return ("tab", v.typ, v._key)
        if isinstance(v, EmbedFn):
            return ("emb", v.typ, v.kkey, v.k)
        if isinstance(v, ConstFn):
            return ("const", v.typ, v.value)
        if isinstance(v, JoinFn):
            return ("join", self.skey(v.a), self.skey(v.b))
        if isinstance(v, NatChoiceFn):
            return ("?N",)
        if isinstance(v, FixOp):
            return ("Y", v.point_type)
        raise TypeError(f"no structural key for {v!r}")

    def eval(self, t: Term, env: tuple = (), tenv: tuple = ()) -> Any:
        return self.compile(t, tenv)(env)

    def compile(self, t: Term, tenv: tuple) -> Callable[[tuple], Any]:
        """Translate ``t`` (typed under ``tenv``) into a function of the
        runtime environment."""
        ck = (t, tenv) if t.depth else t
        code = self._codes.get(ck)
        if code is None:
            if t.depth == 0 and not t.has_free and not isinstance(t, (Zero, Suc)):
                code = self._closed_code(t)
            else:
                code = self._compile(t, tenv)
            self._codes[ck] = code
        return code

    def _closed_code(self, t: Term) -> Callable[[tuple], Any]:
        inner = self._compile(t, ())
        cache = self._closed

        def run(env: tuple) -> Any:
            hit = cache.get(t)
            if hit is not None:
                return hit
            v, low = self.tracked(lambda: inner(()))
            if low == _INF:
                cache[t] = v
            return v
        return run

    def _compile(self, t: Term, tenv: tuple) -> Callable[[tuple], Any]:
        sem = self
        match t:
            case BVar(i):
                j = -1 - i
                return lambda env: force(env[j])
            case Var(name):
                raise KeyError(f"unbound variable {name!r}")
            case Lam(_, annot, body):
                typ = infer(t, tenv)
                inner = tenv + (annot,)
                holder: list = []
                # the body is compiled on first use, so recursion through
                # deep terms stays lazy
                def run_lam(env: tuple) -> Closure:
                    if not holder:
                        holder.append(sem.compile(body, inner))
                    return Closure(t, env, tenv, holder[0], typ)
                return run_lam
            case App(f, a):
                fc = self.compile(f, tenv)
                dom = infer(f, tenv).domain
                if isinstance(dom, Ground):
                    if isinstance(a, Top):
                        e = self.err
                        return lambda env: fc(env).apply(e)
                    if isinstance(a, Bottom):
                        b = self.base
                        return lambda env: fc(env).apply(b)
                    if isinstance(a, BVar):
                        j = -1 - a.index
                        return lambda env: fc(env).apply(env[j])
                    ac = self.compile(a, tenv)
                    return lambda env: fc(env).apply(Thunk(sem, ac, env))
                ac = self.compile(a, tenv)
                return lambda env: fc(env).apply(ac(env))
            case Top():
                e = self.err
                return lambda env: e
            case Bottom():
                b = self.base
                return lambda env: b
            case Choice(l, r):
                lc, rc = self.compile(l, tenv), self.compile(r, tenv)
                if isinstance(infer(t, tenv), Ground):
                    def run_choice(env: tuple) -> int:
                        lv = lc(env)
                        return lv if lv == 1 else rc(env)
                    return run_choice
                return lambda env: JoinFn(lc(env), rc(env))
            case Zero():
                return lambda env: 0
            case Suc(a):
                ac = self.compile(a, tenv)
                top = self.K - 1

                def run_suc(env: tuple) -> Any:
                    n = ac(env)
                    return OMEGA_N if n is OMEGA_N or n >= top else n + 1
                return run_suc
            case Eq(l, r):
                lc, rc = self.compile(l, tenv), self.compile(r, tenv)
                tt = ff = None

                def run_eq(env: tuple) -> Any:
                    nonlocal tt, ff
                    m, n = lc(env), rc(env)
                    if m is OMEGA_N and n is OMEGA_N:
                        return sem.overflow(_BOOL)
                    if tt is None:
                        tt, ff = sem.eval(TT), sem.eval(FF)
                    return tt if m == n else ff
                return run_eq
            case Fix(P):
                op = FixOp(self, P)
                return lambda env: op
            case NatChoice():
                op = NatChoiceFn(self, Arrow(Arrow(Nat(), Ground()), Ground()))
                return lambda env: op
        raise TypeError(f"cannot evaluate {t!r}")

    # --------------------------------------------------------------- API

    def value(self, t: Term, env: Mapping[str, tuple[Any, TypeExpr]] | None = None) -> Any:
        """Runtime value of ``t``; ``env`` maps free names to (value, type)."""
        env = dict(env or {})
        names = sorted(n for n in env if n in _free_names(t))
        body = t
        for n in names:
            body = abstract(_shift(body, 1, 0), n)
        if body.has_free:
            raise KeyError(f"unbound variables in {t!r}")
        vals = tuple(env[n][0] for n in names)
        tenv = tuple(env[n][1] for n in names)
        return self.eval(body, vals, tenv)


def _free_names(t: Term) -> set[str]:
    from .syntax import free_vars
    return free_vars(t)


def _shift(t: Term, by: int, cutoff: int) -> Term:
    if t.depth <= cutoff:
        return t
    match t:
        case BVar(i):
            return BVar(i + by) if i >= cutoff else t
        case Lam(h, a, b):
            return Lam(h, a, _shift(b, by, cutoff + 1))
        case App(f, a):
            return App(_shift(f, by, cutoff), _shift(a, by, cutoff))
        case Choice(l, r):
            return Choice(_shift(l, by, cutoff), _shift(r, by, cutoff))
        case Suc(a):
            return Suc(_shift(a, by, cutoff))
        case Eq(l, r):
            return Eq(_shift(l, by, cutoff), _shift(r, by, cutoff))
    return t


_free_idx_cache: dict[Term, frozenset] = {}


def _free_indices(lam: Lam) -> frozenset:
    """Indices (relative to the lambda's scope) the lambda uses."""
    hit = _free_idx_cache.get(lam)
    if hit is None:
        hit = frozenset(i for i in _indices(lam, 0))
        _free_idx_cache[lam] = hit
    return hit


def _indices(t: Term, depth: int) -> Iterable[int]:
    if t.depth <= depth:
        return
    match t:
        case BVar(i):
            yield i - depth
        case Lam(_, _, b):
            yield from _indices(b, depth + 1)
        case App(a, b) | Choice(a, b) | Eq(a, b):
            yield from _indices(a, depth)
            yield from _indices(b, depth)
        case Suc(a):
            yield from _indices(a, depth)


# ----------------------------------------------------------------- running

_deep = threading.local()


def run_deep(fn: Callable[..., Any], *args: Any, **kwargs: Any) -> Any:
    """Call ``fn`` on a thread with a large stack and the cyclic garbage
    collector paused.  Fixed points unfold recursively, so evaluation can
    nest far deeper than the default interpreter limits allow."""
    if getattr(_deep, "active", False):
        return fn(*args, **kwargs)
    out: dict[str, Any] = {}

    def work() -> None:
        _deep.active = True
        try:
            out["value"] = fn(*args, **kwargs)
        except BaseException as e:  # re-raised on the calling thread
            out["error"] = e

    old_limit = sys.getrecursionlimit()
    old_stack = threading.stack_size()
    was_enabled = gc.isenabled()
    sys.setrecursionlimit(max(old_limit, 400_000))
    threading.stack_size(1 << 29)
    gc.disable()
    try:
        t = threading.Thread(target=work, name="ndsem-eval")
        t.start()
        t.join()
    finally:
        threading.stack_size(old_stack)
        sys.setrecursionlimit(old_limit)
        if was_enabled:
            gc.enable()
    if "error" in out:
        raise out["error"]
    return out["value"]


@lru_cache(maxsize=16)
def semantics(mode: Mode | str = Mode.MUST, k: int = 3, policy: str = "error") -> Semantics:
    """A shared evaluation context.  Its caches only ever hold exact values,
    so sharing it between unrelated queries is safe."""
    return Semantics(Mode.of(mode), K=k, policy=policy)


# ------------------------------------------------------------ denotations

def denote_type(T: TypeExpr, mode: Mode | str = Mode.MUST, k: int = 3,
                budget: int = 10**6) -> FiniteBiorder:
    """The finite biorder interpreting ``T`` at truncation ``k``."""
    return semantics(mode, k).model_at(T, k, budget).biorder


@dataclass(frozen=True)
class Denotation:
    """The meaning of a term: its type and its table at truncation ``k``.

    ``key`` is a nested tuple: for a function, its values at every element
    of the domain carrier, in carrier order.  ``value`` is the element's
    index in :attr:`type_biorder`, computed on request.
    """
    typ: TypeExpr
    key: Any
    mode: Mode
    k: int

    @property
    def type_biorder(self) -> FiniteBiorder:
        return denote_type(self.typ, self.mode, self.k)

    @property
    def value(self) -> int:
        return semantics(self.mode, self.k).model_at(self.typ, self.k, 10**6).position(self.key)

    def label(self) -> str:
        return self.type_biorder.labels[self.value]

    def runtime(self, sem: Semantics) -> Any:
        """This element as a value inside ``sem`` (whose truncation may be larger)."""
        if sem.K == self.k:
            return sem.from_stripped(self.key, self.typ)
        return sem.embed(self.key, self.typ, self.k)


def denote_term(t: Term, env: Mapping[str, Denotation] | None = None,
                mode: Mode | str = Mode.MUST, k: int = 3, policy: str = "error") -> Denotation:
    """Denotation of ``t``.  Free names are looked up in ``env``."""
    mode = Mode.of(mode)
    env = dict(env or {})
    T = typecheck({n: d.typ for n, d in env.items()}, t)
    sem = semantics(mode, k, policy)

    def go() -> Any:
        v = sem.value(t, {n: (d.runtime(sem), d.typ) for n, d in env.items()})
        return sem.strip(sem.key_of(v, T), T)
    return Denotation(T, run_deep(go), mode, k)


def key_ext_leq(a: Any, b: Any) -> bool:
    """Extensional order on keys of the same type (pointwise on tables)."""
    if isinstance(a, tuple):
        return all(key_ext_leq(x, y) for x, y in zip(a, b))
    return a <= b


def key_ext_join(a: Any, b: Any) -> Any:
    if isinstance(a, tuple):
        return tuple(key_ext_join(x, y) for x, y in zip(a, b))
    return max(a, b)


def obs_leq(s: Term, t: Term, mode: Mode | str = Mode.MUST, k: int = 3,
            env: Mapping[str, Denotation] | None = None) -> bool:
    """Denotational observational preorder ``s ≲ t``.

    May-testing compares ``⟦s⟧ ⊑ ⟦t⟧``; must-testing reverses it, since
    there the extensional bottom is the converging constant.
    """
    mode = Mode.of(mode)
    ds, dt = denote_term(s, env, mode, k), denote_term(t, env, mode, k)
    if ds.typ != dt.typ:
        raise TypeError(f"cannot compare {type_str(ds.typ)} with {type_str(dt.typ)}")
    if isinstance(ds.typ, Nat):
        return ds.key == dt.key
    if mode is Mode.MAY:
        return key_ext_leq(ds.key, dt.key)
    return key_ext_leq(dt.key, ds.key)


def relation(s: Term, t: Term, mode: Mode | str = Mode.MUST, k: int = 3,
             env: Mapping[str, Denotation] | None = None) -> str:
    """One of ``≃``, ``≲``, ``≳`` or ``incomparable``."""
    le, ge = obs_leq(s, t, mode, k, env), obs_leq(t, s, mode, k, env)
    if le and ge:
        return "≃"
    if le:
        return "≲"
    if ge:
        return "≳"
    return "incomparable"


# --------------------------------------------------------------- adequacy

@dataclass
class AdequacyReport:
    mode: Mode
    k: int
    checked: int = 0
    converging: int = 0
    discrepancies: list = field(default_factory=list)   # (term, operational, denotational)
    fuel_exhausted: list = field(default_factory=list)
    overflowed: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.discrepancies

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "k": self.k,
            "checked": self.checked,
            "converging": self.converging,
            "discrepancies": [{"term": pretty(t), "operational": o, "denotational": d}
                              for t, o, d in self.discrepancies],
            "fuel_exhausted": [pretty(t) for t in self.fuel_exhausted],
            "overflowed": [pretty(t) for t in self.overflowed],
            "seconds": round(self.seconds, 3),
        }


def check_adequacy(programs: Iterable[Term], mode: Mode | str = Mode.MUST,
                   cfg: EvalConfig | None = None, k: int = 3) -> AdequacyReport:
    """Compare evaluation with the denotation on every program.

    A program whose evaluation runs out of fuel is recorded but not counted
    as a discrepancy.  Neither is one whose denotation leaves the truncated
    model.
    """
    mode = Mode.of(mode)
    cfg = cfg or EvalConfig(nat_bound=k)
    report = AdequacyReport(mode, k)
    sem = semantics(mode, k, "error")
    start = time.perf_counter()

    def go() -> None:
        for t in programs:
            outcome = evaluate(t, mode.value, cfg)
            if isinstance(outcome, FuelExhausted):
                report.fuel_exhausted.append(t)
                continue
            try:
                d = sem.value(t)
            except TruncationOverflow:
                report.overflowed.append(t)
                continue
            report.checked += 1
            op = isinstance(outcome, Converges)
            den = d == sem.err
            report.converging += op
            if op != den:
                report.discrepancies.append((t, outcome.name, "⟦℧⟧" if den else "⟦Ω⟧"))
    run_deep(go)
    report.seconds = time.perf_counter() - start
    return report


# ------------------------------------------------------------- retractions

@dataclass
class RetractionReport:
    elements: int = 0
    failures: list = field(default_factory=list)   # keys of elements not recovered
    overflow_hits: int = 0
    K: int = 0
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures and self.overflow_hits == 0


def retraction_report(injs: list[Term], proj: Term, T: TypeExpr, mode: Mode | str = Mode.MUST,
                      k: int = 3, K: int | None = None) -> RetractionReport:
    """Check ``proj (inj₁ x) ... (injₙ x) = x`` for every ``x`` in ``⟦T⟧`` at
    truncation ``k``.

    The terms are evaluated at internal truncation ``K >= k`` with each
    ``x`` embedded (numerals from ``k`` up are sent to the base element) and
    the result cut back down to ``k``.  Encodings that move information to
    larger numerals need ``K`` above ``k``.
    """
    K = k if K is None else K
    if K < k:
        raise ValueError("internal truncation must be at least k")
    sem = Semantics(Mode.of(mode), K=K, policy="diverge")
    report = RetractionReport(K=K)
    start = time.perf_counter()

    def go() -> None:
        ivals = [sem.value(i) for i in injs]
        pval = sem.value(proj)
        for skey in sem.small_model(T, k).skeys:
            x = sem.embed(skey, T, k)
            r = pval
            for i in ivals:
                r = r.apply(i.apply(x))
            if sem.project_key(r, T, k) != skey:
                report.failures.append(skey)
            report.elements += 1
    run_deep(go)
    report.overflow_hits = sem.hits
    report.seconds = time.perf_counter() - start
    return report


def check_retraction(injs: list[Term], proj: Term, T: TypeExpr, mode: Mode | str = Mode.MUST,
                     k: int = 3, K: int | None = None) -> bool:
    return retraction_report(injs, proj, T, mode, k, K).ok


def pairing_report(pair: Term, fst: Term, snd: Term, T: TypeExpr, mode: Mode | str = Mode.MUST,
                   k: int = 3, K: int | None = None) -> RetractionReport:
    """Check ``fst (pair x y) = x`` and ``snd (pair x y) = y`` for all ``x, y``."""
    K = k if K is None else K
    sem = Semantics(Mode.of(mode), K=K, policy="diverge")
    report = RetractionReport(K=K)
    start = time.perf_counter()

    def go() -> None:
        pv, fv, sv = sem.value(pair), sem.value(fst), sem.value(snd)
        keys = sem.small_model(T, k).skeys
        for a in keys:
            for b in keys:
                p = pv.apply(sem.embed(a, T, k)).apply(sem.embed(b, T, k))
                if (sem.project_key(fv.apply(p), T, k) != a
                        or sem.project_key(sv.apply(p), T, k) != b):
                    report.failures.append((a, b))
                report.elements += 1
    run_deep(go)
    report.overflow_hits = sem.hits
    report.seconds = time.perf_counter() - start
    return report


def check_pairing(pair: Term, fst: Term, snd: Term, T: TypeExpr, mode: Mode | str = Mode.MUST,
                  k: int = 3, K: int | None = None) -> bool:
    return pairing_report(pair, fst, snd, T, mode, k, K).ok


# ----------------------------------------------------------- non-continuity

def t_term(n: int) -> Term:
    """``t_n``: converges on every numeral up to ``n``."""
    return parse_term(f"Y[N -> o] (\\f:N -> o. \\u:N. Eq({n}, u) Err (f (suc u)))")


def probe_chain_term(i: int, last: str) -> Term:
    """``λf. f 0 (f 1 (... (f i last)))``."""
    body = last
    for j in range(i, -1, -1):
        body = f"f {j} ({body})"
    return parse_term(f"\\f:U. {body}")


def noncontinuity_report(ks: Iterable[int] = (2, 3, 4)) -> dict:
    """Finite approximants of the failure of must-continuity.

    For each truncation ``k`` this checks:

    * ``⟦t_0⟧, ..., ⟦t_{k-1}⟧`` is a chain, ascending in the must preorder
      and in the stable order (``t_n`` for larger ``n`` mentions a numeral
      the truncation cannot represent);
    * ``s_i ≲ t_i`` in the must preorder for ``i <= k``, where
      ``s_i = λf. f 0 (... (f i Ω))`` and ``t_i`` ends in ``℧`` instead.
      Must-testing reverses the extensional order, so this is
      ``⟦t_i⟧ ⊑ ⟦s_i⟧``; the opposite inclusion is reported as well;
    * ``⟦?N⟧`` equals the join of the ``k`` projections ``λf. f n``.

    It also records which ``?N t_n`` converge at truncation ``k``.  With
    unbounded choice none of them must converge, so the truncated model
    disagrees from ``n = k - 1`` onwards; the infinite limit itself is not
    representable here.
    """
    out: dict = {"truncations": {}, "limit": (
        "the infinite limit (the must-least upper bound of the t_n, and ?N applied "
        "to it) has no finite model; only truncated approximants are checked")}
    nat_fn = Arrow(Nat(), Ground())
    for k in ks:
        sem = semantics(Mode.MUST, k)
        model = sem.model(nat_fn)
        ts = [denote_term(t_term(n), mode=Mode.MUST, k=k) for n in range(k)]
        chain_obs = all(key_ext_leq(ts[n + 1].key, ts[n].key) for n in range(k - 1))
        chain_stab = all(model.biorder.stab_leq(model.position(ts[n].key), model.position(ts[n + 1].key))
                         for n in range(k - 1))
        below_must, below_ext = [], []
        for i in range(k + 1):
            s_i = denote_term(probe_chain_term(i, "Omega"), mode=Mode.MUST, k=k, policy="diverge")
            t_i = denote_term(probe_chain_term(i, "Err"), mode=Mode.MUST, k=k, policy="diverge")
            below_must.append(key_ext_leq(t_i.key, s_i.key))
            below_ext.append(key_ext_leq(s_i.key, t_i.key))
        joins = {}
        for mode in (Mode.MAY, Mode.MUST):
            choice = denote_term(parse_term("?N"), mode=mode, k=k)
            acc = None
            for n in range(k):
                d = denote_term(parse_term(f"\\f:N -> o. f {n}"), mode=mode, k=k)
                acc = d.key if acc is None else key_ext_join(acc, d.key)
            joins[mode.value] = choice.key == acc
        converging = [n for n in range(k)
                      if denote_term(App(parse_term("?N"), t_term(n)), mode=Mode.MUST, k=k).key == 0]
        out["truncations"][k] = {
            "t_chain_must": chain_obs,
            "t_chain_stable": chain_stab,
            "s_i_must_below_t_i": below_must,
            "s_i_ext_below_t_i": below_ext,
            "choice_is_join": joins,
            "choice_t_n_converges_from": converging[0] if converging else None,
        }
    trunc = out["truncations"].values()
    out["ok"] = all(r["t_chain_must"] and r["t_chain_stable"] and all(r["s_i_must_below_t_i"])
                    and all(r["choice_is_join"].values()) for r in trunc)
    return out
