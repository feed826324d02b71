"""Terms and types of the nondeterministic lambda calculus with naturals.

Types follow a two-level grammar: value types ``V ::= N | P`` and pointed
types ``P ::= o | V -> P``.  Terms are stored locally nameless: bound
variables are de Bruijn indices (:class:`BVar`) and free variables keep
their names (:class:`Var`).  Binder names on :class:`Lam` are only hints for
printing and take no part in equality, so alpha-equivalent terms compare
equal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Iterator, Mapping


class SyntaxError_(Exception):
    """Raised by the parser; carries the character offset of the problem."""

    def __init__(self, message: str, pos: int | None = None, text: str | None = None):
        self.pos = pos
        if pos is not None and text is not None:
            line = text.count("\n", 0, pos) + 1
            col = pos - (text.rfind("\n", 0, pos) + 1) + 1
            message = f"{message} at line {line}, column {col}"
        elif pos is not None:
            message = f"{message} at offset {pos}"
        super().__init__(message)


class TypeCheckError(Exception):
    pass


# ---------------------------------------------------------------- types


class TypeExpr:
    __slots__ = ()

    def __str__(self) -> str:
        return type_str(self)


@dataclass(frozen=True, repr=False)
class Ground(TypeExpr):
    def __repr__(self) -> str:
        return "o"


@dataclass(frozen=True, repr=False)
class Nat(TypeExpr):
    def __repr__(self) -> str:
        return "N"


@dataclass(frozen=True, repr=False)
class Arrow(TypeExpr):
    domain: TypeExpr
    codomain: TypeExpr

    def __repr__(self) -> str:
        return type_str(self)


O = Ground()
N = Nat()


def arrow(*ts: TypeExpr) -> TypeExpr:
    """Right-nested arrow: ``arrow(a, b, c)`` is ``a -> (b -> c)``."""
    out = ts[-1]
    for t in reversed(ts[:-1]):
        out = Arrow(t, out)
    return out


BOOL = arrow(O, O, O)
NAT = arrow(arrow(N, O), O)
U = arrow(N, O, O)


def is_pointed(t: TypeExpr) -> bool:
    return isinstance(t, (Ground, Arrow))


def check_type(t: TypeExpr) -> None:
    """Reject arrows whose codomain is N (or contains such an arrow)."""
    if isinstance(t, Arrow):
        if isinstance(t.codomain, Nat):
            raise TypeCheckError(f"ill-stratified type: codomain of {type_str(t)} is N")
        check_type(t.domain)
        check_type(t.codomain)


def arg_types(t: TypeExpr) -> list[TypeExpr]:
    out = []
    while isinstance(t, Arrow):
        out.append(t.domain)
        t = t.codomain
    return out


def type_str(t: TypeExpr) -> str:
    if isinstance(t, Ground):
        return "o"
    if isinstance(t, Nat):
        return "N"
    assert isinstance(t, Arrow)
    dom = type_str(t.domain)
    if isinstance(t.domain, Arrow):
        dom = f"({dom})"
    return f"{dom} -> {type_str(t.codomain)}"


# ---------------------------------------------------------------- terms


class Term:
    """Base class.  Subclasses precompute a structural hash and two facts
    used everywhere: whether a free name occurs, and how many enclosing
    binders the term reaches past (``depth``)."""

    __slots__ = ()
    _h: int
    has_free: bool
    depth: int

    def _parts(self) -> tuple:
        raise NotImplementedError

    def __hash__(self) -> int:
        return self._h

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if type(self) is not type(other) or self._h != other._h:  # type: ignore[attr-defined]
            return False
        return self._parts() == other._parts()  # type: ignore[attr-defined]

    @property
    def closed(self) -> bool:
        return not self.has_free and self.depth == 0

    def __str__(self) -> str:
        return pretty(self)

    def __repr__(self) -> str:
        return f"<{pretty(self)}>"


def _init(obj: Term, parts: tuple, has_free: bool, depth: int) -> None:
    object.__setattr__(obj, "_h", hash((type(obj).__name__,) + parts))
    object.__setattr__(obj, "has_free", has_free)
    object.__setattr__(obj, "depth", depth)


_META = dict(init=False, repr=False, compare=False)


@dataclass(frozen=True, eq=False, repr=False)
class Var(Term):
    name: str
    _h: int = field(**_META)
    has_free: bool = field(**_META)
    depth: int = field(**_META)

    def __post_init__(self):
        _init(self, (self.name,), True, 0)

    def _parts(self):
        return (self.name,)


@dataclass(frozen=True, eq=False, repr=False)
class BVar(Term):
    index: int
    _h: int = field(**_META)
    has_free: bool = field(**_META)
    depth: int = field(**_META)

    def __post_init__(self):
        _init(self, (self.index,), False, self.index + 1)

    def _parts(self):
        return (self.index,)


@dataclass(frozen=True, eq=False, repr=False)
class Lam(Term):
    name: str
    annot: TypeExpr
    body: Term
    _h: int = field(**_META)
    has_free: bool = field(**_META)
    depth: int = field(**_META)

    def __post_init__(self):
        _init(self, (self.annot, self.body._h), self.body.has_free, max(self.body.depth - 1, 0))

    def _parts(self):
        return (self.annot, self.body)


@dataclass(frozen=True, eq=False, repr=False)
class App(Term):
    fn: Term
    arg: Term
    _h: int = field(**_META)
    has_free: bool = field(**_META)
    depth: int = field(**_META)

    def __post_init__(self):
        _init(self, (self.fn._h, self.arg._h), self.fn.has_free or self.arg.has_free,
              max(self.fn.depth, self.arg.depth))

    def _parts(self):
        return (self.fn, self.arg)


@dataclass(frozen=True, eq=False, repr=False)
class Bottom(Term):
    """Omega: divergence."""
    _h: int = field(**_META)
    has_free: bool = field(**_META)
    depth: int = field(**_META)

    def __post_init__(self):
        _init(self, (), False, 0)

    def _parts(self):
        return ()


@dataclass(frozen=True, eq=False, repr=False)
class Top(Term):
    """The observable success constant, written ``Err``."""
    _h: int = field(**_META)
    has_free: bool = field(**_META)
    depth: int = field(**_META)

    def __post_init__(self):
        _init(self, (), False, 0)

    def _parts(self):
        return ()


@dataclass(frozen=True, eq=False, repr=False)
class Choice(Term):
    left: Term
    right: Term
    _h: int = field(**_META)
    has_free: bool = field(**_META)
    depth: int = field(**_META)

    def __post_init__(self):
        _init(self, (self.left._h, self.right._h), self.left.has_free or self.right.has_free,
              max(self.left.depth, self.right.depth))

    def _parts(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=False, repr=False)
class Zero(Term):
    _h: int = field(**_META)
    has_free: bool = field(**_META)
    depth: int = field(**_META)

    def __post_init__(self):
        _init(self, (), False, 0)

    def _parts(self):
        return ()


@dataclass(frozen=True, eq=False, repr=False)
class Suc(Term):
    arg: Term
    _h: int = field(**_META)
    has_free: bool = field(**_META)
    depth: int = field(**_META)

    def __post_init__(self):
        _init(self, (self.arg._h,), self.arg.has_free, self.arg.depth)

    def _parts(self):
        return (self.arg,)


@dataclass(frozen=True, eq=False, repr=False)
class Eq(Term):
    lhs: Term
    rhs: Term
    _h: int = field(**_META)
    has_free: bool = field(**_META)
    depth: int = field(**_META)

    def __post_init__(self):
        _init(self, (self.lhs._h, self.rhs._h), self.lhs.has_free or self.rhs.has_free,
              max(self.lhs.depth, self.rhs.depth))

    def _parts(self):
        return (self.lhs, self.rhs)


@dataclass(frozen=True, eq=False, repr=False)
class Fix(Term):
    """The fixed-point constant at a pointed type P, of type (P -> P) -> P."""
    annot: TypeExpr
    _h: int = field(**_META)
    has_free: bool = field(**_META)
    depth: int = field(**_META)

    def __post_init__(self):
        _init(self, (self.annot,), False, 0)

    def _parts(self):
        return (self.annot,)


@dataclass(frozen=True, eq=False, repr=False)
class NatChoice(Term):
    """Unbounded choice ``?N : (N -> o) -> o``."""
    _h: int = field(**_META)
    has_free: bool = field(**_META)
    depth: int = field(**_META)

    def __post_init__(self):
        _init(self, (), False, 0)

    def _parts(self):
        return ()


OMEGA = Bottom()
ERR = Top()
ZERO = Zero()
NATCHOICE = NatChoice()


# ------------------------------------------------------- binding helpers


def abstract(t: Term, name: str, level: int = 0) -> Term:
    """Replace free occurrences of ``name`` by the bound index ``level``."""
    if not t.has_free:
        return t
    match t:
        case Var(n):
            return BVar(level) if n == name else t
        case Lam(hint, annot, body):
            return Lam(hint, annot, abstract(body, name, level + 1))
        case App(f, a):
            return App(abstract(f, name, level), abstract(a, name, level))
        case Choice(l, r):
            return Choice(abstract(l, name, level), abstract(r, name, level))
        case Suc(a):
            return Suc(abstract(a, name, level))
        case Eq(l, r):
            return Eq(abstract(l, name, level), abstract(r, name, level))
    return t


def instantiate(t: Term, value: Term, level: int = 0) -> Term:
    """Replace bound index ``level`` by ``value`` (which must be locally closed)."""
    if t.depth <= level:
        return t
    match t:
        case BVar(i):
            if i == level:
                return value
            return BVar(i - 1) if i > level else t
        case Lam(hint, annot, body):
            return Lam(hint, annot, instantiate(body, value, level + 1))
        case App(f, a):
            return App(instantiate(f, value, level), instantiate(a, value, level))
        case Choice(l, r):
            return Choice(instantiate(l, value, level), instantiate(r, value, level))
        case Suc(a):
            return Suc(instantiate(a, value, level))
        case Eq(l, r):
            return Eq(instantiate(l, value, level), instantiate(r, value, level))
    return t


def lam(name: str, annot: TypeExpr, body: Term) -> Lam:
    """Build ``\\name:annot. body`` from a body that mentions ``name`` freely."""
    return Lam(name, annot, abstract(body, name))


def apps(f: Term, *args: Term) -> Term:
    for a in args:
        f = App(f, a)
    return f


def numeral(n: int) -> Term:
    t: Term = ZERO
    for _ in range(n):
        t = Suc(t)
    return t


def numeral_value(t: Term) -> int | None:
    """The integer denoted by a closed numeral, or None."""
    n = 0
    while isinstance(t, Suc):
        t, n = t.arg, n + 1
    return n if isinstance(t, Zero) else None


def free_vars(t: Term) -> set[str]:
    if not t.has_free:
        return set()
    match t:
        case Var(n):
            return {n}
        case Lam(_, _, body):
            return free_vars(body)
        case App(a, b) | Choice(a, b) | Eq(a, b):
            return free_vars(a) | free_vars(b)
        case Suc(a):
            return free_vars(a)
    return set()


def substitute(t: Term, x: str, s: Term) -> Term:
    """Capture-avoiding substitution ``t[s/x]``.

    Bound variables are indices, so capture cannot happen; ``s`` only has to
    be locally closed (no dangling indices), which every parsed term is.
    """
    if s.depth:
        raise ValueError("substituted term has dangling bound indices")
    if not t.has_free:
        return t
    match t:
        case Var(n):
            return s if n == x else t
        case Lam(hint, annot, body):
            return Lam(hint, annot, substitute(body, x, s))
        case App(f, a):
            return App(substitute(f, x, s), substitute(a, x, s))
        case Choice(l, r):
            return Choice(substitute(l, x, s), substitute(r, x, s))
        case Suc(a):
            return Suc(substitute(a, x, s))
        case Eq(l, r):
            return Eq(substitute(l, x, s), substitute(r, x, s))
    return t


def swap_constants(t: Term) -> Term:
    """``t[Omega/Err, Err/Omega]``."""
    match t:
        case Bottom():
            return ERR
        case Top():
            return OMEGA
        case Lam(hint, annot, body):
            return Lam(hint, annot, swap_constants(body))
        case App(f, a):
            return App(swap_constants(f), swap_constants(a))
        case Choice(l, r):
            return Choice(swap_constants(l), swap_constants(r))
    return t


def size(t: Term) -> int:
    """Number of AST nodes."""
    match t:
        case Lam(_, _, body):
            return 1 + size(body)
        case App(a, b) | Choice(a, b) | Eq(a, b):
            return 1 + size(a) + size(b)
        case Suc(a):
            return 1 + size(a)
    return 1


def subterms(t: Term) -> Iterator[Term]:
    yield t
    match t:
        case Lam(_, _, body):
            yield from subterms(body)
        case App(a, b) | Choice(a, b) | Eq(a, b):
            yield from subterms(a)
            yield from subterms(b)
        case Suc(a):
            yield from subterms(a)


def uses_nat_features(t: Term) -> bool:
    """True if the term leaves the finite fragment (N, Y, Eq or ?N)."""
    return any(isinstance(s, (Zero, Suc, Eq, Fix, NatChoice)) or
               (isinstance(s, Lam) and _mentions_nat(s.annot)) for s in subterms(t))


def _mentions_nat(ty: TypeExpr) -> bool:
    if isinstance(ty, Nat):
        return True
    if isinstance(ty, Arrow):
        return _mentions_nat(ty.domain) or _mentions_nat(ty.codomain)
    return False


# ---------------------------------------------------------------- typing


class TypingContext(dict):
    """Ordered mapping from free variable names to types."""

    def extend(self, name: str, ty: TypeExpr) -> "TypingContext":
        if name in self:
            raise TypeCheckError(f"duplicate variable {name!r} in context")
        out = TypingContext(self)
        out[name] = ty
        return out


_infer_cache: dict[tuple, TypeExpr] = {}


def infer(t: Term, bound: tuple[TypeExpr, ...] = (), free: Mapping[str, TypeExpr] | None = None) -> TypeExpr:
    """Type of ``t`` where ``bound[-1-i]`` types index ``i``.

    Results for terms without free names are cached; the evaluators call
    this repeatedly on shared subterms.
    """
    if not t.has_free:
        key = (t, bound[len(bound) - t.depth:] if t.depth else ())
        hit = _infer_cache.get(key)
        if hit is None:
            hit = _infer(t, key[1], {})
            if len(_infer_cache) > 200_000:
                _infer_cache.clear()
            _infer_cache[key] = hit
        return hit
    return _infer(t, bound, free or {})


def _infer(t: Term, bound: tuple, free: Mapping[str, TypeExpr]) -> TypeExpr:
    match t:
        case Var(n):
            if n not in free:
                raise TypeCheckError(f"unbound variable {n!r}")
            return free[n]
        case BVar(i):
            if i >= len(bound):
                raise TypeCheckError(f"dangling bound index {i}")
            return bound[len(bound) - 1 - i]
        case Lam(name, annot, body):
            check_type(annot)
            bt = infer(body, bound + (annot,), free)
            if not is_pointed(bt):
                raise TypeCheckError(f"body of \\{name} has type N; a pointed type is required")
            return Arrow(annot, bt)
        case App(f, a):
            ft = infer(f, bound, free)
            if not isinstance(ft, Arrow):
                raise TypeCheckError(f"applying a term of non-function type {type_str(ft)}")
            at = infer(a, bound, free)
            if at != ft.domain:
                raise TypeCheckError(
                    f"argument type mismatch: expected {type_str(ft.domain)}, got {type_str(at)}")
            return ft.codomain
        case Bottom() | Top():
            return O
        case Choice(l, r):
            lt, rt = infer(l, bound, free), infer(r, bound, free)
            if lt != rt:
                raise TypeCheckError(f"choice between {type_str(lt)} and {type_str(rt)}")
            if not is_pointed(lt):
                raise TypeCheckError("choice at type N")
            return lt
        case Zero():
            return N
        case Suc(a):
            _expect_nat(a, bound, free)
            return N
        case Eq(l, r):
            _expect_nat(l, bound, free)
            _expect_nat(r, bound, free)
            return BOOL
        case Fix(annot):
            check_type(annot)
            if not is_pointed(annot):
                raise TypeCheckError("fixed point at type N")
            return Arrow(Arrow(annot, annot), annot)
        case NatChoice():
            return NAT
    raise TypeCheckError(f"unknown term node {t!r}")


def _expect_nat(t: Term, bound: tuple, free: Mapping[str, TypeExpr]) -> None:
    if not isinstance(t, (Var, BVar, Zero, Suc)):
        raise TypeCheckError("N-typed expressions are restricted to 0, variables and suc")
    if infer(t, bound, free) != N:
        raise TypeCheckError("expected an expression of type N")


def typecheck(ctx: Mapping[str, TypeExpr] | None, t: Term) -> TypeExpr:
    """The unique type of ``t`` under ``ctx`` (raises TypeCheckError)."""
    return infer(t, (), dict(ctx or {}))


def typecheck_program(t: Term) -> None:
    ty = typecheck({}, t)
    if ty != O:
        raise TypeCheckError(f"a program must be closed of type o, got {type_str(ty)}")


# ----------------------------------------------------------- pretty-print


def pretty(t: Term) -> str:
    """Parseable concrete syntax; binder names are freshened where needed."""
    return _pp(t, [], _ctx_term)


_ctx_term, _ctx_choice, _ctx_app, _ctx_atom = range(4)


def _fresh(hint: str, taken: set[str]) -> str:
    base = hint or "x"
    if base not in taken and base not in _KEYWORDS:
        return base
    i = 1
    while f"{base}{i}" in taken:
        i += 1
    return f"{base}{i}"


def _pp(t: Term, names: list[str], ctx: int) -> str:
    match t:
        case Var(n):
            return n
        case BVar(i):
            return names[len(names) - 1 - i] if i < len(names) else f"#{i}"
        case Lam(hint, annot, body):
            taken = set(names) | free_vars(body)
            nm = _fresh(hint, taken)
            s = f"\\{nm}:{type_str(annot)}. {_pp(body, names + [nm], _ctx_term)}"
            return s if ctx == _ctx_term else f"({s})"
        case Choice(l, r):
            s = f"{_pp(l, names, _ctx_choice)} + {_pp(r, names, _ctx_app)}"
            return s if ctx <= _ctx_choice else f"({s})"
        case App(f, a):
            s = f"{_pp(f, names, _ctx_app)} {_pp(a, names, _ctx_atom)}"
            return s if ctx <= _ctx_app else f"({s})"
        case Bottom():
            return "Omega"
        case Top():
            return "Err"
        case Zero():
            return "0"
        case Suc(a):
            n = numeral_value(t)
            if n is not None:
                return str(n)
            s = f"suc {_pp(a, names, _ctx_atom)}"
            return s if ctx <= _ctx_app else f"({s})"
        case Eq(l, r):
            return f"Eq({_pp(l, names, _ctx_term)}, {_pp(r, names, _ctx_term)})"
        case Fix(annot):
            return f"Y[{type_str(annot)}]"
        case NatChoice():
            return "?N"
    raise ValueError(f"cannot print {t!r}")


# ----------------------------------------------------------------- parser

_KEYWORDS = {"lam", "Omega", "Err", "Y", "suc", "Eq", "If", "then", "else", "tt", "ff"}
_TYPE_WORDS = {"o": O, "N": N, "bool": BOOL, "nat": NAT, "U": U}

_TOKEN = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<arrow>->)
  | (?P<qn>\?N)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>[\\.:()+,\[\]])
""", re.VERBOSE)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise SyntaxError_(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


TT = lam("x", O, lam("y", O, Var("x")))
FF = lam("x", O, lam("y", O, Var("y")))


class _Parser:
    def __init__(self, text: str, defs: Mapping[str, Term], free: Iterable[str] | None):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.defs = defs
        self.free = None if free is None else set(free)

    def peek(self) -> tuple[str, str, int]:
        return self.toks[self.i]

    def next(self) -> tuple[str, str, int]:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, msg: str, tok=None):
        tok = tok or self.peek()
        return SyntaxError_(msg, tok[2], self.text)

    def expect(self, value: str) -> None:
        tok = self.next()
        if tok[1] != value:
            raise self.error(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok)

    def at(self, value: str) -> bool:
        return self.peek()[1] == value

    # types
    def type_(self) -> TypeExpr:
        dom = self.type_atom()
        if self.peek()[0] == "arrow":
            self.next()
            return Arrow(dom, self.type_())
        return dom

    def type_atom(self) -> TypeExpr:
        tok = self.next()
        if tok[1] == "(":
            t = self.type_()
            self.expect(")")
            return t
        if tok[0] == "ident" and tok[1] in _TYPE_WORDS:
            return _TYPE_WORDS[tok[1]]
        raise self.error(f"expected a type, found {tok[1] or 'end of input'!r}", tok)

    # terms; names are free-variable placeholders abstracted by binders
    def term(self, scope: list[str]) -> Term:
        if self._starts_binder():
            return self.binder_form(scope)
        left = self.app(scope)
        while self.at("+"):
            self.next()
            if self._starts_binder():
                right = self.binder_form(scope)
            else:
                right = self.app(scope)
            left = Choice(left, right)
        return left

    def _starts_binder(self) -> bool:
        tok = self.peek()
        return tok[1] in ("\\", "lam", "If")

    def binder_form(self, scope: list[str]) -> Term:
        tok = self.next()
        if tok[1] == "If":
            b = self.term(scope)
            self.expect("then")
            s = self.term(scope)
            self.expect("else")
            e = self.term(scope)
            return App(App(b, s), e)
        name_tok = self.next()
        if name_tok[0] != "ident" or name_tok[1] in _KEYWORDS:
            raise self.error("expected a binder name", name_tok)
        self.expect(":")
        annot = self.type_()
        try:
            check_type(annot)
        except TypeCheckError as e:
            raise self.error(str(e), name_tok) from None
        self.expect(".")
        body = self.term(scope + [name_tok[1]])
        return Lam(name_tok[1], annot, abstract(body, "\0" + name_tok[1] + f"\0{len(scope)}"))

    def app(self, scope: list[str]) -> Term:
        tok = self.peek()
        if tok[1] == "suc":
            self.next()
            head: Term = Suc(self.atom(scope))
        else:
            head = self.atom(scope)
        while True:
            tok = self.peek()
            if self._starts_binder():
                head = App(head, self.binder_form(scope))
                break
            if tok[0] in ("ident", "num", "qn") and tok[1] not in ("then", "else") or tok[1] == "(":
                if tok[1] == "suc":
                    self.next()
                    head = App(head, Suc(self.atom(scope)))
                else:
                    head = App(head, self.atom(scope))
            else:
                break
        return head

    def atom(self, scope: list[str]) -> Term:
        tok = self.next()
        kind, val = tok[0], tok[1]
        if val == "(":
            t = self.term(scope)
            self.expect(")")
            return t
        if kind == "num":
            return numeral(int(val))
        if kind == "qn":
            return NATCHOICE
        if val == "suc":
            return Suc(self.atom(scope))
        if kind == "ident":
            if val in scope:
                depth = len(scope) - 1 - scope[::-1].index(val)
                return Var("\0" + val + f"\0{depth}")
            if val == "Omega":
                return OMEGA
            if val == "Err":
                return ERR
            if val == "tt":
                return TT
            if val == "ff":
                return FF
            if val == "Y":
                self.expect("[")
                ty = self.type_()
                self.expect("]")
                return Fix(ty)
            if val == "Eq":
                self.expect("(")
                lhs = self.term(scope)
                self.expect(",")
                rhs = self.term(scope)
                self.expect(")")
                return Eq(lhs, rhs)
            if val in _KEYWORDS:
                raise self.error(f"unexpected keyword {val!r}", tok)
            if val in self.defs:
                return self.defs[val]
            if self.free is None or val in self.free:
                return Var(val)
            raise self.error(f"unknown identifier {val!r}", tok)
        raise self.error(f"unexpected {val or 'end of input'!r}", tok)


def parse_term(text: str, defs: Mapping[str, Term] | None = None,
               free: Iterable[str] | None = ()) -> Term:
    """Parse concrete syntax into a term.

    ``defs`` maps extra identifiers to closed terms (e.g. the corpus).
    ``free`` lists names allowed to stay free; ``None`` allows any name.
    """
    p = _Parser(text, defs or {}, free)
    t = p.term([])
    if p.peek()[0] != "eof":
        raise p.error(f"unexpected {p.peek()[1]!r}")
    return t


def parse_type(text: str) -> TypeExpr:
    p = _Parser(text, {}, None)
    t = p.type_()
    if p.peek()[0] != "eof":
        raise p.error(f"unexpected {p.peek()[1]!r}")
    check_type(t)
    return t


# ----------------------------------------------------------------- corpus

_corpus_cache: dict[str, tuple[Term, TypeExpr]] | None = None


def _load_corpus_text() -> str:
    return resources.files("ndsem").joinpath("corpus.txt").read_text(encoding="utf-8")


def parse_corpus(text: str) -> dict[str, tuple[Term, TypeExpr]]:
    """Entries look like ``def name : type = term`` and may use earlier names."""
    out: dict[str, tuple[Term, TypeExpr]] = {}
    chunks = re.split(r"^def\s+", text, flags=re.MULTILINE)
    for chunk in chunks[1:]:
        head, _, body = chunk.partition("=")
        name, _, ty_text = head.partition(":")
        name = name.strip()
        declared = parse_type(ty_text.strip())
        body = re.sub(r"#[^\n]*", "", body).strip()
        try:
            term = parse_term(body, {k: v[0] for k, v in out.items()})
            actual = typecheck({}, term)
        except (SyntaxError_, TypeCheckError) as e:
            raise type(e)(f"corpus entry {name}: {e}") from None
        if actual != declared:
            raise TypeCheckError(f"corpus entry {name}: declared {declared}, inferred {actual}")
        out[name] = (term, declared)
    return out


def builtin_corpus() -> dict[str, tuple[Term, TypeExpr]]:
    """Named terms used by the checks, each with its declared type."""
    global _corpus_cache
    if _corpus_cache is None:
        _corpus_cache = parse_corpus(_load_corpus_text())
    return dict(_corpus_cache)


def corpus_defs() -> dict[str, Term]:
    return {k: v[0] for k, v in builtin_corpus().items()}


# ------------------------------------------------------------- generators

# Argument types tried when enumerating applications.  Application is the
# only rule whose premises mention a type absent from the conclusion, so
# some finite choice is needed to make enumeration by size terminate.
DEFAULT_ARG_TYPES: tuple[TypeExpr, ...] = (O, arrow(O, O), arrow(O, O, O), arrow(arrow(O, O), O))


class TermEnumerator:
    """All terms of the finite fragment (no naturals, ``Y`` or ``?N``) by
    type and exact size, memoised.  Contexts are tuples of types with the
    innermost binder last."""

    def __init__(self, arg_types: Iterable[TypeExpr] = DEFAULT_ARG_TYPES):
        self.arg_types = tuple(arg_types)
        self._memo: dict[tuple, list[Term]] = {}

    def exact(self, ctx: tuple, T: TypeExpr, n: int) -> list[Term]:
        key = (ctx, T, n)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        out: list[Term] = []
        if n == 1:
            out.extend(BVar(i) for i, ty in enumerate(reversed(ctx)) if ty == T)
            if T == O:
                out.extend((OMEGA, ERR))
        else:
            if isinstance(T, Arrow):
                for body in self.exact(ctx + (T.domain,), T.codomain, n - 1):
                    out.append(Lam(f"x{len(ctx)}", T.domain, body))
            for a in range(1, n - 1):
                b = n - 1 - a
                if T == O:
                    for left in self.exact(ctx, O, a):
                        for right in self.exact(ctx, O, b):
                            out.append(Choice(left, right))
                for A in self.arg_types:
                    fs = self.exact(ctx, Arrow(A, T), a)
                    if not fs:
                        continue
                    xs = self.exact(ctx, A, b)
                    out.extend(App(f, x) for f in fs for x in xs)
        self._memo[key] = out
        return out

    def upto(self, T: TypeExpr, max_size: int, ctx: tuple = ()) -> Iterator[Term]:
        for n in range(1, max_size + 1):
            yield from self.exact(ctx, T, n)


def enumerate_programs(max_size: int, T: TypeExpr = O,
                       arg_types: Iterable[TypeExpr] = DEFAULT_ARG_TYPES) -> list[Term]:
    """Closed terms of type ``T`` without naturals, up to ``max_size`` nodes."""
    return list(TermEnumerator(arg_types).upto(T, max_size))


class ProgramGenerator:
    """Seeded random closed programs of type ``o`` using the whole language.

    Numerals stay below ``k``; recursion is through ``Y`` at ``o`` or
    ``N -> o``, applied to a numeral.  Nothing prevents a program from
    diverging or from comparing numerals past the truncation; callers that
    need to avoid either filter the output.
    """

    NAT_FN = arrow(N, O)

    def __init__(self, seed: int = 0, k: int = 3, depth: int = 4):
        import random
        self.rng = random.Random(seed)
        self.k = k
        self.depth = depth

    def program(self) -> Term:
        return self.term((), O, self.depth)

    def __iter__(self) -> Iterator[Term]:
        while True:
            yield self.program()

    def _vars(self, ctx: tuple, T: TypeExpr) -> list[Term]:
        return [BVar(i) for i, ty in enumerate(reversed(ctx)) if ty == T]

    def nat(self, ctx: tuple) -> Term:
        rng = self.rng
        vs = self._vars(ctx, N)
        if vs and rng.random() < 0.6:
            v = rng.choice(vs)
            return Suc(v) if rng.random() < 0.3 else v
        return numeral(rng.randrange(self.k))

    def term(self, ctx: tuple, T: TypeExpr, depth: int) -> Term:
        rng = self.rng
        if isinstance(T, Nat):
            return self.nat(ctx)
        vs = self._vars(ctx, T)
        if isinstance(T, Arrow):
            if vs and rng.random() < 0.25:
                return rng.choice(vs)
            if depth > 0 and T == self.NAT_FN and rng.random() < 0.2:
                return self.fix(ctx, depth)
            return Lam(f"x{len(ctx)}", T.domain, self.term(ctx + (T.domain,), T.codomain, depth))
        if depth <= 0:
            return rng.choice(vs + [OMEGA, ERR])
        d = depth - 1
        calls = self._vars(ctx, self.NAT_FN)
        if calls and rng.random() < 0.25:
            return App(rng.choice(calls), self.nat(ctx))
        r = rng.random()
        if r < 0.15:
            return rng.choice(vs + [OMEGA, ERR])
        if r < 0.30:
            return Choice(self.term(ctx, O, d), self.term(ctx, O, d))
        if r < 0.50:
            return apps(Eq(self.nat(ctx), self.nat(ctx)), self.term(ctx, O, d), self.term(ctx, O, d))
        if r < 0.62:
            return App(NATCHOICE, Lam(f"x{len(ctx)}", N, self.term(ctx + (N,), O, d)))
        if r < 0.74:
            return App(self.fix(ctx, d), self.nat(ctx))
        if r < 0.80:
            return App(Fix(O), Lam(f"x{len(ctx)}", O, self.term(ctx + (O,), O, d)))
        A = rng.choice((O, N, self.NAT_FN, arrow(O, O)))
        return App(self.term(ctx, Arrow(A, O), d), self.term(ctx, A, d))

    def fix(self, ctx: tuple, depth: int) -> Term:
        P = self.NAT_FN
        inner = ctx + (P, N)
        return App(Fix(P), Lam(f"x{len(ctx)}", P, Lam(f"x{len(ctx) + 1}", N,
                                                       self.term(inner, O, depth))))
