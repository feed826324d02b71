"""Finite biorders: a carrier with an extensional order and a stable order.

Elements are plain integer indices into the carrier.  Both orders are held
as dense boolean matrices (``ext[i, j]`` means ``i`` is extensionally below
``j``; ``stab[i, j]`` means ``i`` is stably below ``j``).  Carriers here
stay in the low thousands, so dense matrices are the simplest thing that is
fast enough.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

Elem = int

FORMAT_VERSION = 1


class BudgetExceeded(RuntimeError):
    pass


class UnboundedError(ValueError):
    """Raised when a stable glb is requested for a set with no stable upper bound."""


@dataclass(eq=False)
class FiniteBiorder:
    labels: list[str]
    ext: np.ndarray
    stab: np.ndarray
    keys: list[Hashable] | None = None
    # product structure, when the carrier is a product of these factors
    factors: list["FiniteBiorder"] | None = None
    # function-space structure: (source, target) and row tables
    source: "FiniteBiorder | None" = None
    target: "FiniteBiorder | None" = None
    tables: np.ndarray | None = None
    _meet: np.ndarray | None = field(default=None, repr=False)
    _index: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        self.ext = np.asarray(self.ext, dtype=bool)
        self.stab = np.asarray(self.stab, dtype=bool)
        n = len(self.labels)
        if self.ext.shape != (n, n) or self.stab.shape != (n, n):
            raise ValueError("order matrices do not match the carrier size")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, key: Hashable) -> Elem:
        if self._index is None:
            if self.keys is None:
                raise KeyError("biorder has no element keys")
            self._index = {k: i for i, k in enumerate(self.keys)}
        return self._index[key]

    def has_key(self, key: Hashable) -> bool:
        try:
            self.index(key)
        except KeyError:
            return False
        return True

    def key(self, i: Elem) -> Hashable:
        return self.keys[i] if self.keys is not None else i

    def ext_leq(self, a: Elem, b: Elem) -> bool:
        return bool(self.ext[a, b])

    def stab_leq(self, a: Elem, b: Elem) -> bool:
        return bool(self.stab[a, b])

    # extremal elements; every biorder built here that has them has them uniquely
    def _least(self, m: np.ndarray) -> Elem | None:
        hits = np.flatnonzero(m.all(axis=1))
        return int(hits[0]) if len(hits) == 1 else None

    @property
    def bot_s(self) -> Elem | None:
        """The stably least element, if any."""
        return self._least(self.stab)

    @property
    def bot_e(self) -> Elem | None:
        """The extensionally least element, if any."""
        return self._least(self.ext)

    @property
    def meet_table(self) -> np.ndarray:
        """Pairwise stable glb (``-1`` where no glb exists)."""
        if self._meet is None:
            self._meet = _meet_table(self.stab)
        return self._meet

    def meet(self, a: Elem, b: Elem) -> Elem | None:
        m = int(self.meet_table[a, b])
        return None if m < 0 else m

    def stably_bounded(self, xs: Iterable[Elem]) -> bool:
        xs = list(xs)
        return bool(np.all(self.stab[xs, :], axis=0).any())

    def table(self, f: Elem) -> tuple[int, ...]:
        """For function-space biorders, the table of element ``f``."""
        if self.tables is None:
            raise TypeError("not a function-space biorder")
        return tuple(int(v) for v in self.tables[f])

    def apply(self, f: Elem, x: Elem) -> Elem:
        if self.tables is None:
            raise TypeError("not a function-space biorder")
        return int(self.tables[f, x])


def _meet_table(stab: np.ndarray) -> np.ndarray:
    n = stab.shape[0]
    out = np.full((n, n), -1, dtype=np.int64)
    if n == 0:
        return out
    s = stab.astype(np.int32)
    for x in range(n):
        lower = stab[:, x][:, None] & stab  # lower[d, y]: d below both x and y
        counts = lower.sum(axis=0)  # |common lower bounds of x, y|
        # hits[c, y]: number of common lower bounds below c
        hits = s.T @ lower.astype(np.int32)
        ok = lower & (hits == counts[None, :])
        has = ok.any(axis=0)
        out[x, has] = ok[:, has].argmax(axis=0)
    return out


@dataclass(frozen=True)
class TabFn:
    source: FiniteBiorder
    target: FiniteBiorder
    table: tuple[int, ...]

    def __call__(self, x: Elem) -> Elem:
        return self.table[x]


# ------------------------------------------------------------------ axioms


def _partial_order_violations(m: np.ndarray, name: str, labels: Sequence[str]) -> list[str]:
    out = []
    n = m.shape[0]
    if n and not m.diagonal().all():
        bad = np.flatnonzero(~m.diagonal())
        out.append(f"{name} not reflexive at {labels[bad[0]]}")
    anti = m & m.T & ~np.eye(n, dtype=bool)
    if anti.any():
        i, j = np.argwhere(anti)[0]
        out.append(f"{name} not antisymmetric on ({labels[i]}, {labels[j]})")
    comp = (m.astype(np.int32) @ m.astype(np.int32)) > 0
    if (comp & ~m).any():
        i, j = np.argwhere(comp & ~m)[0]
        out.append(f"{name} not transitive: {labels[i]} reaches {labels[j]}")
    return out


def check_biorder_axioms(B: FiniteBiorder) -> list[str]:
    """Violations of the biorder conditions; empty when ``B`` is a biorder.

    Both relations must be partial orders, and every stably bounded set must
    have a stable glb that is also its extensional lub.  Checking pairs is
    enough: the glb of a bounded set is the iterated glb of pairs, and the
    extensional lub of a set is likewise the iterated lub.
    """
    labels = B.labels
    out = _partial_order_violations(B.ext, "extensional order", labels)
    out += _partial_order_violations(B.stab, "stable order", labels)
    if out:
        return out
    n = B.size
    meet = B.meet_table
    ext = B.ext
    for x in range(n):
        for y in range(x, n):
            if not (B.stab[x] & B.stab[y]).any():
                continue
            m = int(meet[x, y])
            if m < 0:
                out.append(f"stably bounded pair ({labels[x]}, {labels[y]}) has no stable glb")
                continue
            ubs = ext[x] & ext[y]
            if not (ubs[m] and ext[m][ubs].all()):
                out.append(f"stable glb {labels[m]} of ({labels[x]}, {labels[y]}) "
                           f"is not their extensional lub")
    return out


# ----------------------------------------------------------- constructions


def sigma() -> FiniteBiorder:
    """Two points: index 0 is the extensional bottom, index 1 the stable bottom."""
    return FiniteBiorder(
        labels=["⊥E", "⊥S"],
        ext=np.array([[True, True], [False, True]]),
        stab=np.array([[True, False], [True, True]]),
        keys=[0, 1],
    )


SIGMA_BOT_E, SIGMA_BOT_S = 0, 1


def one() -> FiniteBiorder:
    return product([])


def discrete(labels: Iterable) -> FiniteBiorder:
    labels = list(labels)
    n = len(labels)
    eye = np.eye(n, dtype=bool)
    return FiniteBiorder([str(l) for l in labels], eye, eye.copy(), keys=list(labels))


def product(factors: Sequence[FiniteBiorder]) -> FiniteBiorder:
    factors = list(factors)
    keys = list(itertools.product(*[range(f.size) for f in factors]))
    n = len(keys)
    ext = np.ones((n, n), dtype=bool)
    stab = np.ones((n, n), dtype=bool)
    if factors and n:
        idx = np.array(keys, dtype=np.int64)
        for k, f in enumerate(factors):
            col = idx[:, k]
            ext &= f.ext[col[:, None], col[None, :]]
            stab &= f.stab[col[:, None], col[None, :]]
    labels = ["(" + ", ".join(f.labels[i] for f, i in zip(factors, key)) + ")" for key in keys]
    return FiniteBiorder(labels, ext, stab, keys=keys, factors=factors)


def disjoint_sum(summands: Sequence[FiniteBiorder]) -> FiniteBiorder:
    keys, labels = [], []
    n = sum(s.size for s in summands)
    ext = np.zeros((n, n), dtype=bool)
    stab = np.zeros((n, n), dtype=bool)
    off = 0
    for tag, s in enumerate(summands):
        sl = slice(off, off + s.size)
        ext[sl, sl] = s.ext
        stab[sl, sl] = s.stab
        keys += [(tag, i) for i in range(s.size)]
        labels += [f"in{tag}({l})" for l in s.labels]
        off += s.size
    return FiniteBiorder(labels, ext, stab, keys=keys)


LIFT_KEY = "lift"


def stable_lift(B: FiniteBiorder) -> FiniteBiorder:
    """Adjoin a new element that is stably least and extensionally greatest."""
    n = B.size + 1
    ext = np.zeros((n, n), dtype=bool)
    stab = np.zeros((n, n), dtype=bool)
    ext[:-1, :-1] = B.ext
    stab[:-1, :-1] = B.stab
    ext[:, -1] = True
    stab[-1, :] = True
    keys = list(B.keys if B.keys is not None else range(B.size)) + [LIFT_KEY]
    return FiniteBiorder(list(B.labels) + ["⊤"], ext, stab, keys=keys)


# ------------------------------------------------------------ morphisms


def _ext_order(D: FiniteBiorder) -> list[int]:
    """A linear extension of the extensional order."""
    below = D.ext.sum(axis=0)
    return sorted(range(D.size), key=lambda i: (int(below[i]), i))


def _glb_pairs(D: FiniteBiorder) -> dict[int, list[tuple[int, int]]]:
    """Stably bounded pairs grouped by their glb."""
    out: dict[int, list[tuple[int, int]]] = {}
    meet = D.meet_table
    for x in range(D.size):
        for y in range(x + 1, D.size):
            if not (D.stab[x] & D.stab[y]).any():
                continue
            m = int(meet[x, y])
            if m >= 0 and m != x and m != y:
                out.setdefault(m, []).append((x, y))
    return out


def is_monotone_stable(table: Sequence[int], D: FiniteBiorder, E: FiniteBiorder) -> bool:
    """Monotone for the extensional order and preserving bounded stable glbs."""
    t = np.asarray(table, dtype=np.int64)
    if len(t) != D.size:
        raise ValueError("table is not total on the source")
    if not np.all(E.ext[t[:, None], t[None, :]][D.ext]):
        return False
    meet_d, meet_e = D.meet_table, E.meet_table
    for x in range(D.size):
        for y in range(x + 1, D.size):
            if not (D.stab[x] & D.stab[y]).any():
                continue
            m = int(meet_d[x, y])
            if m < 0:
                return False
            if int(meet_e[t[x], t[y]]) != t[m]:
                return False
    return True


def function_space(D: FiniteBiorder, E: FiniteBiorder, budget: int = 10**6) -> FiniteBiorder:
    """All monotone stable maps ``D -> E`` with the Scott and Berry orders.

    Maps are found by backtracking along a linear extension of the
    extensional order of ``D``.  A stable glb is an extensional lub, so it
    comes after both arguments in that order and the glb-preservation check
    for a pair can run as soon as its glb is assigned.  ``budget`` caps the
    number of partial assignments tried.
    """
    order = _ext_order(D)
    below = {d: [p for p in range(D.size) if p != d and D.ext[p, d]] for d in order}
    pairs = _glb_pairs(D)
    # d <=_S p forces p before d in the order, and glb(d, p) = d
    stab_above = {d: [p for p in range(D.size) if p != d and D.stab[d, p]] for d in order}
    meet_e = E.meet_table
    ext_e = E.ext
    tables: list[tuple[int, ...]] = []
    cur = [-1] * D.size
    tried = 0

    def rec(pos: int) -> None:
        nonlocal tried
        if pos == len(order):
            tables.append(tuple(cur))
            return
        d = order[pos]
        for v in range(E.size):
            tried += 1
            if tried > budget:
                raise BudgetExceeded(f"function space enumeration exceeded {budget} candidates")
            if any(not ext_e[cur[p], v] for p in below[d]):
                continue
            if any(meet_e[v, cur[p]] != v for p in stab_above[d]):
                continue
            if any(meet_e[cur[x], cur[y]] != v for x, y in pairs.get(d, ())):
                continue
            cur[d] = v
            rec(pos + 1)
            cur[d] = -1

    rec(0)
    tables.sort()
    return _function_biorder(D, E, tables)


def _function_biorder(D: FiniteBiorder, E: FiniteBiorder, tables: list[tuple[int, ...]]) -> FiniteBiorder:
    m = len(tables)
    T = np.array(tables, dtype=np.int64).reshape(m, D.size)
    ext = np.ones((m, m), dtype=bool)
    pointwise = np.ones((m, m), dtype=bool)
    for x in range(D.size):
        col = T[:, x]
        ext &= E.ext[col[:, None], col[None, :]]
        pointwise &= E.stab[col[:, None], col[None, :]]
    stab = pointwise.copy()
    meet_e = E.meet_table
    for x in range(D.size):
        for y in range(D.size):
            if x == y or not D.stab[x, y]:
                continue
            fx, fy = T[:, x], T[:, y]
            # f <=_S g needs f(x) = f(y) /\ g(x); -1 (no meet) never matches
            stab &= fx[:, None] == meet_e[fy[:, None], fx[None, :]]
    labels = [_table_label(D, E, t) for t in tables]
    return FiniteBiorder(labels, ext, stab, keys=list(tables), source=D, target=E, tables=T)


def _table_label(D: FiniteBiorder, E: FiniteBiorder, t: tuple[int, ...]) -> str:
    if D.size == 0:
        return "{}"
    return "{" + ", ".join(f"{D.labels[i]}↦{E.labels[v]}" for i, v in enumerate(t)) + "}"


def berry_leq(f: Sequence[int], g: Sequence[int], D: FiniteBiorder, E: FiniteBiorder) -> bool:
    """The Berry order on two tables, written out directly from its definition."""
    if not all(E.stab[f[x], g[x]] for x in range(D.size)):
        return False
    for x in range(D.size):
        for y in range(D.size):
            if D.stab[x, y] and E.meet(f[y], g[x]) != f[x]:
                return False
    return True


def stable_glb(B: FiniteBiorder, X: Iterable[Elem]) -> Elem:
    xs = list(X)
    if not xs:
        raise ValueError("stable_glb of an empty set")
    if not B.stably_bounded(xs):
        raise UnboundedError("set has no stable upper bound")
    m = xs[0]
    for x in xs[1:]:
        nxt = B.meet(m, x)
        if nxt is None:
            raise UnboundedError("pairwise glb missing")
        m = nxt
    return m


def ext_join(B: FiniteBiorder, X: Iterable[Elem]) -> Elem | None:
    """Extensional lub, or None if it does not exist."""
    xs = list(X)
    ubs = np.all(B.ext[xs, :], axis=0) if xs else np.ones(B.size, dtype=bool)
    cand = np.flatnonzero(ubs)
    for c in cand:
        if B.ext[c, cand].all():
            return int(c)
    return None


def sequentiality_indices(F: FiniteBiorder, f: Elem | TabFn) -> set[int]:
    """Argument positions at which a stable bottom forces a stable bottom result.

    ``F`` is a function space whose source is a product of pointed biorders.
    """
    if isinstance(f, TabFn):
        D, E, table = f.source, f.target, f.table
    else:
        D, E, table = F.source, F.target, F.table(f)
    if D is None or D.factors is None:
        raise TypeError("source is not a product")
    bot_out = E.bot_s
    out = set()
    for i, A in enumerate(D.factors):
        b = A.bot_s
        if all(table[j] == bot_out for j, key in enumerate(D.keys) if key[i] == b):
            out.add(i)
    return out


def is_strict(F: FiniteBiorder, f: Elem) -> bool:
    D = F.source
    bot = D.bot_s
    return F.apply(f, bot) == F.target.bot_s


def sigma_power(n: int) -> FiniteBiorder:
    return product([sigma()] * n)


def label_sigma_functions(F: FiniteBiorder, mode: str = "must") -> list[str]:
    """Term-style names for the elements of [Σ, Σ] under a given reading.

    In the must reading divergence is the stable bottom; the may reading swaps.
    """
    div, err = (SIGMA_BOT_S, SIGMA_BOT_E) if mode == "must" else (SIGMA_BOT_E, SIGMA_BOT_S)
    names = {(div, div): "λx.Ω", (err, err): "λx.℧", (0, 1): "λx.x"}
    return [names.get(F.table(i), F.labels[i]) for i in range(F.size)]


def powerset_lift(X: Sequence) -> FiniteBiorder:
    """P(X) ordered by inclusion (stable order discrete), stably lifted."""
    xs = list(X)
    subsets = [frozenset(c) for r in range(len(xs) + 1) for c in itertools.combinations(xs, r)]
    n = len(subsets)
    ext = np.array([[a <= b for b in subsets] for a in subsets], dtype=bool).reshape(n, n)
    base = FiniteBiorder(["{" + ",".join(map(str, sorted(s, key=str))) + "}" for s in subsets],
                         ext, np.eye(n, dtype=bool), keys=subsets)
    return stable_lift(base)


def powerdomain_iso_check(X: Sequence) -> bool:
    """Check that subsets (plus a lifted top) match monotone stable maps Σ^X -> Σ.

    A subset Y goes to the join of the projections it names; the lifted top
    goes to the constant stable bottom.  The inverse reads off sequentiality
    indices.
    """
    xs = list(X)
    P = powerset_lift(xs)
    S = sigma_power(len(xs))
    F = function_space(S, sigma())

    def phi(p: Elem) -> Elem:
        key = P.keys[p]
        if key == LIFT_KEY:
            table = tuple(SIGMA_BOT_S for _ in S.keys)
        else:
            pos = [xs.index(y) for y in key]
            table = tuple(max((k[i] for i in pos), default=SIGMA_BOT_E) for k in S.keys)
        return F.index(table)

    def phi_inv(f: Elem) -> Elem:
        t = F.table(f)
        if all(v == SIGMA_BOT_S for v in t):
            return P.index(LIFT_KEY)
        if is_strict(F, f):
            return P.index(frozenset(xs[i] for i in sequentiality_indices(F, f)))
        return P.index(frozenset())

    try:
        fwd = [phi(p) for p in range(P.size)]
    except KeyError:
        return False
    bwd = [phi_inv(f) for f in range(F.size)]
    if any(bwd[fwd[p]] != p for p in range(P.size)):
        return False
    if any(fwd[bwd[f]] != f for f in range(F.size)):
        return False
    fa = np.array(fwd)
    return bool(np.array_equal(P.ext, F.ext[fa[:, None], fa[None, :]]) and
                np.array_equal(P.stab, F.stab[fa[:, None], fa[None, :]]))


def curry_iso_check(D: FiniteBiorder, E: FiniteBiorder, F: FiniteBiorder) -> bool:
    """[D×E, F] and [D, [E, F]] are isomorphic through currying."""
    left = function_space(product([D, E]), F)
    EF = function_space(E, F)
    right = function_space(D, EF)
    if left.size != right.size:
        return False
    prod_keys = left.source.keys
    pos = {k: i for i, k in enumerate(prod_keys)}
    image = []
    for f in range(left.size):
        t = left.table(f)
        curried = []
        for d in range(D.size):
            inner = tuple(t[pos[(d, e)]] for e in range(E.size))
            if not EF.has_key(inner):
                return False
            curried.append(EF.index(inner))
        try:
            image.append(right.index(tuple(curried)))
        except KeyError:
            return False
    if len(set(image)) != left.size:
        return False
    ia = np.array(image)
    return bool(np.array_equal(left.ext, right.ext[ia[:, None], ia[None, :]]) and
                np.array_equal(left.stab, right.stab[ia[:, None], ia[None, :]]))


# ----------------------------------------------------------------- JSON


def biorder_to_json(B: FiniteBiorder) -> dict:
    n = B.size
    return {
        "format": "ndsem-biorder",
        "version": FORMAT_VERSION,
        "labels": list(B.labels),
        "ext": [[i, j] for i in range(n) for j in range(n) if i != j and B.ext[i, j]],
        "stab": [[i, j] for i in range(n) for j in range(n) if i != j and B.stab[i, j]],
    }


def biorder_from_json(data: dict | str) -> FiniteBiorder:
    if isinstance(data, str):
        data = json.loads(data)
    if data.get("format") != "ndsem-biorder":
        raise ValueError("not a biorder document")
    if data.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported biorder format version {data.get('version')}")
    n = len(data["labels"])
    ext = np.eye(n, dtype=bool)
    stab = np.eye(n, dtype=bool)
    for i, j in data["ext"]:
        ext[i, j] = True
    for i, j in data["stab"]:
        stab[i, j] = True
    return FiniteBiorder(list(data["labels"]), ext, stab)


def tabfn_to_json(f: TabFn) -> dict:
    return {
        "format": "ndsem-tabfn",
        "version": FORMAT_VERSION,
        "source": biorder_to_json(f.source),
        "target": biorder_to_json(f.target),
        "table": [[f.source.labels[i], f.target.labels[v]] for i, v in enumerate(f.table)],
    }


def tabfn_from_json(data: dict | str) -> TabFn:
    if isinstance(data, str):
        data = json.loads(data)
    if data.get("format") != "ndsem-tabfn" or data.get("version") != FORMAT_VERSION:
        raise ValueError("not a supported tabulated-function document")
    D = biorder_from_json(data["source"])
    E = biorder_from_json(data["target"])
    src = {l: i for i, l in enumerate(D.labels)}
    tgt = {l: i for i, l in enumerate(E.labels)}
    table = [0] * D.size
    for a, b in data["table"]:
        table[src[a]] = tgt[b]
    return TabFn(D, E, tuple(table))
