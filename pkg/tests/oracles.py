"""Slow, direct reference implementations used to cross-check the package.

None of these share code paths with the routines they check beyond the
term datatypes and the primitive order on ocds events.
"""

from __future__ import annotations

import itertools
from typing import Any

from ndsem import opsem
from ndsem.syntax import App, Arrow, BVar, Bottom, Choice, Fix, Lam, NatChoice, Top


# ------------------------------------------------------------ [Σⁿ, Σ]

# Σ encoded as 0 (extensional bottom) and 1 (stable bottom).

def raw_sigma_space(n: int) -> list[tuple[int, ...]]:
    """Every table Σⁿ → Σ that is monotone and preserves binary stable glbs.

    Inputs are listed in lexicographic order of their 0/1 tuples.  In Σⁿ
    every pair is stably bounded and its stable glb is the componentwise
    maximum, so stability is ``f(max(x, y)) = max(f(x), f(y))``.
    """
    pts = list(itertools.product((0, 1), repeat=n))
    idx = {p: i for i, p in enumerate(pts)}
    out = []
    for table in itertools.product((0, 1), repeat=len(pts)):
        mono = all(table[idx[x]] <= table[idx[y]]
                   for x in pts for y in pts if all(a <= b for a, b in zip(x, y)))
        glb = all(table[idx[tuple(map(max, x, y))]] == max(table[idx[x]], table[idx[y]])
                  for x in pts for y in pts)
        if mono and glb:
            out.append(table)
    return out


def raw_berry_leq(f: tuple, g: tuple, n: int) -> bool:
    """``f ≤ g`` in the stable order, from the definition on raw tables."""
    pts = list(itertools.product((0, 1), repeat=n))
    idx = {p: i for i, p in enumerate(pts)}
    # stable order on Σ: 1 below 0; on Σⁿ componentwise
    if not all(g[i] <= f[i] for i in range(len(pts))):
        return False
    for x in pts:
        for y in pts:
            if all(a >= b for a, b in zip(x, y)):   # x stably below y
                if f[idx[x]] != max(f[idx[y]], g[idx[x]]):
                    return False
    return True


# ------------------------------------------------------ path-by-path eval

def _branching(t):
    head, args = opsem.spine(t)
    return head, args


def all_paths(t, fuel: int, nat_bound: int) -> set[str]:
    """Outcomes of every maximal path, with no memoisation or pruning.

    ``conv`` reaches ``Err``, ``div`` reaches ``Omega``, ``out`` runs out of
    fuel.  Only choices, unfoldings of ``Y`` and ``?N`` spend fuel.
    """
    head, args = _branching(t)
    if isinstance(head, Top):
        return {"conv"}
    if isinstance(head, Bottom):
        return {"div"}
    costly = isinstance(head, (Choice, Fix, NatChoice))
    if costly and fuel == 0:
        return {"out"}
    out: set[str] = set()
    for nxt in opsem.step(t, nat_bound):
        out |= all_paths(nxt, fuel - 1 if costly else fuel, nat_bound)
    return out


def path_verdict(t, mode: str, fuel: int, nat_bound: int) -> str:
    ends = all_paths(t, fuel, nat_bound)
    if mode == "may":
        if "conv" in ends:
            return "Converges"
        return "FuelExhausted" if "out" in ends else "Refuted"
    if "div" in ends:
        return "Refuted"
    return "FuelExhausted" if "out" in ends else "Converges"


# ----------------------------------------------- naive closure semantics

def naive(t, env: tuple = (), mode: str = "must") -> Any:
    """Meaning of a finite-fragment term as nested Python closures.

    Ground values are booleans meaning "the test succeeds"; a choice is
    ``or`` under may-testing and ``and`` under must-testing.
    """
    match t:
        case Top():
            return True
        case Bottom():
            return False
        case BVar(i):
            return env[len(env) - 1 - i]
        case Lam(_, _, body):
            return lambda v: naive(body, env + (v,), mode)
        case App(f, a):
            return naive(f, env, mode)(naive(a, env, mode))
        case Choice(l, r):
            a, b = naive(l, env, mode), naive(r, env, mode)
            return (a or b) if mode == "may" else (a and b)
    raise TypeError(f"outside the finite fragment: {t!r}")


def encode_ground(ok: bool, mode: str) -> int:
    """The model's integer for a ground value: the converging constant is 0
    under must-testing and 1 under may-testing."""
    return (0 if ok else 1) if mode == "must" else (1 if ok else 0)


def reflect(v: Any, T, mode: str, carriers) -> Any:
    """Closure to table key; ``carriers(T)`` lists the model keys of ``T``."""
    if not isinstance(T, Arrow):
        return encode_ground(v, mode)
    return tuple(reflect(v(reify(d, T.domain, mode, carriers)), T.codomain, mode, carriers)
                 for d in carriers(T.domain))


def reify(key: Any, T, mode: str, carriers) -> Any:
    if not isinstance(T, Arrow):
        return key == encode_ground(True, mode)
    dom = list(carriers(T.domain))

    def f(v):
        k = reflect(v, T.domain, mode, carriers)
        return reify(key[dom.index(k)], T.codomain, mode, carriers)
    return f


# ------------------------------------------------------- ocds states

def brute_states(A) -> set[frozenset]:
    """All states of ``A`` by filtering every subset of its events.

    Upward closure uses the primitive event order; safety is re-derived by
    forward chaining from the initial cells.
    """
    from ndsem.ocds import BULLET
    evs = sorted(set(A.events) | {(c, BULLET) for c in A.cells}, key=repr)
    if len(evs) > 18:
        raise ValueError("too many events for brute force")
    out = set()
    for r in range(len(evs) + 1):
        for combo in itertools.combinations(evs, r):
            x = frozenset(combo)
            if not all(f in x for e in x for f in evs if A.event_leq(e, f)):
                continue
            reached = set(A.initial)
            changed = True
            while changed:
                changed = False
                for (e, c) in A.enabling:
                    if e in x and e[0] in reached and e[1] is not BULLET and c not in reached:
                        reached.add(c)
                        changed = True
            if all(any(A.event_leq(f, e) and f[0] in reached for f in x) for e in x):
                out.add(x)
    return out
