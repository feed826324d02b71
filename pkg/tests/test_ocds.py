import itertools

import pytest

from oracles import brute_states
from ndsem import biorder as bo
from ndsem import ocds as oc
from ndsem.ocds import ASK, BULLET, OUT, OcdsState
from ndsem.syntax import parse_type

B = ["tt", "ff"]


def evs(*pairs):
    return frozenset(pairs)


def st(A, *pairs, close=False):
    return oc.state(A, pairs, close=close)


def all_event_state(A):
    return OcdsState(A, A.close([(c, BULLET) for c in A.initial]))


SMALL = {
    "hat0": lambda: oc.hat(()),
    "hatB": lambda: oc.hat(B),
    "hatB2": lambda: oc.ocds_product([oc.hat(B)] * 2),
    "lift0": lambda: oc.ocds_lift(oc.hat(())),
    "lifta": lambda: oc.ocds_lift(oc.hat(["a"])),
    "U3": lambda: oc.universal_trunc(3),
    "lazy3": lambda: oc.lazy_nats(3),
    "cont": oc.continuation_ocds,
    "a_to_0": lambda: oc.exponential(oc.hat(["a"]), oc.hat(())),
    "00_to_0": lambda: oc.exponential(oc.ocds_product([oc.hat(())] * 2), oc.hat(())),
}


# ------------------------------------------------------------ counts

@pytest.mark.parametrize("name", sorted(SMALL))
def test_enumeration_matches_subset_filter(name):
    A = SMALL[name]()
    assert {x.events for x in oc.enumerate_states(A)} == brute_states(A)


@pytest.mark.parametrize("name", sorted(SMALL))
def test_state_spaces_are_biorders(name):
    A = SMALL[name]()
    assert bo.check_biorder_axioms(oc.states_biorder(oc.enumerate_states(A))) == []


def test_hat_counts():
    assert len(oc.enumerate_states(oc.hat(()))) == 2
    D = oc.enumerate_states(oc.hat(B))
    assert len(D) == 5
    totals = oc.enumerate_states(oc.hat(B), "total")
    assert {x.events for x in totals} == {evs(), evs(("c", "tt")), evs(("c", "ff")),
                                          evs(("c", "tt"), ("c", "ff"))}
    non_total = [x for x in D if not x.is_total]
    assert len(non_total) == 1 and non_total[0].events == all_event_state(oc.hat(B)).events


def test_hat_empty_is_sigma():
    D = oc.states_biorder(oc.enumerate_states(oc.hat(())))
    S = bo.sigma()
    # ∅ is the extensional bottom, the • state the stable bottom
    assert D.size == 2
    e = [i for i in range(2) if not D.keys[i]][0]
    s = 1 - e
    assert D.ext_leq(e, s) and D.stab_leq(s, e) and not D.stab_leq(e, s)
    assert S.size == 2


def test_product():
    P = oc.ocds_product([oc.hat(B)] * 2)
    assert len(P.initial) == 2 and len(P.events) == 4
    assert len(oc.enumerate_states(P)) == 25
    E = oc.ocds_product([])
    assert [x.events for x in oc.enumerate_states(E)] == [frozenset()]
    x = oc.product_state(P, [st(oc.hat(B), ("c", "tt")), st(oc.hat(B))])
    assert [p.events for p in oc.split_state(x)] == [evs(("c", "tt")), evs()]


def test_lift_is_stable_lift():
    for A in (oc.hat(()), oc.hat(["a"])):
        L = oc.ocds_lift(A)
        DL = oc.states_biorder(oc.enumerate_states(L))
        DA = oc.states_biorder(oc.enumerate_states(A))
        lifted = bo.stable_lift(DA)
        assert DL.size == lifted.size == DA.size + 1
        new = [i for i, k in enumerate(DL.keys) if oc.LIFT_CELL in {e[0] for e in k}]
        assert len(new) == 1
        n = new[0]
        assert all(DL.stab_leq(n, j) for j in range(DL.size))
        assert all(DL.ext_leq(j, n) for j in range(DL.size))
    assert len(oc.enumerate_states(oc.ocds_lift(oc.hat(())))) == 3


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_universal_totals(k):
    assert len(oc.enumerate_states(oc.universal_trunc(k), "total")) == 2 ** k


def test_universal_one_cell_is_hat_star():
    a = oc.states_biorder(oc.enumerate_states(oc.universal_trunc(1)))
    b = oc.states_biorder(oc.enumerate_states(oc.hat(["⋆"])))
    assert a.size == b.size == 5 - 2


@pytest.mark.parametrize("labels", [["a"], ["a", "b"]])
def test_universal_embedding(labels):
    r = oc.check_universal_embedding(oc.hat(labels))
    assert r.ok


# ------------------------------------------------------ state algebra

def test_cells_of():
    A = oc.hat(["a", "b"])
    F, En, Acc = oc.cells_of(st(A))
    assert (F, En, Acc) == (frozenset(), {"c"}, {"c"})
    F, En, Acc = oc.cells_of(st(A, ("c", "a")))
    assert Acc == frozenset() and F == {"c"}
    L = oc.lazy_nats(3)
    c0, c1, c2 = ("n", 0), ("n", 1), ("n", 2)
    # the bare event set: one suc enables exactly the next cell
    F, En, Acc = oc.cells_of(OcdsState(L, evs((c0, "suc"))))
    assert (F, En, Acc) == ({c0}, {c0, c1}, {c1})
    # cells are ordered by index, so the state generated by it fills every later cell
    x = oc.state(L, [(c0, "suc")], close=True)
    assert x.events == evs((c0, "suc"), (c1, "suc"), (c2, "suc"))
    assert not oc.is_state(L, [(c0, "suc")])
    F, En, Acc = oc.cells_of(x)
    assert En == {c0, c1, c2} and Acc == frozenset()


def test_stable_order_examples():
    A = oc.hat(["a", "b"])
    top = all_event_state(A)
    a, ab = st(A, ("c", "a")), st(A, ("c", "a"), ("c", "b"))
    assert oc.state_stable_leq(a, a)
    assert oc.state_stable_leq(top, a)
    assert not oc.state_stable_leq(a, ab)


def test_with_bullets():
    A = oc.hat(["a", "b"])
    x = st(A)
    assert oc.with_bullets(x, []) == x
    assert oc.with_bullets(x, ["c"]).events == all_event_state(A).events
    for name in ("hatB2", "lazy3", "cont"):
        D = oc.enumerate_states(SMALL[name]())
        for y in D:
            _, En, _ = oc.cells_of(y)
            for r in range(len(En) + 1):
                for C in itertools.combinations(sorted(En, key=repr), r):
                    z = oc.with_bullets(y, C)
                    assert oc.is_state(y.owner, z.events)
                    assert oc.state_stable_leq(z, y)
                    assert oc.with_bullets(z, C) == z


def test_stably_bounded():
    A = oc.hat(["a", "b"])
    a, b = st(A, ("c", "a")), st(A, ("c", "b"))
    assert oc.is_stably_bounded([a])
    assert not oc.is_stably_bounded([a, b])
    for name in ("hatB2", "U3", "a_to_0"):
        D = oc.enumerate_states(SMALL[name]())
        for x, y in itertools.product(D, repeat=2):
            bounded = any(oc.state_stable_leq(x, z) and oc.state_stable_leq(y, z) for z in D)
            assert oc.is_stably_bounded([x, y]) == bounded
            if bounded:
                m = oc.state_meet([x, y])
                assert oc.is_state(x.owner, m.events)
                assert oc.state_stable_leq(m, x) and oc.state_stable_leq(m, y)


def test_max_total():
    A = oc.hat(["a", "b"])
    x = st(A, ("c", "a"))
    assert oc.max_total(x) == x
    assert oc.max_total(all_event_state(A)).events == frozenset()
    for name in ("hatB2", "lazy3", "cont"):
        for y in oc.enumerate_states(SMALL[name]()):
            t = oc.max_total(y)
            assert t.is_total and oc.state_stable_leq(y, t)


def test_state_rejects_unsafe_sets():
    L = oc.lazy_nats(3)
    deep = [c for c in L.cells if c not in L.initial][0]
    bad = [e for e in L.events if e[0] == deep][:1]
    assert not oc.is_state(L, bad)
    with pytest.raises(ValueError):
        oc.state(L, bad)


# ------------------------------------------------------- exponential

def test_exponential_cell_count():
    E = oc.exponential(oc.ocds_product([oc.hat(B)] * 2), oc.hat(B))
    assert len(E.cells) == 16


@pytest.mark.parametrize("n", [1, 2, 3])
def test_exponential_of_unit_power_is_flat(n):
    """A ⇒ hat(∅) for a product of n copies of hat(∅) has one cell and
    n query values, so it is a renamed hat of n labels."""
    E = oc.exponential(oc.ocds_product([oc.hat(())] * n), oc.hat(()))
    H = oc.hat([f"l{i}" for i in range(n)])
    assert len(E.cells) == 1 and len(E.values) == n
    assert len(oc.enumerate_states(E)) == len(oc.enumerate_states(H)) == 2 ** n + 1


def test_exponential_initial_cells():
    E = oc.exponential(oc.hat(["a"]), oc.ocds_product([oc.hat(())] * 2))
    assert E.initial == {(frozenset(), c) for c in E.factors[1].initial} if E.factors else True
    assert all(x == frozenset() for x, _ in E.initial)


# --------------------------------------------------------- fun / strat

def test_fun_of_empty_algorithm():
    A, Bo = oc.hat(B), oc.hat(())
    sigma = OcdsState(oc.exponential(A, Bo), frozenset())
    for x in oc.enumerate_states(A):
        assert oc.fun(sigma, x).events == frozenset()


def test_strat_of_constant_empty():
    A, Bo = oc.hat(B), oc.hat(B)
    assert oc.strat(lambda x: OcdsState(Bo, frozenset()), A, Bo).events == frozenset()


@pytest.mark.parametrize("name", ["hat0", "hatB", "lift0", "U3"])
def test_fun_forms_agree(name):
    A = SMALL[name]()
    for Bo in (oc.hat(()), oc.hat(["a"])):
        for sigma in oc.enumerate_states(oc.exponential(A, Bo)):
            for x in oc.enumerate_states(A):
                assert oc.fun(sigma, x) == oc.fun_bullet_only(sigma, x)


def test_fun_results_are_monotone_stable():
    A, Bo = oc.hat(B), oc.hat(())
    DA, DB = oc.enumerate_states(A), oc.enumerate_states(Bo)
    bA, bB = oc.states_biorder(DA), oc.states_biorder(DB)
    for sigma in oc.enumerate_states(oc.exponential(A, Bo)):
        table = oc.fun_table(sigma, DA, bB)
        assert bo.is_monotone_stable(table, bA, bB)


def test_returns_second_argument():
    for mode in ("may", "must"):
        assert oc.union_identity_report(mode).returns_second


def test_branching_point_visible_in_algorithm():
    A, Bo = oc.exponential(oc.hat(B), oc.hat(())), oc.hat(())
    H = oc.hat(B)
    both = st(H, ("c", "tt"), ("c", "ff"))
    only_t, only_f = st(H, ("c", "tt")), st(H, ("c", "ff"))

    def late(sig):       # λf. f (tt + ff)
        return OcdsState(Bo, oc.fun(sig, both).events)

    def early(sig):      # λf. f tt + λf. f ff
        return OcdsState(Bo, oc.fun(sig, only_t).events | oc.fun(sig, only_f).events)
    s_late, s_early = oc.strat(late, A, Bo), oc.strat(early, A, Bo)
    inner = (frozenset({("c", "tt"), ("c", "ff")}), "c")
    assert any(v == (ASK, inner) for _, v in s_late.events)
    assert not any(v == (ASK, inner) for _, v in s_early.events)


@pytest.mark.parametrize("A, Bo", [
    (oc.hat(()), oc.hat(())), (oc.hat(["a"]), oc.hat(())), (oc.hat(["a", "b"]), oc.hat(())),
    (oc.ocds_product([oc.hat(())] * 2), oc.hat(())), (oc.hat(B), oc.hat(B)),
])
def test_iso(A, Bo):
    r = oc.check_iso(A, Bo)
    assert r.ok, r.failures


def test_iso_sizes_match_function_space():
    r = oc.check_iso(oc.hat(()), oc.hat(()))
    assert r.algorithms == r.functions == 3
    r = oc.check_iso(oc.hat(B), oc.hat(()))
    F = bo.function_space(oc.states_biorder(oc.enumerate_states(oc.hat(B))), bo.sigma())
    assert r.algorithms == F.size


def test_iso_fails_on_truncated_lazy_naturals():
    """Upward closure across ordered cells fills cells that were only just
    enabled, so at this truncation some stable maps have no algorithm."""
    r = oc.check_iso(oc.lazy_nats(2), oc.hat(["a"]))
    assert not r.ok


# ------------------------------------------------ explicit sequentiality

def test_identity_is_explicitly_sequential():
    A = oc.hat(())
    assert oc.explicit_sequentiality_check(lambda x: x, A, A)


def test_definable_binary_functions_are_explicitly_sequential():
    A, Bo = oc.ocds_product([oc.hat(B)] * 2), oc.hat(B)
    DA = oc.enumerate_states(A)
    for name in ("t00", "t01", "t10", "t11"):
        for mode in ("may", "must"):
            sigma = _hatB_algorithm(name, mode)
            f = {x.events: oc.fun(sigma, x) for x in DA}
            assert oc.explicit_sequentiality_check(f, A, Bo, DA)


def _hatB_algorithm(name, mode):
    """The algorithm of t_ij on hat(B) × hat(B) ⇒ hat(B), built by hand:
    ask argument i, then argument j, answer with j's value."""
    i, j = int(name[1]), int(name[2])
    A, Bo = oc.ocds_product([oc.hat(B)] * 2), oc.hat(B)
    DA = oc.enumerate_states(A)

    def f(x):
        parts = oc.split_state(x)
        pi, pj = parts[i].events, parts[j].events
        if ("c", BULLET) in pi:
            return OcdsState(Bo, Bo.close([("c", BULLET)]))
        out = set()
        for _ in pi:
            out |= {e for e in pj}
        return OcdsState(Bo, frozenset(out))
    return oc.strat({x.events: f(x) for x in DA}, A, Bo)


def test_negative_control_parallel_or():
    A, Bo = oc.ocds_product([oc.hat(B)] * 2), oc.hat(B)
    DA = oc.enumerate_states(A)
    DB = oc.enumerate_states(Bo)

    def por(x):
        p0, p1 = oc.split_state(x)
        hit = ("c", "tt") in p0.events or ("c", "tt") in p1.events
        return OcdsState(Bo, evs(("c", "tt")) if hit else frozenset())
    bA, bB = oc.states_biorder(DA), oc.states_biorder(DB)
    table = [bB.index(por(x).events) for x in DA]
    assert not bo.is_monotone_stable(table, bA, bB)
    assert not oc.explicit_sequentiality_check(por, A, Bo, DA)


# ------------------------------------------------------ bridge and JSON

@pytest.mark.parametrize("T", ["o", "o -> o", "o -> o -> o", "(o -> o) -> o", "(o -> o -> o) -> o",
                               "N -> o"])
def test_bridge_is_an_order_isomorphism(T):
    assert oc.bridge(parse_type(T)).check() == []


@pytest.mark.parametrize("name", sorted(SMALL))
def test_json_roundtrip(name):
    A = SMALL[name]()
    A2 = oc.ocds_from_json(oc.ocds_to_json(A))
    assert A2.cells == A.cells and A2.events == A.events and A2.enabling == A.enabling
    assert A2.initial == A.initial
    assert {x.events for x in oc.enumerate_states(A2)} == {x.events for x in oc.enumerate_states(A)}
    for x in oc.enumerate_states(A):
        assert oc.state_from_json(A, oc.state_to_json(x)) == x


def test_parse_ocds():
    assert oc.parse_ocds("(hat(tt,ff) => hat()) => hat()") is oc.continuation_ocds()
    E = oc.parse_ocds("hat() => hat() => hat()")
    assert E is oc.exponential(oc.hat(()), oc.exponential(oc.hat(()), oc.hat(())))
    assert oc.parse_ocds("[o -> o]") is oc.ocds_of(parse_type("o -> o"))
    with pytest.raises(ValueError):
        oc.parse_ocds("hat(a")


# ----------------------------------------------------------- worked cases

def test_hierarchy_listing():
    r = oc.hierarchy_report()
    assert r.matches, r.mismatch
    assert len(r.rows) == 7
    assert r.states == 8


@pytest.mark.xfail(strict=True, reason="the listing has seven rows but the incomparable pair "
                   "λf.f tt and λf.f ff share a row, so there are eight states")
def test_hierarchy_seven_states_literal():
    assert oc.hierarchy_report().states == 7


@pytest.mark.parametrize("mode", ["may", "must"])
def test_union_identity(mode):
    r = oc.union_identity_report(mode)
    assert r.identity and r.ok
