import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import raw_berry_leq, raw_sigma_space
from ndsem import biorder as bo


def test_sigma_shape():
    S = bo.sigma()
    assert S.bot_e == bo.SIGMA_BOT_E and S.bot_s == bo.SIGMA_BOT_S
    assert S.ext_leq(0, 1) and not S.ext_leq(1, 0)
    assert S.stab_leq(1, 0) and not S.stab_leq(0, 1)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_sigma_function_space_matches_raw_tables(n):
    F = bo.function_space(bo.sigma_power(n), bo.sigma())
    raw = raw_sigma_space(n)
    assert F.size == len(raw) == 2 ** n + 1
    assert set(F.keys) == set(raw)
    for i, j in itertools.product(range(F.size), repeat=2):
        assert bool(F.ext[i, j]) == all(a <= b for a, b in zip(F.keys[i], F.keys[j]))
        assert bool(F.stab[i, j]) == raw_berry_leq(F.keys[i], F.keys[j], n)


def test_unary_labels():
    F = bo.function_space(bo.sigma(), bo.sigma())
    assert sorted(bo.label_sigma_functions(F, "must")) == sorted(["λx.Ω", "λx.x", "λx.℧"])


def test_berry_leq_agrees_with_function_space():
    D = bo.sigma_power(2)
    E = bo.sigma()
    F = bo.function_space(D, E)
    for i, j in itertools.product(range(F.size), repeat=2):
        assert bo.berry_leq(F.table(i), F.table(j), D, E) == bool(F.stab[i, j])


@pytest.mark.parametrize("make", [
    bo.sigma, bo.one, lambda: bo.discrete("abc"), lambda: bo.sigma_power(3),
    lambda: bo.stable_lift(bo.sigma()), lambda: bo.disjoint_sum([bo.sigma(), bo.sigma()]),
    lambda: bo.function_space(bo.sigma_power(2), bo.sigma()),
    lambda: bo.function_space(bo.function_space(bo.sigma(), bo.sigma()), bo.sigma()),
    lambda: bo.powerset_lift([0, 1, 2]),
])
def test_constructions_are_biorders(make):
    assert bo.check_biorder_axioms(make()) == []


def test_axiom_checker_rejects_broken_orders():
    S = bo.sigma()
    cyclic = bo.FiniteBiorder(["a", "b"], np.ones((2, 2), bool), np.eye(2, dtype=bool))
    assert bo.check_biorder_axioms(cyclic)
    # stable glb of the pair is not their extensional lub
    ext = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1]], bool)
    stab = np.array([[1, 0, 1], [0, 1, 1], [0, 0, 1]], bool)
    stab2 = stab.T.copy()
    bad = bo.FiniteBiorder(["x", "y", "m"], ext, stab2)
    assert bo.check_biorder_axioms(bad)
    assert bo.check_biorder_axioms(S) == []


def test_strictness_and_indices():
    F = bo.function_space(bo.sigma_power(2), bo.sigma())
    join = F.index(tuple(max(a, b) for a, b in F.source.keys))
    assert bo.sequentiality_indices(F, join) == {0, 1}
    const_e = F.index((0, 0, 0, 0))
    assert not bo.is_strict(F, const_e)
    proj0 = F.index(tuple(k[0] for k in F.source.keys))
    assert bo.sequentiality_indices(F, proj0) == {0}


def test_stable_glb_and_ext_join():
    P = bo.sigma_power(2)
    x, y = P.index((0, 1)), P.index((1, 0))
    assert bo.stable_glb(P, [x, y]) == P.index((1, 1))
    assert bo.ext_join(P, [x, y]) == P.index((1, 1))
    with pytest.raises(ValueError):
        bo.stable_glb(P, [])
    D = bo.discrete("ab")
    with pytest.raises(bo.UnboundedError):
        bo.stable_glb(D, [0, 1])


def test_is_monotone_stable_negative():
    D, E = bo.sigma_power(2), bo.sigma()
    # "parallel" map: extensional bottom as soon as either argument is
    table = tuple(min(a, b) for a, b in D.keys)
    assert not bo.is_monotone_stable(table, D, E)
    assert bo.is_monotone_stable(tuple(max(a, b) for a, b in D.keys), D, E)


@pytest.mark.parametrize("X", [[], [0], [0, 1], [0, 1, 2]])
def test_powerdomain_iso(X):
    assert bo.powerdomain_iso_check(X)
    assert bo.powerset_lift(X).size == 2 ** len(X) + 1


def test_curry_iso():
    S = bo.sigma()
    assert bo.curry_iso_check(S, S, S)
    assert bo.curry_iso_check(bo.stable_lift(S), S, S)


def test_budget():
    with pytest.raises(bo.BudgetExceeded):
        bo.function_space(bo.sigma_power(4), bo.sigma(), budget=5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3))
def test_json_roundtrip(n):
    F = bo.function_space(bo.sigma_power(n), bo.sigma())
    G = bo.biorder_from_json(bo.biorder_to_json(F))
    assert G.labels == F.labels
    assert np.array_equal(G.ext, F.ext) and np.array_equal(G.stab, F.stab)
    f = bo.TabFn(F.source, F.target, F.table(F.size - 1))
    g = bo.tabfn_from_json(bo.tabfn_to_json(f))
    assert g.table == f.table


def test_json_rejects_other_documents():
    with pytest.raises(ValueError):
        bo.biorder_from_json({"format": "something-else"})
