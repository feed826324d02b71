import pytest
from hypothesis import given, settings, strategies as st

from ndsem.syntax import (
    BOOL, ERR, NAT, OMEGA, Arrow, Choice, Ground, Nat, ProgramGenerator, SyntaxError_,
    TermEnumerator, TypeCheckError, builtin_corpus, corpus_defs, enumerate_programs,
    numeral_value, parse_term, parse_type, pretty, size, swap_constants, typecheck,
    uses_nat_features,
)

FINITE = enumerate_programs(7)


def test_parse_constants_and_choice():
    t = parse_term("Err + Omega")
    assert t == Choice(ERR, OMEGA)
    assert size(t) == 3


def test_type_aliases():
    assert parse_type("bool") == parse_type("o -> o -> o") == BOOL
    assert parse_type("nat") == NAT
    assert parse_type("N -> o -> o") == Arrow(Nat(), Arrow(Ground(), Ground()))


def test_arrow_is_right_associative():
    assert parse_type("o -> o -> o") == parse_type("o -> (o -> o)")
    assert parse_type("(o -> o) -> o") != parse_type("o -> o -> o")


def test_numerals_and_if():
    assert numeral_value(parse_term("suc (suc 0)")) == 2
    assert numeral_value(parse_term("3")) == 3
    t = parse_term(r"\x:o. If tt then x else Err", corpus_defs())
    assert typecheck({}, t) == parse_type("o -> o")


@pytest.mark.parametrize("text, err", [
    (r"\x:o. y", SyntaxError_),
    ("(Err", SyntaxError_),
    ("Err Err", TypeCheckError),
    ("Eq(0, Err)", TypeCheckError),
])
def test_bad_input(text, err):
    with pytest.raises(err):
        typecheck({}, parse_term(text))


def test_pointed_types_only():
    with pytest.raises(Exception):
        parse_type("o -> N")


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(FINITE))
def test_pretty_parse_roundtrip_finite(t):
    assert parse_term(pretty(t)) == t


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_pretty_parse_roundtrip_random(seed):
    t = ProgramGenerator(seed=seed).program()
    assert parse_term(pretty(t)) == t
    assert typecheck({}, t) == Ground()


def test_enumeration_is_closed_well_typed_and_distinct():
    assert len(set(FINITE)) == len(FINITE)
    for t in FINITE:
        assert typecheck({}, t) == Ground()
        assert not uses_nat_features(t)
        assert size(t) <= 7


def test_enumeration_by_exact_size():
    E = TermEnumerator()
    assert {size(t) for t in E.exact((), Ground(), 5)} == {5}
    assert len(E.exact((), Ground(), 1)) == 2


def test_swap_constants_is_an_involution():
    for t in FINITE[:300]:
        assert swap_constants(swap_constants(t)) == t
    assert swap_constants(parse_term("Err + Omega")) == parse_term("Omega + Err")


def test_generator_is_deterministic():
    a = [ProgramGenerator(seed=3).program() for _ in range(1)]
    g1, g2 = ProgramGenerator(seed=5), ProgramGenerator(seed=5)
    assert [g1.program() for _ in range(20)] == [g2.program() for _ in range(20)]
    assert a


def test_corpus_types_check():
    corpus = builtin_corpus()
    for name in ("tt", "ff", "t00", "t01", "t10", "t11", "merge", "unmerge", "pair", "fst", "snd"):
        t, T = corpus[name]
        assert typecheck({}, t) == T
