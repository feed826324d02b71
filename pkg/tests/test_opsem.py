import pytest
from hypothesis import given, settings, strategies as st

from oracles import path_verdict
from ndsem.opsem import (
    Converges, EvalConfig, FuelExhausted, Refuted, eval_may, eval_must, evaluate, replay,
)
from ndsem.syntax import ProgramGenerator, corpus_defs, enumerate_programs, parse_term


def ev(text, mode, **kw):
    return evaluate(parse_term(text, corpus_defs()), mode, EvalConfig(**kw)).name


@pytest.mark.parametrize("text, may, must", [
    ("Err", "Converges", "Converges"),
    ("Omega", "Refuted", "Refuted"),
    ("Err + Err", "Converges", "Converges"),
    ("Err + Omega", "Converges", "Refuted"),
    ("Omega + Omega", "Refuted", "Refuted"),
    ("(\\x:o. x + x) Omega", "Refuted", "Refuted"),
    ("tt Err Omega", "Converges", "Converges"),
    ("coin Err Omega", "Converges", "Refuted"),
])
def test_small_table(text, may, must):
    assert ev(text, "may") == may
    assert ev(text, "must") == must


def test_nat_choice_four_way():
    t = "?N (\\k:N. If Eq(k,k) then Err else Omega)"
    assert ev(t, "must", nat_bound=4) == "Converges"
    assert ev("?N (\\k:N. If Eq(k,3) then Err else Omega)", "must", nat_bound=4) == "Refuted"
    assert ev("?N (\\k:N. If Eq(k,3) then Err else Omega)", "may", nat_bound=4) == "Converges"
    assert ev("?N (\\k:N. If Eq(k,3) then Err else Omega)", "may", nat_bound=3) == "Refuted"


def test_fuel_exhaustion():
    loop = "Y[o] (\\x:o. x)"
    assert ev(loop, "may", fuel=10) == "FuelExhausted"
    assert ev(loop, "must", fuel=10) == "FuelExhausted"
    # a decisive branch found early wins over an unfinished one
    assert ev(f"Err + {loop}", "may", fuel=10) == "Converges"
    assert ev(f"Omega + {loop}", "must", fuel=10) == "Refuted"


def test_loop_detection_refutes_cycles():
    t = parse_term("Y[o] (\\x:o. x)")
    cfg = EvalConfig(fuel=10, loop_detection=True)
    assert isinstance(eval_may(t, cfg), Refuted)


def test_witness_replays_to_final_term():
    t = parse_term("Omega + (Err + Omega)")
    out = eval_may(t)
    assert isinstance(out, Converges)
    steps = list(replay(t, out.witness.choices, 3))
    assert steps[-1][1] == out.witness.final
    assert out.witness.choices == ("R", "L")
    bad = eval_must(t)
    assert isinstance(bad, Refuted) and bad.witness.choices[0] == "L"


def test_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(fuel=-1)
    with pytest.raises(ValueError):
        EvalConfig(nat_bound=0)


@pytest.mark.parametrize("mode", ["may", "must"])
def test_agrees_with_path_enumeration_on_finite_programs(mode):
    cfg = EvalConfig(fuel=12)
    for t in enumerate_programs(7):
        assert evaluate(t, mode, cfg).name == path_verdict(t, mode, 12, 3), t


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["may", "must"]), st.integers(0, 6))
def test_agrees_with_path_enumeration_on_random_programs(seed, mode, fuel):
    t = ProgramGenerator(seed=seed, k=2, depth=3).program()
    got = evaluate(t, mode, EvalConfig(fuel=fuel, nat_bound=2)).name
    assert got == path_verdict(t, mode, fuel, 2)


def test_more_fuel_never_flips_a_verdict():
    gen = ProgramGenerator(seed=11, k=2, depth=3)
    for _ in range(150):
        t = gen.program()
        for mode in ("may", "must"):
            small = evaluate(t, mode, EvalConfig(fuel=4, nat_bound=2))
            big = evaluate(t, mode, EvalConfig(fuel=20, nat_bound=2))
            if not isinstance(small, FuelExhausted):
                assert small.name == big.name
