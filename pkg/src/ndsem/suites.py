"""Named experiments shared by the command line and the test-suite.

Each function returns a plain dict with an ``ok`` verdict, the numbers
behind it and the wall time, so reports can be printed or dumped as JSON.
"""

from __future__ import annotations

import time
from typing import Any, Callable

from . import biorder as bo
from . import denot, ocds
from .opsem import Converges, EvalConfig, FuelExhausted, evaluate
from .syntax import (
    App, TermEnumerator, builtin_corpus, corpus_defs, enumerate_programs, parse_type,
    pretty, swap_constants, ProgramGenerator,
)

BOOL = parse_type("o -> o -> o")


def timed(fn: Callable[..., dict]) -> Callable[..., dict]:
    def wrapper(*args: Any, **kwargs: Any) -> dict:
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        out["seconds"] = round(time.perf_counter() - t0, 3)
        return out
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# --------------------------------------------------------- function spaces

@timed
def function_space_counts(ns: tuple[int, ...] = (1, 2, 3)) -> dict:
    """Sizes of ``[Σⁿ, Σ]`` against ``2ⁿ + 1``, and the labels of ``[Σ, Σ]``."""
    sizes = {n: bo.function_space(bo.sigma_power(n), bo.sigma()).size for n in ns}
    F1 = bo.function_space(bo.sigma(), bo.sigma())
    labels = sorted(bo.label_sigma_functions(F1, "must"))
    ok = all(sizes[n] == 2 ** n + 1 for n in ns) and labels == sorted(["λx.Ω", "λx.x", "λx.℧"])
    return {"ok": ok, "sizes": sizes, "labels": labels}


@timed
def sequentiality(ns: tuple[int, ...] = (1, 2, 3)) -> dict:
    """Every strict ``f ∈ [Σⁿ, Σ]`` has a sequentiality index."""
    rows = {}
    ok = True
    for n in ns:
        F = bo.function_space(bo.sigma_power(n), bo.sigma())
        strict = [f for f in range(F.size) if bo.is_strict(F, f)]
        missing = [F.labels[f] for f in strict if not bo.sequentiality_indices(F, f)]
        rows[n] = {"functions": F.size, "strict": len(strict), "without_index": missing}
        ok &= not missing
    F2 = bo.function_space(bo.sigma_power(2), bo.sigma())
    join = tuple(max(a, b) for a, b in F2.source.keys)
    join_idx = sorted(bo.sequentiality_indices(F2, F2.index(join)))
    ok &= join_idx == [0, 1]
    return {"ok": ok, "by_arity": rows, "join_indices": join_idx}


@timed
def powerdomain(sizes: tuple[int, ...] = (0, 1, 2, 3)) -> dict:
    """``P(X)↑`` against ``[Σ^X, Σ]`` for small ``X``."""
    res = {n: bo.powerdomain_iso_check(list(range(n))) for n in sizes}
    return {"ok": all(res.values()), "iso": res}


# ------------------------------------------------------------- retractions

def _retraction_cases() -> list[dict]:
    c = corpus_defs()
    fo = parse_type("(o -> o) -> o")
    nat = parse_type("nat")
    out = []
    for mode in ("must", "may"):
        out.append(dict(name="first_order_unary", mode=mode, injs=[c["inj1_fo"], c["inj2_fo"]],
                        proj=c["proj_fo"], T=fo))
    out.append(dict(name="bool_unary", mode="must", injs=[c["inj1_bool"], c["inj2_bool"]],
                    proj=c["proj_bool"], T=BOOL))
    # under may-testing the same encoding works with the two constants exchanged
    out.append(dict(name="bool_unary_swapped", mode="may",
                    injs=[swap_constants(c["inj1_bool"]), swap_constants(c["inj2_bool"])],
                    proj=swap_constants(c["proj_bool"]), T=BOOL))
    out.append(dict(name="nat_into_U2", mode="must", injs=[c["inj1_nat_must"], c["inj2_nat_must"]],
                    proj=c["proj_nat_must"], T=nat))
    out.append(dict(name="nat_into_U", mode="may", injs=[c["inj_nat_may"]], proj=c["proj_nat_may"], T=nat))
    for mode in ("must", "may"):
        out.append(dict(name="merge_unmerge", mode=mode, injs=[c["merge"]], proj=c["unmerge"],
                        T=parse_type("N -> N -> o"), K=20))
    return out


MERGE_K = 20
PAIR_K = 6


@timed
def retractions(k: int = 3, include_merge: bool = True) -> dict:
    """Definable retractions, checked as identities on every element."""
    c = corpus_defs()
    rows = []
    for case in _retraction_cases():
        if not include_merge and case["name"] == "merge_unmerge":
            continue
        r = denot.retraction_report(case["injs"], case["proj"], case["T"], case["mode"], k, case.get("K"))
        rows.append({"name": case["name"], "mode": case["mode"], "elements": r.elements,
                     "failures": len(r.failures), "overflow_hits": r.overflow_hits,
                     "K": r.K, "ok": r.ok, "seconds": round(r.seconds, 3)})
    for mode in ("must", "may"):
        r = denot.pairing_report(c["pair"], c["fst"], c["snd"], parse_type("N -> o"), mode, k, PAIR_K)
        rows.append({"name": "pair_fst_snd", "mode": mode, "elements": r.elements,
                     "failures": len(r.failures), "overflow_hits": r.overflow_hits,
                     "K": r.K, "ok": r.ok, "seconds": round(r.seconds, 3)})
    return {"ok": all(r["ok"] for r in rows), "k": k, "cases": rows}


# ----------------------------------------------------------------- adequacy

@timed
def adequacy(max_size: int = 8, random_programs: int = 500, seed: int = 7, k: int = 3,
             fuel: int = 200) -> dict:
    """Evaluation against denotation on enumerated and random programs."""
    cfg = EvalConfig(fuel=fuel, nat_bound=k)
    finite = enumerate_programs(max_size)
    gen = ProgramGenerator(seed=seed, k=k)
    rand = [gen.program() for _ in range(random_programs)]
    out: dict = {"k": k, "fuel": fuel, "seed": seed, "finite_programs": len(finite),
                 "random_programs": len(rand), "modes": {}}
    ok = True
    for mode in ("may", "must"):
        fin = denot.check_adequacy(finite, mode, cfg, k)
        rnd = denot.check_adequacy(rand, mode, cfg, k)
        row = {
            "finite": _adequacy_row(fin),
            "random": _adequacy_row(rnd),
        }
        ok &= fin.ok and not fin.fuel_exhausted and not fin.overflowed and rnd.ok
        out["modes"][mode] = row
    out["ok"] = ok
    return out


def _adequacy_row(r: denot.AdequacyReport) -> dict:
    return {"checked": r.checked, "converging": r.converging,
            "discrepancies": [f"{pretty(t)}: {o} vs {d}" for t, o, d in r.discrepancies],
            "fuel_exhausted": len(r.fuel_exhausted), "overflowed": len(r.overflowed)}


@timed
def duality(max_size: int = 8, fuel: int = 200) -> dict:
    """Exchanging the two constants turns may-testing into failed must-testing.

    Operationally ``t`` may-converges iff ``swap t`` does not must-converge;
    denotationally ``⟦swap t⟧`` under must equals ``⟦t⟧`` under may.  The
    reading in which ``t`` may-converges iff ``swap t`` must-converges is
    counted separately; it fails already for ``℧``.
    """
    cfg = EvalConfig(fuel=fuel)
    progs = enumerate_programs(max_size)
    op_bad, den_bad, exhausted, literal_bad = [], [], 0, []

    def go() -> None:
        nonlocal exhausted
        may_sem, must_sem = denot.semantics("may", 3), denot.semantics("must", 3)
        for t in progs:
            s = swap_constants(t)
            a, b = evaluate(t, "may", cfg), evaluate(s, "must", cfg)
            if isinstance(a, FuelExhausted) or isinstance(b, FuelExhausted):
                exhausted += 1
                continue
            if isinstance(a, Converges) == isinstance(b, Converges):
                op_bad.append(t)
            else:
                literal_bad.append(t)
            if may_sem.value(t) != must_sem.value(s):
                den_bad.append(t)
    denot.run_deep(go)
    return {"ok": not op_bad and not den_bad and not exhausted, "programs": len(progs),
            "operational_discrepancies": [pretty(t) for t in op_bad[:20]],
            "denotational_discrepancies": [pretty(t) for t in den_bad[:20]],
            "fuel_exhausted": exhausted,
            "literal_reading_failures": len(literal_bad),
            "literal_reading_example": pretty(literal_bad[0]) if literal_bad else None}


# ------------------------------------------------------ separations and FA

@timed
def separation(fuel: int = 100, k: int = 3) -> dict:
    """The two separating arguments against the two boolean-consumer terms."""
    c = corpus_defs()
    cfg = EvalConfig(fuel=fuel)
    left, right = c["choice_outside"], c["choice_inside"]
    out: dict = {}
    ok = True
    for mode, sep in (("may", c["sep_may"]), ("must", c["sep_must"])):
        ops = {n: evaluate(App(t, sep), mode, cfg).name for n, t in (("left", left), ("right", right))}
        sem = denot.semantics(mode, k)
        dens = {n: ("⟦℧⟧" if denot.run_deep(sem.value, App(t, sep)) == sem.err else "⟦Ω⟧")
                for n, t in (("left", left), ("right", right))}
        agree = all((ops[n] == "Converges") == (dens[n] == "⟦℧⟧") for n in ops)
        opposite = (ops["left"] == "Converges") != (ops["right"] == "Converges")
        ok &= agree and opposite
        out[mode] = {"operational": ops, "denotational": dens, "relation": denot.relation(left, right, mode, k)}
    out["ok"] = ok
    return out


@timed
def full_abstraction(term_size: int = 7, context_size: int = 6, fuel: int = 200,
                     modes: tuple[str, ...] = ("must", "may")) -> dict:
    """Denotational order against observation by enumerated contexts at bool.

    For every pair of closed boolean terms: equal meanings admit no
    separating context, ordered meanings admit none in the wrong direction,
    and every strict or incomparable pair is separated by some context.
    """
    E = TermEnumerator()
    terms = list(E.upto(BOOL, term_size))
    contexts = list(E.upto(parse_type("(o -> o -> o) -> o"), context_size))
    cfg = EvalConfig(fuel=fuel)
    out: dict = {"terms": len(terms), "contexts": len(contexts), "modes": {}}
    ok = True
    for mode in modes:
        keys = [denot.denote_term(t, mode=mode).key for t in terms]
        obs: list[int] = []
        exhausted = 0
        for t in terms:
            bits = 0
            for j, C in enumerate(contexts):
                r = evaluate(App(C, t), mode, cfg)
                exhausted += isinstance(r, FuelExhausted)
                if isinstance(r, Converges):
                    bits |= 1 << j
            obs.append(bits)
        # group by meaning; each class must observe uniformly
        classes: dict = {}
        uniform = True
        for key, bits in zip(keys, obs):
            if classes.setdefault(key, bits) != bits:
                uniform = False
        unsound, unwitnessed = [], []
        for a, ba in classes.items():
            for b, bb in classes.items():
                if a == b:
                    continue
                le = denot.key_ext_leq(a, b) if mode == "may" else denot.key_ext_leq(b, a)
                # a ≲ b: every context passing a passes b
                if le and ba & ~bb:
                    unsound.append((a, b))
                if not le and not (ba & ~bb):
                    unwitnessed.append((a, b))
        good = uniform and not unsound and not unwitnessed and not exhausted
        ok &= good
        out["modes"][mode] = {"classes": len(classes), "uniform": uniform,
                              "unsound_pairs": len(unsound), "unwitnessed_pairs": len(unwitnessed),
                              "fuel_exhausted": exhausted, "ok": good}
    out["ok"] = ok
    return out


# --------------------------------------------------------------------- ocds

ISO_INSTANCES: dict[str, Callable[[], tuple[ocds.Ocds, ocds.Ocds]]] = {
    "empty_empty": lambda: (ocds.hat(()), ocds.hat(())),
    "a_empty": lambda: (ocds.hat(["a"]), ocds.hat(())),
    "ab_empty": lambda: (ocds.hat(["a", "b"]), ocds.hat(())),
    "empty2_empty": lambda: (ocds.ocds_product([ocds.hat(())] * 2), ocds.hat(())),
}
ISO_EXTRA: dict[str, Callable[[], tuple[ocds.Ocds, ocds.Ocds]]] = {
    "bool_bool": lambda: (ocds.hat(["tt", "ff"]), ocds.hat(["tt", "ff"])),
    "a2_a": lambda: (ocds.ocds_product([ocds.hat(["a"])] * 2), ocds.hat(["a"])),
    "a2_ab": lambda: (ocds.ocds_product([ocds.hat(["a"])] * 2), ocds.hat(["a", "b"])),
}


@timed
def roundtrip(preset: str = "tiny") -> dict:
    """fun and strat as inverse order isomorphisms on small instances."""
    cases = dict(ISO_INSTANCES)
    if preset == "full":
        cases.update(ISO_EXTRA)
    elif preset != "tiny":
        raise ValueError(f"unknown preset {preset!r}")
    rows = {}
    for name, make in cases.items():
        A, B = make()
        rows[name] = ocds.check_iso(A, B).to_json()
    return {"ok": all(r["ok"] for r in rows.values()), "preset": preset, "instances": rows}


@timed
def hierarchy() -> dict:
    r = ocds.hierarchy_report()
    out = r.to_json()
    out["ok"] = r.matches
    out["rows_count"] = len(r.rows)
    return out


@timed
def union_identity(k: int = 3) -> dict:
    rows = {m: ocds.union_identity_report(m, k).to_json() for m in ("must", "may")}
    return {"ok": all(r["ok"] for r in rows.values()), "modes": rows}


@timed
def explicit_sequentiality() -> dict:
    """Every monotone stable function on small instances is explicitly sequential."""
    rows = {}
    for name, make in {**ISO_INSTANCES, **ISO_EXTRA}.items():
        A, B = make()
        DA, DB = ocds.enumerate_states(A), ocds.enumerate_states(B)
        F = bo.function_space(ocds.states_biorder(DA), ocds.states_biorder(DB))
        bad = sum(not ocds.explicit_sequentiality_check(ocds.table_fn(F.table(g), DA, DB), A, B, DA)
                  for g in range(F.size))
        rows[name] = {"functions": F.size, "failures": bad}
    return {"ok": all(r["failures"] == 0 for r in rows.values()), "instances": rows}


@timed
def noncontinuity(ks: tuple[int, ...] = (2, 3, 4)) -> dict:
    return denot.noncontinuity_report(ks)


SUITES: dict[str, Callable[..., dict]] = {
    "counts": function_space_counts,
    "sequentiality": sequentiality,
    "powerdomain": powerdomain,
    "retractions": retractions,
    "adequacy": adequacy,
    "duality": duality,
    "hierarchy": hierarchy,
    "roundtrip": roundtrip,
    "union-identity": union_identity,
    "separation": separation,
    "full-abstraction": full_abstraction,
    "explicit-sequentiality": explicit_sequentiality,
    "noncontinuity": noncontinuity,
}
