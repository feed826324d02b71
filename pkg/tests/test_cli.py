import json
import subprocess
import sys

import pytest

from ndsem.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--json")
    return code, json.loads(out)


@pytest.mark.parametrize("argv, code, word", [
    (["eval", "--mode", "must", "Err + Err"], 0, "Converges"),
    (["eval", "--mode", "must", "Err + Omega"], 1, "Refuted"),
    (["eval", "--mode", "may", "Omega"], 1, "Refuted"),
    (["eval", "--mode", "must", "--nat-bound", "4", "?N (\\k:N. If Eq(k,k) then Err else Omega)"],
     0, "Converges"),
    (["eval", "--fuel", "5", "Y[o] (\\x:o. x)"], 2, "FuelExhausted"),
])
def test_eval_exit_codes(capsys, argv, code, word):
    got, out, _ = run(capsys, *argv)
    assert got == code
    assert word in out


def test_eval_reports_nat_bound(capsys):
    _, out, _ = run(capsys, "eval", "--mode", "must", "--nat-bound", "4", "?N (\\k:N. Err)")
    assert "nat-bound 4" in out


def test_trace(capsys):
    code, rep = run_json(capsys, "eval", "--mode", "may", "--trace", "Omega + Err")
    assert code == 0
    trace = rep["result"]["outcomes"]["may"]["trace"]
    assert trace[0][0] == "start" and trace[-1][1] == "Err"


def test_input_errors(capsys):
    assert run(capsys, "eval", "(Err")[0] == 4
    assert run(capsys, "eval", "Err Err")[0] == 4
    assert run(capsys, "eval", "\\x:o. x")[0] == 4
    assert run(capsys, "ocds-enum", "hat(")[0] == 4


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as e:
        main(["no-such-command"])
    assert e.value.code == 3
    with pytest.raises(SystemExit) as e:
        main(["eval", "--fuel", "many", "Err"])
    assert e.value.code == 3
    assert run(capsys, "corpus", "no_such_entry")[0] == 3
    assert run(capsys, "eval", "--k", "0", "Err")[0] == 3


def test_term_from_file_and_corpus(capsys, tmp_path):
    f = tmp_path / "t.lam"
    f.write_text("coin Err Omega\n")
    assert run(capsys, "eval", "--mode", "may", f"@{f}")[0] == 0
    assert run(capsys, "eval", "--mode", "must", f"@{f}")[0] == 1
    code, out, _ = run(capsys, "typecheck", "t01")
    assert code == 0 and out.strip() == "(o -> o -> o) -> (o -> o -> o) -> o -> o -> o"


def test_env_overrides(capsys, monkeypatch):
    monkeypatch.setenv("NDSEM_MODE", "may")
    monkeypatch.setenv("NDSEM_FUEL", "7")
    code, rep = run_json(capsys, "eval", "Err + Omega")
    assert code == 0
    assert rep["config"]["mode"] == "may" and rep["config"]["fuel"] == 7
    monkeypatch.setenv("NDSEM_JSON", "1")
    code, out, _ = run(capsys, "parse", "Err")
    assert json.loads(out)["result"]["term"] == "Err"


def test_equiv(capsys):
    code, rep = run_json(capsys, "equiv", "--mode", "both", "t01 + t10", "t00 + t11")
    assert code == 0 and rep["result"]["relations"] == {"may": "≃", "must": "≃"}
    code, rep = run_json(capsys, "equiv", "--mode", "both", "choice_outside", "choice_inside")
    assert code == 1 and rep["result"]["relations"] == {"may": "≲", "must": "≳"}
    code, rep = run_json(capsys, "equiv", "coin", "coin")
    assert rep["result"]["relations"] == {"must": "≃"}


def test_denote_and_enumerate(capsys):
    code, rep = run_json(capsys, "denote", "--export", "id_o")
    assert code == 0
    row = rep["result"]["denotations"]["must"]
    assert row["size"] == 3 and row["biorder"]["format"] == "ndsem-biorder"
    code, rep = run_json(capsys, "enumerate-functions", "--sigma", "3")
    assert rep["result"]["size"] == 9
    code, rep = run_json(capsys, "enumerate-functions", "(o -> o) -> o")
    assert rep["result"]["size"] == 4


def test_ocds_commands(capsys):
    code, rep = run_json(capsys, "ocds-enum", "hat(tt, ff)")
    assert rep["result"]["count"] == 5
    code, rep = run_json(capsys, "ocds-enum", "--hasse", "(hat(tt,ff) => hat()) => hat()")
    assert rep["result"]["count"] == 8 and len(rep["result"]["states"]) == 7
    code, rep = run_json(capsys, "ocds-exp", "hat(tt,ff) * hat(tt,ff)", "hat(tt,ff)")
    assert len(rep["result"]["cells"]) == 16
    code, rep = run_json(capsys, "ocds-roundtrip", "hat(a,b)", "hat()")
    assert code == 0 and rep["result"]["ok"]
    code, rep = run_json(capsys, "ocds-strat", "not")
    alg = rep["result"]["algorithm"]
    code, rep2 = run_json(capsys, "ocds-fun", "--ocds", "[bool -> bool]", json.dumps(alg))
    code, rep3 = run_json(capsys, "ocds-fun", "not")
    assert rep2["result"]["table"] == rep3["result"]["table"]
    assert len(rep3["result"]["table"]) == 5


def test_suite_and_determinism(capsys):
    code, out1, _ = run(capsys, "suite", "hierarchy", "--json")
    _, out2, _ = run(capsys, "suite", "hierarchy", "--json")
    assert code == 0 and out1 == out2
    rep = json.loads(out1)
    assert "seconds" not in out1
    assert rep["result"]["rows_count"] == 7
    code, rep = run_json(capsys, "suite", "sequentiality", "--n", "3")
    assert code == 0 and rep["result"]["join_indices"] == [0, 1]
    code, rep = run_json(capsys, "suite", "roundtrip", "--preset", "tiny")
    assert code == 0
    code, out, _ = run(capsys, "suite", "counts", "--json", "--timing")
    assert '"seconds"' in out


def test_corpus_listing(capsys):
    code, out, _ = run(capsys, "corpus")
    assert code == 0 and "t01 :" in out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "ndsem", "eval", "Err"], capture_output=True, text=True)
    assert r.returncode == 0 and "Converges" in r.stdout
