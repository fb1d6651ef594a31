import csv
import functools
import io
import json

import pytest
from click.testing import CliRunner

from heckelab import characters as ch
from heckelab import suites
from heckelab.cli import ConfigError, main, parse_int_list


@pytest.fixture
def run(cache_dir, monkeypatch):
    monkeypatch.setenv("HECKELAB_CACHE", cache_dir)

    def invoke(*args):
        return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)

    return invoke


def diag(result):
    return json.loads(result.stderr.strip().splitlines()[-1])


def test_lvalue_rows(run):
    res = run("lvalue", "--form", "delta", "--p", 5, "--n", 2, "--s", "center", "--format", "json")
    assert res.exit_code == 0
    out = json.loads(res.stdout)
    assert len(out["rows"]) == 4
    assert {r["phi_exponent"] for r in out["rows"]} == {1, 2, 3, 4}
    assert out["flags"] == [] and "timings" not in out


def test_lvalue_check_fe(run):
    res = run("lvalue", "--form", "11a", "--p", 3, "--n", "2..3", "--check-fe", "--untwisted")
    assert res.exit_code == 0
    rows = json.loads(res.stdout)["rows"]
    assert len(rows) == 1 + 2 + 6
    assert rows[0]["n"] is None
    assert all(r["fe_residual"] < 1e-6 for r in rows)


def test_lvalue_timings_and_out(run, tmp_path):
    target = tmp_path / "rep.json"
    res = run("lvalue", "--form", "delta", "--p", 3, "--n", 2, "--timings", "--out", target)
    assert res.exit_code == 0 and res.stdout == ""
    out = json.loads(target.read_text())
    assert out["timings"]["wall_seconds"] >= 0
    assert "out" not in out["config"] and "cache_dir" not in out["config"]


@pytest.mark.parametrize("args,code", [
    (("lvalue", "--form", "99z"), "FORM_UNKNOWN"),
    (("lvalue",), "FORM_MISSING"),
    (("converge", "--form", "delta", "--r", 3), "R_NOT_COPRIME"),
    (("converge", "--form", "delta", "--r", "2,6"), "R_NOT_COPRIME"),
    (("lvalue", "--form", "delta", "--p", 9), "P_NOT_ODD_PRIME"),
    (("lvalue", "--form", "delta", "--p", 2), "P_NOT_ODD_PRIME"),
    (("lvalue", "--form", "delta", "--n", "5..3"), "N_RANGE_EMPTY"),
    (("lvalue", "--form", "delta", "--n", "0"), "N_INVALID"),
    (("lvalue", "--form", "delta", "--tol", "0.5"), "TOL_OUT_OF_RANGE"),
    (("lvalue", "--form", "delta", "--threads", "0"), "THREADS_INVALID"),
    (("lvalue", "--form", "11a", "--p", 11), "LEVEL_NOT_COPRIME"),
    (("determine", "--form", "11a"), "FORM_COUNT"),
    (("lvalue", "--form", "delta", "--n", "two"), "BAD_VALUE"),
])
def test_validation_diagnostics(run, args, code):
    res = run(*args)
    assert res.exit_code == 2
    assert diag(res)["error"] == code
    assert res.stdout == ""


def test_insufficient_coefficients_diagnostic(run):
    res = run("lvalue", "--form", "delta", "--p", 3, "--n", 11)  # needs 2.1e6 terms
    assert res.exit_code == 2
    assert diag(res)["error"] == "COEFFS_INSUFFICIENT"


def test_config_file_precedence(run, tmp_path):
    cfg = tmp_path / "exp.conf"
    cfg.write_text("# pilot\nform = delta\np = 5\nn = 2   # overridden below\ns = center\n")
    res = run("lvalue", "--config", cfg, "--n", 3)
    assert res.exit_code == 0
    echo = json.loads(res.stdout)["config"]
    assert echo["p"] == 5 and echo["n_values"] == [3] and echo["forms"] == ["delta"]
    assert echo["tol"] == 1e-10  # default


def test_config_file_errors(run, tmp_path):
    bad = tmp_path / "bad.conf"
    bad.write_text("colour = blue\n")
    assert diag(run("lvalue", "--config", bad))["error"] == "CONFIG_INVALID"
    bad.write_text("just words\n")
    assert diag(run("lvalue", "--config", bad))["error"] == "CONFIG_INVALID"


def test_parse_int_list():
    assert parse_int_list("2..6", "n") == (2, 3, 4, 5, 6)
    assert parse_int_list("1,3..5", "r") == (1, 3, 4, 5)
    assert parse_int_list("4", "n") == (4,)
    with pytest.raises(ConfigError):
        parse_int_list("2..x", "n")


def test_identities_clean(run):
    res = run("identities", "--p", 3, "--n", "2..5")
    assert res.exit_code == 0
    out = json.loads(res.stdout)
    assert out["summary"]["violations"] == 0
    assert 0 < out["summary"]["max_normalized_kloosterman"] <= 1
    checks = {r["check"] for r in out["rows"]}
    assert checks == {"average_identity", "support_criterion", "kloosterman_bound",
                      "dual_average_bound", "root_number_modulus"}


def _corrupted_phi_average_table(phi, n0):
    tab = ch.phi_average_table(phi, n0).copy()
    if phi.e == 1:
        tab[4] += 1e-6
    return tab


def test_identities_negative_control(run, monkeypatch):
    monkeypatch.setattr(suites, "average_identity",
                        functools.partial(suites.average_identity, phi_average_table=_corrupted_phi_average_table))
    res = run("identities", "--p", 3, "--n", 3)
    assert res.exit_code == 1
    out = json.loads(res.stdout)
    bad = [r for r in out["rows"] if r["violations"]]
    assert len(bad) == 1 and bad[0]["check"] == "average_identity"
    assert bad[0]["worst"] == "phi_exponent=1;a=4"
    assert out["flags"] == [{"row": 0, "reason": "1 violations"}]


def test_converge_csv_json_equivalent(run):
    args = ("converge", "--form", "delta", "--p", 3, "--n", "2..3", "--r", 2)
    js = json.loads(run(*args, "--format", "json").stdout)
    rows = list(csv.DictReader(io.StringIO(run(*args, "--format", "csv").stdout)))
    assert len(rows) == len(js["rows"]) == 2
    for a, b in zip(js["rows"], rows):
        for key, val in a.items():
            if isinstance(val, float):
                assert float(b[key]) == val
            elif isinstance(val, list):
                assert b[key] == ";".join(val)
            elif val is None:
                assert b[key] == ""
            else:
                assert b[key] == str(val)


def test_json_deterministic(run):
    args = ("converge", "--form", "11a", "--p", 3, "--n", "2..4", "--r", 2, "--threads", 2)
    assert run(*args).stdout == run(*args).stdout


def test_scan_flags_give_exit_one(run):
    ok = run("scan", "--form", "delta", "--p", 5, "--n", 2)
    assert ok.exit_code == 0
    out = json.loads(ok.stdout)
    assert out["rows"][0]["n"] is None and len(out["rows"]) == 5
    bad = run("scan", "--form", "37a", "--p", 3, "--n", 3)
    assert bad.exit_code == 1
    reasons = {f["reason"] for f in json.loads(bad.stdout)["flags"]}
    assert reasons == {"below_tail_threshold"}


def test_strict_fails_on_warnings(run):
    args = ("determine", "--form", "11a", "--form", "17a", "--p", 3, "--n", 3, "--r", "2,5")
    loose = run(*args)
    assert loose.exit_code == 0 and json.loads(loose.stdout)["summary"]["warnings"]
    assert run(*args, "--strict").exit_code == 1


def test_determine_identical_forms(run):
    res = run("determine", "--form", "11a", "--form", "11a", "--p", 3, "--n", 3, "--r", "1,2")
    rows = json.loads(res.stdout)["rows"]
    assert all(r["recovered_gap"] == 0 and r["coefficient_gap"] == 0 for r in rows)


def test_cache_lifecycle_and_coherence(tmp_path, monkeypatch):
    from heckelab.newforms import clear_memo

    monkeypatch.setenv("HECKELAB_CACHE", str(tmp_path))
    clear_memo()
    runner = CliRunner()
    args = ["lvalue", "--form", "11a", "--p", 3, "--n", 2]
    first = runner.invoke(main, [str(a) for a in args]).stdout
    runner.invoke(main, ["lvalue", "--form", "17a", "--p", 3, "--n", 2])
    listing = json.loads(runner.invoke(main, ["cache", "inspect"]).stdout)
    assert listing["cache_dir"] == str(tmp_path)
    assert sorted(e["label"] for e in listing["entries"]) == ["11a", "17a"]
    cleared = json.loads(runner.invoke(main, ["cache", "clear", "--form", "11A1"]).stdout)
    assert [name.split("-")[0] for name in cleared["removed"]] == ["11a"]
    listing = json.loads(runner.invoke(main, ["cache", "inspect"]).stdout)
    assert [e["label"] for e in listing["entries"]] == ["17a"]
    clear_memo()
    again = runner.invoke(main, [str(a) for a in args]).stdout
    assert again == first
    runner.invoke(main, ["cache", "clear"])
    assert json.loads(runner.invoke(main, ["cache", "inspect"]).stdout)["entries"] == []


def test_help_documents_config_format(run):
    res = run("lvalue", "--help")
    assert "key = value" in res.stdout
