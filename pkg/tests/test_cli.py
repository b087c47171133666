import json
import subprocess
import sys

import numpy as np
import pytest

from krein import cli
from krein.accelerant import AccelerantKernel
from krein.examples import exk_fixture
from krein.lincore import maxnorm


def run(*argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def load(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def exk_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("exk")
    out = d / "exk.json"
    assert run("example", "exk", "--T", 1, "--N", 200, "--out", out) == 0
    return out


def test_example_report_schema(exk_file):
    rep = load(exk_file.with_name("exk.report.json"))
    assert rep["pass"] is True
    assert rep["grid"] == {"T": 1.0, "N": 200, "h": 0.005}
    assert rep["tolerances"]["closed_form"] == cli.DEFAULT_TOLERANCES["closed_form"]
    assert rep["config"]["command"] == "example"
    for c in rep["checks"]:
        assert set(c) == {"name", "value", "threshold", "pass"}


def test_accelerant_file_roundtrip(exk_file):
    obj = load(exk_file)
    k = cli.accelerant_from_json(obj)
    ref = exk_fixture(1.0, 200).kernel
    assert np.array_equal(k.k_plus, ref.k_plus) and np.array_equal(k.k_minus, ref.k_minus)
    # k_minus is listed from the left end of its support, -T .. 0
    assert obj["k_minus"][0] == cli.enc_array(ref.k_minus[-1])


def test_roundtrip_exk(exk_file, tmp_path):
    out = tmp_path / "rt.json"
    assert run("roundtrip", "--input", exk_file, "--out", out) == 0
    rep = load(tmp_path / "rt.report.json")
    checks = {c["name"]: c for c in rep["checks"]}
    assert checks["recovery_sup_error"]["value"] <= 5e-3
    assert all(c["pass"] for c in rep["checks"])
    assert [row["N"] for row in rep["data"]["error_table"]] == [100, 200]
    assert "convergence_ratio" in rep["data"]


@pytest.mark.parametrize("cmd", ["check", "resolvent", "potential", "ortho", "matrizant"])
def test_commands_pass_on_exk(cmd, exk_file, tmp_path):
    out = tmp_path / f"{cmd}.json"
    assert run(cmd, "--input", exk_file, "--out", out) == 0
    assert load(tmp_path / f"{cmd}.report.json")["pass"] is True


def test_recover_from_potential_file(exk_file, tmp_path):
    pot = tmp_path / "pot.json"
    assert run("potential", "--input", exk_file, "--out", pot) == 0
    out = tmp_path / "rec.json"
    assert run("recover", "--input", pot, "--out", out) == 0
    k = cli.accelerant_from_json(load(out))
    ref = exk_fixture(1.0, 200).kernel
    assert maxnorm(k.k_plus - ref.k_plus) <= 5e-3


def test_example_step_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("example", "step", "--T", "1.0", "--N", 100, "--out", a) == 0
    assert run("example", "step", "--T", "1.0", "--N", 100, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    ra, rb = tmp_path / "a.report.json", tmp_path / "b.report.json"
    assert ra.read_bytes().replace(b"a.json", b"b.json") == rb.read_bytes()
    assert "reference_formula_fits" in load(ra)["data"]


def test_step_beyond_threshold_is_flagged(tmp_path):
    out = tmp_path / "s.json"
    assert run("example", "step", "--T", 2, "--N", 100, "--out", out) == 0
    rep = load(tmp_path / "s.report.json")
    assert any("not an accelerant" in f for f in rep["flags"])


def test_parallel_flag_same_output(exk_file, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("potential", "--input", exk_file, "--out", a) == 0
    assert run("potential", "--input", exk_file, "--out", b, "--parallel") == 0
    assert a.read_bytes() == b.read_bytes()


def test_malformed_input_names_field(exk_file, tmp_path, capsys):
    obj = load(exk_file)
    obj["k_plus"][3] = [[["x", 0.0]]]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(obj))
    assert run("check", "--input", bad, "--out", tmp_path / "o.json") == 1
    err = capsys.readouterr().err.strip()
    assert "\n" not in err and "k_plus" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["example", "nonsense"],
        ["example", "step", "--N", "1"],
        ["example", "step", "--T", "-1"],
        ["check"],
        ["check", "--input", "/nonexistent/file.json"],
        ["example", "exk", "--tol", "bogus=1"],
    ],
)
def test_input_errors_exit_one(argv, tmp_path):
    assert run(*argv, "--out", tmp_path / "o.json") == 1


def test_not_json(tmp_path, capsys):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    assert run("check", "--input", p, "--out", tmp_path / "o.json") == 1
    assert "x.json" in capsys.readouterr().err


def test_singular_level_exits_two(tmp_path, capsys):
    # constant k = 1 on [0, 1]: the truncated operator is singular at tau = 1/2
    grid_k = AccelerantKernel.from_function(lambda t: np.array([[1.0 + 0j]]), 1.0, 4)
    p = tmp_path / "one.json"
    cli.write_json(p, cli.accelerant_to_json(grid_k))
    assert run("resolvent", "--input", p, "--out", tmp_path / "g.json") == 2
    assert "level" in capsys.readouterr().err


def test_singular_M_exits_two(tmp_path, capsys):
    assert run("example", "exk", "--rates", "-1", "--out", tmp_path / "o.json") == 1
    # k = +e^{it} is built through params-free exk only with positive rates;
    # the failing-check path is covered by a tight tolerance instead
    assert run("example", "exk", "--N", 50, "--tol", "closed_form=1e-12", "--out", tmp_path / "e.json") == 2
    assert "potential_vs_closed_form" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    out = tmp_path / "p.json"
    res = subprocess.run(
        [sys.executable, "-m", "krein", "example", "pexp", "--N", "100", "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert load(tmp_path / "p.report.json")["pass"] is True


def test_lambda_file(exk_file, tmp_path):
    lf = tmp_path / "lam.json"
    lf.write_text("[-1.0, 0.0, 2.5]")
    out = tmp_path / "m.json"
    assert run("matrizant", "--input", exk_file, "--lambda-file", lf, "--out", out) == 0
    assert run("matrizant", "--input", exk_file, "--lambda", "1:2", "--out", out) == 1
    assert run("matrizant", "--input", exk_file, "--lambda", "1:0:5", "--out", out) == 1
    bad = tmp_path / "dup.json"
    bad.write_text("[1.0, 1.0]")
    assert run("matrizant", "--input", exk_file, "--lambda-file", bad, "--out", out) == 1
