import io
import json

import pytest

from gridlab.cli import run


def invoke(argv):
    out = io.StringIO()
    code = run(argv, stdout=out)
    return code, (json.loads(out.getvalue()) if out.getvalue() else None)


@pytest.fixture
def ones(tmp_path):
    p = tmp_path / "ones.grid"
    p.write_text("grid2 3 3\n1 1 1\n1 1 1\n1 1 1\n")
    return str(p)


def test_norms_grid_on_ones(ones):
    code, rep = invoke(["norms", "--input", ones, "--norm", "grid", "--l", "2", "--k", "3", "--exact"])
    assert code == 0
    assert rep["result"]["value"] == 1
    assert rep["status"] == "pass" and rep["mode"] == "exact"
    for key in ("version", "command", "config", "seed", "threads"):
        assert key in rep


def test_evasive_build_density():
    code, rep = invoke(["evasive", "--q", "2", "--k", "1", "--audit", "build"])
    assert code == 0
    assert rep["result"]["density"]["exact"] == "5/8"
    assert rep["result"]["count"] == 5


def test_malformed_grid_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.grid"
    bad.write_text("grid2 2 2\n1 1\n1 oops\n")
    code, rep = invoke(["norms", "--input", str(bad), "--norm", "grid"])
    assert code == 3 and rep is None
    assert "line 3" in capsys.readouterr().err


def test_usage_errors_exit_3(tmp_path):
    assert run(["norms"], stdout=io.StringIO()) == 3
    assert run(["bogus"], stdout=io.StringIO()) == 3
    assert run(["norms", "--input", str(tmp_path / "missing.grid")], stdout=io.StringIO()) == 3


def test_unmet_exit_2(tmp_path):
    spike = tmp_path / "spike.grid"
    spike.write_text("grid2 2 2\n1 0\n0 0\n")
    code, rep = invoke(["spread", "--input", str(spike), "--audit", "gridbound", "--k", "100",
                        "--d", "1", "--eps", "0.2", "--exact"])
    assert code == 2 and rep["status"] == "hypothesis-unmet"


def test_config_supplies_defaults_and_flags_win(tmp_path, ones):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"norm": "grid", "l": 2, "k": 2, "seed": 7}))
    code, rep = invoke(["norms", "--input", ones, "--config", str(cfg)])
    assert code == 0 and rep["seed"] == 7 and rep["config"]["k"] == 2
    code, rep = invoke(["norms", "--input", ones, "--config", str(cfg), "--k", "4", "--seed", "1"])
    assert rep["seed"] == 1 and rep["config"]["k"] == 4
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    assert run(["norms", "--input", ones, "--config", str(bad)], stdout=io.StringIO()) == 3


def test_out_file_is_byte_identical(tmp_path):
    out = tmp_path / "a.json"
    runs = []
    for _ in range(2):
        assert run(["nof", "--mode", "report", "--q", "2", "--k", "1", "--r", "4", "--trials", "100",
                    "--seed", "3", "--out", str(out)]) == 0
        runs.append(out.read_bytes())
    assert runs[0] == runs[1]


def test_cover_modes(tmp_path):
    g = tmp_path / "f.grid"
    g.write_text("grid3 2 2 2\n1 0\n0 0\n0 0\n0 1\n")
    for mode in ("fractional", "dual", "round"):
        code, rep = invoke(["cover", "--input", str(g), "--mode", mode, "--floor-exp", "3", "--exact"])
        assert code == 0, mode
    code, rep = invoke(["cover", "--input", str(g), "--mode", "dual", "--floor-exp", "3", "--exact"])
    assert rep["result"]["primal"] == rep["result"]["dual"]["objective"]


def test_nof_modes():
    code, rep = invoke(["nof", "--mode", "protocol", "--q", "2", "--k", "2", "--instance", "0", "1", "1",
                        "--r", "10", "--trials", "50"])
    assert code == 0 and rep["result"]["transcript"]["total_bits"] == 21
    assert rep["result"]["member"] is False
    code, rep = invoke(["nof", "--mode", "cover", "--q", "2", "--k", "1"])
    assert rep["result"]["cover_number"]["method"] == "bruteforce"


def test_audit_all_micro(tmp_path):
    csv_path = tmp_path / "m.csv"
    code, rep = invoke(["audit-all", "--scale", "micro", "--seed", "0", "--csv", str(csv_path)])
    assert code == 0, rep["result"]["failing"]
    assert csv_path.read_text().startswith("statement,audit,instances")
    code2, rep2 = invoke(["audit-all", "--scale", "micro", "--seed", "0"])
    assert rep2["result"] == rep["result"]


def test_audit_all_fault_injection(capsys):
    code, rep = invoke(["audit-all", "--scale", "micro", "--inject-fault", "decoupling"])
    assert code == 1
    assert rep["result"]["failing"] == ["decoupling"]
    assert "decoupling" in capsys.readouterr().err
