import json

import pytest

from triplesym.cli import RunConfig, family_spec, main, parse_xi_range


def _run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_parse_xi_range():
    assert parse_xi_range("16..256") == [16.0, 32.0, 64.0, 128.0, 256.0]
    assert parse_xi_range("16,64") == [16.0, 64.0]


def test_family_spec_options():
    assert family_spec(RunConfig("certify", "tricomi", {"l": 2, "c": 0.0})) == {"builder": "tricomi", "l": 2, "c": 0.0}
    assert family_spec(RunConfig("solve-x", "general-triple", {"alpha": "t-2*x"}))["alpha"] == "t-2*x"


def test_certify_tricomi_passes_and_is_deterministic(tmp_path):
    code, out = _run(tmp_path, "certify", "--family", "tricomi", "--l", "1", "--c", "0", name="a")
    assert code == 0
    code2, out2 = _run(tmp_path, "certify", "--family", "tricomi", "--l", "1", "--c", "0", name="b")
    assert (out / "certify.json").read_bytes() == (out2 / "certify.json").read_bytes()
    assert (out / "constants.csv").read_bytes() == (out2 / "constants.csv").read_bytes()
    man = json.loads((out / "manifest.json").read_text())
    assert set(man["files"]) == {"certify.json", "constants.csv"} and man["exit_code"] == 0


def test_certify_non_hyperbolic_fails(tmp_path):
    code, out = _run(tmp_path, "certify", "--family", "a=-t")
    assert code == 1
    rep = json.loads((out / "certify.json").read_text())
    assert rep["steps"]["hyperbolicity"]["passed"] is False


def test_certify_l2_not_effective(tmp_path):
    code, out = _run(tmp_path, "certify", "--family", "tricomi", "--l", "2", "--c", "0")
    assert code == 1
    step = json.loads((out / "certify.json").read_text())["steps"]["effective_hyperbolicity"]
    assert step["witness"]["message"] == "not effectively hyperbolic"


def test_certify_general_triple(tmp_path):
    assert _run(tmp_path, "certify", "--family", "general-triple")[0] == 0


def test_unknown_family_is_configuration_error(tmp_path):
    assert _run(tmp_path, "certify", "--family", "nosuch")[0] == 2


def test_solve_t_writes_trace(tmp_path):
    code, out = _run(tmp_path, "solve-t", "--family", "tricomi", "--xi", "64")
    assert code == 0
    header = (out / "trace_xi64.csv").read_text().splitlines()[0]
    assert header.startswith("t,E[Omega]")
    assert json.loads((out / "solve_t.json").read_text())["passed"] is True


def test_solve_x_general_triple(tmp_path):
    code, out = _run(tmp_path, "solve-x", "--family", "general-triple", "--alpha", "t-x", "--nx", "201")
    assert code == 0
    s = json.loads((out / "solve_x.json").read_text())
    assert s["weight_conditions"]["passed"] and s["boundary_forms"]["passed"]
    assert (out / "field_0.bin").exists() and (out / "field_0.bin.json").exists()


def test_sweep_short(tmp_path):
    code, out = _run(tmp_path, "sweep", "--family", "a=1,b=0", "--xi", "16..256")
    assert code == 0
    assert json.loads((out / "sweep.json").read_text())["N0"] == 0


def test_config_file(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("family: tricomi\noptions:\n  xi: '16'\n  N: 8\n")
    assert _run(tmp_path, "solve-t", "--config", str(cfg))[0] == 0


def test_bad_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("TRIPLESYM_THREADS", "many")
    assert _run(tmp_path, "solve-t", "--family", "tricomi", "--xi", "16")[0] == 2


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert capsys.readouterr().out.strip() == "0.1.0"
