import json
import subprocess
import sys
from pathlib import Path

import pytest

from omlab.cli import main

FIX = Path(__file__).parent / "fixtures"


def _write_grid(path, values, dim=1, box_exp=0, cell_exp=-2):
    path.write_text(json.dumps({"dim": dim, "box_exp": box_exp, "cell_exp": cell_exp, "values": values}))
    return str(path)


@pytest.fixture
def spike(tmp_path):
    return _write_grid(tmp_path / "f.json", [0, 0, 0, 8])


def test_luxemburg_prints_scalar(spike, capsys):
    assert main(["luxemburg", "--in", spike, "--cube", "0:-2:3", "--phi", "r=2,delta=0"]) == 0
    assert capsys.readouterr().out.strip() == "8.0"
    assert main(["luxemburg", "--in", spike, "--cube", "0:-1:1", "--phi", "r=2,delta=0"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(8 / 2**0.5, rel=1e-12)


def test_maximal(spike, tmp_path):
    out = tmp_path / "M.json"
    assert main(["maximal", "--in", spike, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["values"] == [2.0, 2.0, 4.0, 8.0]
    assert main(["maximal", "--in", spike, "--grid", "all", "--side", "upper", "--out", str(out)]) == 0
    up = json.loads(out.read_text())["values"]
    assert all(u >= m for u, m in zip(up, [2.0, 2.0, 4.0, 8.0]))


def test_cz(spike, capsys):
    assert main(["cz", "--in", spike, "--lambda", "3"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["cubes"] == [{"cube": "0:-1:1", "average": 4.0, "parent_average": 2.0}]
    assert rep["pass"] is True


def test_apconst(tmp_path, capsys):
    w = _write_grid(tmp_path / "w.json", [1, 1, 1, 2])
    assert main(["apconst", "--in", w, "--a1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["constant"] == 1.5
    w2 = _write_grid(tmp_path / "w2.json", [1, 4], cell_exp=-1)
    assert main(["apconst", "--in", w2, "--p", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["constant"] == pytest.approx(1.5625, rel=1e-12)
    assert main(["apconst", "--in", w, "--ainf"]) == 0
    assert {"C", "eps"} <= set(json.loads(capsys.readouterr().out))


def test_gen_then_verify(tmp_path):
    inst = tmp_path / "inst.json"
    assert main(["gen", "--kind", "constant", "--box-exp", "1", "--cell-exp", "-4",
                 "--out", str(inst)]) == 0
    out = tmp_path / "rep.csv"
    assert main(["verify", "--instance", str(inst), "--out", str(out)]) == 0
    assert main(["verify", "--check", str(out)]) == 0


def test_verify_config(tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"n_instances": 3, "domains": [[1, 1, -3]], "n_t": 3,
                               "dyadic_instances": 2}))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["verify", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["--threads", "2", "verify", "--config", str(cfg), "--out", str(b)]) == 0
    assert a.read_text() == b.read_text()
    assert a.read_text().splitlines()[1] == "seed,r,delta,a1_u,a1_vr,t,lhs,rhs,ratio,bound_side"


def test_verify_corrupted_fixture_fails(capsys):
    assert main(["verify", "--check", str(FIX / "corrupted_report.csv")]) == 1
    rep = json.loads(capsys.readouterr().out)
    assert rep["pass"] is False and len(rep["problems"]) >= 2


def test_audit_modes(tmp_path):
    cfg = tmp_path / "audit.json"
    cfg.write_text(json.dumps({"generate": {"kind": "step", "seed": 3, "count": 2, "domain": [1, 2, -4]},
                               "phi": "r=1,delta=0", "t": 0.5}))
    for which in ("omega", "forest", "lemma23", "lemma24", "lemma11", "claims", "all"):
        out = tmp_path / f"{which}.json"
        assert main(["audit", which, "--config", str(cfg), "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["pass"] is True and rep["checks"]


def test_audit_from_instance_file(tmp_path):
    inst = tmp_path / "inst.json"
    assert main(["gen", "--kind", "spike", "--seed", "2", "--box-exp", "1", "--cell-exp", "-4",
                 "--out", str(inst)]) == 0
    cfg = tmp_path / "audit.json"
    cfg.write_text(json.dumps({"instance": "inst.json", "t": 0.25}))
    assert main(["audit", "lemma24", "--config", str(cfg), "--out", str(tmp_path / "o.json")]) == 0


@pytest.mark.parametrize("argv", [
    [], ["frobnicate"], ["luxemburg", "--in", "missing.json", "--cube", "0:0:0"],
    ["verify"], ["maximal", "--in", "x", "--phi", "r=0"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_bad_config_exit_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert main(["verify", "--config", str(cfg)]) == 2
    cfg.write_text(json.dumps({"instances": 3}))
    assert main(["verify", "--config", str(cfg)]) == 2
    cfg.write_text(json.dumps({"generate": {}, "instance": "x"}))
    assert main(["audit", "omega", "--config", str(cfg)]) == 2


def test_console_entry_exit_code():
    proc = subprocess.run([sys.executable, "-m", "omlab.cli", "verify", "--check",
                           str(FIX / "corrupted_report.csv")], capture_output=True, text=True)
    assert proc.returncode == 1
