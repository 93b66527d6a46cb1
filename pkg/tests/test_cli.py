import json
import subprocess
import sys

import pytest

from expweights.cli import main


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_mrs_oracle(capsys):
    code, out, _ = run(["mrs", "--weight", "freud:2", "--x", "1,4,9"], capsys)
    assert code == 0
    rows = [line.split(",") for line in out.strip().splitlines()[1:]]
    assert [float(r[1]) for r in rows] == pytest.approx([1, 2, 3], rel=1e-12)


def test_recurrence_and_gauss(capsys, tmp_path):
    code, out, _ = run(["recurrence", "--weight", "freud:2", "--N", "4"], capsys)
    assert code == 0 and out.splitlines()[0] == "k,b_k"
    assert float(out.splitlines()[4].split(",")[1]) == pytest.approx(1.0, rel=1e-15)
    code, _, _ = run(["gauss", "--weight", "erdos", "--n", "5", "--out", str(tmp_path)], capsys)
    assert code == 0
    lines = (tmp_path / "gauss.csv").read_text().splitlines()
    assert lines[0] == "k,x_kn,lambda_kn" and len(lines) == 6
    summary = json.loads((tmp_path / "gauss.summary.json").read_text())
    assert summary["rows"] == 5 and summary["passed"]


def test_approx_op_and_best(capsys):
    code, out, _ = run(["approx-op", "--op", "v", "--n", "3", "--points", "7"], capsys)
    assert code == 0 and len(out.splitlines()) == 8
    code, out, _ = run(["best", "--f", "sin", "--p", "2,inf", "--n", "4,6"], capsys)
    assert code == 0 and len(out.splitlines()) == 5


def test_verify_writes_artifacts(capsys, tmp_path):
    code, out, _ = run(["verify", "--theorem", "1.1", "--weight", "erdos", "--p", "2",
                        "--nmin", "4", "--nmax", "8", "--out", str(tmp_path)], capsys)
    assert code == 0 and "PASS" in out
    csv_path = tmp_path / "derivative-bound.csv"
    summary = json.loads((tmp_path / "derivative-bound.summary.json").read_text())
    assert csv_path.exists() and summary["passed"]
    assert {"config", "code_version", "rows", "counts"} <= set(summary)
    assert "out_dir" not in summary["config"]
    dats = list(tmp_path.glob("*.dat"))
    assert dats and all(len(line.split()) == 2 for line in dats[0].read_text().splitlines()[1:])


def test_verify_failure_exit_code(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"band": 1.0000001, "stability": 1.0}))
    code, _, err = run(["verify", "--theorem", "1.4", "--config", str(cfg),
                        "--out", str(tmp_path)], capsys)
    assert code == 1 and "failing row" in err


def test_bad_config_exit_codes(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["verify", "--theorem", "1.4", "--config", str(bad)], capsys)[0] == 2
    bad.write_text(json.dumps({"n_list": [4, 60]}))
    assert run(["verify", "--theorem", "1.4", "--config", str(bad)], capsys)[0] == 2
    assert run(["bogus"], capsys)[0] == 2
    assert run(["best", "--p", "3"], capsys)[0] == 2
    assert run(["mrs", "--weight", "nonsense", "--x", "1"], capsys)[0] == 2


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "expweights.cli", "nope"], capture_output=True)
    assert res.returncode == 2
