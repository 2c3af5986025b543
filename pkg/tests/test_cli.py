import json
import subprocess
import sys

import numpy as np
import pytest

from ca_lyapunov.ca_core import Config, coven_rule, default_measure, sample_config
from ca_lyapunov.cli import emit_report, main, to_csv_text, to_json_text


@pytest.fixture
def xfile(tmp_path):
    x = sample_config(default_measure(coven_rule("10")), -30, 30, seed=4)
    path = tmp_path / "x.txt"
    path.write_text(x.to_text())
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_spec_examples(capsys, xfile, tmp_path):
    assert run(capsys, "surjective", "--rule", "builtin:coven:10")[:2] == (0, "true\n")
    assert run(capsys, "exponent", "--rule", "builtin:shift", "--side", "minus", "--n", "5", "--x", xfile)[:2] == (0, "5\n")


def test_lambda_mu_and_blocking(capsys):
    assert run(capsys, "lambda-mu", "--rule", "builtin:coven:10", "--side", "minus", "--n", "2")[:2] == (0, "2.0\n")
    code, out, _ = run(capsys, "blocking", "--rule", "builtin:coven:10", "--word", "000", "--format", "json")
    cert = json.loads(out)["certificate"]
    assert code == 0 and cert["status"] == "certified"
    assert {"word", "anchor", "center_width", "status", "preperiod", "period"} <= set(cert)


def test_exit_codes(capsys, tmp_path):
    assert run(capsys, "exponent", "--rule", "builtin:shift", "--n", "2", "--x", str(tmp_path / "missing"))[0] == 2
    assert run(capsys, "avg-exponent", "--rule", "builtin:shift", "--n", "2")[0] == 2  # seed missing
    assert run(capsys, "check", "nope", "--rule", "builtin:shift")[0] == 2
    assert run(capsys, "reproduce", "nope")[0] == 2
    assert run(capsys, "--bogus")[0] == 2
    assert run(capsys)[0] == 2
    code, _, err = run(capsys, "lambda-mu", "--rule", "builtin:coven:10", "--n", "3", "--budget", "16")
    assert code == 2 and "budget" in err


def test_violated_check_exits_one(capsys, monkeypatch):
    import ca_lyapunov.inequality_lab as lab
    monkeypatch.setattr(lab, "check_topological_inequality",
                        lambda *a, **k: lab._report("prop_5_7", 5.0, 1.0, 0.2, {}, []))
    code, out, _ = run(capsys, "check", "prop_5_7", "--rule", "builtin:shift")
    assert code == 1 and out.startswith("violated")


def test_config_file(capsys, tmp_path, xfile):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"command": "exponent", "rule": "builtin:shift", "n": 3, "x": xfile}))
    assert run(capsys, "--config", str(cfg))[:2] == (0, "3\n")
    # flags override the file
    assert run(capsys, "--config", str(cfg), "--n", "4")[:2] == (0, "4\n")
    cfg.write_text(json.dumps({"rule": "builtin:shift", "colour": 1}))
    code, _, err = run(capsys, "exponent", "--config", str(cfg))
    assert code == 2 and "colour" in err
    cfg.write_text('{"rule": "builtin:shift",\n  "n": 3,,}')
    code, _, err = run(capsys, "exponent", "--config", str(cfg))
    assert code == 2 and "line 2" in err
    cfg.write_text(json.dumps({"command": "exponent", "rule": "builtin:shift", "n": 3, "x": "/nonexistent"}))
    assert run(capsys, "--config", str(cfg))[0] == 2


def test_json_output_is_canonical(tmp_path):
    text = to_json_text({"b": 1 / 3, "a": [np.float64(2.0), np.int64(3)], "c": None})
    assert text == '{\n  "a": [\n    2.0,\n    3\n  ],\n  "b": 0.333333333333,\n  "c": null\n}\n'
    with pytest.raises(ValueError):
        to_json_text({"x": float("nan")})
    path = tmp_path / "r.json"
    emit_report({"v": 1}, "json", str(path))
    assert b"\r" not in path.read_bytes()


def test_csv_output(capsys, xfile):
    code, out, _ = run(capsys, "exponent", "--rule", "builtin:shift", "--n", "3", "--side", "both", "--x", xfile,
                       "--kind", "I", "--format", "csv")
    lines = out.splitlines()
    assert lines[0] == "rule_id,side,n,method,lower,exact,upper,value,stderr,samples,seed"
    assert lines[1].startswith("shift,plus,3") and lines[2].startswith("shift,minus,3")
    assert to_csv_text([{"a": 1.0, "b": [1]}], ["a", "b"]) == 'a,b\n1.0,[1]\n'


def test_entropy_csv_columns(capsys):
    code, out, _ = run(capsys, "entropy", "--kind", "shift", "--measure", "0.5,0.5", "--seed", "1",
                       "--block-len", "4", "--samples", "1000", "--format", "csv")
    assert code == 0
    assert out.splitlines()[0] == "rule_id,kind,p,n,block_len,samples,seed,value,pattern_count,warnings"


def test_workers_do_not_change_reports(tmp_path):
    outs = []
    for w in ("1", "2"):
        path = tmp_path / f"r{w}.json"
        code = main(["avg-exponent", "--rule", "builtin:coven:10", "--n-list", "2,4", "--samples", "40",
                     "--seed", "3", "--side", "both", "--workers", w, "--out", str(path)])
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_properties_and_simulate(capsys, xfile):
    code, out, _ = run(capsys, "properties", "--rule", "builtin:coven:10", "--trials", "10", "--seed", "1")
    assert code == 0 and out.count(": pass") == 6
    code, out, _ = run(capsys, "simulate", "--rule", "builtin:coven:10", "--n", "2", "--x", xfile)
    rows = out.strip().split("\n")
    assert code == 0 and len(rows) == 6 and rows[2].startswith("origin=-30 valid=[-28,28]")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ca_lyapunov", "surjective", "--rule", "builtin:f2:2"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout == "true\n"
