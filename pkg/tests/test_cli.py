import csv
import io
import json
import math

import numpy as np
import pytest

from diqkd.cli import main
from diqkd.fileio import matrix_to_dict

import oracles


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


def test_chsh_presets(capsys):
    doc = report(capsys, "chsh", "--preset", "phi-plus", "--optimize", "--starts", "4")
    assert doc["outputs"]["S"] == pytest.approx(2 * math.sqrt(2), abs=1e-9)
    assert doc["command"][0] == "chsh" and "wall_time" not in doc
    doc = report(capsys, "chsh", "--preset", "werner", "--visibility", "0.8", "--optimize", "--starts", "4")
    assert doc["outputs"]["S"] == pytest.approx(oracles.WERNER_08_SMAX, abs=1e-9)
    doc = report(capsys, "chsh", "--preset", "maximally-mixed", "--angles", "0", "1.57", "0.78", "-0.78")
    assert doc["outputs"]["S"] == pytest.approx(0.0, abs=1e-12)


def test_chsh_state_file_digest(tmp_path, capsys):
    path = tmp_path / "rho.json"
    rho = np.zeros((4, 4))
    rho[0, 0] = rho[3, 3] = rho[0, 3] = rho[3, 0] = 0.5
    path.write_text(json.dumps(matrix_to_dict(rho)))
    doc = report(capsys, "chsh", "--state", str(path), "--optimize", "--starts", "2", "--timing")
    assert len(doc["inputs"][str(path)]) == 64 and "wall_time" in doc


def test_jordan(capsys):
    doc = report(capsys, "jordan", "--preset", "zi-xi")
    assert doc["outputs"]["block_count"] == 2 and doc["outputs"]["residual_ok"]
    assert report(capsys, "jordan", "--preset", "z-z")["outputs"]["block_count"] == 1


def test_keyrate_single_and_sweep(capsys):
    doc = report(capsys, "keyrate", "--S", "2.5", "--q", "0.02")
    assert doc["outputs"]["rate"] == pytest.approx(oracles.KEY_RATE_2_5_0_02, abs=1e-12)
    code, out, _ = run(capsys, "keyrate", "--sweep", "2.0:2.8:0.05", "--q", "0.0")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["S", "q", "rate"] and len(rows) == 17
    rates = [float(r["rate"]) for r in rows]
    assert np.all(np.diff(rates) >= 0)


@pytest.mark.parametrize("S, needle", [("2.9", "quantum bound"), ("1.9", "S >= 2")])
def test_keyrate_rejects_out_of_range(capsys, S, needle):
    code, _, err = run(capsys, "keyrate", "--S", S)
    assert code == 1 and "invariant violated" in err and needle in err


def test_estimate(capsys):
    out = report(capsys, "estimate", "--m", "10000", "--eps", "1e-6")["outputs"]
    closed = math.sqrt(-math.log(2e-6 / 9) * oracles.COS4_PI8 / 20000)
    assert out["mu"] == pytest.approx(closed, abs=1e-10)
    assert out["Y_threshold"] == pytest.approx(10000 * (0.8 + out["mu"]))
    code, text, _ = run(capsys, "estimate", "--m", "2000", "--r", "20", "--mu-grid", "0.02:0.1:0.01")
    bounds = [float(r["bound"]) for r in csv.DictReader(io.StringIO(text))]
    assert code == 0 and len(bounds) == 9 and np.all(np.diff(bounds) <= 0)


def test_estimate_infeasible(capsys):
    code, _, err = run(capsys, "estimate", "--m", "10", "--eps", "1e-9")
    assert code == 1 and "p + mu" in err


def test_definetti_sweep(capsys):
    code, out, _ = run(capsys, "definetti", "--n", "10000", "--k", "1000", "--dim", "4", "--r", "100")
    assert code == 0
    row = next(csv.DictReader(io.StringIO(out)))
    assert float(row["bound"]) == pytest.approx(oracles.DEFINETTI_1E4_1E3_100_4, rel=1e-12)
    code, out, _ = run(capsys, "definetti", "--n", "10000", "--k", "100", "--dim", "4", "--r-sweep", "0:9000:1000")
    vals = [float(r["bound"]) for r in csv.DictReader(io.StringIO(out))]
    assert len(vals) == 10 and np.all(np.diff(vals) < 0)


def write_config(tmp_path, **doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_simulate_completed_and_aborted(tmp_path, capsys):
    cfg = write_config(tmp_path, n=2000, m=2000, p_thres=0.76, seed=4)
    doc = report(capsys, "simulate", "--config", cfg)
    assert doc["outputs"]["status"] == "completed" and doc["outputs"]["keys_equal"]
    assert doc["seed"] == 4
    cfg = write_config(tmp_path, n=2000, m=2000, device={"kind": "collective-iid", "preset": "classical-z"})
    code, out, _ = run(capsys, "simulate", "--config", cfg)
    assert code == 2 and json.loads(out)["outputs"]["status"] == "aborted"


def test_simulate_transcript_byte_identical(tmp_path, capsys):
    cfg = write_config(tmp_path, n=500, m=500, p_thres=0.76, eps=0.1, seed=9)
    paths = [tmp_path / "a.jsonl", tmp_path / "b.jsonl"]
    outs = []
    for p in paths:
        code, out, _ = run(capsys, "simulate", "--config", cfg, "--transcript", str(p))
        assert code == 0
        outs.append(out)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    reports = [json.loads(o) for o in outs]
    assert reports[0]["outputs"] == reports[1]["outputs"]


@pytest.mark.parametrize(
    "doc, needle",
    [
        ({"n": 10, "m": 10, "bogus": 1}, "unknown fields"),
        ({"n": 10}, "required"),
        ({"n": 10, "m": 10, "p_thres": 0.7}, "p_thres"),
        ({"n": 10, "m": 10, "device": {"kind": "magic"}}, "device kind"),
    ],
)
def test_simulate_bad_config(tmp_path, capsys, doc, needle):
    code, _, err = run(capsys, "simulate", "--config", write_config(tmp_path, **doc))
    assert code == 1 and needle in err and err.startswith("error:")


def test_usage_errors_exit_one(capsys):
    assert run(capsys, "keyrate")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
    code, _, err = run(capsys, "keyrate", "--sweep", "2:3")
    assert code == 1 and "start:stop:step" in err


def test_out_option(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, text, _ = run(capsys, "keyrate", "--S", "2.7", "--out", str(out))
    assert code == 0 and text == ""
    assert json.loads(out.read_text())["outputs"]["S"] == 2.7
