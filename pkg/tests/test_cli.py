import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ivrepr import selftest
from ivrepr.cli import main
from ivrepr.ndcore import autodiff as ad


def test_gen_hash_is_stable(tmp_path, capsys):
    assert main(["gen", "--variant", "linear1", "--seed", "7", "--no-csv", "--out", str(tmp_path / "a.ivrb")]) == 0
    assert main(["gen", "--variant", "linear1", "--seed", "7", "--no-csv", "--out", str(tmp_path / "b.ivrb")]) == 0
    ma = json.loads((tmp_path / "a.ivrb.manifest.json").read_text())
    mb = json.loads((tmp_path / "b.ivrb.manifest.json").read_text())
    assert ma["sha256"] == mb["sha256"]
    assert (tmp_path / "a.ivrb").read_bytes() == (tmp_path / "b.ivrb").read_bytes()
    assert ma["dims"]["n"] == 10000 and ma["dims"]["r"] == ma["dims"]["k"] == 4
    assert ma["variant"] == "linear1" and ma["seed"] == 7


def test_gen_with_hidden(tmp_path):
    main(["gen", "--variant", "quad1", "--seed", "1", "--n", "30", "--out", str(tmp_path / "p.ivrb")])
    main(["gen", "--variant", "quad1", "--seed", "1", "--n", "30", "--with-hidden", "--out", str(tmp_path / "h.ivrb")])
    plain = next(csv.reader(open(tmp_path / "p.csv")))
    hidden = next(csv.reader(open(tmp_path / "h.csv")))
    assert not any(c.startswith("hidden_") for c in plain)
    assert {"hidden_d_0", "hidden_u_0", "hidden_v_0", "hidden_eta"} <= set(hidden)


def _config(tmp_path, **kw):
    cfg = {"variant": "linear1", "dims": {"n": 600, "m": 20}, "method": "lirr", "seeds": [0, 1], **kw}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_run_is_byte_deterministic(tmp_path):
    cfg = _config(tmp_path)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "a.csv")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b.csv"), "--threads", "2"]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_run_flags_override(tmp_path):
    cfg = _config(tmp_path)
    main(["run", "--config", cfg, "--seeds", "3..5", "--metric", "noise-matched", "--out", str(tmp_path / "r.csv")])
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert [r["seed"] for r in rows] == ["3", "4", "5"]


def test_bench_outputs(tmp_path, capsys):
    path = tmp_path / "bench.json"
    path.write_text(json.dumps({
        "variant": "linear2", "dims": {"n": 600, "m": 20}, "seeds": [0, 1, 2],
        "experiments": [{"method": "lirr"}, {"method": "pca"}],
    }))
    assert main(["bench", "--config", str(path), "--out", str(tmp_path / "out")]) == 0
    out = tmp_path / "out"
    summary = list(csv.DictReader(open(out / "summary.csv")))
    results = list(csv.DictReader(open(out / "results.csv")))
    assert len(summary) == 2
    for s in summary:
        vals = [float(r["improvement"]) for r in results if r["method"] == s["method"]]
        assert abs(float(s["mean"]) - np.mean(vals)) <= 1e-12
        assert int(s["n_seeds"]) == 3
    assert (out / "histogram.csv").exists()
    assert "mean +/- std" in capsys.readouterr().out


def test_exit_codes(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["run", "--seeds", "9..1"])
    assert e.value.code == 1
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 1
    assert main(["bench"]) == 1
    assert main(["run", "--config", _config(tmp_path, dims={"n": 5, "m": 20}), "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["run", "--threads", "0"]) == 1
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["gen", "--variant", "linear1", "--n", "20", "--out", str(blocker / "sub" / "d.ivrb")]) == 3


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    assert "checks passed" in capsys.readouterr().out


def test_selftest_names_corrupted_primitive(monkeypatch, capsys):
    good = ad.PRIMITIVES["tanh"]
    monkeypatch.setitem(ad.PRIMITIVES, "tanh", ad.Primitive(good.forward, lambda g, out, a: (g * 2.0,)))
    assert main(["selftest"]) == 2
    text = capsys.readouterr().out
    assert "FAIL  grad:tanh" in text
    assert "grad:cos" not in [r.name for r in selftest.run_all() if not r.ok]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ivrepr", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "selftest" in proc.stdout
