import json
import subprocess
import sys

import numpy as np

from mdmid.cli import main
from mdmid.experiments import builtin_model_1


def test_example1(tmp_path, capsys):
    rc = main(["example1", "--mc", "3", "--tau", "80", "--seed", "1", "--out", str(tmp_path)])
    assert rc == 0
    for name in ("results.csv", "estimates.csv", "trace.csv", "manifest.json"):
        assert (tmp_path / name).exists()
    assert "we-nr" in capsys.readouterr().out


def test_example2_methods_and_flags(tmp_path):
    rc = main([
        "example2", "--mc", "2", "--tau", "60", "--methods", "uw-nr,sw-re",
        "--project-psd", "--no-timing", "--out", str(tmp_path),
    ])
    assert rc == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["methods"] == ["uw-nr", "sw-re"]
    assert manifest["config"]["project_psd"] is True
    assert "median_time_s" not in manifest


def test_run_config(tmp_path):
    cfg = {"model": "builtin-1", "tau": 60, "mc": 2, "seed": 5, "methods": "uw-nr,sw-nr"}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 0
    rows = (out / "results.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2


def test_failure_names_module_and_indices(tmp_path, capsys):
    model, _, _ = builtin_model_1(30)
    H = np.array(model.H)
    H[12] = 0.0
    np.savez(
        tmp_path / "blind.npz", F=np.array(model.F), G=np.array(model.G), E=np.array(model.E),
        H=H, D=np.array(model.D), Q=np.full((1, 1), 2.0), R=np.ones((1, 1)),
    )
    cfg = {"model": "file", "model_file": "blind.npz", "tau": 30, "mc": 2, "L": 1, "N": 1}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    rc = main(["run", "--config", str(tmp_path / "cfg.json")])
    err = capsys.readouterr().err
    assert rc != 0
    assert "stack_ops" in err and "time index 12" in err and "MC index" in err


def test_invalid_config_exit_code(capsys):
    assert main(["example1", "--methods", "nope"]) == 2
    assert "invalid configuration" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "mdmid", "example1", "--mc", "2", "--tau", "40", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
