import subprocess
import sys
from pathlib import Path

import yaml

from otfs_cf.cli import main

TINY = {
    "name": "tiny",
    "system": {"M": 8, "N": 8},
    "geometry": {"num_aps": 3, "num_users": 2},
    "evaluation": {"metrics": ["otfs_ep_dl", "ofdm_bt_dl"]},
    "run": {"drops": 2, "seed": 1},
}


def _write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def test_run_uses_env_output_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("OTFS_CF_OUT", str(tmp_path / "out"))
    p = _write(tmp_path, "s.yaml", TINY)
    assert main(["run", str(p), "--drops", "3", "--cdf"]) == 0
    out = tmp_path / "out" / "tiny.csv"
    assert out.exists() and out.with_suffix(".cdf.csv").exists()
    assert "otfs_ep_dl" in capsys.readouterr().out


def test_run_explicit_out_and_overrides(tmp_path):
    p = _write(tmp_path, "s.yaml", TINY)
    out = tmp_path / "x.csv"
    assert main(["run", str(p), "--seed", "9", "--out", str(out), "--workers", "1", "--trials", "5"]) == 0
    assert "# seed: 9" in out.read_text()


def test_validate_and_errors(tmp_path, capsys):
    p = _write(tmp_path, "s.yaml", TINY)
    assert main(["validate", str(p)]) == 0
    assert "EP capacity" in capsys.readouterr().out
    bad = _write(tmp_path, "b.yaml", {**TINY, "extra": 1})
    assert main(["validate", str(bad)]) == 2
    assert main(["validate", str(tmp_path / "missing.yaml")]) == 2


def test_compare(tmp_path, capsys):
    a = _write(tmp_path, "a.yaml", TINY)
    assert main(["compare", str(a), str(a), "--out", str(tmp_path / "cmp.csv")]) == 0
    assert (tmp_path / "cmp.csv").read_text().splitlines()[1].startswith(",1.0,1.0")


def test_module_entry_point(tmp_path):
    p = _write(tmp_path, "s.yaml", TINY)
    res = subprocess.run([sys.executable, "-m", "otfs_cf", "validate", str(p)], capture_output=True, text=True)
    assert res.returncode == 0 and "ok" in res.stdout
