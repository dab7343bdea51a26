import hashlib
import io
import json
import math
from pathlib import Path

import pytest

from qhvol import __version__
from qhvol.cli import config_hash, main

ROOT = Path(__file__).resolve().parents[1]


def run(argv):
    buf = io.StringIO()
    code = main(argv, stdout=buf)
    return code, buf.getvalue()


def test_closed_form_h2():
    code, text = run(["closed-form", "--id", "h2_ball", "--r", "1"])
    assert code == 0
    doc = json.loads(text)
    assert doc["value"] == pytest.approx(3.412276, abs=1e-6)
    assert doc["provenance"]["package"] == "qhvol"
    assert doc["provenance"]["version"] == __version__


def test_closed_form_vector_argument():
    code, text = run(["closed-form", "--id", "qh_dist_punctured", "--x", "[1, 0]", "--y", "[-1, 0]"])
    assert code == 0 and json.loads(text)["value"] == pytest.approx(math.pi)


def test_qdist_config():
    code, text = run(["qdist", "--config", str(ROOT / "configs/qdist_punctured.json"), "--set", "output=null",
                      "--k-max", "10"])
    assert code == 0
    doc = json.loads(text)
    assert doc["upper_bound"] == pytest.approx(math.pi, rel=0.03)
    assert doc["lower_bound"] <= math.pi


def test_decompose_writes_both_tables(tmp_path):
    cubes, counts = tmp_path / "c.csv", tmp_path / "n.csv"
    code, _ = run(["decompose", "--config", str(ROOT / "configs/decompose_cantor.json"), "--k-max", "7",
                   "--out", str(cubes), "--set", f'counts_output="{counts}"'])
    assert code == 0
    head = cubes.read_text().splitlines()
    assert head[0].startswith(f"# qhvol {__version__} config_sha256=")
    assert head[1] == "k,c_1,c_2,d_lo,d_hi"
    assert counts.read_text().splitlines()[1] == "k,N_k,Ntilde_k"


def test_stdout_keeps_every_output():
    code, text = run(["decompose", "--config", str(ROOT / "configs/decompose_cantor.json"), "--k-max", "5",
                      "--set", "output=null", "--set", "counts_output=null"])
    assert code == 0
    assert text.count("config_sha256=") == 2


def test_output_is_deterministic(tmp_path):
    argv = ["porosity", "--config", str(ROOT / "configs/porosity_cantor.json"), "--set", "x_samples=4",
            "--set", "r_grid=[0.1]", "--set", "search_resolution=6"]
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    assert run(argv + ["--out", str(a)])[0] == 0
    assert run(argv + ["--out", str(b)])[0] == 0
    assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()


def test_config_hash_covers_overrides():
    cfg = {"a": 1, "b": [1, 2]}
    assert config_hash(cfg) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash(cfg) != config_hash({"a": 2, "b": [1, 2]})
    assert config_hash(cfg) == config_hash({**cfg, "output": "x.json"})


def test_seed_is_mandatory_for_stochastic_commands():
    code, _ = run(["porosity", "--config", str(ROOT / "configs/porosity_cantor.json"), "--set", "seed=null"])
    assert code == 2
    code, _ = run(["ball-volume", "--config", str(ROOT / "configs/ball-volume_punctured_mc.json"),
                   "--set", "seed=null"])
    assert code == 2


@pytest.mark.parametrize("argv", [
    ["closed-form", "--id", "nope"],
    ["closed-form", "--id", "h2_ball"],
    ["qdist", "--set", 'domain={"dim": 2, "set": {"type": "blob"}}'],
    ["qdist", "--config", "/nonexistent.json"],
    ["qdist", "--set", "novalue"],
    ["fit-q", "--set", 'domain={"dim": 2, "set": {"type": "cantor"}}', "--set", 'estimator="magic"'],
    ["porosity", "--workers", "0"],
    ["decompose", "--bogus", "1"],
])
def test_config_errors_exit_2(argv):
    assert run(argv)[0] == 2


def test_numerical_failure_exits_3():
    argv = ["qdist", "--set", 'domain={"dim": 2, "set": {"type": "points", "points": [[0, 0]]}}',
            "--set", "x=[0.0001, 0]", "--set", "y=[1, 0]", "--k-max", "8"]
    assert run(argv)[0] == 3


def test_fit_with_too_short_range_exits_3():
    argv = ["fit-q", "--config", str(ROOT / "configs/fit-q_cantor.json"), "--k-max", "8",
            "--set", "k_lo=5", "--set", "k_hi=7", "--set", "output=null"]
    assert run(argv)[0] == 3


def test_layer_ratio_csv():
    code, text = run(["layer-ratio", "--config", str(ROOT / "configs/layer-ratio_unit_ball.json"),
                      "--set", "output=null"])
    assert code == 0
    lines = text.splitlines()
    assert lines[1] == "s,ratio,limit"


def test_validate_subset(monkeypatch):
    monkeypatch.chdir(ROOT)
    code, text = run(["validate", "--criteria", "1", "2", "3", "--configs", "configs/closed-form_h2.json",
                      "--set", "output=null"])
    assert code == 0
    doc = json.loads(text)
    assert [c["number"] for c in doc["criteria"]] == [1, 2, 3]
    assert doc["configs"] == [{"config": "configs/closed-form_h2.json", "exit": 0}]


@pytest.mark.parametrize("name", sorted(p.name for p in (ROOT / "configs").glob("*.json")
                                        if p.name not in ("validate.json", "ball-volume_cantor.json")))
def test_shipped_configs_run(name, monkeypatch, tmp_path):
    monkeypatch.chdir(ROOT)
    from qhvol.cli import cfg_command
    path = f"configs/{name}"
    code, text = run([cfg_command(path), "--config", path, "--set", "output=null", "--set", "counts_output=null"])
    assert code == 0
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        assert all(v["pass"] for v in doc.get("verdicts", []))


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out
