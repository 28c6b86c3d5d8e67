from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from subflow.cli import main
from subflow.config import DEFAULTS, config_hash, load_config, resolve

ROOT = Path(__file__).resolve().parents[1]

SMALL = {
    "substitution": "a->abbb; b->a",
    "grids": {
        "omega": [1.0, 1.4142135623730951],
        "R": {"min": 1.0, "max": 300.0, "per_decade": 8, "scale": "log"},
        "R_fejer": {"min": 2, "max": 5, "num": 4, "scale": "theta"},
        "R_product": {"min": 1.0, "max": 20.0, "num": 9, "scale": "log"},
        "t": {"t_max": 20.0, "dt": 0.05, "T": 200.0},
        "N": {"trace": 20, "membership": 30, "discrepancy_min": 10, "discrepancy_max": 20000},
        "k": [10, 100],
        "Upsilon": [100.0],
    },
    "samples": {"fejer": 4, "sup": 8, "correlation": 4},
}


def write_config(tmp_path: Path, cfg: dict, name="cfg.json") -> Path:
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def run(tmp_path, command, cfg, *extra, out="out"):
    path = write_config(tmp_path, cfg)
    return main([command, "--config", str(path), "--output", str(tmp_path / out), *extra])


@pytest.mark.parametrize("command", ["analyze", "return-word", "spectrum", "ek", "discrepancy",
                                     "product", "certify"])
def test_commands_succeed(tmp_path, command):
    assert run(tmp_path, command, SMALL) == 0
    files = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert "config.resolved.json" in files
    assert not [f for f in files if f.endswith(".tmp")]
    for name in files:
        if name.endswith(".csv"):
            lines = (tmp_path / "out" / name).read_text().splitlines()
            assert lines[-1].startswith("# config-hash: ")


def test_hash_line_matches_config(tmp_path):
    assert run(tmp_path, "analyze", SMALL) == 0
    resolved = json.loads((tmp_path / "out" / "config.resolved.json").read_text())
    last = (tmp_path / "out" / "eigen.csv").read_text().splitlines()[-1]
    assert last == f"# config-hash: {config_hash(resolved)}"


def test_deterministic_outputs(tmp_path, monkeypatch):
    assert run(tmp_path, "spectrum", SMALL) == 0
    first = {f.name: f.read_bytes() for f in (tmp_path / "out").iterdir()}
    monkeypatch.setenv("SUBFLOW_THREADS", "3")
    assert run(tmp_path, "spectrum", SMALL) == 0
    second = {f.name: f.read_bytes() for f in (tmp_path / "out").iterdir()}
    assert first == second


def test_assumption_failure_exit_2(tmp_path):
    cfg = dict(SMALL, substitution="a->ab; b->a")
    assert run(tmp_path, "discrepancy", cfg) == 2
    assert not (tmp_path / "out").exists()
    # analyze still reports on such a substitution
    assert run(tmp_path, "analyze", cfg) == 0
    info = json.loads((tmp_path / "out" / "assumptions.json").read_text())
    assert info["second_eigenvalue_expanding"] is False


def test_numeric_failure_exit_3(tmp_path):
    assert run(tmp_path, "ek", SMALL, "--grids.N.trace=100") == 3
    assert not (tmp_path / "out").exists()


def test_config_errors_exit_4(tmp_path):
    assert run(tmp_path, "analyze", SMALL, "--constants.c1=1.5") == 4
    assert run(tmp_path, "analyze", dict(SMALL, roof=[0.5, 0.6])) == 4
    assert run(tmp_path, "nonsense", SMALL) == 4
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["analyze", "--config", str(bad)]) == 4
    assert main(["analyze", "--config", str(tmp_path / "missing.json")]) == 4
    with pytest.raises(SystemExit) as exc:
        main(["analyze"])
    assert exc.value.code == 4


def test_minimal_config_defaults(tmp_path):
    p = write_config(tmp_path, {"substitution": "a->abbb; b->a"})
    cfg = load_config(p)
    assert cfg["constants"]["c1"] == 0.5
    assert cfg["samples"] == DEFAULTS["samples"]
    assert cfg["roof"] == "perron"
    over = load_config(p, [(["constants", "k"], 7)])
    assert over["constants"]["k"] == 7


def test_hash_ignores_output():
    a = resolve({"substitution": "a->ab; b->ba", "output": "x"})
    b = resolve({"substitution": "a->ab; b->ba", "output": "y"})
    assert config_hash(a) == config_hash(b)
    c = resolve({"substitution": "a->ab; b->ba", "seeds": 1})
    assert config_hash(a) != config_hash(c)


def test_schema_copy_matches_docs():
    shipped = ROOT / "src" / "subflow" / "config.schema.json"
    assert json.loads(shipped.read_text()) == json.loads((ROOT / "docs" / "config.schema.json").read_text())


def test_module_entry_point(tmp_path):
    p = write_config(tmp_path, SMALL)
    res = subprocess.run([sys.executable, "-m", "subflow", "analyze", "--config", str(p),
                          "--output", str(tmp_path / "m")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "m" / "assumptions.json").exists()
