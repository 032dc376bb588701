import json
import subprocess
import sys

import pytest

from fedda.cli import main

CONFIG = """
[run]
K = 3
I = 2
E = 4
batch_size = 0
init_batch = 0

[problem]
kind = "quadratic"
dim = 3
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(CONFIG)
    return path


def test_run_writes_outputs(config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(config), "--out", str(out), "--seed", "3", "--override", "run.E=2"]) == 0
    assert "FedDA-1-1: 4 rows" in capsys.readouterr().out
    assert len((out / "metrics.csv").read_text().splitlines()) == 5
    assert "seed = 3" in (out / "config.toml").read_text()
    assert (out / "metrics.svg").exists()


def test_run_rejects_bad_key(config, tmp_path, capsys):
    assert main(["run", str(config), "--out", str(tmp_path), "--override", "run.leraning_rate=1"]) == 2
    assert "leraning_rate" in capsys.readouterr().err


def test_run_reports_failure(config, tmp_path, monkeypatch):
    import fedda.federation.runner as runner

    def boom(*a, **k):
        raise FloatingPointError("diverged")

    monkeypatch.setattr(runner, "server_round", boom)
    assert main(["run", str(config), "--out", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "error.json").read_text())["error"] == "FloatingPointError"


def test_unknown_suite_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["verify", "everything"])
    assert exc.value.code == 2


@pytest.mark.parametrize("suite", ["prox-oracle", "lemmas"])
def test_verify_suites_pass(suite):
    proc = subprocess.run([sys.executable, "-m", "fedda", "verify", suite], capture_output=True, text=True,
                          timeout=300)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert proc.stdout.strip().endswith("PASS")
