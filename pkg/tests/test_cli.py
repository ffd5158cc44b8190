import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from budgetpomdp.alloc import read_allocation_csv
from budgetpomdp.cli import main, sha256

TINY = """\
fleet_count = 2
horizon = 30
budgets = [0, 250, 1000]
runs = 3
train_steps = 4096
n_particles = 64
forest_components = 20
alloc_components = 6
alloc_budget = 1500
alloc_runs = 3
scaling_counts = [2, 4]
scaling_repeats = 1
"""

# everything except wall-clock timings is a pure function of the config
DETERMINISTIC = ("fleet", "guided_checkpoint", "vanilla_checkpoint", "metrics", "curves", "forest_eval", "forest", "allocation_rf", "allocation_baseline", "allocation_runs")


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.toml").write_text(TINY)
    out = root / "out"
    assert main(["pipeline", "--config", str(root / "tiny.toml"), "--output-dir", str(out)]) == 0
    return out


def test_pipeline_manifest(run_dir):
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["schema"] == "budgetpomdp.manifest/1"
    assert manifest["config"]["runs"] == 3 and len(manifest["config_hash"]) == 64
    for name, art in manifest["artifacts"].items():
        path = run_dir / art["path"]
        assert path.exists(), name
        assert sha256(path) == art["sha256"]
    assert {"fig_policy_sweep", "fig_forest", "fig_allocation", "fig_scaling"} <= set(manifest["artifacts"])
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["results"]["safety"]["cost_violations"] == 0


def test_rerun_from_manifest_is_identical(run_dir, tmp_path):
    again = tmp_path / "again"
    assert main(["pipeline", "--config", str(run_dir / "manifest.json"), "--output-dir", str(again), "--no-figures"]) == 0
    first = json.loads((run_dir / "manifest.json").read_text())["artifacts"]
    second = json.loads((again / "manifest.json").read_text())["artifacts"]
    for name in DETERMINISTIC:
        assert first[name]["sha256"] == second[name]["sha256"], name


def test_allocate_large_budget(run_dir, tmp_path):
    out = tmp_path / "alloc.csv"
    code = main(["allocate", "--curves", str(run_dir / "curves.csv"), "--budget", "500000", "--output-dir", str(tmp_path), "--out", str(out)])
    assert code == 0
    assert sum(read_allocation_csv(out).values()) <= 500000
    code = main(["allocate", "--curves", str(run_dir / "curves.csv"), "--budget", "3000", "--method", "proportional", "--fleet", str(run_dir / "forest_fleet.json"), "--output-dir", str(tmp_path), "--out", str(out)])
    assert code == 0 and sum(read_allocation_csv(out).values()) == 3000


def test_unknown_policy_lists_choices(run_dir, tmp_path, capsys):
    code = main(["evaluate", "--fleet", str(run_dir / "fleet.json"), "--policies", "oracle,bogus", "--output-dir", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "bogus" in err and "guided-ppo" in err and "heuristic" in err


def test_missing_checkpoint_and_files(run_dir, tmp_path, capsys):
    assert main(["evaluate", "--fleet", str(run_dir / "fleet.json"), "--policies", "guided-ppo", "--output-dir", str(tmp_path)]) == 2
    assert "train" in capsys.readouterr().err
    assert main(["allocate", "--curves", str(tmp_path / "nope.csv"), "--budget", "10", "--output-dir", str(tmp_path)]) == 2
    assert main(["report", "--dir", str(tmp_path / "nothing")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["allocate", "--budget", "10"])
    assert exc.value.code == 2


def test_evaluate_subset(run_dir, tmp_path):
    code = main(["evaluate", "--fleet", str(run_dir / "fleet.json"), "--policies", "oracle,heuristic", "--budgets", "0,100", "--runs", "2", "--output-dir", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert len(lines) == 1 + 4


def test_json_config_and_env_override(tmp_path):
    cfg = tmp_path / "fleet.json"
    cfg.write_text(json.dumps({"fleet_count": 3, "fleet_seed": 4}))
    env = dict(os.environ, BUDGETPOMDP_OUTPUT=str(tmp_path / "envout"))
    proc = subprocess.run([sys.executable, "-m", "budgetpomdp.cli", "gen-fleet", "--config", str(cfg)], env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    fleet = json.loads(Path(tmp_path / "envout" / "fleet.json").read_text())
    assert len(fleet["components"]) == 3


def test_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("runs = 0\n")
    assert main(["gen-fleet", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 2
    cfg.write_text("not_a_key = 1\n")
    assert main(["gen-fleet", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 2


def test_report_renders(run_dir, tmp_path, capsys):
    assert main(["report", "--dir", str(run_dir)]) == 0
    printed = capsys.readouterr().out.split()
    assert printed and all(Path(p).exists() and p.endswith(".png") for p in printed)
