from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from mmstream.cli import METRICS_COLUMNS, main
from mmstream.plan import deserialize_plan


@pytest.fixture()
def small_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"run_frames": 450, "sample_frames": 300, "seeds": [0]}))
    return str(path)


def test_optimize_writes_both_plans(tmp_path, small_config, capsys) -> None:
    out = tmp_path / "plans"
    assert main(["optimize", "--query", "Q8", "--config", small_config, "--out", str(out)]) == 0
    naive = deserialize_plan((out / "Q8.naive.json").read_text())
    opt = deserialize_plan((out / "Q8.optimized.json").read_text())
    assert naive.ops() == ["Source", "Extract", "Extract", "Extract", "Filter", "Sink"]
    assert "Skip" in opt.ops()
    text = capsys.readouterr().out
    assert "--- none -> S" in text and "+Skip(3, no_car)" in text and "validation [initial]" in text


def test_optimize_with_no_phases_copies_naive(tmp_path, small_config) -> None:
    assert main(["optimize", "--query", "Q6", "--phases", "", "--config", small_config, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "Q6.naive.json").read_text() == (tmp_path / "Q6.optimized.json").read_text()


def test_run_writes_metrics(tmp_path, small_config, capsys) -> None:
    assert main(["optimize", "--query", "Q1", "--config", small_config, "--out", str(tmp_path)]) == 0
    metrics = tmp_path / "m.csv"
    rc = main(["run", "--plan", str(tmp_path / "Q1.optimized.json"), "--config", small_config,
               "--frames", "300", "--out", str(metrics)])
    assert rc == 0
    rows = list(csv.reader(metrics.open()))
    assert tuple(rows[0]) == METRICS_COLUMNS
    assert rows[1][0] == "Q1" and rows[1][1] == "Q1.optimized" and rows[1][4] == "300"
    assert float(rows[1][2]) > 6.25


def test_datagen_dump(tmp_path) -> None:
    out = tmp_path / "frames"
    assert main(["datagen", "dump", "--stream", "volleyball", "--frames", "4", "--out", str(out)]) == 0
    assert len(list(out.glob("*.ppm"))) == 4
    assert len((out / "annotations.jsonl").read_text().splitlines()) == 4


def test_bench_check_and_ablate(tmp_path, small_config, capsys) -> None:
    rc = main(["bench", "--config", small_config, "--queries", "Q6,Q12", "--out", str(tmp_path), "--check"])
    text = capsys.readouterr().out
    assert "no_errors" in text
    assert rc in (0, 2)  # two queries cannot satisfy the suite-wide trend check
    assert (tmp_path / "report.csv").exists() and (tmp_path / "ablation.csv").exists()
    assert main(["ablate", "--config", small_config, "--queries", "Q6", "--out", str(tmp_path / "ab")]) == 0
    assert (tmp_path / "ab" / "ablation.csv").read_text().startswith("phase_set,min_speedup")


@pytest.mark.parametrize(
    "argv",
    [["optimize", "--query", "Q99"], ["optimize", "--query", "Q1", "--phases", "quantum"],
     ["run", "--plan", "/nonexistent/plan.json"], ["bench", "--queries", "Q0"]],
)
def test_config_errors_exit_1(argv, capsys) -> None:
    assert main(argv) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_bad_config_file_exits_1(tmp_path, capsys) -> None:
    bad = tmp_path / "bad.json"
    bad.write_text('{"tau": 3}')
    assert main(["ablate", "--config", str(bad)]) == 1
    assert "tau" in capsys.readouterr().err


def test_module_entry_point() -> None:
    proc = subprocess.run([sys.executable, "-m", "mmstream", "optimize", "--query", "Q0"],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and "valid ids" in proc.stderr
