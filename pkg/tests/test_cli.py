"""CLI subcommands, exit codes, and output files."""

import json

import pytest
import yaml

from elastictrain.cli import cli_main
from elastictrain.metrics import read_metrics


def test_project_published_values(capsys):
    assert cli_main(["project", "--K", "32", "--N", "14"]) == 0
    out = capsys.readouterr().out
    assert "micro-task K=32 N=14: 1.5" in out
    assert "uni-task N=14:" in out


def test_project_hetero(capsys):
    rc = cli_main(["project", "--K", "64", "--n-fast", "8",
                   "--n-slow", "8", "--slow-factor", "1.5"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "1.25" in out and "1.2\n" in out  # uni-task 6/5


def test_project_custom_speeds(capsys):
    rc = cli_main(["project", "--K", "4", "--N", "2",
                   "--speeds", "1.0,0.5"])
    assert rc == 0
    assert "uni-task N=2:" in capsys.readouterr().out


def test_project_requires_node_count(capsys):
    assert cli_main(["project", "--K", "4"]) == 2


def test_unknown_subcommand():
    assert cli_main(["conjure"]) == 2


def test_no_subcommand():
    assert cli_main([]) == 2


def test_train_missing_config(tmp_path):
    assert cli_main(["train", "--config",
                     str(tmp_path / "none.yaml")]) == 2


def test_train_runs_config_file(tmp_path, capsys):
    cfg = {
        "algorithm": "cocoa",
        "dataset": {"synthetic": {"n": 60, "d": 3, "seed": 2}},
        "chunk_capacity_bytes": 400,
        "trainer": {"max_epochs": 3, "seed": 1,
                    "convergence_target": 1e-6},
        "scenario": {"initial_nodes": [{"id": 0}, {"id": 1}]},
        "output": str(tmp_path / "m.csv"),
    }
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(cfg))
    assert cli_main(["train", "--config", str(p)]) == 0
    assert "wrote" in capsys.readouterr().out
    rows = read_metrics(tmp_path / "m.csv")
    assert rows and {r.worker_id for r in rows} == {0, 1}
    side = json.loads((tmp_path / "m.csv.json").read_text())
    assert side["run_config"]["algorithm"] == "cocoa"
    assert side["workers"] == [0, 1]


def test_simulate_scale_in_roster_shrinks(tmp_path):
    out = tmp_path / "si.csv"
    rc = cli_main(["simulate", "--preset", "scale-in",
                   "--synthetic", "n=240,d=3,seed=4",
                   "--capacity", "400", "--max-epochs", "30",
                   "--target", "0", "--out", str(out)])
    assert rc == 0
    rows = read_metrics(out)
    by_iter = {}
    for r in rows:
        by_iter.setdefault(r.iteration, set()).add(r.worker_id)
    counts = [len(by_iter[i]) for i in sorted(by_iter)]
    assert counts[0] == 16
    assert counts[-1] < 16  # events fired inside the budget
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_simulate_requires_exactly_one_dataset(tmp_path):
    assert cli_main(["simulate", "--out", str(tmp_path / "x.csv")]) == 2
    assert cli_main(["simulate", "--synthetic", "n=10,d=2",
                     "--dataset", "f.txt",
                     "--out", str(tmp_path / "x.csv")]) == 2


def test_simulate_bad_synthetic_spec(tmp_path):
    assert cli_main(["simulate", "--synthetic", "n=10",
                     "--out", str(tmp_path / "x.csv")]) == 2


def test_simulate_micro_tasks_and_socket_agree(tmp_path):
    base = ["simulate", "--synthetic", "n=64,d=3,seed=5",
            "--capacity", "400", "--max-epochs", "2", "--target", "0"]
    a, b, c = (str(tmp_path / n) for n in ("a.csv", "b.csv", "c.csv"))
    assert cli_main(base + ["--out", a]) == 0
    assert cli_main(base + ["--out", b, "--transport", "socket"]) == 0
    assert cli_main(base + ["--out", c, "--micro-tasks", "8"]) == 0
    ra, rb, rc_ = read_metrics(a), read_metrics(b), read_metrics(c)
    assert ra == rb  # transports must not change the numbers
    assert [r.metric for r in rc_] != [r.metric for r in ra]
    side = json.loads(open(c + ".json").read())
    assert side["run_config"]["trainer"]["micro_tasks"] == 8


def test_simulate_dataset_file(tmp_path):
    data = tmp_path / "d.txt"
    data.write_text("".join(
        f"{'+1' if i % 2 else '-1'} 1:{(i % 5) + 1}.0 2:{-1.0 if i % 2 else 1.0}\n"
        for i in range(40)))
    out = tmp_path / "f.csv"
    rc = cli_main(["simulate", "--dataset", str(data), "--capacity",
                   "300", "--max-epochs", "2", "--target", "0",
                   "--out", str(out)])
    assert rc == 0
    assert read_metrics(out)


def test_rebalance_demo_writes_swimlanes(tmp_path):
    out = tmp_path / "rb.csv"
    rc = cli_main(["rebalance-demo", "--n", "400", "--d", "4",
                   "--max-epochs", "4", "--out", str(out)])
    assert rc == 0
    rows = read_metrics(out)
    assert {r.worker_id for r in rows} == set(range(16))
    # two speed classes show up as distinct runtimes in iteration 1
    first = [r.runtime for r in rows if r.iteration == 1]
    assert len(set(round(t, 9) for t in first)) >= 2
