import json
import subprocess
import sys

import pytest

from safeguard import cli
from safeguard.errors import ConfigError

SMALL = ["--task", "Point2D_D1_AG_SO_v0", "--max-steps", "30"]


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_list_tasks(capsys):
    code, out, _ = run(["list-tasks"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 10 and sum("[benchmark]" in l for l in lines) == 8
    code, out, _ = run(["list-tasks", "--format", "json"], capsys)
    docs = json.loads(out)
    assert all(d["schema_version"] == 1 and d["kind"] == "task" for d in docs)


def test_run_writes_json(tmp_path, capsys):
    code, out, _ = run(["run", *SMALL, "--algo", "ssa", "--episodes", "2", "--seed", "1", "--out", str(tmp_path),
                        "--no-timings"], capsys)
    assert code == 0 and "seed=1" in out and "seed=2" in out
    doc = json.loads((tmp_path / "run.json").read_text())
    assert [r["seed"] for r in doc["episodes"]] == [1, 2]
    assert all("loop_time_ms" not in r for r in doc["episodes"])


def test_run_param_and_trace(tmp_path, capsys):
    code, out, _ = run(["run", *SMALL, "--algo", "cbf", "--param", "3.5", "--trace", "--out", str(tmp_path)],
                       capsys)
    assert code == 0 and "param=3.5" in out
    assert len(list(tmp_path.glob("trace_*.jsonl"))) == 1


def test_run_csv(tmp_path, capsys):
    code, _, _ = run(["run", *SMALL, "--algo", "pfm", "--format", "csv", "--out", str(tmp_path)], capsys)
    assert code == 0 and (tmp_path / "run_episodes.csv").read_text().startswith("task,algorithm")


def test_sweep_and_plot(tmp_path, capsys):
    code, out, _ = run(["sweep", *SMALL, "--algo", "ssa", "--grid", "0.1,0.5", "--episodes", "1",
                        "--out", str(tmp_path)], capsys)
    assert code == 0 and "hull:" in out and "param=0.5" in out
    code, out, _ = run(["plot", str(tmp_path / "sweep.json")], capsys)
    assert code == 0 and (tmp_path / "tradeoff_Point2D_D1_AG_SO_v0.svg").exists()


def test_matrix_single_task(tmp_path, capsys):
    code, out, _ = run(["matrix", *SMALL, "--algo", "ssa", "--algo", "sma", "--episodes", "2",
                        "--out", str(tmp_path), "--no-timings"], capsys)
    assert code == 0 and "P(.|ssa)" in out
    doc = json.loads((tmp_path / "matrix.json").read_text())
    assert doc["success"][0]["algorithms"] == ["ssa", "sma"] and len(doc["episodes"]) == 4


def test_parse_grid():
    assert cli.parse_grid("0.1, 2") == [0.1, 2.0]
    assert cli.parse_grid("0:1:0.25") == [0.0, 0.25, 0.5, 0.75]
    assert cli.parse_grid("0:1:0.1,1:10:1,10:100:10,100:1000:10") == __import__("safeguard").bench.default_grid()
    for bad in ("", "a", "1:0:0", "1:2"):
        with pytest.raises(ConfigError):
            cli.parse_grid(bad)


@pytest.mark.parametrize("argv", [
    ["run", "--task", "NoSuchTask", "--algo", "ssa"],
    ["run", "--task", "Point2D_D1_AG_SO_v0", "--algo", "qp"],
    ["run", "--task", "Point2D_D1_AG_SO_v0", "--dt", "-1"],
    ["sweep", "--task", "Point2D_D1_AG_SO_v0", "--grid", "x"],
    ["frobnicate"],
    [],
])
def test_config_errors_exit_2(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2 and err


def test_bad_thread_env_is_config_error(monkeypatch, capsys):
    monkeypatch.setenv("SAFEGUARD_THREADS", "zero")
    code, _, err = run(["run", *SMALL, "--algo", "ssa"], capsys)
    assert code == 2 and "SAFEGUARD_THREADS" in err


def test_runtime_errors_exit_3(tmp_path, capsys):
    blocker = tmp_path / "f"
    blocker.write_text("")
    code, _, err = run(["run", *SMALL, "--algo", "ssa", "--out", str(blocker / "x")], capsys)
    assert code == 3 and "cannot write" in err
    code, _, err = run(["plot", str(tmp_path / "missing.json")], capsys)
    assert code == 3


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "safeguard.cli", "list-tasks"], capture_output=True, text=True)
    assert proc.returncode == 0 and "G1FixedBase_D1_AG_SO_v0" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "safeguard.cli", "run", "--task", "bogus"], capture_output=True,
                          text=True)
    assert proc.returncode == 2
