import json

import pytest

from acvbench.bench.fixtures import fixture_path
from acvbench.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bench_writes_outputs(tmp_path, capsys):
    code, out, _ = run(capsys, "bench", "--task", "manual-scaling", "--repeats", "1", "--out", str(tmp_path))
    assert code == 0
    assert "manual-scaling trial=1 eval=1" in out
    for name in ("records.csv", "summary.md", "envelopes.jsonl", "runs/manual-scaling.t1.jsonl"):
        assert (tmp_path / name).exists(), name
    assert list((tmp_path / "transcripts").glob("manual-scaling.t1.e1*.jsonl"))


def test_same_seed_gives_identical_outputs(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert run(capsys, "bench", "--task", "health-check,latency-reduction-cat", "--repeats", "1",
                   "--seed", "7", "--out", str(d))[0] == 0
        outs.append(d)
    a, b = outs
    assert (a / "records.csv").read_bytes() == (b / "records.csv").read_bytes()
    files = sorted(p.relative_to(a) for p in (a / "transcripts").iterdir())
    assert files == sorted(p.relative_to(b) for p in (b / "transcripts").iterdir())
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_config_file_supplies_defaults(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"task": "pod-restart", "repeats": 1, "out": str(tmp_path / "o")}))
    assert run(capsys, "bench", "--config", str(cfg))[0] == 0
    assert (tmp_path / "o" / "records.csv").exists()


@pytest.mark.parametrize("argv", [
    ["bench", "--task", "no-such-task"],
    ["bench", "--task", "manual-scaling", "--rules", "/nonexistent/rules.yaml"],
    ["task", "catalogue", "   "],
    ["task", "payment", "do it"],
    ["task", "catalogue", "x", "--traffic", "catalogue=Hurricane"],
    ["inspect", "pods", "--scenario", "/nonexistent.json"],
])
def test_config_errors_exit_2(argv, capsys, tmp_path):
    assert run(capsys, *argv, *([] if argv[0] != "bench" else ["--out", str(tmp_path)]))[0] == 2


def test_bad_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as err:
        main(["bench", "--level", "L9"])
    assert err.value.code == 2


def test_llm_without_endpoint_exits_3(monkeypatch, tmp_path, capsys):
    monkeypatch.delenv("ACV_LLM_BASE_URL", raising=False)
    code, _, err = run(capsys, "bench", "--backend", "llm", "--task", "manual-scaling", "--out", str(tmp_path))
    assert code == 3 and "ACV_LLM_BASE_URL" in err


def test_replay_fixture_identical(capsys):
    code, out, _ = run(capsys, "replay", str(fixture_path("omit-report")))
    assert code == 0 and "identical" in out


def test_replay_tampered_differs_and_corrupt_is_4(tmp_path, capsys):
    lines = fixture_path("omit-report").read_text().splitlines()
    rows = [json.loads(x) for x in lines]
    for r in rows:
        if r["kind"] == "record":
            r["l1l2_pass"] = True
    tampered = tmp_path / "t.jsonl"
    tampered.write_text("".join(json.dumps(r) + "\n" for r in rows))
    code, out, _ = run(capsys, "replay", str(tampered))
    assert code == 1 and "differs" in out
    truncated = tmp_path / "c.jsonl"
    truncated.write_text("\n".join(lines[:-1]))
    assert run(capsys, "replay", str(truncated))[0] == 4


def test_task_command_runs_agent(capsys):
    code, out, _ = run(capsys, "task", "catalogue", "Scale Catalogue's replicas to 3.", "--traffic",
                       "catalogue=Heavy")
    assert code == 0 and "scaled" in out


def test_inspect_commands(capsys):
    code, out, _ = run(capsys, "inspect", "pods", "--ticks", "30")
    assert code == 0 and "catalogue-" in out and "READY" in out
    code, out, _ = run(capsys, "inspect", "metrics", "--task", "manual-scaling", "--query",
                         'sum(rate(request_duration_seconds_count{name="catalogue"}[1m]))')
    assert code == 0 and "2024-06-20" in out
    code, out, _ = run(capsys, "inspect", "queues")
    assert code == 0 and "manager" in out


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "acvbench", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "bench" in proc.stdout
