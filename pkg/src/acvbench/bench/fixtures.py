"""Recorded failure-mode run logs, one per category of agent mistake.

Each fixture is produced by a flawed rules file layered over the reference
rules, so it replays through the same grader as a live run.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from acvbench.bench.catalog import load_catalog, select
from acvbench.bench.experiment import Experiment, ScriptedBackend
from acvbench.bench.runlog import write_runlog


@dataclass(frozen=True)
class Fixture:
    category: str
    task_id: str
    rules: str
    expect: dict  # record field -> value, checked on the first evaluation


FIXTURES = (
    Fixture("hallucinated-comparison", "l3plus-low.CpuStress", "flawed-hallucinated-comparison.yaml",
            {"l3": False, "l4": False, "l5": False, "reason": "wrong detection"}),
    Fixture("task-omission", "latency-reduction-group", "flawed-task-omission.yaml",
            {"assignment_correct": False, "l1l2_pass": False, "reason": "task omission"}),
    Fixture("omit-report", "manual-scaling", "flawed-omit-report.yaml",
            {"l1l2_pass": False, "reason": "omit report"}),
    Fixture("ineffective-action", "l3plus-low.CpuStress", "flawed-ineffective-action.yaml",
            {"l3": True, "l4": True, "l5": False, "reason": "not mitigated"}),
    Fixture("wrong-action", "cpu-reduction", "flawed-wrong-action.yaml",
            {"l1l2_pass": False}),
    Fixture("misguided-by-output", "l3plus-low.PodFailure", "flawed-misguided-by-output.yaml",
            {"l3": True, "l4": False, "l5": False, "reason": "wrong root cause"}),
)


def rules_dir() -> Path:
    return Path(str(resources.files("acvbench") / "rules"))


def fixtures_dir() -> Path:
    return Path(str(resources.files("acvbench") / "fixtures"))


def fixture_path(category: str, base: Optional[Path] = None) -> Path:
    return (base or fixtures_dir()) / f"{category}.jsonl"


def generate(out_dir: Optional[Path] = None, tasks: Optional[list] = None) -> list[Path]:
    out = Path(out_dir) if out_dir is not None else fixtures_dir()
    out.mkdir(parents=True, exist_ok=True)
    tasks = tasks if tasks is not None else load_catalog()
    written = []
    for fx in FIXTURES:
        task = next(t for t in select(tasks, task=fx.task_id) if t.id == fx.task_id)
        backend = ScriptedBackend([rules_dir() / fx.rules, rules_dir() / "reference.yaml"])
        result = Experiment(task, backend).run()
        path = fixture_path(fx.category, out)
        write_runlog(path, result, {"category": fx.category, "expect": fx.expect})
        written.append(path)
    return written


if __name__ == "__main__":
    for p in generate():
        print(p)
