"""Run logs: one JSONL file per trial holding each evaluation's outcome and evidence next to its graded record.

Lines are tagged by ``kind``: a ``header``, one ``eval`` per evaluation, one
``record`` per graded evaluation and a closing ``end`` line, so a truncated
file is detected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from acvbench.agent.runtime import Transcript
from acvbench.bench.catalog import TaskSpec, load_catalog, select
from acvbench.bench.experiment import TrialResult
from acvbench.bench.grading import GRADER_VERSION, EvaluationRecord, Evidence, regrade
from acvbench.errors import CorruptLog
from acvbench.manager import ManagedOutcome

FORMAT = 1


def outcome_to_dict(outcome) -> dict:
    if isinstance(outcome, Transcript):
        return {"type": "transcript", "data": outcome.to_dict()}
    return {
        "type": "managed",
        "data": outcome.to_dict(),
        "manager_transcript": outcome.manager_transcript.to_dict() if outcome.manager_transcript else None,
        "agent_transcripts": [[rnd, t.to_dict()] for rnd, t in outcome.agent_transcripts],
    }


def outcome_from_dict(data: dict):
    if data["type"] == "transcript":
        return Transcript.from_dict(data["data"])
    outcome = ManagedOutcome.from_dict(data["data"])
    if data.get("manager_transcript"):
        outcome.manager_transcript = Transcript.from_dict(data["manager_transcript"])
    outcome.agent_transcripts = [(rnd, Transcript.from_dict(t)) for rnd, t in data.get("agent_transcripts", [])]
    return outcome


def _line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True) + "\n"


def render_runlog(result: TrialResult, extra: Optional[dict] = None) -> str:
    header = {"kind": "header", "format": FORMAT, "task": result.task.id, "trial": result.trial,
              "backend": result.backend_id, "grader": GRADER_VERSION, **(extra or {})}
    parts = [_line(header)]
    for i, (outcome, evidence) in enumerate(zip(result.outcomes, result.evidences), start=1):
        parts.append(_line({"kind": "eval", "index": i, "outcome": outcome_to_dict(outcome),
                            "evidence": evidence.to_dict()}))
    for rec in result.records:
        parts.append(_line({"kind": "record", **rec.to_dict()}))
    parts.append(_line({"kind": "end", "evals": len(result.outcomes)}))
    return "".join(parts)


def write_runlog(path, result: TrialResult, extra: Optional[dict] = None) -> None:
    Path(path).write_text(render_runlog(result, extra))


@dataclass
class RunLog:
    header: dict
    outcomes: list = field(default_factory=list)
    evidences: list = field(default_factory=list)
    records: list = field(default_factory=list)


def parse_runlog(text: str, where: str = "run log") -> RunLog:
    lines = [line for line in text.splitlines() if line.strip()]
    try:
        rows = [json.loads(line) for line in lines]
    except json.JSONDecodeError as exc:
        raise CorruptLog(f"{where}: invalid JSON ({exc})") from None
    if not rows or rows[0].get("kind") != "header" or rows[0].get("format") != FORMAT:
        raise CorruptLog(f"{where}: missing or unsupported header")
    if rows[-1].get("kind") != "end":
        raise CorruptLog(f"{where}: truncated (no end marker)")
    log = RunLog(header=rows[0])
    try:
        for row in rows[1:-1]:
            kind = row.get("kind")
            if kind == "eval":
                log.outcomes.append(outcome_from_dict(row["outcome"]))
                log.evidences.append(Evidence.from_dict(row["evidence"]))
            elif kind == "record":
                log.records.append(EvaluationRecord.from_dict({k: v for k, v in row.items() if k != "kind"}))
            else:
                raise CorruptLog(f"{where}: unexpected line kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptLog(f"{where}: malformed entry ({type(exc).__name__}: {exc})") from None
    if len(log.outcomes) != rows[-1].get("evals") or len(log.records) != len(log.outcomes):
        raise CorruptLog(f"{where}: evaluation count mismatch")
    return log


def read_runlog(path) -> RunLog:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CorruptLog(f"cannot read {path}: {exc}") from None
    return parse_runlog(text, str(path))


def find_task(task_id: str, tasks: Optional[list] = None) -> TaskSpec:
    try:
        hits = select(tasks if tasks is not None else load_catalog(), task=task_id)
    except KeyError:
        raise CorruptLog(f"run log names unknown task {task_id!r}") from None
    exact = [t for t in hits if t.id == task_id]
    if len(exact) != 1:
        raise CorruptLog(f"run log names unknown task {task_id!r}")
    return exact[0]


@dataclass
class ReplayResult:
    header: dict
    stored: list
    regraded: list

    @property
    def identical(self) -> bool:
        return self.stored == self.regraded

    def diff(self) -> list[str]:
        out = []
        if self.header.get("grader") != GRADER_VERSION:
            out.append(f"grader version: log {self.header.get('grader')} vs current {GRADER_VERSION}")
        for old, new in zip(self.stored, self.regraded):
            a, b = old.to_dict(), new.to_dict()
            for key in a:
                if a[key] != b[key]:
                    out.append(f"eval {old.eval_index}: {key}: {a[key]!r} -> {b[key]!r}")
        return out


def replay(path, tasks: Optional[list] = None) -> ReplayResult:
    """Re-grade a stored trial from its recorded outcomes and evidence."""
    log = read_runlog(path)
    task = find_task(log.header["task"], tasks)
    regraded = regrade(task, log.outcomes, log.evidences, log.header["trial"])
    return ReplayResult(log.header, log.records, regraded)
