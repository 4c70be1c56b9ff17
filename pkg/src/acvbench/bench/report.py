"""records.csv and summary.md emission. Output is byte-stable for identical records."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Optional

from acvbench.bench.catalog import Level, RequestLevel, TaskSpec
from acvbench.bench.grading import EvaluationRecord

COLUMNS = (
    "task_id", "level", "request_level", "trial", "eval_index", "steps", "exec_errors", "rounds",
    "l1l2_pass", "l3", "l4", "l5", "first_pass", "overall_pass", "assignment_correct",
    "issue_present", "fault_kind", "heuristic_grade", "reason",
)


def cell(value) -> str:
    """Booleans as 1/0, missing values as '-', tuples as [a,b,c]."""
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (tuple, list)):
        return "[" + ",".join(str(v) for v in value) + "]"
    return str(value)


def fmt(x: float) -> str:
    """Two decimals with trailing zeros trimmed, keeping one: 1.0, 0.87, 4.9."""
    text = f"{x:.2f}".rstrip("0")
    return text + "0" if text.endswith(".") else text


def ratio(flags: list) -> str:
    valid = [f for f in flags if f is not None]
    return f"{sum(1 for f in valid if f)}/{len(valid)}"


def _mean(values: list) -> Optional[float]:
    return sum(values) / len(values) if values else None


def _rate(flags: list) -> str:
    valid = [1.0 if f else 0.0 for f in flags if f is not None]
    return fmt(_mean(valid)) if valid else "-"


def _by_id(tasks: list[TaskSpec]) -> dict:
    return {inst.id: inst for t in tasks for inst in t.instances()}


def render_csv(records: list[EvaluationRecord], tasks: list[TaskSpec]) -> str:
    meta = _by_id(tasks)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records:
        task = meta[r.task_id]
        row = r.to_dict()
        row["level"] = task.level.value
        row["request_level"] = task.request_level.value
        writer.writerow([cell(tuple(row[c]) if isinstance(row[c], list) else row[c]) for c in COLUMNS])
    return buf.getvalue()


def _group(records: list[EvaluationRecord]) -> dict:
    """{task_id: {trial: [records in eval order]}} preserving first-seen order."""
    out: dict = {}
    for r in records:
        out.setdefault(r.task_id, {}).setdefault(r.trial, []).append(r)
    return out


def _table(head: list[str], rows: list[list[str]]) -> list[str]:
    lines = ["| " + " | ".join(head) + " |", "|" + "|".join("---" for _ in head) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return lines


def _low_l1l2(groups: dict, meta: dict) -> list[str]:
    rows = []
    averages = []
    for level in (Level.L1, Level.L2):
        ids = [i for i in groups if meta[i].level == level and meta[i].request_level == RequestLevel.LOW]
        if not ids:
            continue
        recs = []
        for i in ids:
            trials = [groups[i][t][0] for t in sorted(groups[i])]
            recs += trials
            rows.append([level.value, meta[i].name, cell([int(bool(r.l1l2_pass)) for r in trials]),
                         cell([r.steps[0] for r in trials]), cell([r.exec_errors[0] for r in trials])])
        averages.append([f"**{level.value}**", "Average", fmt(_mean([float(bool(r.l1l2_pass)) for r in recs])),
                         fmt(_mean([r.steps[0] for r in recs])), fmt(_mean([r.exec_errors[0] for r in recs]))])
    if not rows:
        return []
    head = ["Level", "Task", "Is Passed?", "Steps", "Steps with Exec. Error"]
    return ["## Low-level agent: L1/L2", ""] + _table(head, rows + averages) + [""]


def _low_fault(groups: dict, meta: dict) -> list[str]:
    ids = [i for i in groups if meta[i].level == Level.L3PLUS and meta[i].request_level == RequestLevel.LOW]
    if not ids:
        return []
    rows = []
    every: list = []
    firsts: list = []
    overalls: list = []
    for i in ids:
        for trial in sorted(groups[i]):
            recs = groups[i][trial]
            every += recs
            firsts.append(recs[0].first_pass)
            overalls.append(recs[0].overall_pass)
            rows.append([meta[i].fault.kind.value, str(trial), cell([r.steps[0] for r in recs]),
                         ratio([r.l3 for r in recs]), ratio([r.l4 for r in recs]), ratio([r.l5 for r in recs]),
                         cell(recs[0].first_pass), cell(recs[0].overall_pass)])
    rows.append(["**Average**", "", fmt(_mean([r.steps[0] for r in every])) + " (per eval)",
                 _rate([r.l3 for r in every]), _rate([r.l4 for r in every]), _rate([r.l5 for r in every]),
                 _rate(firsts), _rate(overalls)])
    head = ["Fault", "Trial", "Steps (evals)", "L3", "L4", "L5", "First", "Overall"]
    return ["## Low-level agent: L3/L4/L5", ""] + _table(head, rows) + [""]


def _high_l2(groups: dict, meta: dict) -> list[str]:
    ids = [i for i in groups if meta[i].level != Level.L3PLUS and meta[i].request_level == RequestLevel.HIGH]
    if not ids:
        return []
    rows = []
    recs = []
    for i in ids:
        for trial in sorted(groups[i]):
            r = groups[i][trial][0]
            recs.append(r)
            rows.append([meta[i].name, str(trial), cell(r.rounds), cell(r.steps), str(sum(r.steps)),
                         cell(r.assignment_correct), cell(r.l1l2_pass)])
    rows.append(["**Average**", "", fmt(_mean([r.rounds for r in recs])), "", fmt(_mean([sum(r.steps) for r in recs])),
                 _rate([r.assignment_correct for r in recs]), _rate([r.l1l2_pass for r in recs])])
    head = ["Task", "Trial", "Rounds", "Steps [mgr,cat,fe]", "Total Steps", "Correct Assignment", "Is Passed?"]
    return ["## Group manager: L2", ""] + _table(head, rows) + [""]


def _high_fault(groups: dict, meta: dict) -> list[str]:
    ids = [i for i in groups if meta[i].level == Level.L3PLUS and meta[i].request_level == RequestLevel.HIGH]
    if not ids:
        return []
    rows = []
    recs = []
    for i in ids:
        for trial in sorted(groups[i]):
            r = groups[i][trial][0]
            recs.append(r)
            rows.append([meta[i].fault.kind.value, str(trial), cell(r.rounds), cell(r.steps), str(sum(r.steps)),
                         ratio([r.l3]), ratio([r.l4]), ratio([r.l5]), cell(r.overall_pass)])
    rows.append(["**Average**", "", fmt(_mean([r.rounds for r in recs])), "", fmt(_mean([sum(r.steps) for r in recs])),
                 _rate([r.l3 for r in recs]), _rate([r.l4 for r in recs]), _rate([r.l5 for r in recs]),
                 _rate([r.overall_pass for r in recs])])
    head = ["Fault", "Trial", "Rounds", "Steps [mgr,cat,fe]", "Total Steps", "L3", "L4", "L5", "Overall"]
    return ["## Group manager: L3/L4/L5", ""] + _table(head, rows) + [""]


def render_summary(records: list[EvaluationRecord], tasks: list[TaskSpec]) -> str:
    if not records:
        raise ValueError("a summary needs at least one record")
    meta = _by_id(tasks)
    groups = _group(records)
    lines = ["# Benchmark summary", ""]
    for section in (_low_l1l2, _low_fault, _high_l2, _high_fault):
        lines += section(groups, meta)
    return "\n".join(lines).rstrip("\n") + "\n"


def emit_report(records: list[EvaluationRecord], tasks: list[TaskSpec], out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "records.csv"
    md_path = out / "summary.md"
    csv_path.write_text(render_csv(records, tasks))
    md_path.write_text(render_summary(records, tasks))
    return csv_path, md_path
