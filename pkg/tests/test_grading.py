import copy
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from acvbench.bench.catalog import load_catalog, select
from acvbench.bench.fixtures import fixture_path
from acvbench.bench.grading import (
    EvaluationRecord,
    eval_success,
    finish_trial,
    grade,
    grade_assignment,
    named_components,
    parse_cpu_millicores,
    parse_latency_seconds,
    parse_root_cause,
    parse_verdict,
    within,
)
from acvbench.bench.runlog import read_runlog
from acvbench.manager import ManagedOutcome


def task(tid):
    return next(t for t in select(load_catalog(), task=tid) if t.id == tid)


@pytest.mark.parametrize("text,verdict,heuristic", [
    ("VERDICT: unhealthy\nROOT_CAUSE: cpu_stress", "unhealthy", False),
    ("  verdict: Healthy", "healthy", False),
    ("The service looks degraded.", "unhealthy", True),
    ("Everything is normal.", "healthy", True),
    ("no idea", None, True),
])
def test_parse_verdict(text, verdict, heuristic):
    assert parse_verdict(text) == (verdict, heuristic)


@pytest.mark.parametrize("text,cause,heuristic", [
    ("ROOT_CAUSE: pod_failure", "pod_failure", False),
    ("the image could not be pulled", "pod_failure", True),
    ("CPU is throttled", "cpu_stress", True),
    ("a surge in traffic", "rising_traffic", True),
    ("unclear", None, True),
])
def test_parse_root_cause(text, cause, heuristic):
    assert parse_root_cause(text) == (cause, heuristic)


def test_metric_parsing_and_tolerance():
    assert parse_cpu_millicores("CPU usage is 121m now") == 121.0
    assert parse_latency_seconds("P99 is 375 ms") == pytest.approx(0.375)
    assert parse_latency_seconds("P99 is 0.37s") == pytest.approx(0.37)
    assert parse_cpu_millicores("no number") is None
    assert within(109.9, 100) and not within(110.1, 100)
    assert within(0, 0) and not within(None, 1)


@given(st.floats(1, 1e4), st.floats(-0.099, 0.099))
def test_within_tolerance_band(truth, rel):
    assert within(truth * (1 + rel), truth)


def test_named_components():
    assert named_components("Reduce each Catalogue and Front-end's CPU") == {"catalogue", "front-end"}
    assert named_components("Check every component") == {"catalogue", "front-end"}
    assert named_components("Scale Catalogue") == {"catalogue"}


def _managed(assignments):
    return ManagedOutcome(task="t", rounds=max(r for r, _, _ in assignments) + 1, assignments=assignments,
                          terminated=True)


def test_assignment_grading_deterministic_and_heuristic():
    t = task("latency-reduction-group")
    full = [(1, "catalogue", "reduce latency"), (1, "front-end", "reduce latency"),
            (2, "catalogue", "latency again"), (2, "front-end", "latency again")]
    assert grade_assignment(t, _managed(full), True) == (True, False, "wrong assignment")
    assert grade_assignment(t, _managed(full[:1] + full[2:3]), True)[::2] == (False, "task omission")
    # a live backend may batch differently; only coverage and wording are checked
    ok, heuristic, _ = grade_assignment(t, _managed(full[:2]), False)
    assert ok and heuristic
    off_topic = [(1, "catalogue", "restart"), (1, "front-end", "restart")]
    assert grade_assignment(t, _managed(off_topic), False)[0] is False


def _rec(**kw):
    base = dict(task_id="x", trial=1, eval_index=1, steps=(3,), exec_errors=(0,), rounds=None, l1l2_pass=None,
                l3=True, l4=True, l5=False, first_pass=None, overall_pass=None, assignment_correct=None,
                issue_present=True, fault_kind="CpuStress", heuristic_grade=False, reason="")
    base.update(kw)
    return EvaluationRecord(**base)


def test_first_and_overall():
    recs = [_rec(l5=False), _rec(eval_index=2, l5=True), _rec(eval_index=3, issue_present=False, l4=None, l5=None)]
    done = finish_trial(recs)
    assert [(r.first_pass, r.overall_pass) for r in done] == [(False, True)] * 3
    assert eval_success(recs[2]) is None
    assert eval_success(_rec(l5=True, reason="omit report")) is False
    # nothing was ever present: first and overall stay empty
    absent = [_rec(issue_present=False, l4=None, l5=None)]
    assert finish_trial(absent)[0].first_pass is None


def _fixture(category):
    log = read_runlog(fixture_path(category))
    return log, task(log.header["task"])


def test_grade_is_pure_function_of_inputs():
    log, t = _fixture("ineffective-action")
    a = grade(t, log.outcomes[0], log.evidences[0])
    b = grade(t, copy.deepcopy(log.outcomes[0]), copy.deepcopy(log.evidences[0]))
    assert a == b


@pytest.mark.parametrize("body,flags,reason", [
    ("VERDICT: unhealthy\nROOT_CAUSE: cpu_stress", (True, True), "not mitigated"),
    ("VERDICT: unhealthy\nROOT_CAUSE: pod_failure", (True, False), "wrong root cause"),
    ("VERDICT: healthy", (False, False), "wrong detection"),
])
def test_report_text_drives_l3_l4(body, flags, reason):
    log, t = _fixture("ineffective-action")
    outcome = copy.deepcopy(log.outcomes[0])
    outcome.reported = [("ISSUE", body)]
    rec = grade(t, outcome, log.evidences[0])
    assert (rec.l3, rec.l4) == flags and rec.reason == reason


def test_missing_report_and_budget():
    log, t = _fixture("ineffective-action")
    outcome = copy.deepcopy(log.outcomes[0])
    outcome.reported = []
    assert grade(t, outcome, log.evidences[0]).reason == "omit report"
    outcome.terminated = False
    assert grade(t, outcome, log.evidences[0]).reason == "budget exhausted"


def test_mitigation_requires_cleared_fault():
    log, t = _fixture("ineffective-action")
    ev = copy.deepcopy(log.evidences[0])
    ev.fault_cleared = True
    for row in ev.post_window["catalogue"]:
        row["cpu_max_fraction"] = 0.3
    rec = grade(t, log.outcomes[0], ev)
    assert rec.l5 and rec.reason == ""


def test_metric_report_checked_against_truth():
    from acvbench.bench.experiment import Experiment, ScriptedBackend
    from acvbench.bench.fixtures import rules_dir

    t = task("metric-collection-cpu")
    result = Experiment(t, ScriptedBackend(rules_dir() / "reference.yaml")).run()
    outcome, ev = result.outcomes[0], result.evidences[0]
    assert result.records[0].l1l2_pass
    truth = ev.truth["catalogue"]["cpu_millicores"]
    outcome.reported = [("RESPONSE", f"CPU usage is {truth * 1.2:.0f}m")]
    rec = grade(t, outcome, ev)
    assert not rec.l1l2_pass and rec.reason == "metric mismatch"


def test_record_dict_roundtrip():
    r = _rec(steps=(1, 2, 3), exec_errors=(0, 1, 0))
    assert EvaluationRecord.from_dict(r.to_dict()) == r
    assert replace(r, reason="x").reason == "x"
