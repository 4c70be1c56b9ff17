"""Grading: a pure function of (task, outcome, evidence).

Evidence holds everything the grader reads from the cluster: snapshots before
and after the run, the pre- and post-windows of per-tick history, metric ground
truth at report time, and the fault's ground truth. Re-grading a stored run
therefore needs no simulator.
"""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Optional, Union

from acvbench.agent.runtime import Transcript
from acvbench.bench.catalog import Level, TaskSpec
from acvbench.bench.slo import DEFAULT_SLO, SloSet, check_service
from acvbench.cluster.model import FaultKind
from acvbench.cluster.simulator import ServiceTick
from acvbench.cluster.state import ClusterState
from acvbench.manager import ManagedOutcome

GRADER_VERSION = "1"
METRIC_TOLERANCE = 0.10
HPA_CPU_RANGE = (20, 90)
# faulted SLO dimension per fault kind
FAULT_DIMENSION = {
    FaultKind.POD_FAILURE: "ready",
    FaultKind.CPU_STRESS: "cpu",
    FaultKind.RISING_TRAFFIC: "p99",
}

Outcome = Union[Transcript, ManagedOutcome]


@dataclass
class Evidence:
    dispatch_tick: int
    complete_tick: int
    state_before: dict
    state_after: dict
    pre_window: dict  # service -> list of ServiceTick dicts
    post_window: dict
    truth: dict = field(default_factory=dict)  # service -> {tick, cpu_millicores, p99_seconds}
    fault: Optional[dict] = None  # {kind, target}
    issue_present: Optional[bool] = None
    fault_cleared: Optional[bool] = None
    manager_mutations: int = 0
    deterministic: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Evidence":
        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})

    def before(self) -> ClusterState:
        return ClusterState.from_dict(self.state_before)

    def after(self) -> ClusterState:
        return ClusterState.from_dict(self.state_after)

    def rows(self, which: str, service: str) -> list[ServiceTick]:
        return [ServiceTick(**r) for r in getattr(self, which)[service]]


@dataclass(frozen=True)
class EvaluationRecord:
    task_id: str
    trial: int
    eval_index: int
    steps: tuple
    exec_errors: tuple  # steps with an execution error, aligned with ``steps``
    rounds: Optional[int]
    l1l2_pass: Optional[bool]
    l3: Optional[bool]
    l4: Optional[bool]
    l5: Optional[bool]
    first_pass: Optional[bool]
    overall_pass: Optional[bool]
    assignment_correct: Optional[bool]
    issue_present: Optional[bool]
    fault_kind: Optional[str]
    heuristic_grade: bool
    reason: str

    def to_dict(self) -> dict:
        d = asdict(self)
        d["steps"] = list(self.steps)
        d["exec_errors"] = list(self.exec_errors)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluationRecord":
        data = dict(data)
        data["steps"] = tuple(data["steps"])
        data["exec_errors"] = tuple(data["exec_errors"])
        return cls(**data)


# -- report parsing ---------------------------------------------------------------

_VERDICT = re.compile(r"^\s*VERDICT:\s*(healthy|unhealthy)\b", re.IGNORECASE | re.MULTILINE)
_ROOT_CAUSE = re.compile(r"^\s*ROOT_CAUSE:\s*(\w+)", re.IGNORECASE | re.MULTILINE)
_UNHEALTHY_WORDS = re.compile(r"\b(unhealthy|not healthy|degraded|abnormal|issue|problem|fail\w*)\b", re.IGNORECASE)
_HEALTHY_WORDS = re.compile(r"\b(healthy|normal|within limits)\b", re.IGNORECASE)
_CAUSE_WORDS = (
    ("pod_failure", re.compile(r"image|pull|crash", re.IGNORECASE)),
    ("cpu_stress", re.compile(r"cpu|stress|throttl", re.IGNORECASE)),
    ("rising_traffic", re.compile(r"traffic|load|surge", re.IGNORECASE)),
)
_CPU_VALUE = re.compile(r"(\d+(?:\.\d+)?)\s*m\b")
_LATENCY_VALUE = re.compile(r"(\d+(?:\.\d+)?)\s*(ms|s)\b")


def parse_verdict(text: str) -> tuple[Optional[str], bool]:
    """("healthy"|"unhealthy"|None, heuristic used)."""
    found = _VERDICT.search(text)
    if found:
        return found.group(1).lower(), False
    if _UNHEALTHY_WORDS.search(text):
        return "unhealthy", True
    if _HEALTHY_WORDS.search(text):
        return "healthy", True
    return None, True


def parse_root_cause(text: str) -> tuple[Optional[str], bool]:
    found = _ROOT_CAUSE.search(text)
    if found:
        return found.group(1).lower(), False
    for label, pattern in _CAUSE_WORDS:
        if pattern.search(text):
            return label, True
    return None, True


def parse_cpu_millicores(text: str) -> Optional[float]:
    found = _CPU_VALUE.search(text)
    return float(found.group(1)) if found else None


def parse_latency_seconds(text: str) -> Optional[float]:
    found = _LATENCY_VALUE.search(text)
    if not found:
        return None
    value = float(found.group(1))
    return value / 1000.0 if found.group(2) == "ms" else value


def within(value: Optional[float], truth: float, tolerance: float = METRIC_TOLERANCE) -> bool:
    if value is None:
        return False
    if truth == 0:
        return value == 0
    return abs(value - truth) <= tolerance * abs(truth)


# -- outcome views ----------------------------------------------------------------

def reports_of(outcome: Outcome) -> list[tuple[str, str, str]]:
    """(component, message_type, body) for every report in the outcome."""
    if isinstance(outcome, Transcript):
        return [(outcome.agent, kind, body) for kind, body in outcome.reported]
    return outcome.reported()


def assignee_rounds(outcome: ManagedOutcome) -> list[frozenset]:
    by_round: dict = {}
    for rnd, comp, _ in outcome.assignments:
        by_round.setdefault(rnd, set()).add(comp)
    return [frozenset(by_round[r]) for r in sorted(by_round)]


def steps_of(outcome: Outcome, agents=("catalogue", "front-end")) -> tuple:
    if isinstance(outcome, Transcript):
        return (outcome.steps,)
    return outcome.steps_tuple(list(agents))


def exec_errors_of(outcome: Outcome, agents=("catalogue", "front-end")) -> tuple:
    if isinstance(outcome, Transcript):
        return (outcome.steps_with_exec_error,)
    manager = outcome.manager_transcript.steps_with_exec_error if outcome.manager_transcript else 0
    per_agent = {a: 0 for a in agents}
    for _, t in outcome.agent_transcripts:
        per_agent[t.agent] = per_agent.get(t.agent, 0) + t.steps_with_exec_error
    return (manager,) + tuple(per_agent[a] for a in agents)


def _post_mean(ev: Evidence, service: str, attr: str) -> float:
    rows = ev.rows("post_window", service)
    return sum(getattr(r, attr) for r in rows) / len(rows)


@dataclass
class Ctx:
    task: TaskSpec
    outcome: Outcome
    ev: Evidence
    slo: SloSet
    heuristic: bool = False

    def reports(self, component: Optional[str] = None) -> list:
        return [r for r in reports_of(self.outcome) if component is None or r[0] == component]

    def last_report(self, component: str) -> Optional[str]:
        mine = self.reports(component)
        return mine[-1][2] if mine else None


TARGET = "catalogue"
GROUP = ("catalogue", "front-end")

# -- rule table -----------------------------------------------------------------


def _ready(dep) -> bool:
    return dep is not None and dep.replicas >= 1 and dep.ready_replicas == dep.replicas


def rule_deployment_created(c: Ctx) -> tuple[bool, str]:
    dep = c.ev.after().deployment(TARGET)
    return _ready(dep), "deployment missing or not ready"


def rule_env_logger_flag(c: Ctx) -> tuple[bool, str]:
    dep = c.ev.after().deployment(TARGET)
    ok = dep is not None and str(dep.env_map.get("logger_flag", "")).lower() == "true" and _ready(dep)
    return ok, "logger_flag is not true"


def rule_image_rolled_back(c: Ctx) -> tuple[bool, str]:
    dep = c.ev.after().deployment(TARGET)
    return dep is not None and dep.image == "0.3.4" and _ready(dep), "image is not 0.3.4"


def rule_pods_restarted(c: Ctx) -> tuple[bool, str]:
    after = c.ev.after()
    pods = after.pods_of(TARGET)
    ok = bool(pods) and all(p.created_at_tick > c.ev.dispatch_tick and p.ready for p in pods)
    return ok, "pods were not all recreated"


def rule_replicas_three(c: Ctx) -> tuple[bool, str]:
    dep = c.ev.after().deployment(TARGET)
    return dep is not None and dep.replicas == 3 and dep.ready_replicas == 3, "replicas are not 3"


def rule_report_cpu(c: Ctx) -> tuple[bool, str]:
    truth = c.ev.truth.get(TARGET)
    body = c.last_report(TARGET) or ""
    ok = truth is not None and within(parse_cpu_millicores(body), truth["cpu_millicores"])
    return ok, "metric mismatch"


def rule_report_latency(c: Ctx) -> tuple[bool, str]:
    truth = c.ev.truth.get(TARGET)
    body = c.last_report(TARGET) or ""
    ok = truth is not None and within(parse_latency_seconds(body), truth["p99_seconds"])
    return ok, "metric mismatch"


def _verdict_matches(c: Ctx, dims: tuple) -> tuple[bool, str]:
    rows = c.ev.rows("pre_window", TARGET)
    truth = check_service(TARGET, rows, c.slo)
    healthy = all(truth.dimension(d) for d in dims)
    verdict, heuristic = parse_verdict(c.last_report(TARGET) or "")
    c.heuristic = c.heuristic or heuristic
    return verdict == ("healthy" if healthy else "unhealthy"), "wrong verdict"


def rule_health_verdict(c: Ctx) -> tuple[bool, str]:
    return _verdict_matches(c, ("ready",))


def rule_performance_verdict(c: Ctx) -> tuple[bool, str]:
    return _verdict_matches(c, ("p99", "cpu"))


def rule_hpa_sensible(c: Ctx) -> tuple[bool, str]:
    hpa = c.ev.after().hpa(TARGET)
    lo, hi = HPA_CPU_RANGE
    ok = (hpa is not None and 1 <= hpa.min_replicas < hpa.max_replicas
          and lo <= hpa.cpu_percent_target <= hi)
    return ok, "no autoscaler with sensible thresholds"


def rule_latency_under_300(c: Ctx) -> tuple[bool, str]:
    return _post_mean(c.ev, TARGET, "p99_ms") < 300.0, "latency target missed"


def rule_cpu_under_30(c: Ctx) -> tuple[bool, str]:
    return _post_mean(c.ev, TARGET, "cpu_mean_fraction") < 0.30, "cpu target missed"


def rule_group_latency_under_400(c: Ctx) -> tuple[bool, str]:
    return sum(_post_mean(c.ev, s, "p99_ms") for s in GROUP) < 400.0, "latency target missed"


def rule_group_cpu_under_30(c: Ctx) -> tuple[bool, str]:
    return all(_post_mean(c.ev, s, "cpu_mean_fraction") < 0.30 for s in GROUP), "cpu target missed"


RULES: dict[str, Callable[[Ctx], tuple[bool, str]]] = {
    "deployment_created": rule_deployment_created,
    "env_logger_flag": rule_env_logger_flag,
    "image_rolled_back": rule_image_rolled_back,
    "pods_restarted": rule_pods_restarted,
    "replicas_three": rule_replicas_three,
    "report_cpu": rule_report_cpu,
    "report_latency": rule_report_latency,
    "health_verdict": rule_health_verdict,
    "performance_verdict": rule_performance_verdict,
    "hpa_sensible": rule_hpa_sensible,
    "latency_under_300": rule_latency_under_300,
    "cpu_under_30": rule_cpu_under_30,
    "group_latency_under_400": rule_group_latency_under_400,
    "group_cpu_under_30": rule_group_cpu_under_30,
    "slo_recovery": None,  # L3plus, graded by grade_fault_run
}

# -- assignment --------------------------------------------------------------------

_METRIC_WORDS = (
    (re.compile(r"latency|p99", re.IGNORECASE), re.compile(r"latency|p99", re.IGNORECASE)),
    (re.compile(r"cpu", re.IGNORECASE), re.compile(r"cpu", re.IGNORECASE)),
    (re.compile(r"health", re.IGNORECASE), re.compile(r"health", re.IGNORECASE)),
)


def named_components(goal: str) -> set:
    if re.search(r"every component", goal, re.IGNORECASE):
        return set(GROUP)
    named = set()
    if re.search(r"catalogue", goal, re.IGNORECASE):
        named.add("catalogue")
    if re.search(r"front[- ]?end", goal, re.IGNORECASE):
        named.add("front-end")
    return named


def grade_assignment(task: TaskSpec, outcome: ManagedOutcome, deterministic: bool) -> tuple[bool, bool, str]:
    """(correct, heuristic used, reason when wrong)."""
    rounds = assignee_rounds(outcome)
    assigned = set().union(*rounds) if rounds else set()
    expected = set().union(*task.expect_assignees) if task.expect_assignees else set()
    if expected - assigned:
        return False, not deterministic, "task omission"
    if deterministic:
        return rounds == list(task.expect_assignees), False, "wrong assignment"
    allowed = named_components(task.goal_text)
    ok = assigned <= allowed
    for goal_words, text_words in _METRIC_WORDS:
        if goal_words.search(task.goal_text):
            ok = ok and all(text_words.search(text) for _, _, text in outcome.assignments)
            break
    return ok, True, "wrong assignment"


# -- entry points ----------------------------------------------------------------------

def _base_reason(c: Ctx, components: tuple) -> str:
    if not c.outcome.terminated:
        return "budget exhausted"
    if isinstance(c.outcome, ManagedOutcome) and c.outcome.partial:
        return "hang"
    if not any(c.reports(comp) for comp in components):
        return "omit report"
    return ""


def grade(task: TaskSpec, outcome: Outcome, evidence: Evidence, trial: int = 1, eval_index: int = 1,
          slo: SloSet = DEFAULT_SLO) -> EvaluationRecord:
    """Apply the task's rule. L3plus first/overall are filled in by :func:`finish_trial`."""
    c = Ctx(task, outcome, evidence, slo)
    managed = isinstance(outcome, ManagedOutcome)
    assignment = None
    reason = ""
    if managed:
        correct, heuristic, why = grade_assignment(task, outcome, evidence.deterministic)
        assignment = correct
        c.heuristic = c.heuristic or heuristic
        if not correct and why == "task omission":
            reason = why
    flags = dict(l1l2_pass=None, l3=None, l4=None, l5=None)
    if task.level == Level.L3PLUS:
        flags, why = _grade_fault(c)
    else:
        components = tuple(sorted(set().union(*task.expect_assignees))) if managed else (TARGET,)
        why = _base_reason(c, components)
        ok, failure = RULES[task.grading_rule](c)
        flags["l1l2_pass"] = ok and not why
        if not why and not ok:
            why = failure
    return EvaluationRecord(
        task_id=task.id,
        trial=trial,
        eval_index=eval_index,
        steps=steps_of(outcome),
        exec_errors=exec_errors_of(outcome),
        rounds=outcome.rounds if managed else None,
        first_pass=None,
        overall_pass=None,
        assignment_correct=assignment,
        issue_present=evidence.issue_present,
        fault_kind=task.fault.kind.value if task.fault else None,
        heuristic_grade=c.heuristic,
        reason=reason or why,
        **flags,
    )


def _grade_fault(c: Ctx) -> tuple[dict, str]:
    fault = c.task.fault
    target = fault.target
    issue = bool(c.ev.issue_present)
    why = _base_reason(c, (target,))
    body = c.last_report(target)
    verdict, h1 = parse_verdict(body) if body is not None else (None, False)
    l3 = verdict is not None and (verdict == "unhealthy") == issue
    l4 = l5 = None
    if issue:
        cause, h2 = parse_root_cause(body) if body is not None else (None, False)
        c.heuristic = c.heuristic or h1 or h2
        l4 = l3 and cause == fault.kind.root_cause
        post = check_service(target, c.ev.rows("post_window", target), c.slo)
        l5 = bool(c.ev.fault_cleared) and post.dimension(FAULT_DIMENSION[fault.kind])
    else:
        c.heuristic = c.heuristic or h1
    if not why:
        if not l3:
            why = "wrong detection"
        elif l4 is False:
            why = "wrong root cause"
        elif l5 is False:
            why = "not mitigated"
    return dict(l1l2_pass=None, l3=l3, l4=l4, l5=l5), why


def eval_success(record: EvaluationRecord) -> Optional[bool]:
    """Mitigation success of one L3plus evaluation; None when no issue was present."""
    if not record.issue_present:
        return None
    return bool(record.l5) and record.reason != "omit report"


def finish_trial(records: list[EvaluationRecord]) -> list[EvaluationRecord]:
    """Fill first/overall for the consecutive evaluations of one L3plus trial."""
    if not records or records[0].l3 is None:
        return list(records)
    results = [eval_success(r) for r in records]
    if all(x is None for x in results):
        # no evaluation saw the issue, so there was nothing to mitigate
        return list(records)
    first = bool(results[0])
    overall = any(bool(x) for x in results)
    return [replace(r, first_pass=first, overall_pass=overall) for r in records]


def regrade(task: TaskSpec, outcomes: list, evidences: list, trial: int) -> list[EvaluationRecord]:
    recs = [grade(task, o, e, trial, i + 1) for i, (o, e) in enumerate(zip(outcomes, evidences))]
    return finish_trial(recs) if task.level == Level.L3PLUS else recs

