"""Experiment procedure: set up a fresh cluster, dispatch the task, record evidence, grade."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

from acvbench.agent.policies import LlmConfig, LlmPolicy, ScriptedPolicy, load_rules
from acvbench.agent.prompts import manager_variables, policy_variables
from acvbench.agent.runtime import Agent, Transcript
from acvbench.bench.catalog import SERVICES, Level, RequestLevel, TaskSpec
from acvbench.bench.grading import EvaluationRecord, Evidence, finish_trial, grade
from acvbench.bench.slo import DEFAULT_SLO, SloSet, coefficient_of_variation
from acvbench.bus import MessageBus
from acvbench.cluster.model import FaultSpec, TrafficProfile
from acvbench.cluster.scenario import Scenario, sock_shop
from acvbench.cluster.simulator import Cluster
from acvbench.errors import BudgetExhausted, ClusterError, EnvironmentSetupFailed, RoundBudgetExhausted
from acvbench.manager import GroupManager, ManagedOutcome
from acvbench.metrics.engine import query

WARMUP_TICKS = 120
SETTLE_TICKS = 120
EXTRA_WARMUP_ROUNDS = 5
LOW_LEVEL_FAULT_EVALS = 3
P99_QUERY = 'histogram_quantile(0.99, sum(rate(request_duration_seconds_bucket{{name="{name}"}}[1m])) by (name, le))'

Outcome = Union[Transcript, ManagedOutcome]


# -- policy backends -----------------------------------------------------------------

class ScriptedBackend:
    """Rules from one or more files; earlier files take precedence over later ones."""

    kind = "scripted"
    deterministic = True

    def __init__(self, rules_paths):
        paths = [rules_paths] if isinstance(rules_paths, (str, Path)) else list(rules_paths)
        if not paths:
            raise ValueError("at least one rules file is required")
        self.rules_paths = [Path(p) for p in paths]
        self.rules = {"agent": [], "manager": []}
        for path in self.rules_paths:
            loaded = load_rules(path)
            for role in self.rules:
                self.rules[role] += loaded[role]
        self.backend_id = "scripted:" + "+".join(p.name for p in self.rules_paths)

    def agent_policy(self, cluster: Cluster, name: str):
        return ScriptedPolicy(self.rules["agent"], policy_variables(cluster.spec_of(name)), "agent", self.backend_id)

    def manager_policy(self, maintainers: list[str]):
        return ScriptedPolicy(self.rules["manager"], manager_variables(maintainers), "manager", self.backend_id)


class LlmBackend:
    kind = "llm"
    deterministic = False

    def __init__(self, config: LlmConfig, client=None):
        self.config = config
        self.client = client
        self.backend_id = f"llm:{config.model}"
        self.policies: list[LlmPolicy] = []

    def _new(self) -> LlmPolicy:
        policy = LlmPolicy(self.config, client=self.client)
        self.policies.append(policy)
        return policy

    def agent_policy(self, cluster: Cluster, name: str):
        return self._new()

    def manager_policy(self, maintainers: list[str]):
        return self._new()


# -- setup ---------------------------------------------------------------------------

def build_cluster(task: TaskSpec, scenario: Optional[Scenario] = None) -> Cluster:
    scenario = scenario or sock_shop()
    names = {s.name for s in scenario.services}
    if not set(SERVICES) <= names:
        raise EnvironmentSetupFailed(f"scenario must define {', '.join(SERVICES)}")
    try:
        deploy = [n for n in scenario.deploy if n not in task.initial_absent]
        cluster = scenario.build(deploy=deploy)
        for name, version in task.initial_images:
            dep = cluster.snapshot().deployment(name)
            if dep is not None and dep.image != version:
                cluster.set_image(name, version, actor="setup")
        for name, level in task.traffic:
            cluster.set_traffic(name, TrafficProfile.for_service(name, level), actor="setup")
    except ClusterError as exc:
        raise EnvironmentSetupFailed(str(exc)) from exc
    return cluster


def warm_up(cluster: Cluster, slo: SloSet = DEFAULT_SLO) -> None:
    """Run until per-service P99 is stable over one SLO window."""
    cluster.advance(WARMUP_TICKS)
    for _ in range(EXTRA_WARMUP_ROUNDS + 1):
        if all(_stable(cluster, name, slo) for name in SERVICES):
            return
        cluster.advance(slo.window_ticks)
    raise EnvironmentSetupFailed("traffic did not stabilise during warm-up")


def _stable(cluster: Cluster, name: str, slo: SloSet) -> bool:
    rows = cluster.history[name][-slo.window_ticks:]
    return coefficient_of_variation([r.p99_ms for r in rows]) <= slo.p99_stability_cv_max


# -- evidence --------------------------------------------------------------------------

def _state(cluster: Cluster) -> dict:
    data = cluster.snapshot().to_dict()
    for pod in data["pods"]:
        pod["recent_logs"] = []
    return data


def _rows(cluster: Cluster, start: int, end: int) -> dict:
    return {name: [asdict(r) for r in cluster.history[name] if start <= r.tick < end] for name in SERVICES}


def metric_truth(cluster: Cluster, name: str) -> dict:
    row = cluster.history[name][-1]
    series = query(cluster.store, P99_QUERY.format(name=name), cluster.tick_count, duration="1m", step="1m")
    p99 = series[-1][1] if series and isinstance(series[0], list) else None
    return {"tick": cluster.tick_count, "cpu_millicores": row.cpu_mean_millicores, "p99_seconds": p99}


@dataclass
class TrialResult:
    task: TaskSpec
    trial: int
    backend_id: str
    outcomes: list = field(default_factory=list)
    evidences: list = field(default_factory=list)
    records: list = field(default_factory=list)
    envelopes: list = field(default_factory=list)


class Experiment:
    """One trial of one task on a fresh simulator."""

    def __init__(self, task: TaskSpec, backend, trial: int = 1, scenario: Optional[Scenario] = None,
                 slo: SloSet = DEFAULT_SLO):
        if task.is_template:
            raise ValueError(f"{task.id} is a template; run one of its fault variants")
        self.task = task
        self.backend = backend
        self.trial = trial
        self.slo = slo
        self.cluster = build_cluster(task, scenario)
        self.bus = MessageBus(clock=lambda: self.cluster.tick_count, advance=self.cluster.advance)
        # low-level reports go to the manager queue even when no manager runs
        self.bus.create_queue(self.bus.manager_id)
        self.agents = [Agent(n, self.cluster, self.bus, backend.agent_policy(self.cluster, n)) for n in SERVICES]
        self.truth: dict = {}
        for agent in self.agents:
            agent.report_hooks.append(self._on_report)
        self.fault: Optional[FaultSpec] = None

    def _on_report(self, agent: Agent, kind: str, body: str) -> None:
        self.truth[agent.name] = metric_truth(self.cluster, agent.name)

    def _agent(self, name: str) -> Agent:
        return next(a for a in self.agents if a.name == name)

    def _dispatch(self) -> Outcome:
        task = self.task
        if task.request_level == RequestLevel.LOW:
            agent = self._agent("catalogue" if task.fault is None else task.fault.target)
            budget = agent.health_budget if task.level == Level.L3PLUS else None
            try:
                return agent.run_task(task.goal_text, budget)
            except BudgetExhausted as exc:
                return exc.transcript
        manager = GroupManager(self.cluster, self.bus, self.backend.manager_policy(list(SERVICES)), self.agents)
        try:
            return manager.run_managed_task(task.goal_text)
        except RoundBudgetExhausted as exc:
            return exc.outcome

    def evaluate_once(self, eval_index: int) -> tuple[Outcome, Evidence, EvaluationRecord]:
        cl = self.cluster
        self.truth = {}
        window = self.slo.window_ticks
        dispatch = cl.tick_count
        issue = None if self.fault is None else not cl.manifest_cleared(self.fault)
        before = _state(cl)
        pre = _rows(cl, dispatch - window + 1, dispatch + 1)
        outcome = self._dispatch()
        complete = cl.tick_count
        after = _state(cl)
        cl.advance(window)
        evidence = Evidence(
            dispatch_tick=dispatch,
            complete_tick=complete,
            state_before=before,
            state_after=after,
            pre_window=pre,
            post_window=_rows(cl, complete + 1, complete + 1 + window),
            truth=dict(sorted(self.truth.items())),
            fault=None if self.fault is None else {"kind": self.fault.kind.value, "target": self.fault.target},
            issue_present=issue,
            fault_cleared=None if self.fault is None else cl.manifest_cleared(self.fault),
            manager_mutations=cl.mutation_count(self.bus.manager_id),
            deterministic=self.backend.deterministic,
        )
        return outcome, evidence, grade(self.task, outcome, evidence, self.trial, eval_index, self.slo)

    def run(self) -> TrialResult:
        warm_up(self.cluster, self.slo)
        task = self.task
        if task.fault is not None:
            self.fault = self.cluster.inject_fault(FaultSpec(kind=task.fault.kind, target=task.fault.target))
            self.cluster.advance(SETTLE_TICKS)
        evals = LOW_LEVEL_FAULT_EVALS if task.level == Level.L3PLUS and task.request_level == RequestLevel.LOW else 1
        result = TrialResult(task, self.trial, self.backend.backend_id)
        for i in range(1, evals + 1):
            outcome, evidence, record = self.evaluate_once(i)
            result.outcomes.append(outcome)
            result.evidences.append(evidence)
            result.records.append(record)
        if task.level == Level.L3PLUS:
            result.records = finish_trial(result.records)
        result.envelopes = list(self.bus.log)
        return result


def run_experiment(task: TaskSpec, backend, repeats: int = 3, scenario: Optional[Scenario] = None,
                   slo: SloSet = DEFAULT_SLO) -> list[TrialResult]:
    """Repeat a task, each trial on a fresh simulator."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    return [Experiment(task, backend, trial, scenario, slo).run() for trial in range(1, repeats + 1)]


def records_of(results: list[TrialResult]) -> list[EvaluationRecord]:
    return [r for res in results for r in res.records]

