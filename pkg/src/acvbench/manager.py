"""The high-level group manager: assigns tasks over the bus and collects responses in rounds."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from acvbench.agent import prompts
from acvbench.agent.runtime import NUDGE, STEP_TICKS, Agent, PolicyBackend, PolicyOutput, Transcript, run_block
from acvbench.bus import Envelope, MessageBus, MessageType
from acvbench.cluster.simulator import Cluster
from acvbench.errors import RoundBudgetExhausted
from acvbench.ops.gateway import Gateway
from acvbench.ops.script import format_results

DEFAULT_ROUND_BUDGET = 6
RESPONSE_TIMEOUT = 600
MANAGER_STEP_BUDGET = 30


@dataclass
class RoundRecord:
    index: int
    manager_steps: int
    agent_steps: dict = field(default_factory=dict)  # only agents that worked this round
    assignments: list = field(default_factory=list)  # (component, text)
    responses: list = field(default_factory=list)  # Envelope
    missing: list = field(default_factory=list)
    terminating: bool = False

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "manager_steps": self.manager_steps,
            "agent_steps": dict(sorted(self.agent_steps.items())),
            "assignments": [list(a) for a in self.assignments],
            "responses": [e.__dict__ for e in self.responses],
            "missing": list(self.missing),
            "terminating": self.terminating,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RoundRecord":
        return cls(
            index=data["index"],
            manager_steps=data["manager_steps"],
            agent_steps=dict(data["agent_steps"]),
            assignments=[tuple(a) for a in data["assignments"]],
            responses=[Envelope.from_dict(e) for e in data["responses"]],
            missing=list(data["missing"]),
            terminating=data["terminating"],
        )


@dataclass
class ManagedOutcome:
    task: str
    rounds: int = 0
    manager_steps: int = 0
    per_agent_steps: dict = field(default_factory=dict)
    assignments: list = field(default_factory=list)  # (round, component, text)
    responses: list = field(default_factory=list)  # Envelope
    terminated: bool = False
    round_records: list = field(default_factory=list)
    manager_transcript: Optional[Transcript] = None
    agent_transcripts: list = field(default_factory=list)  # (round, Transcript)

    @property
    def partial(self) -> bool:
        return any(r.missing for r in self.round_records)

    def steps_tuple(self, agents: list[str]) -> tuple:
        return (self.manager_steps,) + tuple(self.per_agent_steps.get(a, 0) for a in agents)

    def reported(self) -> list:
        """(component, message_type, body) for every matched response."""
        return [(e.sender, e.kind, e.body) for e in self.responses]

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "rounds": self.rounds,
            "manager_steps": self.manager_steps,
            "per_agent_steps": dict(sorted(self.per_agent_steps.items())),
            "assignments": [list(a) for a in self.assignments],
            "responses": [e.__dict__ for e in self.responses],
            "terminated": self.terminated,
            "round_records": [r.to_dict() for r in self.round_records],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ManagedOutcome":
        return cls(
            task=data["task"],
            rounds=data["rounds"],
            manager_steps=data["manager_steps"],
            per_agent_steps=dict(data["per_agent_steps"]),
            assignments=[tuple(a) for a in data["assignments"]],
            responses=[Envelope.from_dict(e) for e in data["responses"]],
            terminated=data["terminated"],
            round_records=[RoundRecord.from_dict(r) for r in data["round_records"]],
        )


def format_envelope(env: Envelope) -> str:
    return f"{env.kind} from component {env.sender}: {env.body}"


class GroupManager:
    """Runs a manager policy against a set of low-level agents on one bus."""

    def __init__(self, cluster: Cluster, bus: MessageBus, policy: PolicyBackend, agents: list[Agent],
                 round_budget: int = DEFAULT_ROUND_BUDGET, response_timeout: int = RESPONSE_TIMEOUT,
                 step_ticks: int = STEP_TICKS, step_budget: int = MANAGER_STEP_BUDGET):
        self.cluster = cluster
        self.bus = bus
        self.policy = policy
        self.agents = {a.name: a for a in agents}
        self.order = [a.name for a in agents]
        self.round_budget = round_budget
        self.response_timeout = response_timeout
        self.step_ticks = step_ticks
        self.step_budget = step_budget
        self.id = bus.manager_id
        self.gateway = Gateway(cluster, actor=self.id, read_only=True)
        if not bus.has_queue(self.id):
            bus.create_queue(self.id)

    def system_prompt(self) -> str:
        return prompts.manager_system_prompt(self.cluster.namespace, self.order)

    # -- responses ----------------------------------------------------------------

    def collect_responses(self, expected: list[str], timeout_ticks: Optional[int] = None) -> tuple[list, list, list]:
        """Wait for one ISSUE/RESPONSE per expected component.

        Returns (matched, extra, missing). Arrival order does not matter.
        """
        timeout = self.response_timeout if timeout_ticks is None else timeout_ticks
        remaining = Counter(expected)
        matched: list[Envelope] = []
        extra: list[Envelope] = []
        waited = False
        while sum(remaining.values()) > 0:
            env = self.bus.try_consume(self.id)
            if env is None:
                if waited:
                    break
                waited = True
                env = self.bus.consume(self.id, timeout)
                if env is None:
                    break
            if env.kind in (MessageType.RESPONSE.value, MessageType.ISSUE.value) and remaining[env.sender] > 0:
                remaining[env.sender] -= 1
                matched.append(env)
            else:
                extra.append(env)
        extra.extend(self.bus.drain(self.id))
        missing = sorted(remaining.elements())
        return matched, extra, missing

    # -- agents ---------------------------------------------------------------------

    def _budget_for(self, agent: Agent, text: str) -> int:
        return agent.health_budget if "health" in text.lower() else agent.budget

    def _run_agents(self, assignees: list[str], outcome: ManagedOutcome, round_index: int) -> dict:
        """Round-robin by step over every assignee until their queued tasks are done."""
        steps = {name: 0 for name in assignees}
        order = [n for n in self.order if n in steps]
        sessions: dict = {}
        while True:
            progressed = False
            for name in order:
                agent = self.agents[name]
                sess = sessions.get(name)
                if sess is not None and sess.done:
                    outcome.agent_transcripts.append((round_index, sess.transcript))
                    sess = sessions[name] = None
                if sess is None:
                    env = self.bus.try_consume(name)
                    if env is None:
                        continue
                    sess = sessions[name] = agent.session(env.body, self._budget_for(agent, env.body))
                sess.step()
                steps[name] += 1
                progressed = True
            if not progressed:
                return steps

    # -- main loop ------------------------------------------------------------------

    def run_managed_task(self, task: str, round_budget: Optional[int] = None) -> ManagedOutcome:
        budget = self.round_budget if round_budget is None else round_budget
        if budget < 1:
            raise ValueError("round budget must be >= 1")
        transcript = Transcript(self.id, task)
        transcript.add("system", self.system_prompt(), self.cluster.tick_count)
        transcript.add("executor", task, self.cluster.tick_count)
        outcome = ManagedOutcome(task=task, manager_transcript=transcript)
        segment_steps = 0
        while True:
            if transcript.steps >= self.step_budget:
                raise RoundBudgetExhausted(outcome)
            text = self.policy.next_message(transcript.context())
            transcript.steps += 1
            outcome.manager_steps += 1
            segment_steps += 1
            if self.step_ticks:
                self.cluster.advance(self.step_ticks)
            transcript.add("policy", text, self.cluster.tick_count)
            out = PolicyOutput.parse(text)
            pending: list = []

            def assign_tasks(components, messages):
                ack = self.bus.assign_tasks(components, messages)
                pending.extend(zip(list(components), [str(m) for m in messages]))
                return ack

            results = []
            for block in out.blocks:
                results.extend(run_block(block, self.gateway, {"assign_tasks": assign_tasks}))
            feedback = format_results(results) if results else ""
            if results and not all(r.ok for r in results):
                transcript.steps_with_exec_error += 1
            if pending:
                outcome.rounds += 1
                index = outcome.rounds
                for comp, msg in pending:
                    outcome.assignments.append((index, comp, msg))
                assignees = list(dict.fromkeys(c for c, _ in pending))
                agent_steps = self._run_agents(assignees, outcome, index)
                for name, n in agent_steps.items():
                    outcome.per_agent_steps[name] = outcome.per_agent_steps.get(name, 0) + n
                matched, extra, missing = self.collect_responses([c for c, _ in pending])
                outcome.responses.extend(matched)
                lines = [format_envelope(e) for e in matched + extra]
                lines += [f"No response from component {c} within {self.response_timeout} s." for c in missing]
                feedback = "\n".join(x for x in [feedback] + lines if x)
                outcome.round_records.append(RoundRecord(index, segment_steps, agent_steps, list(pending),
                                                         matched, missing))
                segment_steps = 0
                if outcome.rounds >= budget:
                    transcript.add("executor", feedback, self.cluster.tick_count)
                    raise RoundBudgetExhausted(outcome)
            if feedback:
                transcript.add("executor", feedback, self.cluster.tick_count)
            if out.is_terminate:
                outcome.rounds += 1
                outcome.round_records.append(RoundRecord(outcome.rounds, segment_steps, terminating=True))
                outcome.terminated = True
                transcript.terminated = True
                return outcome
            if not out.blocks:
                transcript.add("executor", NUDGE, self.cluster.tick_count)

    def run_managed_health_check(self, round_budget: Optional[int] = None) -> ManagedOutcome:
        return self.run_managed_task(prompts.managed_health_task_text(), round_budget)
