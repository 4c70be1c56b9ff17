"""The low-level agent loop: ask the policy, run its code blocks, feed results back."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol

from acvbench.agent import prompts
from acvbench.bus import MessageBus
from acvbench.cluster.simulator import Cluster
from acvbench.errors import AcvError, BudgetExhausted, CorruptLog
from acvbench.metrics.engine import query as run_query
from acvbench.ops.gateway import ActionResult, Gateway
from acvbench.ops.script import CodeBlock, execute_script, extract_blocks, format_results

DEFAULT_BUDGET = 25
HEALTH_BUDGET = 40
STEP_TICKS = 5  # simulated seconds one policy call takes
TERMINATE = "TERMINATE"
NUDGE = ("No executable code block was found in your last message. Continue with the next step, "
         "or reply with TERMINATE if the task is complete.")


@dataclass(frozen=True)
class Entry:
    role: str  # "system" | "policy" | "executor"
    content: str
    tick: int


@dataclass
class Transcript:
    agent: str
    task: str
    entries: list = field(default_factory=list)
    steps: int = 0
    steps_with_exec_error: int = 0
    terminated: bool = False
    reported: list = field(default_factory=list)  # (message_type, body)

    def add(self, role: str, content: str, tick: int) -> None:
        self.entries.append(Entry(role, content, tick))

    def context(self) -> list[dict]:
        """Chat messages as a remote backend would receive them."""
        roles = {"system": "system", "policy": "assistant", "executor": "user"}
        return [{"role": roles[e.role], "content": e.content} for e in self.entries]

    def to_dict(self) -> dict:
        return {
            "agent": self.agent,
            "task": self.task,
            "entries": [asdict(e) for e in self.entries],
            "steps": self.steps,
            "steps_with_exec_error": self.steps_with_exec_error,
            "terminated": self.terminated,
            "reported": [list(r) for r in self.reported],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Transcript":
        return cls(
            agent=data["agent"],
            task=data["task"],
            entries=[Entry(**e) for e in data["entries"]],
            steps=data["steps"],
            steps_with_exec_error=data["steps_with_exec_error"],
            terminated=data["terminated"],
            reported=[tuple(r) for r in data["reported"]],
        )

    def to_jsonl(self) -> str:
        lines = [json.dumps({"kind": "header", "agent": self.agent, "task": self.task}, sort_keys=True)]
        lines += [json.dumps({"kind": "entry", **asdict(e)}, sort_keys=True) for e in self.entries]
        summary = {k: v for k, v in self.to_dict().items() if k not in ("agent", "task", "entries")}
        lines.append(json.dumps({"kind": "summary", **summary}, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        try:
            rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        except json.JSONDecodeError as exc:
            raise CorruptLog(f"transcript is not valid JSONL: {exc}") from None
        if len(rows) < 2 or rows[0].get("kind") != "header" or rows[-1].get("kind") != "summary":
            raise CorruptLog("transcript must start with a header and end with a summary")
        head, tail = rows[0], rows[-1]
        try:
            return cls.from_dict({
                "agent": head["agent"],
                "task": head["task"],
                "entries": [{k: r[k] for k in ("role", "content", "tick")} for r in rows[1:-1]],
                **{k: tail[k] for k in ("steps", "steps_with_exec_error", "terminated", "reported")},
            })
        except KeyError as exc:
            raise CorruptLog(f"transcript is missing field {exc}") from None

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl())


@dataclass(frozen=True)
class PolicyOutput:
    raw_text: str
    blocks: tuple
    is_terminate: bool

    @classmethod
    def parse(cls, text: str) -> "PolicyOutput":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        last = lines[-1] if lines else ""
        return cls(text, tuple(extract_blocks(text)), last.strip("`") == TERMINATE)


class PolicyBackend(Protocol):
    backend_id: str
    deterministic: bool

    def next_message(self, context: list[dict]) -> str: ...


class Agent:
    """A low-level maintainer bound to one service."""

    def __init__(self, name: str, cluster: Cluster, bus: MessageBus, policy: PolicyBackend,
                 budget: int = DEFAULT_BUDGET, health_budget: int = HEALTH_BUDGET,
                 step_ticks: int = STEP_TICKS, max_ticks: int = 7200):
        self.name = name
        self.cluster = cluster
        self.bus = bus
        self.policy = policy
        self.budget = budget
        self.health_budget = health_budget
        self.step_ticks = step_ticks
        self.max_ticks = max_ticks
        self.spec = cluster.spec_of(name)
        self.gateway = Gateway(cluster, actor=name)
        # called with (agent, message_type, body) after each successful report
        self.report_hooks: list[Callable] = []
        if not bus.has_queue(name):
            bus.create_queue(name)

    def system_prompt(self) -> str:
        return prompts.agent_system_prompt(self.spec)

    def session(self, task: str, budget: Optional[int] = None) -> "AgentSession":
        return AgentSession(self, task, self.budget if budget is None else budget)

    def run_task(self, task: str, budget: Optional[int] = None) -> Transcript:
        sess = self.session(task, budget)
        sess.run()
        if not sess.transcript.terminated:
            raise BudgetExhausted(sess.transcript)
        return sess.transcript

    def evaluate_health_task(self, budget: Optional[int] = None) -> Transcript:
        return self.run_task(prompts.health_task_text(), self.health_budget if budget is None else budget)

    def tools(self, transcript: Transcript) -> dict:
        cluster = self.cluster

        def query_prometheus(promQL, duration=None, step="1m", start_time=None, end_time=None):
            return run_query(cluster.store, promQL, cluster.tick_count, duration=duration, step=step,
                             start_time=start_time, end_time=end_time)

        def report_result(component, message, message_type):
            ack = self.bus.report_result(component, message, message_type)
            transcript.reported.append((message_type, str(message)))
            for hook in self.report_hooks:
                hook(self, message_type, str(message))
            return ack

        return {"query_prometheus": query_prometheus, "report_result": report_result}


class AgentSession:
    """One task in progress; ``step`` makes exactly one policy call."""

    def __init__(self, agent: Agent, task: str, budget: int):
        if budget < 1:
            raise ValueError("step budget must be >= 1")
        self.agent = agent
        self.budget = budget
        self.start_tick = agent.cluster.tick_count
        self.transcript = Transcript(agent.name, task)
        self.transcript.add("system", agent.system_prompt(), self.start_tick)
        self.transcript.add("executor", task, self.start_tick)
        self._tools = agent.tools(self.transcript)

    @property
    def done(self) -> bool:
        t = self.transcript
        return (t.terminated or t.steps >= self.budget
                or self.agent.cluster.tick_count - self.start_tick >= self.agent.max_ticks)

    def step(self) -> None:
        agent = self.agent
        t = self.transcript
        text = agent.policy.next_message(t.context())
        t.steps += 1
        if agent.step_ticks:
            agent.cluster.advance(agent.step_ticks)
        t.add("policy", text, agent.cluster.tick_count)
        out = PolicyOutput.parse(text)
        results = []
        for block in out.blocks:
            results.extend(run_block(block, agent.gateway, self._tools))
        if results:
            if not all(r.ok for r in results):
                t.steps_with_exec_error += 1
            t.add("executor", format_results(results), agent.cluster.tick_count)
        if out.is_terminate:
            t.terminated = True
        elif not out.blocks:
            t.add("executor", NUDGE, agent.cluster.tick_count)

    def run(self) -> Transcript:
        while not self.done:
            self.step()
        return self.transcript


def run_block(block: CodeBlock, gateway: Gateway, tools: dict) -> list:
    try:
        return execute_script(block, gateway, tools)
    except AcvError as exc:  # a tool raised outside the interpreter's own handling
        return [ActionResult.failure(f"{type(exc).__name__}: {exc}")]
