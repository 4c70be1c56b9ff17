"""Policy backends. Scripted rules and replay are deterministic; the HTTP client speaks the chat-completions protocol."""
from __future__ import annotations

import json
import os
import re
import string
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import httpx
import yaml

from acvbench.agent.prompts import TOOL_MODULE
from acvbench.errors import BackendUnavailable, RulesParseError

_CONDITION_KEYS = {"task", "last", "seen", "unseen", "step", "above", "below"}


@dataclass(frozen=True)
class Rule:
    emit: str
    task: Optional[re.Pattern] = None
    last: Optional[re.Pattern] = None
    seen: Optional[re.Pattern] = None
    unseen: Optional[re.Pattern] = None
    step: Optional[int] = None
    # (var, ref, factor): threshold is factor, times variable ``ref`` when ref is set
    above: tuple = ()  # var >= threshold
    below: tuple = ()  # var < threshold

    def match(self, view: "_View", variables: Optional[dict] = None) -> Optional[dict]:
        """Captured variables when every condition holds, else None."""
        if self.step is not None and view.step != self.step:
            return None
        captured: dict = {}
        for pattern, text in ((self.task, view.task), (self.last, view.last), (self.seen, view.seen)):
            if pattern is None:
                continue
            found = pattern.search(text)
            if found is None:
                return None
            captured.update({k: v for k, v in found.groupdict().items() if v is not None})
        if self.unseen is not None and self.unseen.search(view.seen):
            return None
        values = {**(variables or {}), **captured}
        for pairs, passes in ((self.above, lambda v, t: v >= t), (self.below, lambda v, t: v < t)):
            for var, ref, factor in pairs:
                try:
                    value = float(values[var])
                    threshold = factor * (float(values[ref]) if ref is not None else 1.0)
                except (KeyError, ValueError):
                    return None
                if not passes(value, threshold):
                    return None
        return captured


@dataclass(frozen=True)
class _View:
    task: str
    last: str
    seen: str
    step: int

    @classmethod
    def of(cls, context: list[dict]) -> "_View":
        users = [m["content"] for m in context if m["role"] == "user"]
        steps = sum(1 for m in context if m["role"] == "assistant")
        task = users[0] if users else ""
        feedback = users[1:]
        # the executor message answering the latest policy output, if any
        last = feedback[-1] if feedback and context and context[-1]["role"] == "user" and steps else ""
        return cls(task, last, "\n".join(feedback), steps + 1)


def _compile(raw, where: str) -> Optional[re.Pattern]:
    if raw is None:
        return None
    try:
        return re.compile(str(raw), re.MULTILINE)
    except re.error as exc:
        raise RulesParseError(f"{where}: bad regex {raw!r}: {exc}") from None


def _thresholds(raw, where: str) -> tuple:
    """``{var: 90}``, ``{var: other}`` or ``{var: [other, factor]}``."""
    if raw is None:
        return ()
    if not isinstance(raw, dict):
        raise RulesParseError(f"{where}: expected a mapping of variable to threshold")
    out = []
    for var, spec in sorted(raw.items()):
        if isinstance(spec, bool):
            raise RulesParseError(f"{where}: bad threshold for {var!r}")
        if isinstance(spec, (int, float)):
            out.append((str(var), None, float(spec)))
        elif isinstance(spec, str):
            out.append((str(var), spec, 1.0))
        elif (isinstance(spec, list) and len(spec) == 2 and isinstance(spec[0], str)
              and isinstance(spec[1], (int, float)) and not isinstance(spec[1], bool)):
            out.append((str(var), spec[0], float(spec[1])))
        else:
            raise RulesParseError(f"{where}: bad threshold for {var!r}")
    return tuple(out)


def parse_rules(items, where: str = "rules") -> list[Rule]:
    if not isinstance(items, list):
        raise RulesParseError(f"{where}: expected a list of rules")
    rules = []
    for i, item in enumerate(items):
        loc = f"{where}[{i}]"
        if not isinstance(item, dict) or "emit" not in item:
            raise RulesParseError(f"{loc}: each rule needs an 'emit' text")
        when = item.get("when") or {}
        if not isinstance(when, dict):
            raise RulesParseError(f"{loc}: 'when' must be a mapping")
        unknown = set(when) - _CONDITION_KEYS
        if unknown:
            raise RulesParseError(f"{loc}: unknown condition(s) {sorted(unknown)}")
        step = when.get("step")
        if step is not None and (not isinstance(step, int) or step < 1):
            raise RulesParseError(f"{loc}: step must be a positive integer")
        rules.append(Rule(
            emit=str(item["emit"]),
            task=_compile(when.get("task"), loc),
            last=_compile(when.get("last"), loc),
            seen=_compile(when.get("seen"), loc),
            unseen=_compile(when.get("unseen"), loc),
            step=step,
            above=_thresholds(when.get("above"), loc),
            below=_thresholds(when.get("below"), loc),
        ))
    return rules


def load_rules(path) -> dict[str, list[Rule]]:
    """Read a rules file with ``agent`` and ``manager`` sections."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise RulesParseError(f"cannot read rules file {path}: {exc}") from None
    if not isinstance(data, dict) or not set(data) <= {"agent", "manager"}:
        raise RulesParseError(f"{path}: top level must map 'agent' and/or 'manager' to rule lists")
    return {role: parse_rules(data.get(role) or [], f"{path}:{role}") for role in ("agent", "manager")}


def fallback_text(role: str, agent: str) -> str:
    if role == "manager":
        return "No scripted step applies to this situation.\nTERMINATE"
    return (
        "No scripted step applies to this situation; reporting failure.\n"
        "```python\n"
        f"from {TOOL_MODULE} import report_result\n"
        f"print(report_result(component={agent!r}, message='The task could not be completed.', "
        "message_type='RESPONSE'))\n"
        "```\n"
        "TERMINATE"
    )


class ScriptedPolicy:
    """First matching rule wins; its ``emit`` text is filled from variables and regex captures."""

    deterministic = True

    def __init__(self, rules: list[Rule], variables: Optional[dict] = None, role: str = "agent",
                 backend_id: str = "scripted"):
        self.rules = list(rules)
        self.variables = dict(variables or {})
        self.role = role
        self.backend_id = backend_id

    @classmethod
    def from_file(cls, path, role: str = "agent", variables: Optional[dict] = None) -> "ScriptedPolicy":
        return cls(load_rules(path)[role], variables, role, f"scripted:{Path(path).name}")

    def next_message(self, context: list[dict]) -> str:
        view = _View.of(context)
        for rule in self.rules:
            captured = rule.match(view, self.variables)
            if captured is not None:
                values = {**self.variables, **captured, "step": str(view.step)}
                return string.Template(rule.emit).safe_substitute(values).rstrip("\n")
        return fallback_text(self.role, self.variables.get("agent", "agent"))


# -- remote backend -----------------------------------------------------------------

@dataclass
class LlmConfig:
    base_url: str
    model: str = "gpt-4-turbo"
    api_key: str = ""
    temperature: float = 0.0
    seed: Optional[int] = None
    timeout: float = 120.0
    max_retries: int = 4
    backoff: float = 1.0
    backoff_cap: float = 16.0

    @classmethod
    def from_env(cls, **overrides) -> "LlmConfig":
        base = os.environ.get("ACV_LLM_BASE_URL")
        if not base:
            raise BackendUnavailable("ACV_LLM_BASE_URL is not set")
        values = {
            "base_url": base,
            "model": os.environ.get("ACV_LLM_MODEL", cls.model),
            "api_key": os.environ.get("ACV_LLM_API_KEY", ""),
        }
        values.update(overrides)
        return cls(**values)


class LlmPolicy:
    """Chat-completions client. Every exchange is kept for replay."""

    deterministic = False

    def __init__(self, config: LlmConfig, client: Optional[httpx.Client] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.client = client or httpx.Client(timeout=config.timeout)
        self.sleep = sleep
        self.backend_id = f"llm:{config.model}"
        self.exchanges: list[dict] = []

    def request_body(self, context: list[dict]) -> dict:
        body = {"model": self.config.model, "messages": context, "temperature": self.config.temperature}
        if self.config.seed is not None:
            body["seed"] = self.config.seed
        return body

    def next_message(self, context: list[dict]) -> str:
        body = self.request_body(context)
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {self.config.api_key}"} if self.config.api_key else {}
        problem = "no attempt made"
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self.sleep(min(self.config.backoff_cap, self.config.backoff * 2 ** (attempt - 1)))
            try:
                resp = self.client.post(url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                problem = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                problem = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                text = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise BackendUnavailable("malformed chat-completions response") from None
            self.exchanges.append({"request": body, "response": text})
            return text
        raise BackendUnavailable(f"backend unreachable after {self.config.max_retries + 1} attempts ({problem})")

    def save_replay(self, path) -> None:
        Path(path).write_text("".join(json.dumps(x, sort_keys=True) + "\n" for x in self.exchanges))


@dataclass
class ReplayPolicy:
    """Serves recorded responses in order."""

    responses: list
    backend_id: str = "replay"
    deterministic: bool = True
    position: int = field(default=0)

    @classmethod
    def load(cls, path) -> "ReplayPolicy":
        rows = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
        return cls([r["response"] for r in rows])

    def next_message(self, context: list[dict]) -> str:
        if self.position >= len(self.responses):
            raise BackendUnavailable("replay log exhausted")
        text = self.responses[self.position]
        self.position += 1
        return text
