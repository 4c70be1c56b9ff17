"""In-process message middleware: one FIFO queue per agent plus the two reporting tools."""
from __future__ import annotations

import enum
import json
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional

from acvbench.errors import DuplicateQueue, InvalidType, LengthMismatch, NoSuchQueue, UnknownComponent

REPORT_ACK = "Message sent to manager."
ASSIGN_ACK = "Tasks assigned."


class MessageType(str, enum.Enum):
    TASK = "TASK"
    ISSUE = "ISSUE"
    RESPONSE = "RESPONSE"
    HEARTBEAT = "HEARTBEAT"


@dataclass(frozen=True)
class Envelope:
    id: str
    sent_tick: int
    sender: str
    recipient: str
    kind: str
    body: str

    def __post_init__(self):
        if self.kind not in MessageType.__members__:
            raise InvalidType(f"unknown message kind {self.kind!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Envelope":
        return cls(**{k: data[k] for k in ("id", "sent_tick", "sender", "recipient", "kind", "body")})


class MessageBus:
    """Per-agent FIFO queues.

    With ``advance`` set (simulated clock), ``consume`` on an empty queue moves
    the clock forward by the timeout and gives up; otherwise it waits on the
    wall clock, ``tick_seconds`` per tick.
    """

    def __init__(self, clock: Optional[Callable[[], int]] = None, advance: Optional[Callable[[int], None]] = None,
                 manager_id: str = "manager", tick_seconds: float = 1.0):
        self._clock = clock or (lambda: 0)
        self._advance = advance
        self.manager_id = manager_id
        self.tick_seconds = tick_seconds
        self._queues: dict[str, deque] = {}
        self._cond = threading.Condition()
        self._counter = 0
        self.log: list[Envelope] = []

    # -- queues ---------------------------------------------------------------

    def create_queue(self, agent: str) -> str:
        with self._cond:
            if agent in self._queues:
                raise DuplicateQueue(f"queue for {agent!r} already exists")
            self._queues[agent] = deque()
            return agent

    def has_queue(self, agent: str) -> bool:
        return agent in self._queues

    def queues(self) -> list[str]:
        return sorted(self._queues)

    def depth(self, agent: str) -> int:
        with self._cond:
            return len(self._queue(agent))

    def _queue(self, agent: str) -> deque:
        try:
            return self._queues[agent]
        except KeyError:
            raise NoSuchQueue(f"no queue for {agent!r}") from None

    # -- messaging --------------------------------------------------------------

    def _next_id(self) -> str:
        self._counter += 1
        return f"env-{self._counter:06d}"

    def envelope(self, sender: str, recipient: str, kind, body: str) -> Envelope:
        kind = kind.value if isinstance(kind, MessageType) else str(kind)
        with self._cond:
            return Envelope(self._next_id(), self._clock(), sender, recipient, kind, body)

    def publish(self, env: Envelope) -> None:
        with self._cond:
            self._queue(env.recipient).append(env)
            self.log.append(env)
            self._cond.notify_all()

    def send(self, sender: str, recipient: str, kind, body: str) -> Envelope:
        with self._cond:
            self._queue(recipient)
            env = self.envelope(sender, recipient, kind, body)
            self.publish(env)
            return env

    def try_consume(self, agent: str) -> Optional[Envelope]:
        with self._cond:
            q = self._queue(agent)
            return q.popleft() if q else None

    def consume(self, agent: str, timeout_ticks: int = 0) -> Optional[Envelope]:
        with self._cond:
            q = self._queue(agent)
            if q:
                return q.popleft()
            if timeout_ticks <= 0:
                return None
            if self._advance is None:
                self._cond.wait_for(lambda: bool(q), timeout=timeout_ticks * self.tick_seconds)
                return q.popleft() if q else None
        self._advance(timeout_ticks)
        return self.try_consume(agent)

    def drain(self, agent: str) -> list[Envelope]:
        with self._cond:
            q = self._queue(agent)
            out = list(q)
            q.clear()
            return out

    # -- tool functions -----------------------------------------------------------

    def report_result(self, component: str, message: str, message_type: str) -> str:
        if message_type not in (MessageType.ISSUE.value, MessageType.RESPONSE.value):
            raise InvalidType(f"message_type must be 'ISSUE' or 'RESPONSE', got {message_type!r}")
        if component == self.manager_id or component not in self._queues:
            raise UnknownComponent(f"unknown component {component!r}")
        self.send(component, self.manager_id, message_type, str(message))
        return REPORT_ACK

    def assign_tasks(self, components: list, messages: list) -> str:
        if isinstance(components, str) or isinstance(messages, str):
            raise InvalidType("components and messages must be lists")
        components = list(components)
        messages = list(messages)
        if len(components) != len(messages):
            raise LengthMismatch(f"{len(components)} components but {len(messages)} messages")
        for comp in components:
            if comp == self.manager_id or comp not in self._queues:
                raise UnknownComponent(f"{comp!r} is not a listed service maintainer")
        for comp, msg in zip(components, messages):
            self.send(self.manager_id, comp, MessageType.TASK, str(msg))
        return ASSIGN_ACK

    # -- audit ----------------------------------------------------------------------

    def write_log(self, path) -> None:
        Path(path).write_text("".join(env.to_json() + "\n" for env in self.log))


def read_log(path) -> list[Envelope]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(Envelope.from_dict(json.loads(line)))
    return out


def wall_clock() -> int:
    return int(time.monotonic())
