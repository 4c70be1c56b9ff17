import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acvbench.bus import ASSIGN_ACK, REPORT_ACK, Envelope, MessageBus, read_log
from acvbench.errors import DuplicateQueue, InvalidType, LengthMismatch, NoSuchQueue, UnknownComponent


def make_bus(*agents, clock=None, advance=None):
    bus = MessageBus(clock=clock, advance=advance)
    bus.create_queue("manager")
    for a in agents:
        bus.create_queue(a)
    return bus


def test_ack_strings_are_exact():
    assert REPORT_ACK == "Message sent to manager."
    assert ASSIGN_ACK == "Tasks assigned."


def test_queue_contracts():
    bus = make_bus("catalogue")
    with pytest.raises(DuplicateQueue):
        bus.create_queue("catalogue")
    with pytest.raises(NoSuchQueue):
        bus.send("manager", "ghost", "TASK", "x")
    with pytest.raises(NoSuchQueue):
        bus.depth("ghost")
    assert bus.queues() == ["catalogue", "manager"]


def test_report_result_routes_to_manager():
    bus = make_bus("catalogue")
    assert bus.report_result("catalogue", "done", "RESPONSE") == REPORT_ACK
    env = bus.try_consume("manager")
    assert (env.sender, env.kind, env.body) == ("catalogue", "RESPONSE", "done")
    with pytest.raises(InvalidType):
        bus.report_result("catalogue", "x", "TASK")
    with pytest.raises(UnknownComponent):
        bus.report_result("ghost", "x", "ISSUE")


def test_assign_tasks_contracts():
    bus = make_bus("catalogue", "front-end")
    assert bus.assign_tasks(["catalogue", "front-end"], ["a", "b"]) == ASSIGN_ACK
    assert bus.try_consume("front-end").body == "b"
    assert bus.try_consume("catalogue").body == "a"
    with pytest.raises(LengthMismatch):
        bus.assign_tasks(["catalogue"], ["a", "b"])
    with pytest.raises(UnknownComponent):
        bus.assign_tasks(["payment"], ["a"])
    with pytest.raises(InvalidType):
        bus.assign_tasks("catalogue", ["a"])
    # a rejected call enqueues nothing
    assert bus.depth("catalogue") == 0


def test_envelope_rejects_unknown_kind():
    with pytest.raises(InvalidType):
        Envelope("e", 0, "a", "b", "CHAT", "x")


def test_consume_timeout_advances_simulated_clock():
    now = [0]
    bus = make_bus("catalogue", clock=lambda: now[0], advance=lambda n: now.__setitem__(0, now[0] + n))
    assert bus.consume("catalogue", timeout_ticks=30) is None
    assert now[0] == 30
    bus.send("manager", "catalogue", "TASK", "go")
    assert bus.consume("catalogue", timeout_ticks=30).sent_tick == 30
    assert now[0] == 30


def test_consume_wakes_on_wall_clock_publish():
    bus = MessageBus(tick_seconds=0.01)
    bus.create_queue("a")
    timer = threading.Timer(0.05, lambda: bus.send("b", "a", "TASK", "hello"))
    timer.start()
    env = bus.consume("a", timeout_ticks=500)
    timer.join()
    assert env is not None and env.body == "hello"


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from(["a", "b", "c"]), st.text(max_size=8)), max_size=60))
def test_per_queue_fifo(sends):
    bus = make_bus("a", "b", "c")
    for recipient, body in sends:
        bus.send("manager", recipient, "TASK", body)
    for agent in ("a", "b", "c"):
        expected = [b for r, b in sends if r == agent]
        assert [e.body for e in bus.drain(agent)] == expected


def test_ten_thousand_random_messages_no_loss_no_reorder():
    rng = random.Random(7)
    agents = [f"svc{i}" for i in range(5)]
    bus = make_bus(*agents)
    expected = {a: [] for a in agents}
    received = {a: [] for a in agents}
    for i in range(10_000):
        a = rng.choice(agents)
        bus.send("manager", a, "TASK", str(i))
        expected[a].append(str(i))
        if rng.random() < 0.4:
            b = rng.choice(agents)
            env = bus.try_consume(b)
            if env:
                received[b].append(env.body)
    for a in agents:
        received[a] += [e.body for e in bus.drain(a)]
    assert received == expected
    assert len(bus.log) == 10_000
    assert len({e.id for e in bus.log}) == 10_000


def test_log_roundtrip(tmp_path):
    bus = make_bus("catalogue")
    bus.assign_tasks(["catalogue"], ["check"])
    bus.report_result("catalogue", "ok", "RESPONSE")
    path = tmp_path / "envelopes.jsonl"
    bus.write_log(path)
    assert read_log(path) == bus.log
