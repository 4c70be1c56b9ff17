import pytest

from acvbench.agent import Agent
from acvbench.bus import MessageBus
from acvbench.cluster import TrafficProfile, sock_shop
from acvbench.errors import RoundBudgetExhausted
from acvbench.manager import GroupManager


def assign(*pairs):
    comps = [c for c, _ in pairs]
    msgs = [m for _, m in pairs]
    return ("```python\nfrom acvbench.tools import assign_tasks\n"
            f"print(assign_tasks(components={comps!r}, messages={msgs!r}))\n```")


def report(component, body="done", kind="RESPONSE"):
    return ("```python\nfrom acvbench.tools import report_result\n"
            f"print(report_result(component={component!r}, message={body!r}, message_type={kind!r}))\n```\nTERMINATE")


class Seq:
    """Emits the n-th message on the n-th step of each task."""

    backend_id = "seq"
    deterministic = True

    def __init__(self, *messages):
        self.messages = list(messages)
        self.calls = 0

    def next_message(self, context):
        self.calls += 1
        step = sum(1 for m in context if m["role"] == "assistant")
        return self.messages[min(step, len(self.messages) - 1)]


TOP = "```bash\nkubectl top pods -l name={}\n```"


def group(manager_policy, agent_policies, **kw):
    cl = sock_shop().build()
    cl.set_traffic("front-end", TrafficProfile.for_service("front-end", "Moderate"))
    cl.advance(30)
    bus = MessageBus(lambda: cl.tick_count, cl.advance)
    agents = [Agent(name, cl, bus, p) for name, p in agent_policies.items()]
    return cl, bus, GroupManager(cl, bus, manager_policy, agents, **kw)


def agent_policies(cat_steps=2, fe_steps=3):
    return {
        "catalogue": Seq(*([TOP.format("catalogue")] * (cat_steps - 1) + [report("catalogue")])),
        "front-end": Seq(*([TOP.format("front-end")] * (fe_steps - 1) + [report("front-end")])),
    }


def test_rounds_are_batches_plus_one():
    mgr = Seq(assign(("catalogue", "a"), ("front-end", "b")), assign(("catalogue", "c")), "All done.\nTERMINATE")
    pols = agent_policies()
    cl, _, gm = group(mgr, pols)
    out = gm.run_managed_task("do things")
    assert out.terminated and out.rounds == 3
    assert out.manager_steps == 3
    # catalogue answered two tasks of two steps each
    assert out.per_agent_steps == {"catalogue": 4, "front-end": 3}
    assert out.steps_tuple(["catalogue", "front-end"]) == (3, 4, 3)
    assert [r.terminating for r in out.round_records] == [False, False, True]
    assert [c for _, c, _ in out.assignments] == ["catalogue", "front-end", "catalogue"]
    assert len(out.responses) == 3 and not out.partial
    assert cl.mutation_count("manager") == 0


def test_immediate_terminate_is_one_round():
    cl, _, gm = group(Seq("Nothing to do.\nTERMINATE"), agent_policies())
    out = gm.run_managed_task("x")
    assert (out.rounds, out.manager_steps, out.per_agent_steps) == (1, 1, {})


def test_manager_cannot_mutate():
    scale = "```bash\nkubectl scale deployment/catalogue --replicas=3\n```"
    cl, _, gm = group(Seq(scale, "TERMINATE"), agent_policies())
    out = gm.run_managed_task("x")
    assert out.manager_transcript.steps_with_exec_error == 1
    assert cl.mutation_count("manager") == 0
    assert cl.snapshot().deployment("catalogue").replicas == 1


def test_unknown_component_is_exec_error():
    cl, _, gm = group(Seq(assign(("payment", "x")), "TERMINATE"), agent_policies())
    out = gm.run_managed_task("x")
    assert out.rounds == 1 and out.manager_transcript.steps_with_exec_error == 1
    assert "UnknownComponent" in out.manager_transcript.entries[3].content


def test_round_budget_exhausted():
    mgr = Seq(assign(("catalogue", "a")))
    _, _, gm = group(mgr, agent_policies(), round_budget=2)
    with pytest.raises(RoundBudgetExhausted):
        gm.run_managed_task("x")


def test_agents_interleave_by_step():
    mgr = Seq(assign(("catalogue", "a"), ("front-end", "b")), "TERMINATE")
    _, _, gm = group(mgr, agent_policies(2, 3))
    out = gm.run_managed_task("x")
    ticks = {t.agent: [e.tick for e in t.entries if e.role == "policy"] for _, t in out.agent_transcripts}
    # each round-robin pass runs one step of every active agent
    assert ticks["front-end"][0] - ticks["catalogue"][0] == 5
    assert ticks["catalogue"][1] - ticks["front-end"][0] == 5


def test_collect_responses_any_order_partial_and_empty():
    _, bus, gm = group(Seq("TERMINATE"), agent_policies(), response_timeout=30)
    bus.report_result("front-end", "f", "ISSUE")
    bus.report_result("catalogue", "c", "RESPONSE")
    matched, extra, missing = gm.collect_responses(["catalogue", "front-end"])
    assert sorted(e.sender for e in matched) == ["catalogue", "front-end"] and not extra and not missing

    bus.report_result("catalogue", "c", "RESPONSE")
    bus.report_result("catalogue", "again", "RESPONSE")
    matched, extra, missing = gm.collect_responses(["catalogue", "front-end"])
    assert [e.body for e in matched] == ["c"] and [e.body for e in extra] == ["again"]
    assert missing == ["front-end"]

    before = gm.cluster.tick_count
    assert gm.collect_responses(["catalogue"]) == ([], [], ["catalogue"])
    assert gm.cluster.tick_count - before == 30


def test_missing_response_is_reported_to_manager():
    silent = Seq("thinking\nTERMINATE")
    mgr = Seq(assign(("catalogue", "a")), "TERMINATE")
    _, _, gm = group(mgr, {"catalogue": silent, "front-end": Seq(report("front-end"))}, response_timeout=20)
    out = gm.run_managed_task("x")
    assert out.partial and out.round_records[0].missing == ["catalogue"]
    assert any("No response from component catalogue" in e.content for e in out.manager_transcript.entries)
