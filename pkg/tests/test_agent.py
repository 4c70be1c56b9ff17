import json

import httpx
import pytest

from acvbench.agent import Agent, LlmConfig, LlmPolicy, ReplayPolicy, ScriptedPolicy, Transcript
from acvbench.agent.policies import fallback_text, parse_rules
from acvbench.agent.runtime import NUDGE, STEP_TICKS
from acvbench.bus import MessageBus
from acvbench.cluster import TrafficProfile, sock_shop
from acvbench.errors import BackendUnavailable, BudgetExhausted, CorruptLog, RulesParseError

TOP = "```bash\nkubectl top pods -n sock-shop -l name=catalogue\n```"
BAD = "```bash\nkubectl get pods -l app=catalogue\n```"
REPORT = ("```python\nfrom acvbench.tools import report_result\n"
          "print(report_result(component='catalogue', message='all good', message_type='RESPONSE'))\n```\nTERMINATE")


class Canned:
    """Hands out fixed messages and counts calls."""

    backend_id = "canned"
    deterministic = True

    def __init__(self, *messages):
        self.messages = list(messages)
        self.calls = 0

    def next_message(self, context):
        self.calls += 1
        return self.messages[min(self.calls, len(self.messages)) - 1]


def setup(policy, **kw):
    cl = sock_shop().build()
    cl.set_traffic("catalogue", TrafficProfile.for_service("catalogue", "Moderate"))
    cl.advance(30)
    bus = MessageBus(lambda: cl.tick_count, cl.advance)
    bus.create_queue("manager")
    return cl, bus, Agent("catalogue", cl, bus, policy, **kw)


def test_steps_equal_policy_calls_and_ticks():
    policy = Canned(TOP, TOP, REPORT)
    cl, bus, agent = setup(policy)
    start = cl.tick_count
    t = agent.run_task("check the cpu")
    assert t.steps == policy.calls == 3
    assert t.terminated and t.steps_with_exec_error == 0
    assert cl.tick_count - start == 3 * STEP_TICKS
    assert t.reported == [("RESPONSE", "all good")]
    env = bus.try_consume("manager")
    assert (env.sender, env.body) == ("catalogue", "all good")


def test_budget_exhaustion():
    policy = Canned(TOP)
    _, _, agent = setup(policy)
    with pytest.raises(BudgetExhausted) as err:
        agent.run_task("loop forever", budget=1)
    assert policy.calls == 1
    assert err.value.transcript.steps == 1


def test_exec_errors_are_counted_per_step():
    _, _, agent = setup(Canned(BAD, TOP, BAD, REPORT))
    t = agent.run_task("x")
    assert t.steps == 4 and t.steps_with_exec_error == 2
    assert "app selector unsupported" in t.entries[3].content


def test_nudge_when_no_code():
    _, _, agent = setup(Canned("thinking", REPORT))
    t = agent.run_task("x")
    assert [e.content for e in t.entries if e.content == NUDGE] == [NUDGE]


def test_mutations_are_attributed_to_agent():
    scale = "```bash\nkubectl scale deployment/catalogue --replicas=2 -n sock-shop\n```"
    cl, _, agent = setup(Canned(scale, REPORT))
    agent.run_task("scale up")
    assert cl.mutation_count("catalogue") == 1
    assert cl.snapshot().deployment("catalogue").replicas == 2


def test_scripted_policy_first_match_and_captures():
    rules = parse_rules([
        {"when": {"step": 1}, "emit": TOP},
        {"when": {"last": r"\s(?P<cpu>\d+)m\s", "above": {"cpu": 100}}, "emit": "cpu is ${cpu}m\nTERMINATE"},
    ])
    policy = ScriptedPolicy(rules, {"agent": "catalogue"})
    _, _, agent = setup(policy)
    t = agent.run_task("check")
    assert t.entries[-1].content == "cpu is 120m\nTERMINATE"


def test_scripted_fallback_reports_failure():
    _, bus, agent = setup(ScriptedPolicy([], {"agent": "catalogue"}))
    t = agent.run_task("anything")
    assert t.terminated and t.steps == 1
    assert bus.try_consume("manager").body == "The task could not be completed."
    assert fallback_text("manager", "m").endswith("TERMINATE")


def test_scripted_runs_are_identical():
    def run():
        policy = ScriptedPolicy.from_file(_reference(), variables={"agent": "catalogue", "service": "catalogue",
                                                                   "namespace": "sock-shop"})
        _, _, agent = setup(policy)
        return agent.evaluate_health_task().to_jsonl()
    assert run() == run()


@pytest.mark.parametrize("items", [
    "not a list",
    [{"when": {}}],
    [{"when": {"colour": "x"}, "emit": "y"}],
    [{"when": {"last": "("}, "emit": "y"}],
    [{"when": {"step": 0}, "emit": "y"}],
    [{"when": {"above": {"cpu": True}}, "emit": "y"}],
])
def test_rules_validation(items):
    with pytest.raises(RulesParseError):
        parse_rules(items)


def test_transcript_jsonl_roundtrip_and_corruption():
    _, _, agent = setup(Canned(TOP, REPORT))
    t = agent.run_task("x")
    assert Transcript.from_jsonl(t.to_jsonl()) == t
    with pytest.raises(CorruptLog):
        Transcript.from_jsonl(t.to_jsonl().splitlines()[0])
    with pytest.raises(CorruptLog):
        Transcript.from_jsonl("{not json")


def _reference():
    from acvbench.bench.fixtures import rules_dir
    return rules_dir() / "reference.yaml"


# -- remote backend ---------------------------------------------------------------


def completion(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


def llm(handler, **cfg):
    config = LlmConfig(base_url="http://llm.test/v1", model="m", temperature=0.3, seed=7, max_retries=3, **cfg)
    sleeps = []
    policy = LlmPolicy(config, httpx.Client(transport=httpx.MockTransport(handler)), sleep=sleeps.append)
    return policy, sleeps


def test_llm_request_shape():
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        assert request.url.path == "/v1/chat/completions"
        return completion("hi")

    policy, _ = llm(handler)
    assert policy.next_message([{"role": "user", "content": "q"}]) == "hi"
    assert seen[0]["temperature"] == 0.3 and seen[0]["seed"] == 7 and seen[0]["model"] == "m"
    assert policy.exchanges == [{"request": seen[0], "response": "hi"}]


def test_llm_retries_then_succeeds():
    codes = iter([429, 503])

    def handler(request):
        code = next(codes, 200)
        return completion("ok") if code == 200 else httpx.Response(code)

    policy, sleeps = llm(handler)
    assert policy.next_message([]) == "ok"
    assert sleeps == [1.0, 2.0]


def test_llm_gives_up_after_retries():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(500)

    policy, sleeps = llm(handler)
    with pytest.raises(BackendUnavailable):
        policy.next_message([])
    assert len(calls) == 4 and len(sleeps) == 3


def test_llm_client_error_is_not_retried():
    policy, sleeps = llm(lambda r: httpx.Response(401, text="nope"))
    with pytest.raises(BackendUnavailable):
        policy.next_message([])
    assert sleeps == []


def test_llm_config_from_env(monkeypatch):
    monkeypatch.delenv("ACV_LLM_BASE_URL", raising=False)
    with pytest.raises(BackendUnavailable):
        LlmConfig.from_env()
    monkeypatch.setenv("ACV_LLM_BASE_URL", "http://x")
    assert LlmConfig.from_env(seed=3).seed == 3


def test_replay_policy(tmp_path):
    policy, _ = llm(lambda r: completion(TOP if "step" not in r.content.decode() else REPORT))
    policy.next_message([{"role": "user", "content": "a"}])
    path = tmp_path / "replay.jsonl"
    policy.save_replay(path)
    replay = ReplayPolicy.load(path)
    assert replay.next_message([]) == TOP
    with pytest.raises(BackendUnavailable):
        replay.next_message([])
