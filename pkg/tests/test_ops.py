import pytest
from hypothesis import given
from hypothesis import strategies as st

from acvbench.cluster import FaultKind, FaultSpec, TrafficProfile, sock_shop
from acvbench.errors import BadFlag, UnknownVerb, UnsupportedCommand
from acvbench.ops import commands as c
from acvbench.ops.commands import parse_command, render
from acvbench.ops.gateway import Gateway
from acvbench.ops.script import CodeBlock, execute_script, extract_blocks, format_results, run_python


@pytest.fixture
def cluster():
    cl = sock_shop().build()
    cl.set_traffic("catalogue", TrafficProfile.for_service("catalogue", "Moderate"))
    cl.advance(60)
    return cl


@pytest.fixture
def gw(cluster):
    return Gateway(cluster, "catalogue")


@pytest.mark.parametrize("line,expected", [
    ("kubectl get pod -n sock-shop -l name=catalogue", c.GetPods("catalogue", "sock-shop")),
    ("kubectl get pods", c.GetPods()),
    ("kubectl top pods -l name=catalogue", c.TopPods("catalogue")),
    ("kubectl scale deployment/catalogue --replicas=3 -n sock-shop", c.Scale("catalogue", 3, "sock-shop")),
    ("kubectl set image deployment/catalogue catalogue=weaveworksdemos/catalogue:0.3.4",
     c.SetImage("catalogue", "catalogue", "0.3.4")),
    ("kubectl set env deployment/catalogue logger_flag=true", c.SetEnv("catalogue", "logger_flag", "true")),
    ("kubectl rollout restart deployment/catalogue", c.RolloutRestart("catalogue")),
    ("kubectl rollout undo deployment/catalogue", c.RolloutUndo("catalogue")),
    ("kubectl autoscale deployment catalogue --min=1 --max=5 --cpu-percent=50", c.Autoscale("catalogue", 1, 5, 50)),
    ("kubectl apply -f /manifests/catalogue-dep.yaml", c.ApplyFile("/manifests/catalogue-dep.yaml")),
    ("kubectl logs catalogue-abc", c.Logs("catalogue-abc", 20)),
    ("sleep 120", c.Sleep(120)),
])
def test_parse_command(line, expected):
    assert parse_command(line) == expected


@pytest.mark.parametrize("line,error", [
    ("kubectl get pods -l app=catalogue", BadFlag),
    ("kubectl edit deployment catalogue", UnsupportedCommand),
    ("kubectl port-forward svc/catalogue 8080:80", UnsupportedCommand),
    ("kubectl get pods -w", UnsupportedCommand),
    ("kubectl frobnicate", UnknownVerb),
    ("curl http://catalogue", UnknownVerb),
])
def test_parse_rejections(line, error):
    with pytest.raises(error):
        parse_command(line)


def test_app_selector_message():
    with pytest.raises(BadFlag, match="app selector unsupported"):
        parse_command("kubectl get pods -l app=catalogue")


_names = st.sampled_from(["catalogue", "front-end"])
_ns = st.one_of(st.none(), st.just("sock-shop"))
_commands = st.one_of(
    st.builds(c.GetPods, st.one_of(st.none(), _names), _ns, st.booleans()),
    st.builds(c.TopPods, st.one_of(st.none(), _names), _ns),
    st.builds(c.Scale, _names, st.integers(0, 20), _ns),
    st.builds(c.SetEnv, _names, st.sampled_from(["logger_flag", "A"]), st.sampled_from(["true", "1"]), _ns),
    st.builds(c.RolloutRestart, _names, _ns),
    st.builds(c.Autoscale, _names, st.integers(1, 3), st.integers(4, 9), st.integers(1, 100), _ns),
    st.builds(c.Logs, st.just("catalogue-x"), st.integers(1, 50), _ns),
    st.builds(c.Sleep, st.integers(0, 600)),
)


@given(_commands)
def test_render_parse_roundtrip(cmd):
    assert parse_command(render(cmd)) == cmd


def test_scale_output(gw, cluster):
    r = gw.run_line("kubectl scale deployment/catalogue --replicas=3 -n sock-shop")
    assert r.ok and r.stdout == "deployment.apps/catalogue scaled"
    assert cluster.snapshot().deployment("catalogue").replicas == 3


def test_top_pods_moderate(gw):
    out = gw.run_line("kubectl top pods -n sock-shop -l name=catalogue").stdout
    lines = out.splitlines()
    assert lines[0].split() == ["NAME", "CPU(cores)", "MEMORY(bytes)"]
    assert lines[1].split()[1:] == ["120m", "100Mi"]


def test_get_pods_columns_and_crashloop(gw, cluster):
    header = gw.run_line("kubectl get pods -l name=catalogue").stdout.splitlines()[0]
    assert header.split() == ["NAME", "READY", "STATUS", "RESTARTS", "AGE"]
    cluster.inject_fault(FaultSpec(FaultKind.POD_FAILURE, "catalogue"))
    cluster.advance(60)
    row = gw.run_line("kubectl get pods -l name=catalogue").stdout.splitlines()[1].split()
    assert row[1:3] == ["0/1", "CrashLoopBackOff"]


def test_not_found_maps_to_kubectl_error(gw):
    r = gw.run_line("kubectl scale deployment/ghost --replicas=2")
    assert not r.ok
    assert r.stderr == 'Error from server (NotFound): deployments.apps "ghost" not found'


def test_failed_command_leaves_state_unchanged(gw, cluster):
    before = cluster.snapshot().to_json()
    assert not gw.run_line("kubectl scale deployment/catalogue --replicas=99").ok
    assert cluster.snapshot().to_json() == before


def test_read_is_repeatable(gw):
    a = gw.run_line("kubectl get pods -n sock-shop").stdout
    b = gw.run_line("kubectl get pods -n sock-shop").stdout
    assert a == b


def test_logs_default_tail(gw, cluster):
    cluster.inject_fault(FaultSpec(FaultKind.POD_FAILURE, "catalogue"))
    cluster.advance(600)
    pod = cluster.snapshot().pods_of("catalogue")[0].pod_name
    out = gw.run_line(f"kubectl logs {pod}").stdout
    assert 0 < len(out.splitlines()) <= 20


def test_read_only_gateway_refuses_mutation(cluster):
    r = Gateway(cluster, "manager", read_only=True).run_line("kubectl scale deployment/catalogue --replicas=2")
    assert not r.ok
    assert cluster.mutation_count("manager") == 0


def test_bash_block_sleep_and_top(gw, cluster):
    start = cluster.tick_count
    results = execute_script(CodeBlock("bash", "sleep 120;\nkubectl top pods -l name=catalogue"), gw, {})
    assert len(results) == 2 and all(r.ok for r in results)
    assert results[0].wall_ticks_consumed == 120
    assert cluster.tick_count - start == 120


def test_bash_stops_on_first_failure(gw):
    results = execute_script(CodeBlock("bash", "kubectl get pods -l app=x\nkubectl get pods"), gw, {})
    assert len(results) == 1 and not results[0].ok


def test_sleep_is_capped(gw, cluster):
    start = cluster.tick_count
    gw.run_line("sleep 5000")
    assert cluster.tick_count - start == 600


def test_python_block_query_prints_series(cluster):
    from acvbench.metrics.engine import query

    tools = {"query_prometheus": lambda q, **kw: query(cluster.store, q, cluster.tick_count, **kw)}
    code = ("from acvbench.tools import query_prometheus\n"
            "print(query_prometheus('sum(rate(request_duration_seconds_count{name=\"catalogue\"}[1m]))', "
            "duration='1m', step='1m'))\n")
    r = run_python(code, tools)
    assert r.ok and r.stdout.startswith("[['2024-06-20 00:01:00', ")


@pytest.mark.parametrize("code,fragment", [
    ("open('/etc/passwd').read()", "ForbiddenConstruct"),
    ("import os\nos.system('ls')", "ForbiddenConstruct"),
    ("print(report_result(component='<component>', message='x', message_type='RESPONSE'))", "PlaceholderDetected"),
])
def test_python_whitelist(code, fragment):
    r = run_python(code, {"report_result": lambda **kw: "ok"})
    assert not r.ok and fragment in r.stderr


def test_extract_blocks_and_feedback():
    text = "plan\n```bash\nkubectl get pods\n```\nthen\n```python\nprint(1)\n```\n"
    blocks = extract_blocks(text)
    assert [b.lang for b in blocks] == ["bash", "python"]
    from acvbench.ops.gateway import ActionResult

    assert format_results([ActionResult.failure("boom")]).startswith("exitcode: 1 (execution failed)")
