import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acvbench.cluster import (
    Cluster,
    ClusterState,
    FaultKind,
    FaultSpec,
    TrafficLevel,
    TrafficProfile,
    catalogue_spec,
    front_end_spec,
    sock_shop,
)
from acvbench.cluster.model import p99_model_ms, utilization
from acvbench.errors import (
    DuplicateDeployment,
    FaultAlreadyActive,
    InvalidSpec,
    NotFound,
    ReplicaBoundExceeded,
)


def expected_p99(base, lam, cap):
    # independent restatement of the congestion curve
    rho = lam / cap
    return 5000.0 if rho >= 0.98 else base * (1 + 2 * rho / (1 - rho))


def cluster(*levels, deploy=("catalogue", "front-end")):
    cl = sock_shop().build(deploy=list(deploy))
    for name, level in levels:
        cl.set_traffic(name, TrafficProfile.for_service(name, level))
    return cl


def last(cl, name):
    return cl.history[name][-1]


def test_create_deployment_ready_after_delay():
    cl = Cluster([catalogue_spec()])
    cl.create_deployment(catalogue_spec(), 1)
    cl.advance(9)
    assert cl.snapshot().deployment("catalogue").ready_replicas == 0
    cl.advance(1)
    assert cl.snapshot().deployment("catalogue").ready_replicas == 1


def test_create_duplicate_and_empty():
    cl = Cluster([catalogue_spec()])
    cl.create_deployment(catalogue_spec(), 0)
    assert cl.snapshot().pods_of("catalogue") == []
    with pytest.raises(DuplicateDeployment):
        cl.create_deployment(catalogue_spec(), 1)


def test_invalid_specs_rejected():
    with pytest.raises(InvalidSpec):
        Cluster([catalogue_spec(per_replica_capacity_rps=0)])
    with pytest.raises(InvalidSpec):
        Cluster([catalogue_spec(cpu_request_millicores=400)])
    with pytest.raises(InvalidSpec):
        Cluster([catalogue_spec(default_image="9.9.9")])


def test_scale_converges_and_is_idempotent():
    cl = cluster()
    cl.advance(20)
    cl.scale("catalogue", 3)
    cl.advance(10)
    pods = cl.snapshot().pods_of("catalogue")
    assert len(pods) == 3 and all(p.ready for p in pods)
    before = [(p.pod_name, p.restarts) for p in pods]
    cl.scale("catalogue", 3)
    cl.advance(1)
    assert [(p.pod_name, p.restarts) for p in cl.snapshot().pods_of("catalogue")] == before
    cl.scale("catalogue", 1)
    assert len(cl.snapshot().pods_of("catalogue")) == 1


def test_scale_errors():
    cl = cluster()
    with pytest.raises(NotFound):
        cl.scale("ghost", 2)
    with pytest.raises(ReplicaBoundExceeded):
        cl.scale("catalogue", 21)


def test_set_image_valid_and_fake():
    cl = cluster()
    cl.set_image("catalogue", "0.3.4")
    cl.advance(10)
    pods = cl.snapshot().pods_of("catalogue")
    assert pods[0].image == "0.3.4" and pods[0].ready
    cl.set_image("catalogue", "fake-0.0.1")
    cl.advance(100)
    pod = cl.snapshot().pods_of("catalogue")[0]
    assert not pod.ready and pod.restarts >= 2
    assert pod.status == "CrashLoopBackOff"
    assert any("not functional" in line for line in pod.recent_logs)


def test_rollout_undo_restores_previous_image():
    cl = cluster()
    cl.set_image("catalogue", "0.3.5")
    cl.set_image("catalogue", "0.3.4")
    cl.rollout_undo("catalogue")
    assert cl.snapshot().deployment("catalogue").image == "0.3.5"


def test_set_env_always_restarts():
    cl = cluster()
    cl.advance(15)
    cl.set_env("catalogue", "logger_flag", "true")
    first = cl.snapshot().pods_of("catalogue")[0]
    assert cl.snapshot().deployment("catalogue").env_map["logger_flag"] == "true"
    cl.advance(3)
    cl.set_env("catalogue", "logger_flag", "true")
    second = cl.snapshot().pods_of("catalogue")[0]
    assert second.created_at_tick > first.created_at_tick
    with pytest.raises(NotFound):
        cl.set_env("ghost", "k", "v")


def test_restart_clears_cpu_stress():
    cl = cluster(("catalogue", "Moderate"))
    cl.advance(20)
    cl.inject_fault(FaultSpec(FaultKind.CPU_STRESS, "catalogue"))
    cl.advance(1)
    pod = cl.snapshot().pods_of("catalogue")[0]
    assert pod.stressed and pod.cpu_used_millicores == 300
    cl.restart_pods("catalogue")
    cl.advance(11)
    pods = cl.snapshot().pods_of("catalogue")
    assert pods and not any(p.stressed for p in pods)
    assert all(p.cpu_used_millicores < 300 for p in pods)
    with pytest.raises(NotFound):
        cl.restart_pods("ghost")


def test_fault_lifecycle_errors():
    cl = cluster()
    cl.inject_fault(FaultSpec(FaultKind.CPU_STRESS, "catalogue"))
    with pytest.raises(FaultAlreadyActive):
        cl.inject_fault(FaultSpec(FaultKind.CPU_STRESS, "catalogue"))
    cl.clear_fault(FaultKind.CPU_STRESS)
    cl.advance(1)
    assert not any(p.stressed for p in cl.snapshot().pods_of("catalogue"))
    with pytest.raises(NotFound):
        cl.inject_fault(FaultSpec(FaultKind.POD_FAILURE, "ghost"))


def test_pod_failure_zero_ready_within_bound():
    cl = cluster(("catalogue", "Moderate"))
    cl.advance(20)
    fault = cl.inject_fault(FaultSpec(FaultKind.POD_FAILURE, "catalogue"))
    cl.advance(cl.readiness_delay + cl.crash_interval)
    assert cl.snapshot().deployment("catalogue").ready_replicas == 0
    assert not cl.manifest_cleared(fault)
    assert last(cl, "catalogue").p99_ms == 5000.0


def test_rising_traffic_users():
    profile = TrafficProfile.for_service("catalogue", TrafficLevel.RISING, started_tick=100)
    assert profile.users_at(130) == 30
    assert profile.users_at(500) == 100
    with pytest.raises(InvalidSpec):
        TrafficProfile(TrafficLevel.RISING, 10, 20.0)


@pytest.mark.parametrize("service,level,users", [
    ("catalogue", "Light", 20), ("catalogue", "Moderate", 50), ("catalogue", "Heavy", 80),
    ("catalogue", "Rising", 100), ("front-end", "Light", 20), ("front-end", "Moderate", 40),
    ("front-end", "Heavy", 80), ("front-end", "Rising", 100),
])
def test_traffic_table(service, level, users):
    profile = TrafficProfile.for_service(service, level)
    assert profile.target_users == users
    assert profile.spawn_rate == (1.0 if level == "Rising" else users)


def test_moderate_catalogue_matches_closed_form():
    cl = cluster(("catalogue", "Moderate"))
    cl.advance(30)
    row = last(cl, "catalogue")
    assert row.arrival_rps == pytest.approx(50.0)
    assert row.rho == pytest.approx(0.5)
    assert row.p99_ms == pytest.approx(expected_p99(40, 50, 100)) == pytest.approx(120.0)
    assert row.cpu_mean_millicores == pytest.approx(300 * 0.8 * 0.5)


def test_heavy_catalogue_then_scale():
    cl = cluster(("catalogue", "Heavy"))
    cl.advance(30)
    assert last(cl, "catalogue").p99_ms == pytest.approx(360.0)
    cl.scale("catalogue", 2)
    cl.advance(15)
    assert last(cl, "catalogue").p99_ms == pytest.approx(expected_p99(40, 80, 200))
    assert last(cl, "catalogue").p99_ms == pytest.approx(93.33, abs=0.01)


def test_front_end_fans_out_to_catalogue():
    cl = cluster(("front-end", "Heavy"))
    cl.advance(30)
    assert last(cl, "front-end").arrival_rps == pytest.approx(80)
    assert last(cl, "catalogue").arrival_rps == pytest.approx(0.6 * 80)


def test_idle_service_has_base_latency():
    cl = cluster()
    cl.advance(30)
    assert last(cl, "catalogue").p99_ms == pytest.approx(40.0)
    assert utilization(0, 0) == 0.0
    assert utilization(5, 0) == math.inf


@given(st.floats(0.0, 0.97), st.floats(0.001, 0.009))
def test_p99_monotone_in_load(rho, delta):
    a = p99_model_ms(40, rho)
    b = p99_model_ms(40, min(rho + delta, 0.979))
    assert b > a


def test_more_replicas_lower_latency():
    values = []
    for replicas in (1, 2, 3):
        cl = cluster(("catalogue", "Heavy"))
        cl.scale("catalogue", replicas)
        cl.advance(30)
        values.append(last(cl, "catalogue").p99_ms)
    assert values[0] > values[1] > values[2]


def test_hpa_bounds_and_fixed_point():
    cl = cluster(("catalogue", "Heavy"))
    cl.autoscale("catalogue", 1, 4, 50)
    cl.advance(600)
    replicas = [r.desired_replicas for r in cl.history["catalogue"]]
    assert min(replicas) >= 1 and max(replicas) <= 4
    assert len(set(replicas[-120:])) == 1
    with pytest.raises(InvalidSpec):
        cluster().autoscale("catalogue", 3, 3, 50)


def test_determinism_and_snapshot_roundtrip():
    def run():
        cl = cluster(("catalogue", "Heavy"), ("front-end", "Moderate"))
        cl.advance(40)
        cl.scale("catalogue", 2)
        cl.inject_fault(FaultSpec(FaultKind.CPU_STRESS, "front-end"))
        cl.advance(40)
        return cl
    a, b = run(), run()
    assert a.snapshot().to_json() == b.snapshot().to_json()
    snap = a.snapshot()
    assert snap == a.snapshot()
    assert ClusterState.from_json(snap.to_json()) == snap


def test_counters_never_decrease():
    cl = cluster(("catalogue", "Moderate"), ("front-end", "Rising"))
    cl.advance(50)
    cl.set_image("catalogue", "fake-0.0.1")
    cl.advance(80)
    for series in cl.store:
        assert all(b >= a for a, b in zip(series.values, series.values[1:]))
    restarts = [p.restarts for p in cl.snapshot().pods_of("catalogue")]
    assert restarts and restarts[0] > 0


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["Off", "Light", "Moderate", "Heavy"]), st.integers(1, 4))
def test_history_matches_model(level, replicas):
    cl = cluster(("catalogue", level))
    cl.scale("catalogue", replicas)
    cl.advance(20)
    row = last(cl, "catalogue")
    lam = TrafficProfile.for_service("catalogue", level).target_users
    if lam == 0:
        assert row.p99_ms == pytest.approx(40.0)
    else:
        assert row.p99_ms == pytest.approx(expected_p99(40, lam, 100 * replicas))


def test_front_end_spec_defaults():
    fe = front_end_spec()
    assert (fe.base_latency_ms, fe.per_replica_capacity_rps) == (60.0, 80.0)
    assert fe.downstream == ("catalogue",)
