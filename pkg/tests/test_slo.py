import math
import random

import pytest

from acvbench.bench.slo import DEFAULT_SLO, SloSet, slo_check, window_rows
from acvbench.cluster import TrafficProfile, sock_shop
from acvbench.cluster.simulator import ServiceTick
from acvbench.errors import InsufficientHistory


def row(tick, p99=100.0, cpu=0.2, mem=0.2, ready=1, desired=1, deployed=True):
    return ServiceTick(tick=tick, service="catalogue", users=0, arrival_rps=0, capacity_rps=100, rho=0,
                       p99_ms=p99, desired_replicas=desired, ready_pods=ready, total_pods=desired, stressed_pods=0,
                       cpu_mean_millicores=0, cpu_mean_fraction=cpu, cpu_max_fraction=cpu, mem_max_fraction=mem,
                       deployed=deployed)


def oracle(rows):
    """Straight restatement of the default objective set."""
    n = len(rows)
    p = [r.p99_ms for r in rows]
    mean = sum(p) / n
    sd = math.sqrt(sum((x - mean) ** 2 for x in p) / n)
    cv = sd / mean if mean else 0.0
    return {
        "ready": all(r.deployed and r.desired_replicas > 0 and r.ready_pods == r.desired_replicas for r in rows),
        "cpu": sum(r.cpu_max_fraction for r in rows) / n <= 0.5,
        "mem": sum(r.mem_max_fraction for r in rows) / n <= 0.5,
        "p99": mean < 200 and cv <= 0.5,
    }


def test_matches_oracle_on_random_windows():
    rng = random.Random(11)
    for _ in range(100):
        n = rng.randint(2, 90)
        rows = []
        for t in range(n):
            desired = rng.choice([0, 1, 1, 2, 3])
            rows.append(row(t, p99=rng.choice([40.0, 120.0, 199.0, 250.0, 5000.0]) * rng.uniform(0.5, 1.5),
                            cpu=rng.uniform(0, 1), mem=rng.uniform(0, 0.8),
                            ready=rng.choice([desired, max(0, desired - 1)]), desired=desired,
                            deployed=rng.random() > 0.05))
        report = slo_check({"catalogue": rows}, 0, n)
        svc = report.service("catalogue")
        want = oracle(rows)
        assert {d: svc.dimension(d) for d in want} == want
        assert report.healthy == all(want.values())


def test_boundaries():
    at = [row(t, cpu=0.5, mem=0.5, p99=199.99) for t in range(10)]
    assert slo_check({"catalogue": at}, 0, 10).healthy
    over = [row(t, p99=200.0) for t in range(10)]
    assert not slo_check({"catalogue": over}, 0, 10).service("catalogue").p99_ok


def test_unstable_latency_fails_even_with_low_mean():
    rows = [row(t, p99=10.0 if t % 2 else 150.0) for t in range(20)]
    svc = slo_check({"catalogue": rows}, 0, 20).service("catalogue")
    assert svc.p99_mean_ms < 200 and not svc.p99_ok


def test_insufficient_history():
    rows = [row(t) for t in range(10)]
    with pytest.raises(InsufficientHistory):
        window_rows(rows, 5, 20)
    with pytest.raises(InsufficientHistory):
        window_rows(rows, 3, 4)
    with pytest.raises(InsufficientHistory):
        slo_check({"catalogue": rows}, 0, 10, services=["front-end"])


def test_slo_set_validation():
    with pytest.raises(ValueError):
        SloSet(p99_mean_max_ms=0)
    with pytest.raises(ValueError):
        SloSet(window_ticks=1)


def _simulated(level):
    cl = sock_shop().build()
    cl.set_traffic("catalogue", TrafficProfile.for_service("catalogue", level))
    cl.advance(180)
    return slo_check(cl.history, 120, 180, services=["catalogue"])


def test_idle_cluster_is_healthy():
    assert _simulated("Off").healthy


def test_heavy_catalogue_is_unhealthy_on_latency():
    svc = _simulated("Heavy").service("catalogue")
    # 360 ms model latency is over the 200 ms bound
    assert svc.ready and not svc.p99_ok and not svc.healthy
    assert svc.p99_mean_ms == pytest.approx(360.0)


def test_default_window():
    assert DEFAULT_SLO.window_ticks == 60
