"""Deterministic, 1 s per tick simulation of a sock-shop style cluster.

All mutations go through :class:`Cluster` methods, which hold a single lock;
``snapshot()`` hands out immutable :class:`ClusterState` values.
"""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from acvbench.cluster import model as m
from acvbench.cluster.manifests import (
    FileStore,
    parse_manifest,
    render_deployment_manifest,
    render_service_manifest,
)
from acvbench.cluster.model import (
    FaultKind,
    FaultSpec,
    HpaSpec,
    PodState,
    ServiceSpec,
    TrafficLevel,
    TrafficProfile,
)
from acvbench.cluster.state import (
    ClusterState,
    DeploymentState,
    FaultState,
    HpaState,
    PodSnapshot,
    ServiceLoad,
    TrafficState,
)
from acvbench.errors import (
    ClusterError,
    DuplicateDeployment,
    FaultAlreadyActive,
    InvalidSpec,
    ManifestError,
    NotFound,
    ReplicaBoundExceeded,
)
from acvbench.metrics.store import MetricStore, Sample

BUCKET_BOUNDS = (0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, float("inf"))
# (fraction of requests, latency as a multiple of the modelled P99)
LATENCY_MIX = ((0.98, 0.4), (0.015, 0.9), (0.005, 1.1))
SCRAPE_LATENCY_S = 0.003
COUNT_METRIC = "request_duration_seconds_count"
BUCKET_METRIC = "request_duration_seconds_bucket"


def format_le(bound: float) -> str:
    if bound == float("inf"):
        return "+Inf"
    return repr(bound)


def cumulative_fractions(p99_ms: float) -> list[float]:
    """Fraction of synthesized requests at or below each bucket bound."""
    out = []
    for bound in BUCKET_BOUNDS:
        out.append(sum(frac for frac, mult in LATENCY_MIX if mult * p99_ms / 1000.0 <= bound))
    return out


@dataclass(frozen=True)
class ServiceTick:
    """One per-service row of the simulator's ground-truth history."""

    tick: int
    service: str
    users: float
    arrival_rps: float
    capacity_rps: float
    rho: float
    p99_ms: float
    desired_replicas: int
    ready_pods: int
    total_pods: int
    stressed_pods: int
    cpu_mean_millicores: float
    cpu_mean_fraction: float
    cpu_max_fraction: float
    mem_max_fraction: float
    deployed: bool


@dataclass
class _Template:
    image: str
    env: dict
    cpu_request: int
    cpu_limit: int
    mem_request: int
    mem_limit: int

    def copy(self) -> "_Template":
        return replace(self, env=dict(self.env))

    def digest(self, revision: int) -> str:
        text = f"{self.image}|{sorted(self.env.items())}|{self.cpu_request}|{self.cpu_limit}|{self.mem_request}|{self.mem_limit}|{revision}"
        return hashlib.sha1(text.encode()).hexdigest()[:10]


class _Deployment:
    def __init__(self, spec: ServiceSpec, replicas: int, template: _Template, tick: int):
        self.spec = spec
        self.replicas = replicas
        self.template = template
        self.history: list[_Template] = []
        self.created_tick = tick
        self.revision = 1
        self.pods: list[PodState] = []
        self.pod_counter = 0


class Cluster:
    def __init__(
        self,
        services: Iterable[ServiceSpec],
        namespace: str = "sock-shop",
        store: Optional[MetricStore] = None,
        readiness_delay: int = m.READINESS_DELAY,
        crash_interval: int = m.CRASH_INTERVAL,
    ):
        self.namespace = namespace
        self.readiness_delay = readiness_delay
        self.crash_interval = crash_interval
        self.store = store if store is not None else MetricStore()
        self.files = FileStore()
        self.services: dict[str, ServiceSpec] = {}
        self._deployments: dict[str, _Deployment] = {}
        self._hpas: dict[str, HpaSpec] = {}
        self._traffic: dict[str, TrafficProfile] = {}
        self._traffic_before_fault: dict[str, TrafficProfile] = {}
        self.faults: list[FaultSpec] = []
        self.history: dict[str, list[ServiceTick]] = {}
        self.mutations: list[tuple[int, str, str, str]] = []
        self._schedule: list[tuple[int, FaultSpec]] = []
        self._counters: dict[tuple, float] = {}
        self._lock = threading.RLock()
        self.tick_count = 0
        for spec in services:
            self.register_service(spec)

    # -- registry -----------------------------------------------------------

    def register_service(self, spec: ServiceSpec) -> None:
        spec.validate()
        if spec.namespace != self.namespace:
            spec = replace(spec, namespace=self.namespace)
        self.services[spec.name] = spec
        self.history.setdefault(spec.name, [])
        self._traffic.setdefault(spec.name, TrafficProfile.for_service(spec.name, TrafficLevel.OFF))
        self.files.write(
            spec.deploy_manifest_path,
            render_deployment_manifest(spec, spec.default_replicas, spec.default_image, spec.env_map),
        )
        self.files.write(spec.service_manifest_path, render_service_manifest(spec))

    def _spec(self, name: str) -> ServiceSpec:
        try:
            return self.services[name]
        except KeyError:
            raise NotFound(f'services "{name}" not found') from None

    def _deployment(self, name: str, namespace: Optional[str] = None) -> _Deployment:
        if namespace is not None and namespace != self.namespace:
            raise NotFound(f'deployments.apps "{name}" not found')
        try:
            return self._deployments[name]
        except KeyError:
            raise NotFound(f'deployments.apps "{name}" not found') from None

    def has_deployment(self, name: str) -> bool:
        return name in self._deployments

    def _record(self, actor: str, op: str, target: str) -> None:
        self.mutations.append((self.tick_count, actor, op, target))

    def mutation_count(self, actor: str) -> int:
        return sum(1 for _, a, _, _ in self.mutations if a == actor)

    # -- pods ---------------------------------------------------------------

    def _new_pod(self, dep: _Deployment, restarts: int = 0) -> PodState:
        dep.pod_counter += 1
        seed = f"{dep.spec.name}|{dep.revision}|{dep.pod_counter}".encode()
        suffix = "".join("bcdfghjklmnpqrstvwxz2456789"[b % 27] for b in hashlib.sha1(seed).digest()[:5])
        pod = PodState(
            pod_name=f"{dep.spec.name}-{dep.template.digest(dep.revision)}-{suffix}",
            owner=dep.spec.name,
            image=dep.template.image,
            created_at_tick=self.tick_count,
            restarts=restarts,
            mem_used_mib=0.0,
        )
        return pod

    def _viable(self, dep: _Deployment, pod: PodState) -> bool:
        return pod.image in dep.spec.valid_images and dep.template.mem_limit >= dep.spec.mem_base_mib

    def _recreate_pods(self, dep: _Deployment) -> None:
        dep.revision += 1
        dep.pods = [self._new_pod(dep) for _ in range(dep.replicas)]

    def _converge_replicas(self, dep: _Deployment) -> None:
        if len(dep.pods) > dep.replicas:
            # newest pods go first, matching the controller's preference for unready pods
            dep.pods.sort(key=lambda p: (p.ready, -p.created_at_tick), reverse=True)
            del dep.pods[dep.replicas:]
            dep.pods.sort(key=lambda p: (p.created_at_tick, p.pod_name))
        while len(dep.pods) < dep.replicas:
            dep.pods.append(self._new_pod(dep))

    # -- operations ---------------------------------------------------------

    def create_deployment(self, spec: ServiceSpec, replicas: Optional[int] = None, actor: str = "operator",
                          template: Optional[_Template] = None) -> DeploymentState:
        with self._lock:
            spec.validate()
            if spec.name in self._deployments:
                raise DuplicateDeployment(f'deployments.apps "{spec.name}" already exists')
            replicas = spec.default_replicas if replicas is None else replicas
            if not 0 <= replicas <= m.MAX_REPLICAS:
                raise ReplicaBoundExceeded(f"replicas must be within [0, {m.MAX_REPLICAS}]")
            if spec.name not in self.services:
                self.register_service(spec)
            spec = self.services[spec.name] if spec.namespace != self.namespace else spec
            self.services[spec.name] = spec
            template = template or _Template(
                image=spec.default_image,
                env=spec.env_map,
                cpu_request=spec.cpu_request_millicores,
                cpu_limit=spec.cpu_limit_millicores,
                mem_request=spec.mem_base_mib,
                mem_limit=spec.mem_limit_mib,
            )
            dep = _Deployment(spec, replicas, template, self.tick_count)
            self._deployments[spec.name] = dep
            dep.pods = [self._new_pod(dep) for _ in range(replicas)]
            self._record(actor, "create", spec.name)
            return self._deployment_state(dep)

    def delete_deployment(self, name: str, actor: str = "operator") -> None:
        with self._lock:
            self._deployment(name)
            del self._deployments[name]
            self._hpas.pop(name, None)
            self._record(actor, "delete", name)

    def scale(self, name: str, replicas: int, namespace: Optional[str] = None, actor: str = "operator") -> None:
        with self._lock:
            dep = self._deployment(name, namespace)
            if not 0 <= replicas <= m.MAX_REPLICAS:
                raise ReplicaBoundExceeded(f"replicas must be within [0, {m.MAX_REPLICAS}]")
            dep.replicas = replicas
            self._converge_replicas(dep)
            self._record(actor, "scale", name)

    def _change_template(self, dep: _Deployment, new: _Template) -> None:
        dep.history.append(dep.template)
        dep.template = new
        self._recreate_pods(dep)

    def set_image(self, name: str, image: str, namespace: Optional[str] = None, actor: str = "operator") -> None:
        with self._lock:
            dep = self._deployment(name, namespace)
            new = dep.template.copy()
            new.image = image
            self._change_template(dep, new)
            self._record(actor, "set_image", name)

    def set_env(self, name: str, key: str, value: str, namespace: Optional[str] = None,
                actor: str = "operator") -> None:
        """Update one env var; pods restart in place even when the value is unchanged."""
        with self._lock:
            dep = self._deployment(name, namespace)
            new = dep.template.copy()
            new.env[key] = value
            dep.history.append(dep.template)
            dep.template = new
            for pod in dep.pods:
                pod.restarts += 1
                pod.created_at_tick = self.tick_count
                pod.ready = False
                pod.stressed = False
                pod.image = new.image
                pod.log(f"level=info msg=\"restarting container after spec change\" env={key}")
            self._record(actor, "set_env", name)

    def set_resources(self, name: str, limits: Optional[dict] = None, requests: Optional[dict] = None,
                      namespace: Optional[str] = None, actor: str = "operator") -> None:
        with self._lock:
            dep = self._deployment(name, namespace)
            new = dep.template.copy()
            limits = limits or {}
            requests = requests or {}
            new.cpu_limit = limits.get("cpu", new.cpu_limit)
            new.mem_limit = limits.get("memory", new.mem_limit)
            new.cpu_request = requests.get("cpu", new.cpu_request)
            new.mem_request = requests.get("memory", new.mem_request)
            if new.cpu_request > new.cpu_limit:
                raise InvalidSpec(
                    f"Deployment.apps \"{name}\" is invalid: spec.template.spec.containers[0].resources.requests: "
                    f"Invalid value: \"{new.cpu_request}m\": must be less than or equal to cpu limit"
                )
            if new.mem_request > new.mem_limit:
                raise InvalidSpec(
                    f"Deployment.apps \"{name}\" is invalid: spec.template.spec.containers[0].resources.requests: "
                    f"Invalid value: \"{new.mem_request}Mi\": must be less than or equal to memory limit"
                )
            self._change_template(dep, new)
            self._record(actor, "set_resources", name)

    def restart_pods(self, name: str, namespace: Optional[str] = None, actor: str = "operator") -> None:
        with self._lock:
            dep = self._deployment(name, namespace)
            self._recreate_pods(dep)
            self._record(actor, "restart", name)

    def rollout_undo(self, name: str, namespace: Optional[str] = None, actor: str = "operator") -> None:
        with self._lock:
            dep = self._deployment(name, namespace)
            if not dep.history:
                raise ClusterError(f'no rollout history found for deployment "{name}"')
            dep.template = dep.history.pop()
            self._recreate_pods(dep)
            self._record(actor, "rollout_undo", name)

    def delete_pod(self, pod_name: str, namespace: Optional[str] = None, actor: str = "operator") -> None:
        with self._lock:
            if namespace is not None and namespace != self.namespace:
                raise NotFound(f'pods "{pod_name}" not found')
            for dep in self._deployments.values():
                for i, pod in enumerate(dep.pods):
                    if pod.pod_name == pod_name:
                        del dep.pods[i]
                        dep.pods.append(self._new_pod(dep))
                        self._record(actor, "delete_pod", dep.spec.name)
                        return
            raise NotFound(f'pods "{pod_name}" not found')

    def autoscale(self, name: str, min_replicas: int, max_replicas: int, cpu_percent: int,
                  namespace: Optional[str] = None, actor: str = "operator") -> None:
        with self._lock:
            self._deployment(name, namespace)
            if name in self._hpas:
                raise ClusterError(f'horizontalpodautoscalers.autoscaling "{name}" already exists')
            hpa = HpaSpec(name, min_replicas, max_replicas, cpu_percent, created_tick=self.tick_count)
            hpa.validate()
            self._hpas[name] = hpa
            self._record(actor, "autoscale", name)

    def apply_manifest(self, path: str, actor: str = "operator") -> str:
        """Create or update a deployment from a manifest file; returns kubectl-style text."""
        with self._lock:
            doc = parse_manifest(self.files.read(path))
            if doc.namespace is not None and doc.namespace != self.namespace:
                raise ManifestError(f'namespace "{doc.namespace}" not found')
            if doc.kind == "Service":
                self._spec(doc.name)
                return f"service/{doc.name} unchanged"
            spec = self.services.get(doc.name) or ServiceSpec(name=doc.name, namespace=self.namespace)
            if doc.image is not None and doc.image not in spec.valid_images:
                # an unknown tag is accepted by the API server; pods simply never start
                pass
            template = _Template(
                image=doc.image if doc.image is not None else spec.default_image,
                env=dict(doc.env),
                cpu_request=doc.cpu_request if doc.cpu_request is not None else spec.cpu_request_millicores,
                cpu_limit=doc.cpu_limit if doc.cpu_limit is not None else spec.cpu_limit_millicores,
                mem_request=doc.mem_request if doc.mem_request is not None else spec.mem_base_mib,
                mem_limit=doc.mem_limit if doc.mem_limit is not None else spec.mem_limit_mib,
            )
            if template.cpu_request > template.cpu_limit:
                raise InvalidSpec("resources.requests.cpu must be less than or equal to cpu limit")
            replicas = doc.replicas if doc.replicas is not None else spec.default_replicas
            if not 0 <= replicas <= m.MAX_REPLICAS:
                raise ReplicaBoundExceeded(f"replicas must be within [0, {m.MAX_REPLICAS}]")
            dep = self._deployments.get(doc.name)
            if dep is None:
                self.create_deployment(spec, replicas, actor=actor, template=template)
                return f"deployment.apps/{doc.name} created"
            changed = template != dep.template
            if not changed and replicas == dep.replicas:
                return f"deployment.apps/{doc.name} unchanged"
            dep.replicas = replicas
            if changed:
                self._change_template(dep, template)
            else:
                self._converge_replicas(dep)
            self._record(actor, "apply", doc.name)
            return f"deployment.apps/{doc.name} configured"

    def set_traffic(self, service: str, profile: TrafficProfile, actor: str = "operator") -> None:
        with self._lock:
            self._spec(service)
            if profile.level == TrafficLevel.RISING and profile.started_tick != self.tick_count:
                profile = replace(profile, started_tick=self.tick_count)
            self._traffic[service] = profile

    def traffic(self, service: str) -> TrafficProfile:
        return self._traffic[service]

    def logs(self, pod_name: str, tail: int = 20, namespace: Optional[str] = None) -> list[str]:
        with self._lock:
            if namespace is not None and namespace != self.namespace:
                raise NotFound(f'pods "{pod_name}" not found')
            for dep in self._deployments.values():
                for pod in dep.pods:
                    if pod.pod_name == pod_name:
                        return list(pod.recent_logs[-tail:]) if tail > 0 else []
            raise NotFound(f'pods "{pod_name}" not found')

    # -- faults -------------------------------------------------------------

    def inject_fault(self, fault: FaultSpec, actor: str = "chaos") -> FaultSpec:
        with self._lock:
            self._spec(fault.target)
            if any(f.active for f in self.faults):
                raise FaultAlreadyActive("a fault is already active in this scenario")
            fault.injected_at_tick = self.tick_count
            if fault.kind == FaultKind.POD_FAILURE:
                dep = self._deployment(fault.target)
                if fault.fake_image in dep.spec.valid_images:
                    raise InvalidSpec("fake image must not be a valid image")
                self.set_image(fault.target, fault.fake_image, actor=actor)
            elif fault.kind == FaultKind.CPU_STRESS:
                dep = self._deployment(fault.target)
                for pod in dep.pods:
                    pod.stressed = True
                fault.bound_pods = tuple(p.pod_name for p in dep.pods)
            elif fault.kind == FaultKind.RISING_TRAFFIC:
                self._traffic_before_fault[fault.target] = self._traffic[fault.target]
                rising = TrafficProfile.for_service(fault.target, TrafficLevel.RISING, self.tick_count)
                self._traffic[fault.target] = rising
            fault.active = True
            self.faults.append(fault)
            self._record(actor, f"inject_{fault.kind.value}", fault.target)
            return fault

    def schedule_fault(self, at_tick: int, fault: FaultSpec) -> None:
        self._schedule.append((at_tick, fault))
        self._schedule.sort(key=lambda item: item[0])

    def clear_fault(self, kind, actor: str = "chaos") -> None:
        kind = FaultKind(kind)
        with self._lock:
            for fault in self.faults:
                if fault.kind != kind or not fault.active:
                    continue
                if kind == FaultKind.POD_FAILURE:
                    dep = self._deployments.get(fault.target)
                    if dep is not None and dep.template.image == fault.fake_image:
                        self.rollout_undo(fault.target, actor=actor)
                elif kind == FaultKind.CPU_STRESS:
                    dep = self._deployments.get(fault.target)
                    for pod in dep.pods if dep else ():
                        if pod.pod_name in fault.bound_pods:
                            pod.stressed = False
                elif kind == FaultKind.RISING_TRAFFIC:
                    prev = self._traffic_before_fault.pop(fault.target, None)
                    self._traffic[fault.target] = prev or TrafficProfile.for_service(fault.target, TrafficLevel.OFF)
                fault.active = False
                self._record(actor, f"clear_{kind.value}", fault.target)

    def _fault_still_active(self, fault: FaultSpec) -> bool:
        dep = self._deployments.get(fault.target)
        if fault.kind == FaultKind.POD_FAILURE:
            return dep is not None and dep.template.image == fault.fake_image
        if fault.kind == FaultKind.CPU_STRESS:
            return dep is not None and any(p.stressed and p.pod_name in fault.bound_pods for p in dep.pods)
        return self._traffic[fault.target].level == TrafficLevel.RISING

    # -- time ---------------------------------------------------------------

    def tick(self, n: int = 1) -> ClusterState:
        if n < 1:
            raise ValueError("tick count must be >= 1")
        with self._lock:
            for _ in range(n):
                self._step()
            return self.snapshot()

    def advance(self, n: int) -> None:
        """Advance without materialising a snapshot."""
        with self._lock:
            for _ in range(n):
                self._step()

    def _step(self) -> None:
        self.tick_count += 1
        now = self.tick_count
        while self._schedule and self._schedule[0][0] <= now:
            _, fault = self._schedule.pop(0)
            self.inject_fault(fault)

        for dep in self._deployments.values():
            self._pod_transitions(dep, now)

        own = {name: self._traffic[name].users_at(now) * self._traffic[name].requests_per_user_per_sec
               for name in self.services}
        arrivals: dict[str, float] = {}

        def arrival(name: str, seen=()) -> float:
            if name in arrivals:
                return arrivals[name]
            total = own[name]
            for up_name, up in self.services.items():
                if name in up.downstream and up_name not in seen:
                    total += m.FANOUT_FRACTION * arrival(up_name, seen + (name,))
            arrivals[name] = total
            return total

        for name in sorted(self.services):
            lam = arrival(name)
            self._load_service(name, lam, self._traffic[name].users_at(now), now)

        for fault in self.faults:
            if fault.active and not self._fault_still_active(fault):
                fault.active = False

    def _pod_transitions(self, dep: _Deployment, now: int) -> None:
        for pod in dep.pods:
            age = now - pod.created_at_tick
            if self._viable(dep, pod):
                if not pod.ready and age >= self.readiness_delay:
                    pod.ready = True
                    pod.log(f"level=info msg=\"service {dep.spec.name} listening\" port=80 version={pod.image}")
                continue
            pod.ready = False
            if age >= self.readiness_delay and (age - self.readiness_delay) % self.crash_interval == 0:
                pod.restarts += 1
                if pod.image not in dep.spec.valid_images:
                    ref = dep.spec.image_ref(pod.image)
                    pod.log(f"Error: failed to start container \"{dep.spec.container}\": image {ref} is not functional")
                    pod.log("exec /app: exec format error")
                else:
                    pod.log(f"fatal: container {dep.spec.container} OOMKilled (memory limit {dep.template.mem_limit}Mi)")

    def _load_service(self, name: str, lam: float, users: float, now: int) -> None:
        spec = self.services[name]
        dep = self._deployments.get(name)
        pods = dep.pods if dep else []
        ready = [p for p in pods if p.ready]
        stressed_ready = sum(1 for p in ready if p.stressed)
        capacity = m.effective_capacity(spec.per_replica_capacity_rps, len(ready) - stressed_ready, stressed_ready)
        rho = m.utilization(lam, capacity)
        p99 = m.p99_model_ms(spec.base_latency_ms, rho)
        cpu_limit = dep.template.cpu_limit if dep else spec.cpu_limit_millicores
        mem_limit = dep.template.mem_limit if dep else spec.mem_limit_mib
        for pod in pods:
            if pod.stressed:
                pod.cpu_used_millicores = float(cpu_limit)
            elif pod.ready:
                pod.cpu_used_millicores = m.cpu_used_millicores(cpu_limit, rho)
            else:
                pod.cpu_used_millicores = 0.0
            pod.mem_used_mib = float(spec.mem_base_mib) if pod.ready else 0.0
        active = [p for p in pods if p.ready or p.stressed]
        cpu_fracs = [p.cpu_used_millicores / cpu_limit for p in active] if cpu_limit else []
        cpu_mean = sum(p.cpu_used_millicores for p in active) / len(active) if active else 0.0
        if dep is not None and name in self._hpas:
            self._run_hpa(self._hpas[name], dep, now)
        self._emit_metrics(spec, lam, capacity, p99, len(ready), now)
        self.history[name].append(ServiceTick(
            tick=now,
            service=name,
            users=users,
            arrival_rps=lam,
            capacity_rps=capacity,
            rho=rho,
            p99_ms=p99,
            desired_replicas=dep.replicas if dep else 0,
            ready_pods=len(ready),
            total_pods=len(pods),
            stressed_pods=sum(1 for p in pods if p.stressed),
            cpu_mean_millicores=cpu_mean,
            cpu_mean_fraction=sum(cpu_fracs) / len(cpu_fracs) if cpu_fracs else 0.0,
            cpu_max_fraction=max(cpu_fracs) if cpu_fracs else 0.0,
            mem_max_fraction=max((p.mem_used_mib / mem_limit for p in active), default=0.0) if mem_limit else 0.0,
            deployed=dep is not None,
        ))
        if ready and now % 15 == 0:
            for pod in ready:
                pod.log(f"method=Get path={spec.route} took={p99 * 0.4:.1f}ms err=null")

    def _run_hpa(self, hpa: HpaSpec, dep: _Deployment, now: int) -> None:
        elapsed = now - hpa.created_tick
        if elapsed <= 0 or elapsed % m.HPA_SYNC_PERIOD:
            return
        if dep.replicas < hpa.min_replicas or dep.replicas > hpa.max_replicas:
            dep.replicas = min(max(dep.replicas, hpa.min_replicas), hpa.max_replicas)
            self._converge_replicas(dep)
            hpa.last_action_tick = now
            self._record("hpa", "scale", dep.spec.name)
            return
        if hpa.last_action_tick is not None and now - hpa.last_action_tick < m.HPA_COOLDOWN:
            return
        ready = [p for p in dep.pods if p.ready]
        if not ready or dep.template.cpu_request <= 0:
            return
        usage = 100.0 * sum(p.cpu_used_millicores for p in ready) / len(ready) / dep.template.cpu_request
        capped = any(p.cpu_used_millicores >= dep.template.cpu_limit for p in ready)
        n = len(ready)
        target = dep.replicas
        if usage > hpa.cpu_percent_target and dep.replicas < hpa.max_replicas:
            target = dep.replicas + 1
        elif (dep.replicas > hpa.min_replicas and n > 1 and not capped
              and usage * n / (n - 1) <= hpa.cpu_percent_target):
            target = dep.replicas - 1
        if target != dep.replicas:
            dep.replicas = target
            self._converge_replicas(dep)
            hpa.last_action_tick = now
            self._record("hpa", "scale", dep.spec.name)

    def _bump(self, metric: str, labels: tuple, inc: float, now: int) -> Sample:
        key = (metric, labels)
        value = self._counters.get(key, 0.0) + inc
        self._counters[key] = value
        return Sample(metric, dict(labels), now, value)

    def _emit_metrics(self, spec: ServiceSpec, lam: float, capacity: float, p99: float, ready: int,
                      now: int) -> None:
        ok = lam if capacity > 0 else 0.0
        failed = lam if capacity <= 0 else 0.0
        scrape = 1.0 if ready > 0 else 0.0
        fractions = cumulative_fractions(p99)
        scrape_fracs = [1.0 if SCRAPE_LATENCY_S <= b else 0.0 for b in BUCKET_BOUNDS]
        samples = []
        for code, route, rate, fracs in (
            ("200", spec.route, ok, fractions),
            ("500", spec.route, failed, fractions),
            ("200", "metrics", scrape, scrape_fracs),
        ):
            base = (("name", spec.name), ("route", route), ("status_code", code))
            samples.append(self._bump(COUNT_METRIC, base, rate, now))
            for bound, frac in zip(BUCKET_BOUNDS, fracs):
                labels = tuple(sorted(base + (("le", format_le(bound)),)))
                samples.append(self._bump(BUCKET_METRIC, labels, rate * frac, now))
        self.store.extend(samples)

    # -- views --------------------------------------------------------------

    def pod_status(self, pod: PodState) -> str:
        dep = self._deployments.get(pod.owner)
        if pod.ready:
            return "Running"
        if dep is not None and not self._viable(dep, pod) and pod.restarts >= 1:
            return "CrashLoopBackOff"
        return "ContainerCreating"

    def _deployment_state(self, dep: _Deployment) -> DeploymentState:
        t = dep.template
        return DeploymentState(
            name=dep.spec.name,
            namespace=self.namespace,
            replicas=dep.replicas,
            ready_replicas=sum(1 for p in dep.pods if p.ready),
            image=t.image,
            env=tuple(sorted(t.env.items())),
            cpu_request=t.cpu_request,
            cpu_limit=t.cpu_limit,
            mem_request=t.mem_request,
            mem_limit=t.mem_limit,
            created_tick=dep.created_tick,
            revision=dep.revision,
            history_depth=len(dep.history),
        )

    def snapshot(self) -> ClusterState:
        with self._lock:
            deps = [self._deployments[k] for k in sorted(self._deployments)]
            pods = []
            for dep in deps:
                for p in dep.pods:
                    pods.append(PodSnapshot(
                        pod_name=p.pod_name,
                        owner=p.owner,
                        image=p.image,
                        ready=p.ready,
                        status=self.pod_status(p),
                        created_at_tick=p.created_at_tick,
                        restarts=p.restarts,
                        cpu_used_millicores=p.cpu_used_millicores,
                        mem_used_mib=p.mem_used_mib,
                        stressed=p.stressed,
                        recent_logs=tuple(p.recent_logs),
                    ))
            loads = []
            for name in sorted(self.services):
                hist = self.history[name]
                if hist:
                    h = hist[-1]
                    loads.append(ServiceLoad(name, h.users, h.arrival_rps, h.capacity_rps, h.rho, h.p99_ms))
            return ClusterState(
                tick=self.tick_count,
                namespace=self.namespace,
                deployments=tuple(self._deployment_state(d) for d in deps),
                pods=tuple(pods),
                hpas=tuple(
                    HpaState(h.target, h.min_replicas, h.max_replicas, h.cpu_percent_target, h.created_tick,
                             h.last_action_tick)
                    for _, h in sorted(self._hpas.items())
                ),
                faults=tuple(
                    FaultState(f.kind.value, f.target, f.injected_at_tick, tuple(f.bound_pods), f.fake_image, f.active)
                    for f in self.faults
                ),
                traffic=tuple(
                    TrafficState(name, t.level.value, t.target_users, t.spawn_rate, t.requests_per_user_per_sec,
                                 t.started_tick)
                    for name, t in sorted(self._traffic.items())
                ),
                loads=tuple(loads),
            )

    def spec_of(self, name: str) -> ServiceSpec:
        return self._spec(name)

    def image_valid(self, name: str) -> bool:
        dep = self._deployment(name)
        return dep.template.image in dep.spec.valid_images

    def live_pods(self, name: str) -> list[PodState]:
        return list(self._deployment(name).pods)

    def manifest_cleared(self, fault: FaultSpec) -> bool:
        """True once the fault no longer manifests on the target."""
        with self._lock:
            dep = self._deployments.get(fault.target)
            if fault.kind == FaultKind.POD_FAILURE:
                return (dep is not None and dep.template.image in dep.spec.valid_images
                        and dep.replicas > 0 and all(p.ready for p in dep.pods))
            if fault.kind == FaultKind.CPU_STRESS:
                return dep is not None and not any(p.stressed for p in dep.pods)
            hist = self.history[fault.target]
            return bool(hist) and hist[-1].rho < m.SATURATION_RHO
