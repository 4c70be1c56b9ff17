"""Domain types and the closed-form load model of the simulated cluster."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

from acvbench.errors import InvalidSpec

READINESS_DELAY = 10
CRASH_INTERVAL = 30
HPA_SYNC_PERIOD = 15
HPA_COOLDOWN = 30
MAX_REPLICAS = 20
SATURATION_RHO = 0.98
SATURATED_P99_MS = 5000.0
STRESSED_CAPACITY_FACTOR = 0.1
CPU_LOAD_FACTOR = 0.8
CPU_RHO_CAP = 1.25
FANOUT_FRACTION = 0.6
LOG_RING_SIZE = 200
IMAGE_REPO = "weaveworksdemos"


class TrafficLevel(str, enum.Enum):
    LIGHT = "Light"
    MODERATE = "Moderate"
    HEAVY = "Heavy"
    RISING = "Rising"
    OFF = "Off"


class FaultKind(str, enum.Enum):
    POD_FAILURE = "PodFailure"
    CPU_STRESS = "CpuStress"
    RISING_TRAFFIC = "RisingTraffic"

    @property
    def root_cause(self) -> str:
        return _ROOT_CAUSES[self]

    @classmethod
    def from_root_cause(cls, label: str) -> "FaultKind":
        for kind, rc in _ROOT_CAUSES.items():
            if rc == label:
                return kind
        raise ValueError(f"unknown root cause label {label!r}")


_ROOT_CAUSES = {
    FaultKind.POD_FAILURE: "pod_failure",
    FaultKind.CPU_STRESS: "cpu_stress",
    FaultKind.RISING_TRAFFIC: "rising_traffic",
}

# (users, spawn rate) per service and level; services not listed use the catalogue row
TRAFFIC_TABLE = {
    "catalogue": {
        TrafficLevel.LIGHT: (20, 20.0),
        TrafficLevel.MODERATE: (50, 50.0),
        TrafficLevel.HEAVY: (80, 80.0),
        TrafficLevel.RISING: (100, 1.0),
    },
    "front-end": {
        TrafficLevel.LIGHT: (20, 20.0),
        TrafficLevel.MODERATE: (40, 40.0),
        TrafficLevel.HEAVY: (80, 80.0),
        TrafficLevel.RISING: (100, 1.0),
    },
}


@dataclass(frozen=True)
class ServiceSpec:
    name: str
    namespace: str = "sock-shop"
    container: str = ""
    valid_images: tuple = ("0.3.4", "0.3.5", "0.3.6")
    default_image: str = "0.3.6"
    base_latency_ms: float = 40.0
    per_replica_capacity_rps: float = 100.0
    cpu_limit_millicores: int = 300
    cpu_request_millicores: int = 100
    mem_limit_mib: int = 300
    mem_base_mib: int = 100
    env: tuple = ()
    deploy_manifest_path: str = ""
    service_manifest_path: str = ""
    downstream: tuple = ()
    upstream: tuple = ()
    description: str = ""
    default_replicas: int = 1
    route: str = ""

    def __post_init__(self):
        if not self.route:
            object.__setattr__(self, "route", f"/{self.name}")
        if not self.container:
            object.__setattr__(self, "container", self.name)
        if not self.deploy_manifest_path:
            object.__setattr__(self, "deploy_manifest_path", f"/manifests/{self.name}-dep.yaml")
        if not self.service_manifest_path:
            object.__setattr__(self, "service_manifest_path", f"/manifests/{self.name}-svc.yaml")

    def validate(self) -> None:
        if self.per_replica_capacity_rps <= 0:
            raise InvalidSpec(f"{self.name}: per_replica_capacity_rps must be > 0")
        if self.cpu_request_millicores > self.cpu_limit_millicores:
            raise InvalidSpec(f"{self.name}: cpu request exceeds limit")
        if self.default_image not in self.valid_images:
            raise InvalidSpec(f"{self.name}: default image {self.default_image} is not a valid image")

    @property
    def env_map(self) -> dict:
        return dict(self.env)

    def image_ref(self, version: str) -> str:
        return f"{IMAGE_REPO}/{self.name}:{version}"


def catalogue_spec(**overrides) -> ServiceSpec:
    base = ServiceSpec(
        name="catalogue",
        description="Catalogue service of the sock shop; serves the product listing.",
        upstream=("front-end",),
    )
    return replace(base, **overrides)


def front_end_spec(**overrides) -> ServiceSpec:
    base = ServiceSpec(
        name="front-end",
        base_latency_ms=60.0,
        per_replica_capacity_rps=80.0,
        route="/",
        description="Front-end web service of the sock shop; forwards product requests to catalogue.",
        downstream=("catalogue",),
    )
    return replace(base, **overrides)


@dataclass(frozen=True)
class TrafficProfile:
    level: TrafficLevel
    target_users: int
    spawn_rate: float
    requests_per_user_per_sec: float = 1.0
    started_tick: int = 0

    def __post_init__(self):
        if self.level == TrafficLevel.RISING and not self.spawn_rate < self.target_users:
            raise InvalidSpec("rising traffic requires spawn_rate < target_users")

    @classmethod
    def for_service(cls, service: str, level, started_tick: int = 0) -> "TrafficProfile":
        level = TrafficLevel(level)
        if level == TrafficLevel.OFF:
            return cls(level, 0, 0.0, started_tick=started_tick)
        users, rate = TRAFFIC_TABLE.get(service, TRAFFIC_TABLE["catalogue"])[level]
        return cls(level, users, rate, started_tick=started_tick)

    def users_at(self, tick: int) -> float:
        if self.level == TrafficLevel.OFF:
            return 0.0
        if self.level == TrafficLevel.RISING:
            elapsed = max(0, tick - self.started_tick)
            return float(min(self.target_users, self.spawn_rate * elapsed))
        return float(self.target_users)


@dataclass
class FaultSpec:
    kind: FaultKind
    target: str
    injected_at_tick: int = 0
    bound_pods: tuple = ()
    fake_image: str = "fake-0.0.1"
    active: bool = True

    def __post_init__(self):
        self.kind = FaultKind(self.kind)
        self.bound_pods = tuple(self.bound_pods)


@dataclass
class HpaSpec:
    target: str
    min_replicas: int
    max_replicas: int
    cpu_percent_target: int
    created_tick: int = 0
    last_action_tick: Optional[int] = None

    def validate(self) -> None:
        if not (1 <= self.min_replicas < self.max_replicas):
            raise InvalidSpec("hpa requires 1 <= min < max")
        if self.max_replicas > MAX_REPLICAS:
            raise InvalidSpec(f"hpa max replicas above {MAX_REPLICAS}")
        if not (1 <= self.cpu_percent_target <= 100):
            raise InvalidSpec("hpa cpu target must be within [1, 100]")


@dataclass
class PodState:
    pod_name: str
    owner: str
    image: str
    ready: bool = False
    created_at_tick: int = 0
    restarts: int = 0
    cpu_used_millicores: float = 0.0
    mem_used_mib: float = 0.0
    stressed: bool = False
    recent_logs: list = field(default_factory=list)

    def log(self, line: str) -> None:
        self.recent_logs.append(line)
        if len(self.recent_logs) > LOG_RING_SIZE:
            del self.recent_logs[: len(self.recent_logs) - LOG_RING_SIZE]


# -- load model ---------------------------------------------------------------

def effective_capacity(per_replica_rps: float, ready_unstressed: int, ready_stressed: int) -> float:
    return per_replica_rps * ready_unstressed + STRESSED_CAPACITY_FACTOR * per_replica_rps * ready_stressed


def utilization(arrival_rps: float, capacity_rps: float) -> float:
    if arrival_rps <= 0:
        return 0.0
    if capacity_rps <= 0:
        return math.inf
    return arrival_rps / capacity_rps


def p99_model_ms(base_latency_ms: float, rho: float) -> float:
    """Congestion curve for tail latency; saturates once the service is near overload."""
    if rho < SATURATION_RHO:
        return base_latency_ms * (1.0 + 2.0 * rho / (1.0 - rho))
    return SATURATED_P99_MS


def cpu_used_millicores(cpu_limit: float, rho: float) -> float:
    return min(cpu_limit, cpu_limit * CPU_LOAD_FACTOR * min(rho, CPU_RHO_CAP))
