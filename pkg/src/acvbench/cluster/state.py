"""Immutable snapshot values of the simulated cluster."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


@dataclass(frozen=True)
class DeploymentState:
    name: str
    namespace: str
    replicas: int
    ready_replicas: int
    image: str
    env: tuple
    cpu_request: int
    cpu_limit: int
    mem_request: int
    mem_limit: int
    created_tick: int
    revision: int
    history_depth: int

    @property
    def env_map(self) -> dict:
        return dict(self.env)


@dataclass(frozen=True)
class PodSnapshot:
    pod_name: str
    owner: str
    image: str
    ready: bool
    status: str
    created_at_tick: int
    restarts: int
    cpu_used_millicores: float
    mem_used_mib: float
    stressed: bool
    recent_logs: tuple


@dataclass(frozen=True)
class HpaState:
    target: str
    min_replicas: int
    max_replicas: int
    cpu_percent_target: int
    created_tick: int
    last_action_tick: Optional[int]


@dataclass(frozen=True)
class FaultState:
    kind: str
    target: str
    injected_at_tick: int
    bound_pods: tuple
    fake_image: str
    active: bool


@dataclass(frozen=True)
class TrafficState:
    service: str
    level: str
    target_users: int
    spawn_rate: float
    requests_per_user_per_sec: float
    started_tick: int


@dataclass(frozen=True)
class ServiceLoad:
    service: str
    users: float
    arrival_rps: float
    capacity_rps: float
    rho: float
    p99_ms: float


_PARTS = {
    "deployments": DeploymentState,
    "pods": PodSnapshot,
    "hpas": HpaState,
    "faults": FaultState,
    "traffic": TrafficState,
    "loads": ServiceLoad,
}


@dataclass(frozen=True)
class ClusterState:
    tick: int
    namespace: str
    deployments: tuple = ()
    pods: tuple = ()
    hpas: tuple = ()
    faults: tuple = ()
    traffic: tuple = ()
    loads: tuple = ()

    def deployment(self, name: str) -> Optional[DeploymentState]:
        for d in self.deployments:
            if d.name == name:
                return d
        return None

    def pods_of(self, name: str) -> list[PodSnapshot]:
        return [p for p in self.pods if p.owner == name]

    def hpa(self, name: str) -> Optional[HpaState]:
        for h in self.hpas:
            if h.target == name:
                return h
        return None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ClusterState":
        parts = {
            key: tuple(kind(**{k: _tuplify(v) for k, v in item.items()}) for item in data.get(key, ()))
            for key, kind in _PARTS.items()
        }
        return cls(tick=data["tick"], namespace=data["namespace"], **parts)

    @classmethod
    def from_json(cls, text: str) -> "ClusterState":
        return cls.from_dict(json.loads(text))
