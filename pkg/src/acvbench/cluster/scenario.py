"""Scenario files: the services that exist with their overrides, plus initial traffic and scheduled faults.

Example::

    {
      "namespace": "sock-shop",
      "seed": 0,
      "services": [{"name": "catalogue"}, {"name": "front-end", "base_latency_ms": 60}],
      "deploy": ["catalogue", "front-end"],
      "traffic": {"catalogue": "Moderate"},
      "faults": [{"kind": "CpuStress", "target": "catalogue", "at_tick": 120}]
    }
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from acvbench.cluster.model import (
    FaultSpec,
    ServiceSpec,
    TrafficProfile,
    catalogue_spec,
    front_end_spec,
)
from acvbench.cluster.simulator import Cluster
from acvbench.errors import InvalidSpec

_BUILTIN = {"catalogue": catalogue_spec, "front-end": front_end_spec}
_SPEC_FIELDS = {f.name for f in fields(ServiceSpec)}
_TUPLE_FIELDS = {"valid_images", "downstream", "upstream"}


def service_from_dict(data: dict) -> ServiceSpec:
    data = dict(data)
    unknown = set(data) - _SPEC_FIELDS
    if unknown:
        raise InvalidSpec(f"unknown service fields: {', '.join(sorted(unknown))}")
    name = data.get("name")
    if not name:
        raise InvalidSpec("service requires a name")
    for key in _TUPLE_FIELDS & set(data):
        data[key] = tuple(data[key])
    if "env" in data:
        data["env"] = tuple(sorted(dict(data["env"]).items()))
    factory = _BUILTIN.get(name)
    if factory is not None:
        data.pop("name")
        spec = factory(**data)
    else:
        spec = ServiceSpec(**data)
    spec.validate()
    return spec


@dataclass
class Scenario:
    namespace: str = "sock-shop"
    seed: int = 0
    services: list = field(default_factory=list)
    deploy: list = field(default_factory=list)
    traffic: dict = field(default_factory=dict)
    faults: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        services = [service_from_dict(s) for s in data.get("services", [])]
        names = [s.name for s in services]
        if len(set(names)) != len(names):
            raise InvalidSpec("service names must be unique within a namespace")
        deploy = list(data.get("deploy", names))
        for name in deploy:
            if name not in names:
                raise InvalidSpec(f"cannot deploy unknown service {name!r}")
        faults = []
        for f in data.get("faults", []):
            faults.append((int(f.get("at_tick", 0)), FaultSpec(kind=f["kind"], target=f["target"])))
        return cls(
            namespace=data.get("namespace", "sock-shop"),
            seed=int(data.get("seed", 0)),
            services=services,
            deploy=deploy,
            traffic=dict(data.get("traffic", {})),
            faults=faults,
        )

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def build(self, deploy: Optional[list] = None) -> Cluster:
        services = [s if s.namespace == self.namespace else _renamespace(s, self.namespace) for s in self.services]
        cluster = Cluster(services, namespace=self.namespace)
        for name in self.deploy if deploy is None else deploy:
            cluster.create_deployment(cluster.spec_of(name), actor="setup")
        for name, level in self.traffic.items():
            cluster.set_traffic(name, TrafficProfile.for_service(name, level), actor="setup")
        for at, fault in self.faults:
            cluster.schedule_fault(at, FaultSpec(kind=fault.kind, target=fault.target))
        return cluster


def _renamespace(spec: ServiceSpec, namespace: str) -> ServiceSpec:
    from dataclasses import replace

    return replace(spec, namespace=namespace)


def sock_shop() -> Scenario:
    """Catalogue plus front-end with default calibration and no traffic."""
    return Scenario(services=[catalogue_spec(), front_end_spec()], deploy=["catalogue", "front-end"])
