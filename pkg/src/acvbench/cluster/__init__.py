from acvbench.cluster.model import (
    FaultKind,
    FaultSpec,
    HpaSpec,
    PodState,
    ServiceSpec,
    TrafficLevel,
    TrafficProfile,
    catalogue_spec,
    front_end_spec,
)
from acvbench.cluster.scenario import Scenario, sock_shop
from acvbench.cluster.simulator import Cluster
from acvbench.cluster.state import ClusterState

__all__ = [
    "Cluster",
    "ClusterState",
    "FaultKind",
    "FaultSpec",
    "HpaSpec",
    "PodState",
    "Scenario",
    "ServiceSpec",
    "TrafficLevel",
    "TrafficProfile",
    "catalogue_spec",
    "front_end_spec",
    "sock_shop",
]
