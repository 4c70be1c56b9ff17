"""kubectl-style text for cluster snapshots."""
from __future__ import annotations

import json

import yaml

from acvbench.cluster.manifests import format_cpu, format_memory
from acvbench.cluster.model import IMAGE_REPO
from acvbench.cluster.state import ClusterState, DeploymentState, PodSnapshot
from acvbench.metrics.store import render_timestamp


def table(headers: list[str], rows: list[list[str]]) -> str:
    """Left-aligned columns separated by three spaces, like kubectl's tabwriter."""
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    lines = []
    for row in [headers] + rows:
        cells = [c.ljust(w) for c, w in zip(row[:-1], widths[:-1])] + [row[-1]]
        lines.append("   ".join(cells).rstrip())
    return "\n".join(lines)


def human_age(seconds: int) -> str:
    seconds = max(0, int(seconds))
    if seconds < 120:
        return f"{seconds}s"
    minutes = seconds // 60
    if minutes < 10:
        rem = seconds % 60
        return f"{minutes}m{rem}s" if rem else f"{minutes}m"
    if minutes < 180:
        return f"{minutes}m"
    hours = minutes // 60
    if hours < 8:
        rem = minutes % 60
        return f"{hours}h{rem}m" if rem else f"{hours}h"
    if hours < 48:
        return f"{hours}h"
    return f"{hours // 24}d"


def no_resources(namespace: str) -> str:
    return f"No resources found in {namespace} namespace."


def pods_table(state: ClusterState, pods: list[PodSnapshot], wide: bool = False) -> str:
    headers = ["NAME", "READY", "STATUS", "RESTARTS", "AGE"]
    if wide:
        headers += ["IP", "NODE"]
    rows = []
    for idx, p in enumerate(pods):
        row = [p.pod_name, f"{int(p.ready)}/1", p.status, str(p.restarts), human_age(state.tick - p.created_at_tick)]
        if wide:
            row += [f"10.244.0.{idx + 10}" if p.ready else "<none>", "minikube"]
        rows.append(row)
    return table(headers, rows)


def deployments_table(state: ClusterState, deps: list[DeploymentState], wide: bool = False) -> str:
    headers = ["NAME", "READY", "UP-TO-DATE", "AVAILABLE", "AGE"]
    if wide:
        headers += ["CONTAINERS", "IMAGES", "SELECTOR"]
    rows = []
    for d in deps:
        row = [d.name, f"{d.ready_replicas}/{d.replicas}", str(d.replicas), str(d.ready_replicas),
               human_age(state.tick - d.created_tick)]
        if wide:
            row += [d.name, f"{IMAGE_REPO}/{d.name}:{d.image}", f"name={d.name}"]
        rows.append(row)
    return table(headers, rows)


def deployment_doc(d: DeploymentState) -> dict:
    return {
        "kind": "Deployment",
        "name": d.name,
        "namespace": d.namespace,
        "replicas": d.replicas,
        "image": f"{IMAGE_REPO}/{d.name}:{d.image}",
        "env": dict(d.env),
        "resources": {
            "requests": {"cpu": format_cpu(d.cpu_request), "memory": format_memory(d.mem_request)},
            "limits": {"cpu": format_cpu(d.cpu_limit), "memory": format_memory(d.mem_limit)},
        },
        "status": {"readyReplicas": d.ready_replicas, "revision": d.revision},
    }


def deployment_yaml(d: DeploymentState) -> str:
    return yaml.safe_dump(deployment_doc(d), sort_keys=False).rstrip("\n")


def deployment_json(d: DeploymentState) -> str:
    return json.dumps(deployment_doc(d), indent=2)


def hpa_table(state: ClusterState, hpas: list, current: dict) -> str:
    rows = []
    for h in hpas:
        usage = current.get(h.target)
        shown = f"{usage}%" if usage is not None else "<unknown>"
        replicas = state.deployment(h.target).replicas if state.deployment(h.target) else 0
        rows.append([h.target, f"Deployment/{h.target}", f"cpu: {shown}/{h.cpu_percent_target}%",
                     str(h.min_replicas), str(h.max_replicas), str(replicas), human_age(state.tick - h.created_tick)])
    return table(["NAME", "REFERENCE", "TARGETS", "MINPODS", "MAXPODS", "REPLICAS", "AGE"], rows)


def top_table(pods: list[PodSnapshot]) -> str:
    rows = [[p.pod_name, f"{int(round(p.cpu_used_millicores))}m", f"{int(round(p.mem_used_mib))}Mi"] for p in pods]
    return table(["NAME", "CPU(cores)", "MEMORY(bytes)"], rows)


def describe_deployment(state: ClusterState, d: DeploymentState, description: str, hpa_present: bool) -> str:
    unavailable = max(0, d.replicas - d.ready_replicas)
    env = "\n".join(f"      {k}:  {v}" for k, v in d.env) if d.env else "      <none>"
    lines = [
        f"Name:                   {d.name}",
        f"Namespace:              {d.namespace}",
        f"CreationTimestamp:      {render_timestamp(d.created_tick)}",
        f"Labels:                 name={d.name}",
        f"Annotations:            deployment.kubernetes.io/revision: {d.revision}",
        f"                        description: {description}" if description else None,
        f"Selector:               name={d.name}",
        f"Replicas:               {d.replicas} desired | {d.replicas} updated | {d.replicas} total | "
        f"{d.ready_replicas} available | {unavailable} unavailable",
        "StrategyType:           RollingUpdate",
        "Pod Template:",
        f"  Labels:  name={d.name}",
        "  Containers:",
        f"   {d.name}:",
        f"    Image:      {IMAGE_REPO}/{d.name}:{d.image}",
        "    Port:       80/TCP",
        "    Limits:",
        f"      cpu:     {format_cpu(d.cpu_limit)}",
        f"      memory:  {format_memory(d.mem_limit)}",
        "    Requests:",
        f"      cpu:     {format_cpu(d.cpu_request)}",
        f"      memory:  {format_memory(d.mem_request)}",
        "    Environment:",
        env,
        "Conditions:",
        "  Type           Status  Reason",
        "  ----           ------  ------",
        f"  Available      {'True' if d.ready_replicas >= max(1, d.replicas) else 'False'}   "
        f"{'MinimumReplicasAvailable' if d.ready_replicas >= max(1, d.replicas) else 'MinimumReplicasUnavailable'}",
        f"  Progressing    True    NewReplicaSetAvailable",
        f"Autoscaler:             {'present' if hpa_present else '<none>'}",
    ]
    return "\n".join(line for line in lines if line is not None)


def describe_pod(state: ClusterState, p: PodSnapshot, d: DeploymentState | None) -> str:
    if p.status == "CrashLoopBackOff":
        st = ["    State:          Waiting", "      Reason:       CrashLoopBackOff",
              "    Last State:     Terminated", "      Reason:       Error", "      Exit Code:    1"]
        events = ["  Warning  BackOff  kubelet  Back-off restarting failed container"]
    elif p.ready:
        st = ["    State:          Running", f"      Started:      {render_timestamp(p.created_at_tick)}"]
        events = ["  Normal   Started  kubelet  Started container"]
    else:
        st = ["    State:          Waiting", "      Reason:       ContainerCreating"]
        events = ["  Normal   Pulling  kubelet  Pulling image"]
    lines = [
        f"Name:             {p.pod_name}",
        f"Namespace:        {state.namespace}",
        "Node:             minikube",
        f"Start Time:       {render_timestamp(p.created_at_tick)}",
        f"Labels:           name={p.owner}",
        f"Status:           {'Running' if p.ready else 'Pending'}",
        "Containers:",
        f"  {p.owner}:",
        f"    Image:          {IMAGE_REPO}/{p.owner}:{p.image}",
        *st,
        f"    Ready:          {p.ready}",
        f"    Restart Count:  {p.restarts}",
    ]
    if d is not None:
        lines += [
            "    Limits:",
            f"      cpu:     {format_cpu(d.cpu_limit)}",
            f"      memory:  {format_memory(d.mem_limit)}",
            "    Requests:",
            f"      cpu:     {format_cpu(d.cpu_request)}",
            f"      memory:  {format_memory(d.mem_request)}",
        ]
    lines += ["Events:", "  Type     Reason   From     Message", *events]
    return "\n".join(lines)
