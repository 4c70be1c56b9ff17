"""Executes parsed commands against the simulator and renders kubectl-style output."""
from __future__ import annotations

from dataclasses import dataclass

from acvbench.cluster.simulator import Cluster
from acvbench.errors import (
    AcvError,
    ClusterError,
    DuplicateDeployment,
    ForbiddenConstruct,
    InvalidSpec,
    ManifestError,
    NotFound,
    ReplicaBoundExceeded,
)
from acvbench.ops import commands as c
from acvbench.ops import tables as r


@dataclass(frozen=True)
class ActionResult:
    exit_status: str  # "success" | "failure"
    stdout: str = ""
    stderr: str = ""
    wall_ticks_consumed: int = 0

    @property
    def ok(self) -> bool:
        return self.exit_status == "success"

    @classmethod
    def success(cls, stdout: str = "", stderr: str = "", ticks: int = 0) -> "ActionResult":
        return cls("success", stdout, stderr, ticks)

    @classmethod
    def failure(cls, stderr: str, stdout: str = "") -> "ActionResult":
        return cls("failure", stdout, stderr or "error", 0)

    def text(self) -> str:
        return "\n".join(part for part in (self.stdout, self.stderr) if part)


def kubectl_error(exc: Exception) -> str:
    msg = str(exc)
    if isinstance(exc, NotFound):
        return f"Error from server (NotFound): {msg}"
    if isinstance(exc, DuplicateDeployment):
        return f"Error from server (AlreadyExists): {msg}"
    if isinstance(exc, (InvalidSpec, ReplicaBoundExceeded)):
        return f"Error from server (Invalid): {msg}"
    if isinstance(exc, ManifestError):
        return f"error: error validating data: {msg}"
    return f"error: {msg}"


class Gateway:
    """One actor's view of the cluster. ``read_only`` gateways refuse mutations."""

    def __init__(self, cluster: Cluster, actor: str, read_only: bool = False, sleep_cap: int = c.SLEEP_CAP):
        self.cluster = cluster
        self.actor = actor
        self.read_only = read_only
        self.sleep_cap = sleep_cap

    @property
    def namespace(self) -> str:
        return self.cluster.namespace

    def run_line(self, line: str) -> ActionResult:
        try:
            cmd = c.parse_command(line)
        except AcvError as exc:
            return ActionResult.failure(f"error: {exc}")
        return self.execute(cmd)

    def execute(self, cmd) -> ActionResult:
        if self.read_only and c.is_mutating(cmd):
            return ActionResult.failure(
                f"error: {ForbiddenConstruct.__name__}: {self.actor} may not modify cluster components "
                f"('{c.render(cmd)}')"
            )
        try:
            return self._dispatch(cmd)
        except (ClusterError, ManifestError) as exc:
            return ActionResult.failure(kubectl_error(exc))

    def _check_ns(self, ns) -> None:
        if ns is not None and ns != self.namespace:
            raise NotFound(f'namespaces "{ns}" not found')

    def _dispatch(self, cmd) -> ActionResult:
        cl = self.cluster
        ns = getattr(cmd, "namespace", None)
        name = getattr(cmd, "name", None)
        if isinstance(cmd, c.Sleep):
            ticks = max(0, min(cmd.seconds, self.sleep_cap))
            if ticks:
                cl.advance(ticks)
            return ActionResult.success(ticks=ticks)
        if isinstance(cmd, c.Cat):
            return ActionResult.success(cl.files.read(cmd.path).rstrip("\n"))
        self._check_ns(ns)
        state = cl.snapshot()
        if isinstance(cmd, c.GetPods):
            pods = [p for p in state.pods if cmd.selector is None or p.owner == cmd.selector]
            if not pods:
                return ActionResult.success(stderr=r.no_resources(self.namespace))
            return ActionResult.success(r.pods_table(state, pods, cmd.wide))
        if isinstance(cmd, c.GetDeployment):
            if cmd.name is not None:
                dep = state.deployment(cmd.name)
                if dep is None:
                    raise NotFound(f'deployments.apps "{cmd.name}" not found')
                deps = [dep]
            else:
                deps = list(state.deployments)
            if not deps:
                return ActionResult.success(stderr=r.no_resources(self.namespace))
            if cmd.output == "yaml":
                return ActionResult.success("\n---\n".join(r.deployment_yaml(d) for d in deps))
            if cmd.output == "json":
                return ActionResult.success("\n".join(r.deployment_json(d) for d in deps))
            return ActionResult.success(r.deployments_table(state, deps, cmd.output == "wide"))
        if isinstance(cmd, c.GetHpa):
            hpas = [h for h in state.hpas if cmd.name is None or h.target == cmd.name]
            if cmd.name is not None and not hpas:
                raise NotFound(f'horizontalpodautoscalers.autoscaling "{cmd.name}" not found')
            if not hpas:
                return ActionResult.success(stderr=r.no_resources(self.namespace))
            return ActionResult.success(r.hpa_table(state, hpas, self._hpa_usage(state)))
        if isinstance(cmd, c.DescribeDeployment):
            dep = state.deployment(cmd.name)
            if dep is None:
                raise NotFound(f'deployments.apps "{cmd.name}" not found')
            spec = cl.spec_of(cmd.name)
            return ActionResult.success(r.describe_deployment(state, dep, spec.description,
                                                              state.hpa(cmd.name) is not None))
        if isinstance(cmd, c.DescribePod):
            pod = self._pod(state, cmd.pod)
            return ActionResult.success(r.describe_pod(state, pod, state.deployment(pod.owner)))
        if isinstance(cmd, c.TopPods):
            pods = [p for p in state.pods if (cmd.selector is None or p.owner == cmd.selector)
                    and (p.ready or p.stressed)]
            if not pods:
                return ActionResult.success(stderr=r.no_resources(self.namespace))
            return ActionResult.success(r.top_table(pods))
        if isinstance(cmd, c.Logs):
            self._pod(state, cmd.pod)
            return ActionResult.success("\n".join(cl.logs(cmd.pod, cmd.tail)))
        return self._mutate(cmd, name)

    def _pod(self, state, pod_name):
        for p in state.pods:
            if p.pod_name == pod_name:
                return p
        raise NotFound(f'pods "{pod_name}" not found')

    def _hpa_usage(self, state) -> dict:
        out = {}
        for h in state.hpas:
            hist = self.cluster.history.get(h.target) or []
            dep = state.deployment(h.target)
            if hist and dep is not None and dep.cpu_request > 0 and hist[-1].ready_pods:
                out[h.target] = int(round(100 * hist[-1].cpu_mean_millicores / dep.cpu_request))
        return out

    def _mutate(self, cmd, name) -> ActionResult:
        cl = self.cluster
        actor = self.actor
        if isinstance(cmd, c.Scale):
            cl.scale(name, cmd.replicas, actor=actor)
            return ActionResult.success(f"deployment.apps/{name} scaled")
        if isinstance(cmd, c.SetImage):
            spec = cl.spec_of(name) if cl.has_deployment(name) else None
            if spec is None:
                raise NotFound(f'deployments.apps "{name}" not found')
            if cmd.container not in (spec.container, "*"):
                return ActionResult.failure(f'error: unable to find container named "{cmd.container}"')
            cl.set_image(name, cmd.image, actor=actor)
            return ActionResult.success(f"deployment.apps/{name} image updated")
        if isinstance(cmd, c.SetEnv):
            cl.set_env(name, cmd.key, cmd.value, actor=actor)
            return ActionResult.success(f"deployment.apps/{name} env updated")
        if isinstance(cmd, c.SetResources):
            cl.set_resources(name, dict(cmd.limits), dict(cmd.requests), actor=actor)
            return ActionResult.success(f"deployment.apps/{name} resource requirements updated")
        if isinstance(cmd, c.RolloutRestart):
            cl.restart_pods(name, actor=actor)
            return ActionResult.success(f"deployment.apps/{name} restarted")
        if isinstance(cmd, c.RolloutUndo):
            cl.rollout_undo(name, actor=actor)
            return ActionResult.success(f"deployment.apps/{name} rolled back")
        if isinstance(cmd, c.Autoscale):
            cl.autoscale(name, cmd.min, cmd.max, cmd.cpu_percent, actor=actor)
            return ActionResult.success(f"horizontalpodautoscaler.autoscaling/{name} autoscaled")
        if isinstance(cmd, c.ApplyFile):
            return ActionResult.success(cl.apply_manifest(cmd.path, actor=actor))
        if isinstance(cmd, c.DeletePod):
            cl.delete_pod(cmd.pod, actor=actor)
            return ActionResult.success(f'pod "{cmd.pod}" deleted')
        raise TypeError(f"unhandled command {cmd!r}")
