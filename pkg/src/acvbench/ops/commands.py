"""The kubectl subset agents may emit, as typed commands.

``parse_command`` turns one command line into a :class:`Command`; ``render``
prints the canonical form, so ``parse_command(render(c)) == c``.
"""
from __future__ import annotations

import re
import shlex
from dataclasses import dataclass
from typing import Optional, Union

from acvbench.cluster.manifests import image_version, parse_cpu, parse_memory
from acvbench.errors import BadFlag, ForbiddenConstruct, PlaceholderDetected, UnknownVerb, UnsupportedCommand

BLOCKING = {"edit", "port-forward", "exec", "attach", "proxy", "run", "cp", "debug"}
PLACEHOLDER = re.compile(r"<[A-Za-z_][\w .-]*>")
SLEEP_CAP = 600


@dataclass(frozen=True)
class GetPods:
    selector: Optional[str] = None
    namespace: Optional[str] = None
    wide: bool = False


@dataclass(frozen=True)
class GetDeployment:
    name: Optional[str] = None
    namespace: Optional[str] = None
    output: Optional[str] = None


@dataclass(frozen=True)
class GetHpa:
    name: Optional[str] = None
    namespace: Optional[str] = None


@dataclass(frozen=True)
class DescribeDeployment:
    name: str
    namespace: Optional[str] = None


@dataclass(frozen=True)
class DescribePod:
    pod: str
    namespace: Optional[str] = None


@dataclass(frozen=True)
class TopPods:
    selector: Optional[str] = None
    namespace: Optional[str] = None


@dataclass(frozen=True)
class Scale:
    name: str
    replicas: int
    namespace: Optional[str] = None


@dataclass(frozen=True)
class SetImage:
    name: str
    container: str
    image: str
    namespace: Optional[str] = None


@dataclass(frozen=True)
class SetEnv:
    name: str
    key: str
    value: str
    namespace: Optional[str] = None


@dataclass(frozen=True)
class SetResources:
    name: str
    limits: tuple = ()  # (("cpu", millicores), ("memory", MiB))
    requests: tuple = ()
    namespace: Optional[str] = None


@dataclass(frozen=True)
class RolloutRestart:
    name: str
    namespace: Optional[str] = None


@dataclass(frozen=True)
class RolloutUndo:
    name: str
    namespace: Optional[str] = None


@dataclass(frozen=True)
class Autoscale:
    name: str
    min: int
    max: int
    cpu_percent: int
    namespace: Optional[str] = None


@dataclass(frozen=True)
class ApplyFile:
    path: str
    namespace: Optional[str] = None


@dataclass(frozen=True)
class DeletePod:
    pod: str
    namespace: Optional[str] = None


@dataclass(frozen=True)
class Logs:
    pod: str
    tail: int = 20
    namespace: Optional[str] = None


@dataclass(frozen=True)
class Sleep:
    seconds: int


@dataclass(frozen=True)
class Cat:
    path: str


Command = Union[
    GetPods, GetDeployment, GetHpa, DescribeDeployment, DescribePod, TopPods, Scale, SetImage, SetEnv,
    SetResources, RolloutRestart, RolloutUndo, Autoscale, ApplyFile, DeletePod, Logs, Sleep, Cat,
]

READ_ONLY = (GetPods, GetDeployment, GetHpa, DescribeDeployment, DescribePod, TopPods, Logs, Sleep, Cat)


def is_mutating(cmd: Command) -> bool:
    return not isinstance(cmd, READ_ONLY)


# -- parsing ---------------------------------------------------------------------

_POD_WORDS = {"pod", "pods", "po"}
_DEPLOY_WORDS = {"deployment", "deployments", "deploy", "deployment.apps"}
_HPA_WORDS = {"hpa", "horizontalpodautoscaler", "horizontalpodautoscalers"}


class _Args:
    """Split kubectl arguments into positionals and flags."""

    VALUE_FLAGS = {
        "-n": "namespace", "--namespace": "namespace",
        "-l": "selector", "--selector": "selector",
        "-o": "output", "--output": "output",
        "-f": "filename", "--filename": "filename",
        "-c": "container", "--container": "container",
        "--replicas": "replicas", "--min": "min", "--max": "max", "--cpu-percent": "cpu-percent",
        "--tail": "tail", "--limits": "limits", "--requests": "requests",
    }
    BOOL_FLAGS = {"-w": "watch", "--watch": "watch", "--follow": "follow"}

    def __init__(self, tokens: list[str], verb: str):
        self.positional: list[str] = []
        self.flags: dict[str, str] = {}
        i = 0
        while i < len(tokens):
            tok = tokens[i]
            if tok in self.BOOL_FLAGS or (verb == "logs" and tok == "-f"):
                raise UnsupportedCommand(f"'{tok}' streams output and would block the session")
            if tok.startswith("-") and tok != "-":
                name, eq, value = tok.partition("=")
                if name not in self.VALUE_FLAGS:
                    raise BadFlag(f"unknown flag: {name}")
                key = self.VALUE_FLAGS[name]
                if not eq:
                    if i + 1 >= len(tokens):
                        raise BadFlag(f"flag needs an argument: {name}")
                    i += 1
                    value = tokens[i]
                if key in self.flags:
                    raise BadFlag(f"flag given twice: {name}")
                self.flags[key] = value
            else:
                self.positional.append(tok)
            i += 1

    def take(self, key: str) -> Optional[str]:
        return self.flags.pop(key, None)

    def done(self) -> None:
        if self.flags:
            raise BadFlag(f"flag not valid here: --{sorted(self.flags)[0]}")


def _int(value: str, what: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise BadFlag(f"invalid value for {what}: {value!r}") from None


def _selector(args: _Args) -> Optional[str]:
    raw = args.take("selector")
    if raw is None:
        return None
    key, eq, value = raw.partition("=")
    if key == "app":
        raise BadFlag("app selector unsupported; use -l name=<service>")
    if key != "name" or not eq or not value or "," in value:
        raise BadFlag(f"unsupported selector {raw!r}; only name=<service> is accepted")
    return value


def _deploy_target(args: _Args, verb: str) -> str:
    """Accept ``deployment NAME`` or ``deployment/NAME``."""
    pos = args.positional
    if not pos:
        raise BadFlag(f"{verb}: missing deployment name")
    head = pos.pop(0)
    kind, slash, name = head.partition("/")
    if slash:
        if kind not in _DEPLOY_WORDS:
            raise UnsupportedCommand(f"{verb}: only deployments are supported, got {kind!r}")
        return name
    if head not in _DEPLOY_WORDS:
        raise UnsupportedCommand(f"{verb}: only deployments are supported, got {head!r}")
    if not pos:
        raise BadFlag(f"{verb}: missing deployment name")
    return pos.pop(0)


def _no_extra(args: _Args, verb: str) -> None:
    if args.positional:
        raise BadFlag(f"{verb}: unexpected argument {args.positional[0]!r}")
    args.done()


def _quantities(raw: Optional[str], what: str) -> tuple:
    if raw is None:
        return ()
    out = {}
    for part in raw.split(","):
        key, eq, value = part.partition("=")
        if not eq or key not in ("cpu", "memory"):
            raise BadFlag(f"invalid {what} entry {part!r}")
        try:
            out[key] = parse_cpu(value) if key == "cpu" else parse_memory(value)
        except Exception:
            raise BadFlag(f"invalid quantity {value!r}") from None
    return tuple(sorted(out.items()))


def check_text(line: str) -> None:
    if PLACEHOLDER.search(line):
        raise PlaceholderDetected(f"placeholder left in command: {PLACEHOLDER.search(line).group()}")
    for bad, what in (("|", "pipes"), (">", "redirection"), ("<", "redirection"), ("`", "command substitution"),
                      ("$(", "command substitution"), ("&", "background jobs")):
        if bad in _unquoted(line):
            raise ForbiddenConstruct(f"{what} are not supported")


def _unquoted(line: str) -> str:
    out = []
    quote = None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
            continue
        if ch in "'\"":
            quote = ch
            continue
        out.append(ch)
    return "".join(out)


def parse_command(line: str) -> Command:
    line = line.strip()
    check_text(line)
    try:
        tokens = shlex.split(line)
    except ValueError as exc:
        raise BadFlag(f"cannot split command: {exc}") from None
    if not tokens:
        raise UnknownVerb("empty command")
    prog = tokens[0]
    if prog == "sleep":
        if len(tokens) != 2:
            raise BadFlag("usage: sleep SECONDS")
        seconds = tokens[1].rstrip("s")
        return Sleep(_int(seconds, "sleep"))
    if prog == "cat":
        if len(tokens) != 2:
            raise BadFlag("usage: cat PATH")
        return Cat(tokens[1])
    if prog != "kubectl":
        raise UnknownVerb(f"command not found: {prog}")
    if len(tokens) < 2:
        raise UnknownVerb("kubectl: missing verb")
    verb = tokens[1]
    if verb in BLOCKING:
        raise UnsupportedCommand(f"'kubectl {verb}' is not allowed; it blocks or needs interaction")
    args = _Args(tokens[2:], verb)
    ns = args.take("namespace")
    handler = _VERBS.get(verb)
    if handler is None:
        raise UnknownVerb(f"unknown command \"{verb}\" for \"kubectl\"")
    return handler(args, ns)


def _get(args: _Args, ns):
    if not args.positional:
        raise BadFlag("get: missing resource type")
    kind = args.positional.pop(0)
    name = None
    if "/" in kind:
        kind, _, name = kind.partition("/")
    elif args.positional:
        name = args.positional.pop(0)
    output = args.take("output")
    if kind in _POD_WORDS:
        selector = _selector(args)
        if name is not None:
            raise BadFlag("get pods by name is not supported; use -l name=<service>")
        if output not in (None, "wide"):
            raise BadFlag(f"unsupported output format for pods: {output}")
        _no_extra(args, "get")
        return GetPods(selector, ns, output == "wide")
    if kind in _DEPLOY_WORDS:
        if output not in (None, "wide", "yaml", "json"):
            raise BadFlag(f"unsupported output format: {output}")
        if _selector(args) is not None and name is None:
            raise BadFlag("get deployments accepts a name, not a selector")
        _no_extra(args, "get")
        return GetDeployment(name, ns, output)
    if kind in _HPA_WORDS:
        if output is not None:
            raise BadFlag("get hpa does not support -o")
        _no_extra(args, "get")
        return GetHpa(name, ns)
    raise UnsupportedCommand(f"get: resource type {kind!r} is not supported")


def _describe(args: _Args, ns):
    if not args.positional:
        raise BadFlag("describe: missing resource type")
    kind = args.positional[0]
    if kind.split("/")[0] in _POD_WORDS:
        args.positional.pop(0)
        pod = kind.partition("/")[2] or (args.positional.pop(0) if args.positional else None)
        if not pod:
            raise BadFlag("describe: missing pod name")
        _no_extra(args, "describe")
        return DescribePod(pod, ns)
    name = _deploy_target(args, "describe")
    _no_extra(args, "describe")
    return DescribeDeployment(name, ns)


def _top(args: _Args, ns):
    if not args.positional or args.positional.pop(0) not in _POD_WORDS:
        raise UnsupportedCommand("top: only 'top pods' is supported")
    selector = _selector(args)
    _no_extra(args, "top")
    return TopPods(selector, ns)


def _scale(args: _Args, ns):
    name = _deploy_target(args, "scale")
    raw = args.take("replicas")
    if raw is None:
        raise BadFlag("scale: --replicas is required")
    _no_extra(args, "scale")
    return Scale(name, _int(raw, "--replicas"), ns)


def _set(args: _Args, ns):
    if not args.positional:
        raise BadFlag("set: missing subcommand")
    sub = args.positional.pop(0)
    name = _deploy_target(args, f"set {sub}")
    if sub == "image":
        if len(args.positional) != 1 or "=" not in args.positional[0]:
            raise BadFlag("set image: expected CONTAINER=IMAGE")
        container, _, image = args.positional.pop(0).partition("=")
        _no_extra(args, "set image")
        return SetImage(name, container, image_version(image), ns)
    if sub == "env":
        if len(args.positional) != 1 or "=" not in args.positional[0]:
            raise BadFlag("set env: expected exactly one KEY=VALUE")
        key, _, value = args.positional.pop(0).partition("=")
        args.take("container")
        _no_extra(args, "set env")
        return SetEnv(name, key, value, ns)
    if sub == "resources":
        limits = _quantities(args.take("limits"), "--limits")
        requests = _quantities(args.take("requests"), "--requests")
        args.take("container")
        if not limits and not requests:
            raise BadFlag("set resources: --limits or --requests is required")
        _no_extra(args, "set resources")
        return SetResources(name, limits, requests, ns)
    raise UnsupportedCommand(f"set {sub} is not supported")


def _rollout(args: _Args, ns):
    if not args.positional:
        raise BadFlag("rollout: missing subcommand")
    sub = args.positional.pop(0)
    if sub not in ("restart", "undo"):
        raise UnsupportedCommand(f"rollout {sub} is not supported")
    name = _deploy_target(args, f"rollout {sub}")
    _no_extra(args, f"rollout {sub}")
    return RolloutRestart(name, ns) if sub == "restart" else RolloutUndo(name, ns)


def _autoscale(args: _Args, ns):
    name = _deploy_target(args, "autoscale")
    lo = args.take("min")
    hi = args.take("max")
    cpu = args.take("cpu-percent")
    if hi is None:
        raise BadFlag("autoscale: --max is required")
    _no_extra(args, "autoscale")
    return Autoscale(name, _int(lo, "--min") if lo is not None else 1, _int(hi, "--max"),
                     _int(cpu, "--cpu-percent") if cpu is not None else 80, ns)


def _apply(args: _Args, ns):
    path = args.take("filename")
    if path is None:
        raise BadFlag("apply: -f PATH is required")
    _no_extra(args, "apply")
    return ApplyFile(path, ns)


def _delete(args: _Args, ns):
    if not args.positional:
        raise BadFlag("delete: missing resource type")
    kind = args.positional.pop(0)
    pod = None
    if "/" in kind:
        kind, _, pod = kind.partition("/")
    if kind not in _POD_WORDS:
        raise UnsupportedCommand(f"delete: only pods can be deleted, got {kind!r}")
    if pod is None:
        if not args.positional:
            raise BadFlag("delete: missing pod name")
        pod = args.positional.pop(0)
    _no_extra(args, "delete")
    return DeletePod(pod, ns)


def _logs(args: _Args, ns):
    if not args.positional:
        raise BadFlag("logs: missing pod name")
    pod = args.positional.pop(0)
    if pod.startswith("pod/"):
        pod = pod[4:]
    raw = args.take("tail")
    args.take("container")
    _no_extra(args, "logs")
    return Logs(pod, _int(raw, "--tail") if raw is not None else 20, ns)


_VERBS = {
    "get": _get,
    "describe": _describe,
    "top": _top,
    "scale": _scale,
    "set": _set,
    "rollout": _rollout,
    "autoscale": _autoscale,
    "apply": _apply,
    "delete": _delete,
    "logs": _logs,
}


# -- rendering -------------------------------------------------------------------

def _ns(ns: Optional[str]) -> str:
    return f" -n {ns}" if ns is not None else ""


def _q(text: str) -> str:
    return shlex.quote(text)


def _fmt_quantities(items: tuple) -> str:
    parts = []
    for key, value in items:
        parts.append(f"{key}={value}m" if key == "cpu" else f"{key}={value}Mi")
    return ",".join(parts)


def render(cmd: Command) -> str:
    if isinstance(cmd, Sleep):
        return f"sleep {cmd.seconds}"
    if isinstance(cmd, Cat):
        return f"cat {_q(cmd.path)}"
    if isinstance(cmd, GetPods):
        out = "kubectl get pods" + _ns(cmd.namespace)
        if cmd.selector is not None:
            out += f" -l name={_q(cmd.selector)}"
        return out + (" -o wide" if cmd.wide else "")
    if isinstance(cmd, GetDeployment):
        out = "kubectl get deployment" + (f" {_q(cmd.name)}" if cmd.name else "") + _ns(cmd.namespace)
        return out + (f" -o {cmd.output}" if cmd.output else "")
    if isinstance(cmd, GetHpa):
        return "kubectl get hpa" + (f" {_q(cmd.name)}" if cmd.name else "") + _ns(cmd.namespace)
    if isinstance(cmd, DescribeDeployment):
        return f"kubectl describe deployment {_q(cmd.name)}" + _ns(cmd.namespace)
    if isinstance(cmd, DescribePod):
        return f"kubectl describe pod {_q(cmd.pod)}" + _ns(cmd.namespace)
    if isinstance(cmd, TopPods):
        out = "kubectl top pods" + _ns(cmd.namespace)
        return out + (f" -l name={_q(cmd.selector)}" if cmd.selector is not None else "")
    if isinstance(cmd, Scale):
        return f"kubectl scale deployment {_q(cmd.name)} --replicas={cmd.replicas}" + _ns(cmd.namespace)
    if isinstance(cmd, SetImage):
        return f"kubectl set image deployment/{cmd.name} {_q(cmd.container + '=' + cmd.image)}" + _ns(cmd.namespace)
    if isinstance(cmd, SetEnv):
        return f"kubectl set env deployment/{cmd.name} {_q(cmd.key + '=' + cmd.value)}" + _ns(cmd.namespace)
    if isinstance(cmd, SetResources):
        out = f"kubectl set resources deployment/{cmd.name}"
        if cmd.limits:
            out += f" --limits={_fmt_quantities(cmd.limits)}"
        if cmd.requests:
            out += f" --requests={_fmt_quantities(cmd.requests)}"
        return out + _ns(cmd.namespace)
    if isinstance(cmd, RolloutRestart):
        return f"kubectl rollout restart deployment/{cmd.name}" + _ns(cmd.namespace)
    if isinstance(cmd, RolloutUndo):
        return f"kubectl rollout undo deployment/{cmd.name}" + _ns(cmd.namespace)
    if isinstance(cmd, Autoscale):
        return (f"kubectl autoscale deployment {_q(cmd.name)} --min={cmd.min} --max={cmd.max} "
                f"--cpu-percent={cmd.cpu_percent}" + _ns(cmd.namespace))
    if isinstance(cmd, ApplyFile):
        return f"kubectl apply -f {_q(cmd.path)}" + _ns(cmd.namespace)
    if isinstance(cmd, DeletePod):
        return f"kubectl delete pod {_q(cmd.pod)}" + _ns(cmd.namespace)
    if isinstance(cmd, Logs):
        return f"kubectl logs {_q(cmd.pod)} --tail={cmd.tail}" + _ns(cmd.namespace)
    raise TypeError(f"not a command: {cmd!r}")
