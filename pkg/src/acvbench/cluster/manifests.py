"""Restricted manifest subset and the virtual file store that holds manifests.

Only these keys are accepted; anything else is rejected rather than ignored::

    kind: Deployment | Service
    name: <str>
    namespace: <str>
    replicas: <int>             # Deployment only
    image: <repo/name:version>  # Deployment only
    env: {KEY: VALUE}           # Deployment only
    resources:                  # Deployment only
      requests: {cpu: 100m, memory: 100Mi}
      limits: {cpu: 300m, memory: 300Mi}
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

import yaml

from acvbench.errors import ManifestError, NotFound

_TOP_KEYS = {"kind", "name", "namespace", "replicas", "image", "env", "resources"}
_RESOURCE_KEYS = {"requests", "limits"}
_QUANTITY_KEYS = {"cpu", "memory"}


def parse_cpu(text) -> int:
    """Return millicores for a CPU quantity such as ``300m``, ``0.5`` or ``1``."""
    s = str(text).strip()
    m = re.fullmatch(r"(\d+)m", s)
    if m:
        return int(m.group(1))
    try:
        value = float(s)
    except ValueError:
        raise ManifestError(f"invalid cpu quantity {text!r}") from None
    if value < 0:
        raise ManifestError(f"invalid cpu quantity {text!r}")
    return int(round(value * 1000))


_MEM_UNITS = {"Ki": 1 / 1024, "Mi": 1, "Gi": 1024, "K": 1000 / 1048576, "M": 1e6 / 1048576, "G": 1e9 / 1048576}


def parse_memory(text) -> int:
    """Return MiB for a memory quantity such as ``300Mi`` or ``1Gi``."""
    s = str(text).strip()
    m = re.fullmatch(r"(\d+(?:\.\d+)?)(Ki|Mi|Gi|K|M|G)?", s)
    if not m:
        raise ManifestError(f"invalid memory quantity {text!r}")
    value = float(m.group(1))
    unit = m.group(2)
    if unit is None:
        return int(round(value / 1048576))
    return int(round(value * _MEM_UNITS[unit]))


def format_cpu(millicores: int) -> str:
    return f"{int(millicores)}m"


def format_memory(mib: int) -> str:
    return f"{int(mib)}Mi"


@dataclass
class Manifest:
    kind: str
    name: str
    namespace: Optional[str] = None
    replicas: Optional[int] = None
    image: Optional[str] = None
    env: dict = field(default_factory=dict)
    cpu_request: Optional[int] = None
    cpu_limit: Optional[int] = None
    mem_request: Optional[int] = None
    mem_limit: Optional[int] = None


def image_version(ref: str) -> str:
    """``weaveworksdemos/catalogue:0.3.4`` -> ``0.3.4``; a bare version passes through."""
    ref = ref.strip()
    if ":" in ref:
        return ref.rsplit(":", 1)[1]
    return ref


def parse_manifest(text: str) -> Manifest:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ManifestError(f"invalid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ManifestError(f"unsupported manifest fields: {', '.join(sorted(unknown))}")
    kind = doc.get("kind", "Deployment")
    if kind not in ("Deployment", "Service"):
        raise ManifestError(f"unsupported kind {kind!r}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ManifestError("manifest requires a name")
    m = Manifest(kind=kind, name=name, namespace=doc.get("namespace"))
    if kind == "Service":
        extra = set(doc) - {"kind", "name", "namespace"}
        if extra:
            raise ManifestError(f"fields not allowed on Service: {', '.join(sorted(extra))}")
        return m
    if "replicas" in doc:
        if not isinstance(doc["replicas"], int) or doc["replicas"] < 0:
            raise ManifestError("replicas must be a non-negative integer")
        m.replicas = doc["replicas"]
    if "image" in doc:
        m.image = image_version(str(doc["image"]))
    env = doc.get("env") or {}
    if not isinstance(env, dict):
        raise ManifestError("env must be a mapping")
    m.env = {str(k): _env_value(v) for k, v in env.items()}
    resources = doc.get("resources") or {}
    if not isinstance(resources, dict) or set(resources) - _RESOURCE_KEYS:
        raise ManifestError("resources accepts only requests/limits")
    for section in ("requests", "limits"):
        values = resources.get(section) or {}
        if not isinstance(values, dict) or set(values) - _QUANTITY_KEYS:
            raise ManifestError(f"resources.{section} accepts only cpu/memory")
        if "cpu" in values:
            setattr(m, "cpu_request" if section == "requests" else "cpu_limit", parse_cpu(values["cpu"]))
        if "memory" in values:
            setattr(m, "mem_request" if section == "requests" else "mem_limit", parse_memory(values["memory"]))
    return m


def _env_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def render_deployment_manifest(spec, replicas: int, image: str, env: dict) -> str:
    doc = {
        "kind": "Deployment",
        "name": spec.name,
        "namespace": spec.namespace,
        "replicas": replicas,
        "image": spec.image_ref(image),
        "env": dict(env),
        "resources": {
            "requests": {"cpu": format_cpu(spec.cpu_request_millicores), "memory": format_memory(spec.mem_base_mib)},
            "limits": {"cpu": format_cpu(spec.cpu_limit_millicores), "memory": format_memory(spec.mem_limit_mib)},
        },
    }
    return yaml.safe_dump(doc, sort_keys=False)


def render_service_manifest(spec) -> str:
    return yaml.safe_dump({"kind": "Service", "name": spec.name, "namespace": spec.namespace}, sort_keys=False)


class FileStore:
    """Virtual files addressed by absolute path."""

    def __init__(self, files: Optional[dict] = None):
        self._files = dict(files or {})

    def read(self, path: str) -> str:
        try:
            return self._files[path]
        except KeyError:
            raise NotFound(f'the path "{path}" does not exist') from None

    def write(self, path: str, text: str) -> None:
        self._files[path] = text

    def paths(self) -> list[str]:
        return sorted(self._files)

    def __contains__(self, path) -> bool:
        return path in self._files
