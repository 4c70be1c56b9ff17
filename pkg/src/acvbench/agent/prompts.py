"""Prompt templates with ``{{placeholder}}`` substitution."""
from __future__ import annotations

import re
from importlib import resources

from acvbench.cluster.model import ServiceSpec

TOOL_MODULE = "acvbench.tools"
PROMETHEUS_URL = "http://prometheus.monitoring:9090"
_SLOT = re.compile(r"\{\{(\w+)\}\}")


def load_template(name: str) -> str:
    return resources.files("acvbench.agent").joinpath("templates", f"{name}.txt").read_text()


def fill(template: str, values: dict) -> str:
    """Replace ``{{key}}`` slots; unknown keys raise KeyError so typos surface early."""

    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise KeyError(f"no value for template slot {key!r}")
        return str(values[key])

    return _SLOT.sub(sub, template)


def slots(template: str) -> set[str]:
    return set(_SLOT.findall(template))


def _names(items) -> str:
    return "[" + ", ".join(items) + "]" if items else "[]"


def agent_values(spec: ServiceSpec) -> dict:
    return {
        "service_name": spec.name,
        "service_description": spec.description,
        "namespace": spec.namespace,
        "deploy_YAML_fp": spec.deploy_manifest_path,
        "service_YAML_fp": spec.service_manifest_path,
        "downstream_services": _names(spec.downstream),
        "upstream_services": _names(spec.upstream),
        "prometheus_url": PROMETHEUS_URL,
        "tool_module": TOOL_MODULE,
    }


def agent_system_prompt(spec: ServiceSpec) -> str:
    return fill(load_template("agent_system"), agent_values(spec))


def manager_system_prompt(namespace: str, maintainers: list[str]) -> str:
    return fill(load_template("manager_system"), {
        "namespace": namespace,
        "service_maintainers": _names(maintainers),
        "tool_module": TOOL_MODULE,
    })


def health_task_text() -> str:
    return load_template("health_task").strip()


def managed_health_task_text() -> str:
    return ("Keep every component of the service in a healthy state. Have each maintainer run the "
            "routine check below on its own component, then summarize what they found and fixed.\n\n"
            + health_task_text())


def policy_variables(spec: ServiceSpec) -> dict:
    """Variables a scripted agent policy may substitute."""
    return {
        "agent": spec.name,
        "service": spec.name,
        "namespace": spec.namespace,
        "deploy_manifest": spec.deploy_manifest_path,
        "service_manifest": spec.service_manifest_path,
        "tool_module": TOOL_MODULE,
    }


def manager_variables(maintainers: list[str]) -> dict:
    return {
        "agent": "manager",
        "maintainers": _names(maintainers),
        "health_task": health_task_text(),
        "tool_module": TOOL_MODULE,
    }
