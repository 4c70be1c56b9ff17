"""Benchmark task catalog loaded from ``catalog.yaml``."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from acvbench.agent.prompts import health_task_text, managed_health_task_text
from acvbench.cluster.model import FaultKind, TrafficLevel
from acvbench.errors import CatalogCorrupt

SERVICES = ("catalogue", "front-end")


class Level(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"
    L3PLUS = "L3plus"


class RequestLevel(str, enum.Enum):
    LOW = "low"
    HIGH = "high"


class OpType(str, enum.Enum):
    DCM = "DCM"
    RM = "RM"


@dataclass(frozen=True)
class FaultPlan:
    kind: FaultKind
    target: str


@dataclass(frozen=True)
class TaskSpec:
    id: str
    name: str
    level: Level
    request_level: RequestLevel
    op_type: OpType
    goal_text: str
    traffic: tuple  # (service, TrafficLevel) pairs
    grading_rule: str
    fault: Optional[FaultPlan] = None
    initial_absent: tuple = ()
    initial_images: tuple = ()  # (service, version) pairs
    expect_assignees: tuple = ()  # one frozenset of components per assignment round
    # L3plus templates only: the faults they are instantiated with
    fault_menu: tuple = ()

    @property
    def is_template(self) -> bool:
        return bool(self.fault_menu)

    @property
    def template_id(self) -> str:
        return self.id.split(".", 1)[0]

    def traffic_map(self) -> dict:
        return dict(self.traffic)

    def instantiate(self, kind) -> "TaskSpec":
        kind = FaultKind(kind)
        for k, target in self.fault_menu:
            if k == kind:
                return replace(self, id=f"{self.id}.{kind.value}", fault=FaultPlan(kind, target), fault_menu=())
        raise KeyError(f"{self.id} has no {kind.value} variant")

    def instances(self) -> list["TaskSpec"]:
        """Runnable tasks: the template's fault variants, or the task itself."""
        if not self.is_template:
            return [self]
        return [self.instantiate(k) for k, _ in self.fault_menu]


_REQUIRED = ("id", "name", "request_level", "op_type", "level", "traffic", "rule")
_FAULT_ORDER = (FaultKind.POD_FAILURE, FaultKind.CPU_STRESS, FaultKind.RISING_TRAFFIC)


def _enum(kind, value, where: str):
    try:
        return kind(value)
    except ValueError:
        raise CatalogCorrupt(f"{where}: bad {kind.__name__} {value!r}") from None


def _traffic(raw, where: str) -> tuple:
    if not isinstance(raw, dict) or not raw:
        raise CatalogCorrupt(f"{where}: traffic must be a non-empty mapping")
    out = []
    for service, level in sorted(raw.items()):
        if service not in SERVICES:
            raise CatalogCorrupt(f"{where}: unknown service {service!r}")
        out.append((service, _enum(TrafficLevel, level, where)))
    return tuple(out)


def _expect(raw, where: str) -> tuple:
    if raw is None:
        return ()
    if not isinstance(raw, list) or not all(isinstance(r, list) and r for r in raw):
        raise CatalogCorrupt(f"{where}: expect must be a list of non-empty component lists")
    for group in raw:
        for comp in group:
            if comp not in SERVICES:
                raise CatalogCorrupt(f"{where}: unknown component {comp!r}")
    return tuple(frozenset(r) for r in raw)


def _entry(raw: dict, template: bool) -> TaskSpec:
    where = f"catalog entry {raw.get('id', '?')!r}" if isinstance(raw, dict) else "catalog entry"
    if not isinstance(raw, dict):
        raise CatalogCorrupt(f"{where}: expected a mapping")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise CatalogCorrupt(f"{where}: missing {', '.join(missing)}")
    level = _enum(Level, raw["level"], where)
    request_level = _enum(RequestLevel, raw["request_level"], where)
    if template != (level == Level.L3PLUS):
        raise CatalogCorrupt(f"{where}: only templates may be L3plus")
    initial = raw.get("initial") or {}
    absent = tuple(initial.get("absent", ()))
    images = tuple(sorted((initial.get("image") or {}).items()))
    menu = ()
    if template:
        faults = raw.get("faults")
        if not isinstance(faults, dict) or not faults:
            raise CatalogCorrupt(f"{where}: a template needs a fault menu")
        kinds = {_enum(FaultKind, k, where): t for k, t in faults.items()}
        menu = tuple((k, kinds[k]) for k in _FAULT_ORDER if k in kinds)
        goal = health_task_text() if request_level == RequestLevel.LOW else managed_health_task_text()
    else:
        goal = raw.get("goal")
        if not isinstance(goal, str) or not goal.strip():
            raise CatalogCorrupt(f"{where}: missing goal text")
    return TaskSpec(
        id=str(raw["id"]),
        name=str(raw["name"]),
        level=level,
        request_level=request_level,
        op_type=_enum(OpType, raw["op_type"], where),
        goal_text=goal,
        traffic=_traffic(raw["traffic"], where),
        grading_rule=str(raw["rule"]),
        initial_absent=absent,
        initial_images=images,
        expect_assignees=_expect(raw.get("expect"), where),
        fault_menu=menu,
    )


def parse_catalog(data) -> list[TaskSpec]:
    if not isinstance(data, dict) or not isinstance(data.get("tasks"), list):
        raise CatalogCorrupt("catalog must contain a 'tasks' list")
    tasks = [_entry(t, template=False) for t in data["tasks"]]
    tasks += [_entry(t, template=True) for t in data.get("templates") or []]
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        raise CatalogCorrupt("duplicate task ids in catalog")
    return tasks


def load_catalog(path=None) -> list[TaskSpec]:
    """L1/L2 tasks in catalog order followed by the L3plus templates."""
    try:
        if path is None:
            text = resources.files("acvbench.bench").joinpath("catalog.yaml").read_text()
        else:
            text = Path(path).read_text()
        data = yaml.safe_load(text)
    except (OSError, yaml.YAMLError) as exc:
        raise CatalogCorrupt(f"cannot read catalog: {exc}") from None
    return parse_catalog(data)


def select(tasks: list[TaskSpec], task: Optional[str] = None, level: Optional[str] = None,
           request_level: Optional[str] = None) -> list[TaskSpec]:
    """Runnable tasks matching the filters; templates expand to their fault variants.

    ``task`` is a comma-separated list of ids; ``l3plus-low`` selects every
    variant, ``l3plus-low.CpuStress`` just one. Unknown ids raise KeyError.
    """
    runnable = [inst for t in tasks for inst in t.instances()]
    if task:
        wanted = [w.strip() for w in task.split(",") if w.strip()]
        picked = []
        for w in wanted:
            hits = [t for t in runnable if t.id == w or t.template_id == w]
            if not hits:
                raise KeyError(w)
            picked.extend(h for h in hits if h not in picked)
        runnable = picked
    if level:
        runnable = [t for t in runnable if t.level.value.lower() == level.lower()]
    if request_level:
        runnable = [t for t in runnable if t.request_level.value == request_level.lower()]
    return runnable
