"""Service-level objective checks over recorded per-tick history."""
from __future__ import annotations

import statistics
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

from acvbench.cluster.simulator import ServiceTick
from acvbench.errors import InsufficientHistory

DIMENSIONS = ("ready", "cpu", "mem", "p99")


@dataclass(frozen=True)
class SloSet:
    ready_required: bool = True
    cpu_mem_fraction_max: float = 0.5
    p99_mean_max_ms: float = 200.0
    p99_stability_cv_max: float = 0.5
    window_ticks: int = 60

    def __post_init__(self):
        if min(self.cpu_mem_fraction_max, self.p99_mean_max_ms, self.p99_stability_cv_max) <= 0:
            raise ValueError("SLO thresholds must be positive")
        if self.window_ticks < 2:
            raise ValueError("an SLO window needs at least 2 samples")


DEFAULT_SLO = SloSet()


@dataclass(frozen=True)
class ServiceSlo:
    service: str
    ready: bool
    cpu_ok: bool
    mem_ok: bool
    p99_ok: bool  # mean under the bound and stable
    cpu_fraction: float
    mem_fraction: float
    p99_mean_ms: float
    p99_cv: float

    @property
    def healthy(self) -> bool:
        return self.ready and self.cpu_ok and self.mem_ok and self.p99_ok

    def dimension(self, name: str) -> bool:
        return {"ready": self.ready, "cpu": self.cpu_ok, "mem": self.mem_ok, "p99": self.p99_ok}[name]


@dataclass(frozen=True)
class SloReport:
    start: int
    end: int
    services: tuple

    @property
    def healthy(self) -> bool:
        return all(s.healthy for s in self.services)

    def service(self, name: str) -> ServiceSlo:
        for s in self.services:
            if s.service == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "services": [asdict(s) for s in self.services]}


def coefficient_of_variation(values: list[float]) -> float:
    mean = statistics.fmean(values)
    if mean == 0:
        return 0.0
    return statistics.pstdev(values) / mean


def window_rows(rows: Iterable[ServiceTick], start: int, end: int) -> list[ServiceTick]:
    """Rows with ``start <= tick < end``; every tick must be present."""
    picked = [r for r in rows if start <= r.tick < end]
    if end - start < 2 or len(picked) != end - start:
        raise InsufficientHistory(f"window [{start}, {end}) is not fully inside recorded history")
    return picked


def check_service(service: str, rows: list[ServiceTick], slo: SloSet = DEFAULT_SLO) -> ServiceSlo:
    ready = all(r.deployed and r.desired_replicas >= 1 and r.ready_pods == r.desired_replicas for r in rows)
    cpu = statistics.fmean(r.cpu_max_fraction for r in rows)
    mem = statistics.fmean(r.mem_max_fraction for r in rows)
    p99 = [r.p99_ms for r in rows]
    mean = statistics.fmean(p99)
    cv = coefficient_of_variation(p99)
    return ServiceSlo(
        service=service,
        ready=ready or not slo.ready_required,
        cpu_ok=cpu <= slo.cpu_mem_fraction_max,
        mem_ok=mem <= slo.cpu_mem_fraction_max,
        p99_ok=mean < slo.p99_mean_max_ms and cv <= slo.p99_stability_cv_max,
        cpu_fraction=cpu,
        mem_fraction=mem,
        p99_mean_ms=mean,
        p99_cv=cv,
    )


def slo_check(history: dict, start: int, end: int, services: Optional[Iterable[str]] = None,
              slo: SloSet = DEFAULT_SLO) -> SloReport:
    """Check ticks ``[start, end)`` of ``history`` ({service: [ServiceTick]})."""
    names = sorted(history) if services is None else sorted(services)
    out = []
    for name in names:
        if name not in history:
            raise InsufficientHistory(f"no history for {name!r}")
        out.append(check_service(name, window_rows(history[name], start, end), slo))
    return SloReport(start, end, tuple(out))

