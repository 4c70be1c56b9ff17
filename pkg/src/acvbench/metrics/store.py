"""In-memory time-series store fed by the simulator."""
from __future__ import annotations

import datetime as _dt
import threading
from dataclasses import dataclass, field
from typing import Iterator

from acvbench.errors import CounterRegression, NonMonotonicTick

EPOCH = _dt.datetime(2024, 6, 20, 0, 0, 0)
COUNTER_SUFFIXES = ("_count", "_bucket", "_sum", "_total")


def render_timestamp(tick: int) -> str:
    return (EPOCH + _dt.timedelta(seconds=tick)).strftime("%Y-%m-%d %H:%M:%S")


def is_counter(metric: str) -> bool:
    return metric.endswith(COUNTER_SUFFIXES)


@dataclass(frozen=True)
class Sample:
    metric: str
    labels: dict
    tick: int
    value: float


@dataclass
class Series:
    metric: str
    labels: dict
    ticks: list = field(default_factory=list)
    values: list = field(default_factory=list)


def series_key(metric: str, labels: dict) -> tuple:
    return (metric, tuple(sorted(labels.items())))


class MetricStore:
    def __init__(self):
        self._series: dict[tuple, Series] = {}
        self._by_metric: dict[str, list[Series]] = {}
        self._lock = threading.Lock()

    def append(self, sample: Sample) -> None:
        key = series_key(sample.metric, sample.labels)
        with self._lock:
            series = self._series.get(key)
            if series is None:
                series = Series(sample.metric, dict(sample.labels))
                self._series[key] = series
                self._by_metric.setdefault(sample.metric, []).append(series)
            if series.ticks and sample.tick <= series.ticks[-1]:
                raise NonMonotonicTick(
                    f"{sample.metric}{sample.labels}: tick {sample.tick} after {series.ticks[-1]}"
                )
            if is_counter(sample.metric) and series.values and sample.value < series.values[-1]:
                raise CounterRegression(
                    f"{sample.metric}{sample.labels}: {sample.value} < {series.values[-1]}"
                )
            series.ticks.append(sample.tick)
            series.values.append(float(sample.value))

    def extend(self, samples) -> None:
        for s in samples:
            self.append(s)

    def series_names(self) -> list[str]:
        return sorted(self._by_metric)

    def series_for(self, metric: str) -> list[Series]:
        return list(self._by_metric.get(metric, ()))

    def __iter__(self) -> Iterator[Series]:
        return iter(list(self._series.values()))

    def __len__(self) -> int:
        return len(self._series)

    def latest_tick(self) -> int | None:
        ticks = [s.ticks[-1] for s in self._series.values() if s.ticks]
        return max(ticks) if ticks else None
