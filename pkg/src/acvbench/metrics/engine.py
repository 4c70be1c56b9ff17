"""Evaluation of parsed queries against a :class:`MetricStore`."""
from __future__ import annotations

import bisect
import datetime as _dt
import math
from typing import Optional

from acvbench.errors import QuerySyntaxError
from acvbench.metrics.query import Expr, HistogramQuantile, Rate, Selector, Sum, parse, parse_duration
from acvbench.metrics.store import EPOCH, MetricStore, Series, render_timestamp

LOOKBACK = 300  # seconds an instant selector looks back for the latest sample


def _labelkey(labels: dict) -> tuple:
    return tuple(sorted(labels.items()))


def _matching(store: MetricStore, sel: Selector) -> list[Series]:
    return [s for s in store.series_for(sel.metric) if all(m.matches(s.labels) for m in sel.matchers)]


def _window(series: Series, lo: int, hi: int) -> tuple[int, int]:
    """Index range of samples with lo < tick <= hi."""
    return bisect.bisect_right(series.ticks, lo), bisect.bisect_right(series.ticks, hi)


def two_point_rate(ticks: list, values: list) -> Optional[float]:
    if len(ticks) < 2:
        return None
    return (values[-1] - values[0]) / (ticks[-1] - ticks[0])


def _instant(store: MetricStore, expr: Expr, t: int) -> dict:
    """Vector at time ``t`` as {labelkey: value}."""
    if isinstance(expr, Selector):
        out = {}
        for s in _matching(store, expr):
            a, b = _window(s, t - LOOKBACK, t)
            if b > a:
                out[_labelkey(s.labels)] = s.values[b - 1]
        return out
    if isinstance(expr, Rate):
        sel = expr.arg
        out = {}
        for s in _matching(store, sel):
            a, b = _window(s, t - sel.window, t)
            r = two_point_rate(s.ticks[a:b], s.values[a:b])
            if r is not None:
                out[_labelkey(s.labels)] = r
        return out
    if isinstance(expr, Sum):
        groups: dict = {}
        for key, value in _instant(store, expr.arg, t).items():
            labels = dict(key)
            gkey = tuple(sorted((k, labels.get(k, "")) for k in expr.by)) if expr.by else ()
            groups[gkey] = groups.get(gkey, 0.0) + value
        return groups
    if isinstance(expr, HistogramQuantile):
        buckets: dict = {}
        for key, value in _instant(store, expr.arg, t).items():
            labels = dict(key)
            le = labels.pop("le", None)
            if le is None:
                continue
            buckets.setdefault(_labelkey(labels), []).append((float(le), value))
        return {k: histogram_quantile(expr.q, v) for k, v in buckets.items()}
    raise TypeError(f"unsupported node {expr!r}")


def histogram_quantile(q: float, buckets: list) -> float:
    """Linear interpolation inside the bucket holding rank ``q * total``.

    ``buckets`` is a list of (upper bound, cumulative count) pairs; +Inf must be present.
    """
    if q < 0:
        return -math.inf
    if q > 1:
        return math.inf
    buckets = sorted(buckets)
    if not buckets or buckets[-1][0] != math.inf:
        return math.nan
    # enforce monotone cumulative counts, as real scrapes can be slightly off
    fixed = []
    running = 0.0
    for bound, count in buckets:
        running = max(running, count)
        fixed.append((bound, running))
    total = fixed[-1][1]
    if total <= 0:
        return math.nan
    if len(fixed) < 2:
        return math.nan
    rank = q * total
    idx = 0
    while idx < len(fixed) - 1 and fixed[idx][1] < rank:
        idx += 1
    if idx == len(fixed) - 1:
        return fixed[-2][0]
    upper, count = fixed[idx]
    lower, prev = (0.0, 0.0) if idx == 0 else fixed[idx - 1]
    if idx == 0 and upper <= 0:
        return upper
    if count == prev:
        return upper
    return lower + (upper - lower) * (rank - prev) / (count - prev)


def eval_points(duration: int, step: int, now: int) -> list[int]:
    if step <= 0:
        raise QuerySyntaxError("step must be positive", 0)
    start = now - duration
    return [start + k * step for k in range(duration // step + 1)]


def evaluate(store: MetricStore, expr: Expr, duration: int, step: int, now: int) -> dict:
    """Return {labelkey: [(tick, value), ...]} over the evaluation points."""
    out: dict = {}
    for t in eval_points(duration, step, now):
        for key, value in _instant(store, expr, t).items():
            out.setdefault(key, []).append((t, value))
    return out


def _tidy(value: float) -> float:
    # hide float accumulation noise in printed output
    return value if math.isnan(value) or math.isinf(value) else round(value, 9)


def render_result(series: dict) -> list:
    """Shape the result the way the query tool prints it.

    One series gives a list of ``[timestamp, value]``; several give a list of
    ``{"metric": labels, "values": [...]}``; no data gives ``[]``.
    """
    if not series:
        return []
    rendered = {k: [[render_timestamp(t), _tidy(v)] for t, v in pts] for k, pts in series.items()}
    if len(rendered) == 1:
        return next(iter(rendered.values()))
    return [{"metric": dict(k), "values": v} for k, v in sorted(rendered.items())]


def parse_timestamp(text: str) -> int:
    moment = _dt.datetime.strptime(text.strip(), "%Y-%m-%d %H:%M:%S")
    return int((moment - EPOCH).total_seconds())


def query(store: MetricStore, promql: str, now: int, duration: Optional[str] = None, step: str = "1m",
          start_time: Optional[str] = None, end_time: Optional[str] = None) -> list:
    """Evaluate one query text and render it the way the agents' query tool does."""
    expr = parse(promql)
    step_s = parse_duration(step)
    if start_time is not None and end_time is not None:
        end = min(now, parse_timestamp(end_time))
        span = end - parse_timestamp(start_time)
        if span < 0:
            raise QuerySyntaxError("start_time is after end_time", 0)
        return render_result(evaluate(store, expr, span, step_s, end))
    if duration is None:
        raise QuerySyntaxError("query needs either duration or start_time/end_time", 0)
    return render_result(evaluate(store, expr, parse_duration(duration), step_s, now))
