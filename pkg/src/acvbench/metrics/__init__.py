from acvbench.metrics.engine import evaluate, histogram_quantile, query, render_result
from acvbench.metrics.query import parse, to_text
from acvbench.metrics.store import MetricStore, Sample, render_timestamp

__all__ = [
    "MetricStore",
    "Sample",
    "evaluate",
    "histogram_quantile",
    "parse",
    "query",
    "render_result",
    "render_timestamp",
    "to_text",
]
