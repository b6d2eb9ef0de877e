"""Flow time, energy and the two objectives, computed from traces."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .engine import FLOW_RTOL, Trace
from .model import PowerModel, ProblemVariant


class IncompleteTraceError(ValueError):
    pass


def flow_time_sojourn(trace: Trace) -> float:
    if not trace.complete:
        missing = trace.job_ids[~np.isfinite(trace.departures)]
        raise IncompleteTraceError(f"jobs never finished: {missing[:10].tolist()}")
    return float(np.sum(trace.departures - trace.arrivals))


def flow_time_integral(trace: Trace) -> float:
    """``integral n(t) dt`` over the trace's intervals."""
    return float(np.dot(trace.n_active, trace.lengths))


def flow_time(trace: Trace) -> float:
    """Sum of sojourn times, cross-checked against the integral of n(t)."""
    direct = flow_time_sojourn(trace)
    integral = flow_time_integral(trace)
    if not math.isclose(direct, integral, rel_tol=FLOW_RTOL, abs_tol=1e-12):
        raise AssertionError(f"flow time mismatch: sojourns {direct} vs integral {integral}")
    return direct


def energy(trace: Trace, model: PowerModel | None = None) -> float:
    # Interval power was computed with the trace's own model.
    return float(np.dot(trace.total_power, trace.lengths))


def objective(trace: Trace, model: PowerModel | None = None,
              variant: "ProblemVariant | str | None" = None) -> float:
    variant = trace.variant if variant is None else ProblemVariant.parse(variant)
    if len(trace.job_ids) == 0:
        return 0.0
    ft = flow_time(trace)
    return ft + energy(trace) if variant.counts_energy else ft


@dataclass(frozen=True)
class MetricsReport:
    flow_time: float
    energy: float
    objective: float
    mean_flow_time: float
    job_count: int
    makespan: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return list(astuple(self))


def report(trace: Trace, variant: "ProblemVariant | str | None" = None) -> MetricsReport:
    ft = flow_time(trace)
    en = energy(trace)
    variant = trace.variant if variant is None else ProblemVariant.parse(variant)
    n = len(trace.job_ids)
    return MetricsReport(
        flow_time=ft,
        energy=en,
        objective=ft + en if variant.counts_energy else ft,
        mean_flow_time=ft / n if n else 0.0,
        job_count=n,
        makespan=trace.makespan,
    )
