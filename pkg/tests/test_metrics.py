import math

import pytest

from helpers import POLICIES, random_workloads, two_jobs
from speedscale.engine import simulate
from speedscale.metrics import (
    IncompleteTraceError,
    MetricsReport,
    energy,
    flow_time,
    flow_time_integral,
    flow_time_sojourn,
    objective,
    report,
)
from speedscale.model import PowerModel
from speedscale.workloads import Workload

M22 = PowerModel(2, 2)
HESRPT_MAKESPAN = math.sqrt(2 / 3) + (2 - math.sqrt(0.5) * math.sqrt(2 / 3)) / math.sqrt(2)
HESRPT_FLOW = math.sqrt(2 / 3) + HESRPT_MAKESPAN


def test_equi_hand_trace():
    tr = simulate(two_jobs(), "equi", M22, "flow-energy")
    assert flow_time(tr) == pytest.approx(3.0, rel=1e-12)
    assert energy(tr) == pytest.approx(3.0, rel=1e-12)
    assert objective(tr) == pytest.approx(6.0, rel=1e-12)
    assert objective(tr, variant="flow") == pytest.approx(3.0, rel=1e-12)


def test_hesrpt_hand_trace():
    tr = simulate(two_jobs(), "hesrpt", M22, "flow-energy")
    assert flow_time(tr) == pytest.approx(HESRPT_FLOW, rel=1e-9)
    assert flow_time(tr) == pytest.approx(2.639, abs=1e-3)
    # heSRPT burns the whole budget while anything is left
    assert energy(tr) == pytest.approx(2 * tr.makespan, rel=1e-12)
    assert energy(tr) == pytest.approx(2 * HESRPT_MAKESPAN, rel=1e-9)


def test_single_job_flow_is_size():
    tr = simulate(Workload.from_arrays([0.0], [4.25]), "equi", PowerModel(3, 1), "flow-energy")
    assert flow_time(tr) == pytest.approx(4.25, rel=1e-12)


def test_empty_objective_and_idle_energy():
    tr = simulate(Workload.from_arrays([], []), "equi", M22)
    assert objective(tr) == 0.0
    assert energy(tr) == 0.0


def test_incomplete_trace_rejected():
    tr = simulate(two_jobs(), "equi", M22)
    deps = tr.departures.copy()
    deps[1] = math.inf
    tr.departures = deps
    with pytest.raises(IncompleteTraceError):
        flow_time(tr)


def test_flow_formulas_agree_everywhere():
    for w, m in random_workloads(60, seed=21):
        for spec in POLICIES:
            for variant in ("flow", "flow-energy"):
                tr = simulate(w, spec, m, variant, record=False)
                a, b = flow_time_sojourn(tr), flow_time_integral(tr)
                assert a == pytest.approx(b, rel=1e-9)


def test_report_row():
    tr = simulate(two_jobs(), "equi", M22, "flow-energy")
    rep = report(tr)
    assert MetricsReport.columns() == ["flow_time", "energy", "objective", "mean_flow_time",
                                       "job_count", "makespan"]
    assert rep.row() == pytest.approx([3.0, 3.0, 6.0, 1.5, 2, 2.0])
    assert report(tr, "flow").objective == pytest.approx(3.0)
