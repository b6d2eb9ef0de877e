import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from speedscale.model import PowerModel, SystemSnapshot, assignment_power, check_speed_caps
from speedscale.policies import (
    PolicyKind,
    PolicySpec,
    compute_ranks,
    decide,
    equi_decide,
    hesrpt_allocation,
    hesrpt_decide,
    lcfs_equi_decide,
    served_count,
)


def snap_of(remaining, arrivals=None, ids=None, t=0.0):
    n = len(remaining)
    arrivals = [0.0] * n if arrivals is None else arrivals
    ids = list(range(n)) if ids is None else ids
    return SystemSnapshot.from_arrays(t, ids, arrivals, remaining)


def test_parse_specs():
    assert PolicySpec.parse("equi").kind is PolicyKind.EQUI
    assert PolicySpec.parse("hesrpt").kind is PolicyKind.HESRPT
    spec = PolicySpec.parse("lcfs:beta=1/6")
    assert spec.kind is PolicyKind.LCFS_EQUI and spec.beta == pytest.approx(1 / 6)
    assert PolicySpec.parse("lcfs:beta=0.25").beta == 0.25
    assert PolicySpec.parse("lcfs:beta=0.5").label == "lcfs:beta=0.5"
    for bad in ("srpt", "lcfs", "lcfs:beta=0", "lcfs:beta=1.5", "lcfs:gamma=0.2"):
        with pytest.raises(ValueError):
            PolicySpec.parse(bad)


@pytest.mark.parametrize("n,p,variant,speed", [
    (5, 10, "flow-energy", 1.0),
    (20, 10, "flow-energy", 0.7071067811865476),
    (5, 10, "flow", 1.4142135623730951),
])
def test_equi_examples(n, p, variant, speed):
    a = equi_decide(snap_of([1.0] * n), PowerModel(2, p), variant)
    assert len(a) == n
    assert np.allclose(a.speeds, speed, rtol=1e-12)


def test_equi_empty():
    assert len(equi_decide(SystemSnapshot.empty(), PowerModel(2, 10), "flow")) == 0


def test_hesrpt_allocation_examples():
    assert hesrpt_allocation(1, 1000, 2.0).tolist() == pytest.approx([1000])
    assert hesrpt_allocation(2, 36, 2.0).tolist() == pytest.approx([9, 27], rel=1e-12)
    assert hesrpt_allocation(3, 1, 2.0).tolist() == pytest.approx([1 / 9, 3 / 9, 5 / 9], rel=1e-12)
    assert hesrpt_allocation(0, 10, 2.0).size == 0


@given(st.integers(1, 3000), st.floats(0.01, 1e5), st.floats(1.01, 50))
def test_hesrpt_allocation_sums_to_budget(n, N, alpha):
    k = hesrpt_allocation(n, N, alpha)
    assert k.size == n
    assert np.all(k >= 0)
    # (1/n)^(alpha/(alpha-1)) can underflow for alpha near 1
    if (1.0 / n) ** (alpha / (alpha - 1)) * N > 1e-300:
        assert np.all(k > 0)
    assert abs(k.sum() - N) <= 1e-9 * max(1.0, N)
    # index 1 (largest remaining) gets the least
    assert np.all(np.diff(k) >= -1e-12 * N)


def test_hesrpt_decide_examples():
    a = hesrpt_decide(snap_of([5.0]), PowerModel(2, 1000), "flow")
    assert a.speeds[0] == pytest.approx(math.sqrt(1000))
    a = hesrpt_decide(snap_of([2.0, 1.0]), PowerModel(2, 2), "flow-energy")
    d = a.as_dict()
    assert d[0] == pytest.approx(0.7071067811865476) and d[1] == pytest.approx(1.224744871391589)


def test_hesrpt_tie_break_later_arrival_first():
    # equal remaining: the later arrival sorts as "larger" and gets fewer servers
    snap = snap_of([1.0, 1.0], arrivals=[0.0, 1.0], ids=[4, 2], t=1.0)
    d = hesrpt_decide(snap, PowerModel(2, 2), "flow").as_dict()
    assert d[2] < d[4]
    snap = snap_of([1.0, 1.0], ids=[3, 8])
    d = hesrpt_decide(snap, PowerModel(2, 2), "flow").as_dict()
    assert d[8] < d[3]


def test_lcfs_example():
    arrivals = list(range(12))
    snap = snap_of([1.0] * 12, arrivals=arrivals, t=12.0)
    model = PowerModel(2, 100)
    a = lcfs_equi_decide(snap, model, "flow-energy", 1 / 6)
    d = a.as_dict()
    served = [j for j, s in d.items() if s > 0]
    assert sorted(served) == [10, 11]
    assert d[10] == pytest.approx(math.sqrt(6)) and d[11] == pytest.approx(2.449489742783178)
    assert assignment_power(a, model) == pytest.approx(12.0)


def test_lcfs_single_job():
    m = PowerModel(2, 10)
    s = snap_of([3.0])
    assert lcfs_equi_decide(s, m, "flow-energy", 1 / 6) == equi_decide(s, m, "flow-energy")


@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=40),
       st.sampled_from(["flow", "flow-energy"]), st.floats(1.1, 5), st.floats(0.1, 100))
def test_lcfs_beta_one_is_equi(remaining, variant, alpha, p):
    m = PowerModel(alpha, p)
    s = snap_of(remaining, arrivals=sorted(np.linspace(0, 1, len(remaining))))
    assert lcfs_equi_decide(s, m, variant, 1.0) == equi_decide(s, m, variant)


@pytest.mark.parametrize("n,beta,m", [(1, 1 / 6, 1), (6, 1 / 6, 1), (7, 1 / 6, 2), (12, 1 / 6, 2),
                                       (12, 1 / 4, 3), (3, 1 / 2, 2), (10, 1.0, 10), (0, 0.5, 0)])
def test_served_count(n, beta, m):
    assert served_count(n, beta) == m


def test_ranks():
    snap = snap_of([1, 1, 1], arrivals=[0, 1, 2], ids=[5, 6, 7], t=2)
    assert compute_ranks(snap).ranks == {5: 1, 6: 2, 7: 3}
    snap = snap_of([1, 1], arrivals=[0, 2], ids=[5, 7], t=2)
    assert compute_ranks(snap).ranks == {5: 1, 7: 2}
    snap = snap_of([1, 1], ids=[9, 7])
    assert compute_ranks(snap).ranks[7] == 1


@given(st.lists(st.floats(0.01, 100), min_size=0, max_size=40),
       st.sampled_from(["equi", "hesrpt", "lcfs:beta=0.5", "lcfs:beta=1/6"]),
       st.sampled_from(["flow", "flow-energy"]), st.floats(1.05, 8), st.floats(0.1, 500))
def test_decisions_feasible(remaining, spec, variant, alpha, p):
    m = PowerModel(alpha, p)
    s = snap_of(remaining)
    a = decide(PolicySpec.parse(spec), s, m, variant)
    total = assignment_power(a, m)
    assert total <= p + 1e-9
    if spec != "hesrpt" and remaining:
        assert total <= min(len(remaining), p) + 1e-9 or variant == "flow"
    assert check_speed_caps(a, m, total).passed
