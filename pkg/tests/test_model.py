import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from speedscale.model import (
    Job,
    JobState,
    PowerModel,
    ProblemVariant,
    SpeedAssignment,
    SystemSnapshot,
    assignment_power,
    check_speed_caps,
    is_power_feasible,
    power,
    power_inv,
    q_fn,
    servers_to_speeds,
    speeds_to_servers,
)

alphas = st.floats(min_value=1.01, max_value=20.0)


@pytest.mark.parametrize("alpha,s,expected", [(2, 1, 1), (2, 2, 4), (2.5, 3, 15.588457268119896)])
def test_power_examples(alpha, s, expected):
    assert power(PowerModel(alpha, 1.0), s) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("alpha,x,expected", [(2, 4, 2), (3, 1, 1), (2, 0.5, 0.7071067811865476)])
def test_power_inv_examples(alpha, x, expected):
    assert power_inv(PowerModel(alpha, 1.0), x) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("alpha,x,expected", [(2, 16, 4), (2, 1, 1), (3, 8, 4)])
def test_q_examples(alpha, x, expected):
    assert q_fn(PowerModel(alpha, 1.0), x) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("fn", [power, power_inv, q_fn])
def test_negative_inputs_rejected(fn):
    with pytest.raises(ValueError):
        fn(PowerModel(2, 1.0), -1.0)
    with pytest.raises(ValueError):
        fn(PowerModel(2, 1.0), np.array([1.0, -0.5]))


def test_model_validation():
    for bad in (1.0, 0.5, -2, math.inf, math.nan):
        with pytest.raises(ValueError):
            PowerModel(bad, 1.0)
    with pytest.raises(ValueError):
        PowerModel(2, 0.0)


@given(alphas, st.floats(min_value=0, max_value=1e6))
def test_power_roundtrip(alpha, s):
    m = PowerModel(alpha, 1.0)
    assert power_inv(m, power(m, s)) == pytest.approx(s, rel=1e-9, abs=1e-12)


def test_speedup_is_power_inverse():
    m = PowerModel(3.0, 1.0)
    assert m.speedup(27.0) == pytest.approx(3.0)


def test_variant_parse_and_share():
    assert ProblemVariant.parse("flow") is ProblemVariant.FLOW_TIME
    assert ProblemVariant.parse("flow-energy") is ProblemVariant.FLOW_TIME_ENERGY
    assert ProblemVariant.FLOW_TIME_ENERGY.power_share(3, 10) == 3
    assert ProblemVariant.FLOW_TIME.power_share(3, 10) == 10
    assert ProblemVariant.FLOW_TIME_ENERGY.counts_energy
    assert not ProblemVariant.FLOW_TIME.counts_energy
    with pytest.raises(ValueError):
        ProblemVariant.parse("energy-only")


def test_job_validation():
    with pytest.raises(ValueError):
        Job(0, -1.0, 1.0)
    with pytest.raises(ValueError):
        Job(0, 0.0, 0.0)
    with pytest.raises(ValueError):
        JobState(Job(0, 0.0, 1.0), 2.0)


def test_snapshot_sorted_by_arrival_then_id():
    snap = SystemSnapshot.from_arrays(0.0, [9, 7, 3], [1.0, 1.0, 0.5], [1, 2, 3])
    assert snap.ids.tolist() == [3, 7, 9]
    assert snap.remaining.tolist() == [3, 2, 1]
    assert snap.n == 3
    assert [s.job.id for s in snap.active] == [3, 7, 9]
    assert SystemSnapshot.empty().n == 0


@pytest.mark.parametrize("speeds,expected", [({1: 1.0, 2: 1.0}, 2.0), ({}, 0.0)])
def test_assignment_power_examples(speeds, expected):
    assert assignment_power(SpeedAssignment.from_mapping(speeds), PowerModel(2, 1.0)) == expected


def test_assignment_power_near_half():
    a = SpeedAssignment.from_mapping({1: 0.7071, 2: 0.7071})
    assert assignment_power(a, PowerModel(2, 1.0)) == pytest.approx(1.0, abs=1e-3)


def test_speed_caps_examples():
    m = PowerModel(2, 1.0)
    assert check_speed_caps(SpeedAssignment.from_mapping({1: 1, 2: 1}), m, 2).passed
    assert check_speed_caps(SpeedAssignment.from_mapping({1: 1.5, 2: 0.1}), m, 2.26).passed
    for alpha in (1.3, 2, 7):
        s = 1.7
        model = PowerModel(alpha, 10)
        rep = check_speed_caps(SpeedAssignment.from_mapping({4: s}), model)
        assert rep.passed and rep.margin == pytest.approx(0.0, abs=1e-12)


def test_speed_caps_detect_excess():
    m = PowerModel(2, 1.0)
    rep = check_speed_caps(SpeedAssignment.from_mapping({1: 2.0, 2: 0.1}), m, 2.26)
    assert not rep.passed and rep.k == 1


@given(alphas, st.lists(st.floats(min_value=0, max_value=100), min_size=1, max_size=30))
def test_speed_caps_hold_for_any_assignment(alpha, speeds):
    model = PowerModel(alpha, 1e9)
    a = SpeedAssignment.from_arrays(np.arange(len(speeds)), speeds)
    assert check_speed_caps(a, model).passed


def test_servers_speeds():
    m = PowerModel(2, 1.0)
    a = SpeedAssignment.from_mapping({1: 2.0, 2: 0.0})
    assert speeds_to_servers(a, m) == {1: 4.0, 2: 0.0}


@given(alphas, st.dictionaries(st.integers(0, 100), st.floats(min_value=0, max_value=1e4), max_size=20))
def test_servers_roundtrip(alpha, servers):
    m = PowerModel(alpha, 1.0)
    back = speeds_to_servers(servers_to_speeds(servers, m), m)
    for k, v in servers.items():
        assert back[k] == pytest.approx(v, rel=1e-12, abs=1e-12)


def test_feasibility():
    m = PowerModel(2, 2.0)
    assert is_power_feasible(SpeedAssignment.from_mapping({1: 1, 2: 1}), m)
    assert not is_power_feasible(SpeedAssignment.from_mapping({1: 1.1, 2: 1}), m)


def test_assignment_equality():
    a = SpeedAssignment.from_mapping({1: 0.5, 2: 1.0})
    b = SpeedAssignment.from_arrays([1, 2], [0.5, 1.0])
    assert a == b and len(a) == 2 and a.as_dict() == {1: 0.5, 2: 1.0}
