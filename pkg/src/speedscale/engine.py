"""Exact event-driven simulation with piecewise-constant speeds.

Every shipped policy keeps its speeds fixed between events (arrivals and
departures), so each step jumps straight to the next event and completion
times come out in closed form. There is no time discretisation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .model import (
    COMPLETION_TOL,
    FEASIBILITY_SLACK,
    PowerModel,
    ProblemVariant,
    SpeedAssignment,
    SystemSnapshot,
    check_speed_caps,
)
from .policies import PolicyKind, PolicySpec, decide, hesrpt_order
from .workloads import Workload

#: When True every simulation re-checks feasibility on each interval. The
#: test suite switches this on globally.
CHECK_INVARIANTS = False
FLOW_RTOL = 1e-9


class SimulationStall(RuntimeError):
    """No job is being served and no arrival is pending."""


class TraceInvariantError(AssertionError):
    pass


class CheckCounter:
    intervals = 0
    traces = 0
    failures = 0


def _fail(msg: str):
    CheckCounter.failures += 1
    raise TraceInvariantError(msg)


@dataclass(frozen=True, eq=False)
class TraceInterval:
    t_start: float
    t_end: float
    n_active: int
    total_power: float
    assignment: SpeedAssignment | None = None
    remaining_start: np.ndarray | None = None
    remaining_end: np.ndarray | None = None


@dataclass(frozen=True)
class Completion:
    id: int
    arrival: float
    departure: float
    size: float


class Trace:
    """Result of one simulation run.

    Interval columns are numpy arrays; per-interval assignments and remaining
    work are kept only when the run was recorded in detail.
    """

    def __init__(self, *, policy: str, model: PowerModel, variant: ProblemVariant,
                 t_start, t_end, n_active, total_power, assignments, rem_start, rem_end,
                 job_ids, arrivals, sizes, departures):
        self.policy = policy
        self.model = model
        self.variant = variant
        self.t_start = np.asarray(t_start, dtype=float)
        self.t_end = np.asarray(t_end, dtype=float)
        self.n_active = np.asarray(n_active, dtype=np.int64)
        self.total_power = np.asarray(total_power, dtype=float)
        self.assignments = assignments
        self.rem_start = rem_start
        self.rem_end = rem_end
        self.job_ids = np.asarray(job_ids, dtype=np.int64)
        self.arrivals = np.asarray(arrivals, dtype=float)
        self.sizes = np.asarray(sizes, dtype=float)
        self.departures = np.asarray(departures, dtype=float)
        for arr in (self.t_start, self.t_end, self.n_active, self.total_power,
                    self.job_ids, self.arrivals, self.sizes, self.departures):
            arr.flags.writeable = False
        self._id_order = np.argsort(self.job_ids, kind="stable")

    # -- basic views -------------------------------------------------------
    @property
    def detailed(self) -> bool:
        return self.assignments is not None

    def __len__(self) -> int:
        return len(self.t_start)

    @property
    def lengths(self) -> np.ndarray:
        return self.t_end - self.t_start

    @property
    def makespan(self) -> float:
        return float(self.t_end[-1]) if len(self.t_end) else 0.0

    @property
    def boundaries(self) -> np.ndarray:
        if not len(self.t_start):
            return np.zeros(1)
        return np.append(self.t_start, self.t_end[-1])

    @property
    def complete(self) -> bool:
        return bool(np.all(np.isfinite(self.departures)))

    @property
    def intervals(self) -> list[TraceInterval]:
        out = []
        for k in range(len(self)):
            out.append(TraceInterval(
                float(self.t_start[k]), float(self.t_end[k]), int(self.n_active[k]),
                float(self.total_power[k]),
                self.assignments[k] if self.detailed else None,
                self.rem_start[k] if self.detailed else None,
                self.rem_end[k] if self.detailed else None,
            ))
        return out

    @property
    def completions(self) -> dict[int, Completion]:
        return {
            int(i): Completion(int(i), float(a), float(d), float(w))
            for i, a, d, w in zip(self.job_ids, self.arrivals, self.departures, self.sizes)
        }

    @property
    def remaining_curves(self) -> dict[int, list[tuple[float, float]]]:
        """Per job, ``(time, remaining)`` at every event while it is in the system."""
        self._need_detail()
        curves: dict[int, list[tuple[float, float]]] = {}
        for k, a in enumerate(self.assignments):
            t0 = float(self.t_start[k])
            for i, r in zip(a.ids, self.rem_start[k]):
                curves.setdefault(int(i), []).append((t0, float(r)))
        for i, d in zip(self.job_ids, self.departures):
            curves.setdefault(int(i), []).append((float(d), 0.0))
        return curves

    def _need_detail(self):
        if not self.detailed:
            raise ValueError("trace was recorded without per-interval detail")

    def _lookup(self, ids: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.job_ids, ids, sorter=self._id_order)
        return self._id_order[np.minimum(pos, len(self.job_ids) - 1)]

    def work_done(self) -> np.ndarray:
        """Integrated speed per job, aligned with ``job_ids``."""
        self._need_detail()
        work = np.zeros(len(self.job_ids))
        for k, a in enumerate(self.assignments):
            if len(a):
                np.add.at(work, self._lookup(a.ids), a.speeds * (self.t_end[k] - self.t_start[k]))
        return work

    # -- state at arbitrary times -----------------------------------------
    def locate(self, t: float, side: str = "right") -> int | None:
        """Index of the interval holding ``t``.

        ``side="right"`` picks the interval with ``t_start <= t < t_end``;
        ``side="left"`` the one with ``t_start < t <= t_end``. None when the
        system is empty there (before the first or after the last interval).
        """
        if side == "right":
            k = int(np.searchsorted(self.t_start, t, side="right")) - 1
            if k < 0 or t >= self.t_end[k]:
                return None
        elif side == "left":
            k = int(np.searchsorted(self.t_end, t, side="left"))
            if k >= len(self) or t <= self.t_start[k]:
                return None
        else:
            raise ValueError("side must be 'left' or 'right'")
        return k

    def state_at(self, t: float, side: str = "right") -> tuple[SystemSnapshot, SpeedAssignment]:
        """Snapshot and assignment at ``t`` (one-sided limit at event times)."""
        self._need_detail()
        finished = self.job_ids[self.departures < t] if side == "left" else self.job_ids[self.departures <= t]
        k = self.locate(t, side)
        if k is None or self.n_active[k] == 0:
            snap = SystemSnapshot(float(t), _EMPTY_I, _EMPTY_F, _EMPTY_F, _EMPTY_F, finished)
            return snap, SpeedAssignment.empty()
        a = self.assignments[k]
        if side == "left" and t == self.t_end[k]:
            rem = self.rem_end[k]
        elif t == self.t_start[k]:
            rem = self.rem_start[k]
        else:
            rem = np.maximum(self.rem_start[k] - a.speeds * (t - self.t_start[k]), 0.0)
        pos = self._lookup(a.ids)
        snap = SystemSnapshot(float(t), a.ids, self.arrivals[pos], rem, self.sizes[pos], finished)
        return snap, a

    def snapshot_at(self, t: float, side: str = "right") -> SystemSnapshot:
        return self.state_at(t, side)[0]

    # -- export -------------------------------------------------------------
    def records(self) -> Iterator[dict]:
        """Line records: one per interval, then one per completion."""
        for k in range(len(self)):
            rec = {"type": "interval", "t_start": float(self.t_start[k]), "t_end": float(self.t_end[k]),
                   "n_active": int(self.n_active[k]), "total_power": float(self.total_power[k])}
            if self.detailed:
                rec["speeds"] = {str(i): s for i, s in self.assignments[k].as_dict().items()}
            yield rec
        for c in self.completions.values():
            yield {"type": "completion", "id": c.id, "arrival": c.arrival,
                   "departure": c.departure, "size": c.size}

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")


_EMPTY_I = np.empty(0, dtype=np.int64)
_EMPTY_F = np.empty(0)
_EMPTY_I.flags.writeable = False
_EMPTY_F.flags.writeable = False


def _check_interval(spec: PolicySpec, snap: SystemSnapshot, a: SpeedAssignment, power: float,
                    model: PowerModel, variant: ProblemVariant, rem_end: np.ndarray) -> None:
    if power > model.p_budget + FEASIBILITY_SLACK:
        _fail(f"t={snap.time}: power {power} exceeds budget {model.p_budget}")
    if spec.kind is not PolicyKind.HESRPT:
        cap = variant.power_share(snap.n, model.p_budget)
        if power > cap + FEASIBILITY_SLACK:
            _fail(f"t={snap.time}: power {power} exceeds share {cap}")
    report = check_speed_caps(a, model, power)
    if not report.passed:
        _fail(f"t={snap.time}: speed caps failed at k={report.k} ({report.margin})")
    if spec.kind is PolicyKind.HESRPT and snap.n > 1:
        order = hesrpt_order(snap)
        end = rem_end[order]
        if np.any(np.diff(end) > 1e-9 * max(1.0, float(end.max()))):
            _fail(f"t={snap.time}: heSRPT remaining-size order inverted")
    CheckCounter.intervals += 1


def simulate(workload: Workload, spec: "PolicySpec | str", model: PowerModel,
             variant: "ProblemVariant | str" = ProblemVariant.FLOW_TIME_ENERGY, *,
             record: bool = True, check: bool | None = None) -> Trace:
    """Run one policy on one workload until every job has departed.

    With ``record=False`` only the interval columns and completions are kept,
    which is all the metrics need.
    """
    spec = PolicySpec.parse(spec)
    variant = ProblemVariant.parse(variant)
    check = CHECK_INVARIANTS if check is None else check
    all_ids, all_arr, all_size = workload.arrays()
    J = len(all_ids)
    if np.any(all_arr < 0):
        raise ValueError("arrival times must be >= 0")

    ts, te, na, tp = [], [], [], []
    assignments: list | None = [] if record else None
    rem_s: list | None = [] if record else None
    rem_e: list | None = [] if record else None
    departures = np.full(J, math.inf)

    act_pos = np.empty(0, dtype=np.int64)  # positions into the workload arrays
    act_rem = np.empty(0)
    t = 0.0
    i = 0

    def idle(t0, t1):
        ts.append(t0); te.append(t1); na.append(0); tp.append(0.0)
        if record:
            assignments.append(SpeedAssignment.empty()); rem_s.append(_EMPTY_F); rem_e.append(_EMPTY_F)

    while True:
        if act_pos.size == 0:
            if i >= J:
                break
            nxt = all_arr[i]
            if nxt > t:
                idle(t, nxt)
                t = nxt
        if i < J and all_arr[i] <= t:
            j = i
            while j < J and all_arr[j] <= t:
                j += 1
            act_pos = np.concatenate([act_pos, np.arange(i, j)])
            act_rem = np.concatenate([act_rem, all_size[i:j]])
            i = j
        ids = all_ids[act_pos]
        snap = SystemSnapshot(t, ids, all_arr[act_pos], act_rem, None, None)
        a = decide(spec, snap, model, variant)
        s = a.speeds
        busy = s > 0
        ttc = np.full(s.shape, math.inf)
        np.divide(act_rem, s, out=ttc, where=busy)
        first = int(np.argmin(ttc))
        dt = float(ttc[first])
        nxt = float(all_arr[i]) if i < J else math.inf
        if math.isinf(dt) and math.isinf(nxt):
            raise SimulationStall(f"t={t}: no job served and no arrival pending")
        if nxt - t <= dt:
            t_new, dt, first = nxt, nxt - t, -1
        else:
            t_new = t + dt
        new_rem = act_rem - s * dt
        if first >= 0:
            new_rem[first] = 0.0
        np.maximum(new_rem, 0.0, out=new_rem)
        if t_new <= t:
            # Residual work too small to advance the clock: finish it now.
            new_rem[ttc <= dt] = 0.0
        else:
            power = float(np.sum(np.power(s[busy], model.alpha))) if busy.any() else 0.0
            if check:
                _check_interval(spec, snap, a, power, model, variant, new_rem)
            ts.append(t); te.append(t_new); na.append(len(act_pos)); tp.append(power)
            if record:
                assignments.append(SpeedAssignment(a.ids, np.array(s)))
                rem_s.append(act_rem)
                rem_e.append(new_rem)
        done = new_rem <= COMPLETION_TOL
        if done.any():
            departures[act_pos[done]] = t_new
            keep = ~done
            act_pos = act_pos[keep]
            act_rem = new_rem[keep]
        else:
            act_rem = new_rem
        t = t_new

    if check:
        direct = float(np.sum(departures - all_arr)) if J else 0.0
        integral = float(np.dot(na, np.subtract(te, ts))) if ts else 0.0
        if abs(direct - integral) > FLOW_RTOL * max(abs(direct), 1e-300):
            _fail(f"flow time mismatch: sojourns {direct} vs integral of n(t) {integral}")
        CheckCounter.traces += 1
    return Trace(policy=spec.label, model=model, variant=variant, t_start=ts, t_end=te,
                 n_active=na, total_power=tp, assignments=assignments, rem_start=rem_s,
                 rem_end=rem_e, job_ids=all_ids, arrivals=all_arr, sizes=all_size,
                 departures=departures)


class CoupledTraces:
    """An algorithm trace and a reference trace over the same workload.

    Unpacks as ``(a, ref)``; ``boundaries`` is the union of both event sets.
    """

    def __init__(self, a: Trace, ref: Trace):
        if not np.array_equal(a.job_ids, ref.job_ids) or not np.array_equal(a.arrivals, ref.arrivals):
            raise ValueError("coupled traces must come from the same workload")
        self.a = a
        self.ref = ref
        self.boundaries = np.union1d(a.boundaries, ref.boundaries)

    def __iter__(self):
        yield self.a
        yield self.ref

    @property
    def merged_intervals(self) -> list[tuple[float, float]]:
        b = self.boundaries
        return list(zip(b[:-1].tolist(), b[1:].tolist()))


def simulate_coupled(workload: Workload, spec_a, spec_b, model: PowerModel,
                     variant: "ProblemVariant | str" = ProblemVariant.FLOW_TIME_ENERGY, *,
                     check: bool | None = None) -> CoupledTraces:
    ta = simulate(workload, spec_a, model, variant, record=True, check=check)
    tb = simulate(workload, spec_b, model, variant, record=True, check=check)
    return CoupledTraces(ta, tb)
