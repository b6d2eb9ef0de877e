"""Power/speedup algebra and the value types shared by every other module.

The power curve is fixed to ``P(s) = s**alpha`` with ``alpha > 1``. Under the
server-count view a job running at speed ``s`` occupies ``k = P(s)`` servers,
so the sum-power budget doubles as the server budget ``N``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

#: Work at or below this level counts as finished.
COMPLETION_TOL = 1e-12
#: Absolute slack on power-feasibility assertions.
FEASIBILITY_SLACK = 1e-9
#: Relative tolerance on algebraic identities.
IDENTITY_RTOL = 1e-12


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


class ProblemVariant(str, enum.Enum):
    """Which objective the speed rules and potentials are tuned for.

    ``FLOW_TIME`` replaces every ``min(n, p)`` with ``p``.
    """

    FLOW_TIME = "flow"
    FLOW_TIME_ENERGY = "flow-energy"

    @classmethod
    def parse(cls, text: "str | ProblemVariant") -> "ProblemVariant":
        if isinstance(text, ProblemVariant):
            return text
        key = text.strip().lower().replace("_", "-")
        aliases = {
            "flow": cls.FLOW_TIME,
            "flow-time": cls.FLOW_TIME,
            "flowtime": cls.FLOW_TIME,
            "flow-energy": cls.FLOW_TIME_ENERGY,
            "flow-time-energy": cls.FLOW_TIME_ENERGY,
            "flowtimeenergy": cls.FLOW_TIME_ENERGY,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown problem variant {text!r}") from None

    def power_share(self, count: float, p_budget: float) -> float:
        """Power handed to ``count`` outstanding jobs: ``min(count, p)`` or ``p``."""
        if self is ProblemVariant.FLOW_TIME:
            return p_budget
        return min(count, p_budget)

    @property
    def counts_energy(self) -> bool:
        return self is ProblemVariant.FLOW_TIME_ENERGY


@dataclass(frozen=True)
class PowerModel:
    alpha: float
    p_budget: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 1):
            raise ValueError(f"alpha must be > 1, got {self.alpha}")
        if not (math.isfinite(self.p_budget) and self.p_budget > 0):
            raise ValueError(f"p_budget must be > 0, got {self.p_budget}")

    def speedup(self, k):
        """Service rate from ``k`` (fractional) servers, ``k**(1/alpha)``."""
        return power_inv(self, k)


def _check_nonneg(x, what: str):
    if np.any(np.asarray(x) < 0):
        raise ValueError(f"{what} must be non-negative, got {x}")


def power(model: PowerModel, s):
    """``s**alpha``; accepts scalars or arrays."""
    _check_nonneg(s, "speed")
    return np.power(s, model.alpha) if isinstance(s, np.ndarray) else float(s) ** model.alpha


def power_inv(model: PowerModel, x):
    """Speed reachable with power ``x``: ``x**(1/alpha)``."""
    _check_nonneg(x, "power")
    inv = 1.0 / model.alpha
    return np.power(x, inv) if isinstance(x, np.ndarray) else float(x) ** inv


def q_fn(model: PowerModel, x):
    """``Q(x) = x / P^{-1}(x) = x**(1 - 1/alpha)``."""
    _check_nonneg(x, "argument")
    e = 1.0 - 1.0 / model.alpha
    return np.power(x, e) if isinstance(x, np.ndarray) else float(x) ** e


@dataclass(frozen=True)
class Job:
    id: int
    arrival_time: float
    size: float

    def __post_init__(self):
        if not math.isfinite(self.arrival_time) or self.arrival_time < 0:
            raise ValueError(f"job {self.id}: arrival time must be finite and >= 0")
        if not (math.isfinite(self.size) and self.size > 0):
            raise ValueError(f"job {self.id}: size must be > 0, got {self.size}")


@dataclass(frozen=True)
class JobState:
    job: Job
    remaining: float

    def __post_init__(self):
        if not (0 <= self.remaining <= self.job.size):
            raise ValueError(
                f"job {self.job.id}: remaining {self.remaining} outside [0, {self.job.size}]"
            )


@dataclass(frozen=True, eq=False)
class SystemSnapshot:
    """Active jobs at one instant, in arrival order (ties by id).

    Stored column-wise so policies can work on whole arrays. ``finished``
    optionally lists ids that have already departed; the potential functions
    use it to tell "done" apart from "unknown job".
    """

    time: float
    ids: np.ndarray
    arrivals: np.ndarray
    remaining: np.ndarray
    sizes: np.ndarray | None = None
    finished: np.ndarray | None = None

    @classmethod
    def from_arrays(cls, time, ids, arrivals, remaining, sizes=None, finished=None, *,
                    sort: bool = True) -> "SystemSnapshot":
        ids = np.asarray(ids, dtype=np.int64)
        arrivals = np.asarray(arrivals, dtype=float)
        remaining = np.asarray(remaining, dtype=float)
        if not (len(ids) == len(arrivals) == len(remaining)):
            raise ValueError("ids, arrivals and remaining must have equal length")
        if sizes is not None:
            sizes = np.asarray(sizes, dtype=float)
        if sort and len(ids) > 1:
            order = np.lexsort((ids, arrivals))
            ids, arrivals, remaining = ids[order], arrivals[order], remaining[order]
            if sizes is not None:
                sizes = sizes[order]
        return cls(
            float(time),
            _frozen(ids, np.int64),
            _frozen(arrivals, float),
            _frozen(remaining, float),
            None if sizes is None else _frozen(sizes, float),
            None if finished is None else _frozen(np.asarray(finished), np.int64),
        )

    @classmethod
    def from_states(cls, time: float, states: Iterable[JobState], finished=None) -> "SystemSnapshot":
        states = list(states)
        return cls.from_arrays(
            time,
            [s.job.id for s in states],
            [s.job.arrival_time for s in states],
            [s.remaining for s in states],
            [s.job.size for s in states],
            finished,
        )

    @classmethod
    def empty(cls, time: float = 0.0) -> "SystemSnapshot":
        return cls.from_arrays(time, [], [], [])

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def active(self) -> list[JobState]:
        sizes = self.sizes if self.sizes is not None else self.remaining
        return [
            JobState(Job(int(i), float(a), float(max(w, r))), float(r))
            for i, a, w, r in zip(self.ids, self.arrivals, sizes, self.remaining)
        ]


@dataclass(frozen=True, eq=False)
class SpeedAssignment:
    """Speed per active job; ``ids`` and ``speeds`` are aligned arrays."""

    ids: np.ndarray
    speeds: np.ndarray

    @classmethod
    def from_arrays(cls, ids, speeds) -> "SpeedAssignment":
        ids = np.asarray(ids, dtype=np.int64)
        speeds = np.asarray(speeds, dtype=float)
        if ids.shape != speeds.shape:
            raise ValueError("ids and speeds must be aligned")
        if np.any(speeds < 0):
            raise ValueError("speeds must be non-negative")
        return cls(_frozen(ids, np.int64), _frozen(speeds, float))

    @classmethod
    def from_mapping(cls, speeds: Mapping[int, float]) -> "SpeedAssignment":
        return cls.from_arrays(list(speeds.keys()), list(speeds.values()))

    @classmethod
    def empty(cls) -> "SpeedAssignment":
        return cls.from_arrays([], [])

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(s) for i, s in zip(self.ids, self.speeds)}

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpeedAssignment):
            return NotImplemented
        return np.array_equal(self.ids, other.ids) and np.array_equal(self.speeds, other.speeds)

    __hash__ = None


def assignment_power(a: SpeedAssignment, model: PowerModel) -> float:
    s = a.speeds[a.speeds > 0]
    if s.size == 0:
        return 0.0
    return float(np.sum(np.power(s, model.alpha)))


@dataclass(frozen=True)
class SpeedCapReport:
    passed: bool
    k: int | None = None
    margin: float | None = None
    detail: str = ""


def check_speed_caps(a: SpeedAssignment, model: PowerModel,
                     total_power: float | None = None) -> SpeedCapReport:
    """Power-mean caps on an assignment.

    The largest single speed is at most ``P^{-1}(total)`` and the ``k``
    largest speeds sum to at most ``Q(k) * P^{-1}(total)``. ``total_power``
    defaults to the assignment's own power draw. ``margin`` is the amount by
    which the first failing inequality is exceeded; on a pass it is the
    tightest slack (<= 0) and ``k`` is where that occurs.
    """
    if total_power is None:
        total_power = assignment_power(a, model)
    s = np.sort(a.speeds)[::-1]
    if s.size == 0:
        return SpeedCapReport(True)
    cap = power_inv(model, float(total_power))
    if s[0] > cap * (1 + 1e-12) + 1e-12:
        return SpeedCapReport(False, 1, float(s[0] - cap), "max speed exceeds P^-1(total)")
    k = np.arange(1, s.size + 1, dtype=float)
    bounds = np.power(k, 1.0 - 1.0 / model.alpha) * cap
    sums = np.cumsum(s)
    excess = sums - bounds
    bad = np.nonzero(excess > 1e-12 * bounds + 1e-12)[0]
    if bad.size:
        i = int(bad[0])
        return SpeedCapReport(False, i + 1, float(excess[i]), "top-k speed sum exceeds Q(k)P^-1(total)")
    i = int(np.argmax(excess))
    return SpeedCapReport(True, i + 1, float(excess[i]))


def speeds_to_servers(a: SpeedAssignment, model: PowerModel) -> dict[int, float]:
    return {int(i): float(k) for i, k in zip(a.ids, np.power(a.speeds, model.alpha))}


def servers_to_speeds(servers: Mapping[int, float], model: PowerModel) -> SpeedAssignment:
    ids = list(servers.keys())
    k = np.asarray(list(servers.values()), dtype=float)
    _check_nonneg(k, "server count")
    return SpeedAssignment.from_arrays(ids, np.power(k, 1.0 / model.alpha))


def is_power_feasible(a: SpeedAssignment, model: PowerModel, cap: float | None = None) -> bool:
    limit = model.p_budget if cap is None else cap
    return assignment_power(a, model) <= limit + FEASIBILITY_SLACK
