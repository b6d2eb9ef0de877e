"""EQUI, heSRPT and Fractional-LCFS-EQUI as pure snapshot -> assignment maps."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import PowerModel, ProblemVariant, SpeedAssignment, SystemSnapshot


class PolicyKind(str, enum.Enum):
    EQUI = "equi"
    HESRPT = "hesrpt"
    LCFS_EQUI = "lcfs"


@dataclass(frozen=True)
class PolicySpec:
    kind: PolicyKind
    beta: float = 1.0

    def __post_init__(self):
        if not (0 < self.beta <= 1):
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.kind is not PolicyKind.LCFS_EQUI and self.beta != 1.0:
            raise ValueError("beta only applies to the lcfs policy")

    @classmethod
    def parse(cls, text: "str | PolicySpec") -> "PolicySpec":
        """Parse ``equi``, ``hesrpt`` or ``lcfs:beta=0.1667`` (``beta=1/6`` also works)."""
        if isinstance(text, PolicySpec):
            return text
        name, _, params = text.strip().lower().partition(":")
        try:
            kind = PolicyKind(name.strip())
        except ValueError:
            raise ValueError(f"unknown policy {text!r}") from None
        beta = 1.0
        if params:
            for item in params.split(","):
                key, sep, value = item.partition("=")
                if not sep or key.strip() != "beta":
                    raise ValueError(f"bad policy parameter {item!r} in {text!r}")
                try:
                    beta = float(Fraction(value.strip()))
                except (ValueError, ZeroDivisionError):
                    raise ValueError(f"bad beta value {value!r}") from None
        elif kind is PolicyKind.LCFS_EQUI:
            raise ValueError("lcfs policy needs a beta, e.g. lcfs:beta=0.5")
        return cls(kind, beta)

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.LCFS_EQUI:
            return f"lcfs:beta={self.beta:.6g}"
        return self.kind.value


@dataclass(frozen=True)
class RankView:
    ranks: dict[int, int]


def compute_ranks(snap: SystemSnapshot) -> RankView:
    """Rank = 1 + number of active jobs that arrived strictly earlier in (arrival, id) order."""
    order = np.lexsort((snap.ids, snap.arrivals))
    ranks = np.empty(snap.n, dtype=np.int64)
    ranks[order] = np.arange(1, snap.n + 1)
    return RankView({int(i): int(r) for i, r in zip(snap.ids, ranks)})


def _in_arrival_order(snap: SystemSnapshot) -> bool:
    if snap.n < 2:
        return True
    a, ids = snap.arrivals, snap.ids
    return bool(np.all((a[1:] > a[:-1]) | ((a[1:] == a[:-1]) & (ids[1:] > ids[:-1]))))


def equi_decide(snap: SystemSnapshot, model: PowerModel,
                variant: ProblemVariant = ProblemVariant.FLOW_TIME_ENERGY) -> SpeedAssignment:
    variant = ProblemVariant.parse(variant)
    n = snap.n
    if n == 0:
        return SpeedAssignment.empty()
    share = variant.power_share(n, model.p_budget) / n
    return SpeedAssignment(snap.ids, np.full(n, share ** (1.0 / model.alpha)))


def hesrpt_allocation(n: int, N: float, alpha: float) -> np.ndarray:
    """Server counts for ``n`` jobs indexed from largest (1) to smallest (n) remaining size."""
    if n <= 0:
        return np.empty(0)
    if N <= 0:
        raise ValueError("server budget must be positive")
    e = alpha / (alpha - 1.0)
    frac = np.power(np.arange(n + 1, dtype=float) / n, e)
    return N * np.diff(frac)


def hesrpt_order(snap: SystemSnapshot) -> np.ndarray:
    """Positions of active jobs from largest to smallest remaining work.

    Ties put the later arrival (then the higher id) first.
    """
    return np.lexsort((-snap.ids, -snap.arrivals, -snap.remaining))


def hesrpt_decide(snap: SystemSnapshot, model: PowerModel,
                  variant: ProblemVariant = ProblemVariant.FLOW_TIME_ENERGY) -> SpeedAssignment:
    # Same allocation in both variants, with N = p.
    n = snap.n
    if n == 0:
        return SpeedAssignment.empty()
    k = hesrpt_allocation(n, model.p_budget, model.alpha)
    speeds = np.empty(n)
    speeds[hesrpt_order(snap)] = np.power(k, 1.0 / model.alpha)
    return SpeedAssignment(snap.ids, speeds)


def served_count(n: int, beta: float) -> int:
    """``ceil(beta * n)`` with float noise on exact products ignored."""
    if n == 0:
        return 0
    m = math.ceil(beta * n - 1e-9)
    return min(n, max(1, m))


def lcfs_equi_decide(snap: SystemSnapshot, model: PowerModel,
                     variant: ProblemVariant = ProblemVariant.FLOW_TIME_ENERGY,
                     beta: float = 1.0) -> SpeedAssignment:
    """Serve the ``ceil(beta*n)`` most recent arrivals at a common speed.

    The served count ``m`` also sits in the speed denominator, so the power
    draw never exceeds ``min(n, p)`` even when ``beta*n`` is fractional.
    """
    if not (0 < beta <= 1):
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    variant = ProblemVariant.parse(variant)
    n = snap.n
    if n == 0:
        return SpeedAssignment.empty()
    m = served_count(n, beta)
    speed = (variant.power_share(n, model.p_budget) / m) ** (1.0 / model.alpha)
    speeds = np.zeros(n)
    if _in_arrival_order(snap):
        speeds[n - m:] = speed
    else:
        order = np.lexsort((snap.ids, snap.arrivals))
        speeds[order[n - m:]] = speed
    return SpeedAssignment(snap.ids, speeds)


def decide(spec: PolicySpec, snap: SystemSnapshot, model: PowerModel,
           variant: ProblemVariant) -> SpeedAssignment:
    if spec.kind is PolicyKind.EQUI:
        return equi_decide(snap, model, variant)
    if spec.kind is PolicyKind.HESRPT:
        return hesrpt_decide(snap, model, variant)
    return lcfs_equi_decide(snap, model, variant, spec.beta)
