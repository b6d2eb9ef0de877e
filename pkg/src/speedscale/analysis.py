"""Competitive-ratio bounds, the two potential functions and trace monitors.

The monitors take an algorithm trace and a reference trace simulated on the
same workload and check numerically what the amortised analysis promises:

* the potential never jumps up when a job departs (and, for the online
  potential, does not move at all when a job arrives);
* on every stretch between events the running condition
  ``n + P_sum + dPhi/dt <= kappa * (n_ref + P_sum_ref)`` holds, where the
  power terms are dropped for the pure flow-time objective.

Any power-feasible schedule may stand in for the offline optimum, so the
checks are meaningful against heSRPT as well.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Callable, Union

import numpy as np

from .engine import CoupledTraces, Trace
from .metrics import objective
from .model import (
    COMPLETION_TOL,
    PowerModel,
    ProblemVariant,
    SystemSnapshot,
    assignment_power,
)

JUMP_TOL = 1e-9
RUNNING_SLACK = 1e-6
DEFAULT_BETA = 1.0 / 6.0


class Setting(str, enum.Enum):
    BATCH = "batch"
    ONLINE = "online"


class InfeasibleConstants(ValueError):
    pass


@dataclass(frozen=True)
class BoundReport:
    alpha: float
    variant: ProblemVariant
    setting: Setting
    kappa: float
    beta: float | None = None
    gamma: float | None = None
    c: float | None = None
    c1: float | None = None
    margin: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        d["setting"] = self.setting.value
        return {k: v for k, v in d.items() if v is not None}


def _check_alpha(alpha: float):
    if not (math.isfinite(alpha) and alpha > 1):
        raise ValueError(f"alpha must be > 1, got {alpha}")


def mu_batch(alpha: float, variant: "ProblemVariant | str" = ProblemVariant.FLOW_TIME_ENERGY) -> float:
    """EQUI's bound with every job present at time zero."""
    _check_alpha(alpha)
    variant = ProblemVariant.parse(variant)
    scale = 2.0 if variant.counts_energy else 1.0
    return (2.0 - 1.0 / alpha) * scale / (1.0 - 1.0 / alpha)


def batch_c1(alpha: float, variant: "ProblemVariant | str" = ProblemVariant.FLOW_TIME_ENERGY) -> float:
    _check_alpha(alpha)
    variant = ProblemVariant.parse(variant)
    return (2.0 if variant.counts_energy else 1.0) / (1.0 - 1.0 / alpha)


def batch_constants(alpha: float, variant="flow-energy") -> BoundReport:
    variant = ProblemVariant.parse(variant)
    return BoundReport(alpha, variant, Setting.BATCH, mu_batch(alpha, variant), c1=batch_c1(alpha, variant))


def _online_terms(alpha: float, beta: float, gamma: float) -> tuple[float, float]:
    _check_alpha(alpha)
    if not (0 < gamma <= beta < 1):
        raise ValueError(f"need 0 < gamma < beta < 1, got beta={beta}, gamma={gamma}")
    drain = (1 - beta) * (beta - gamma) / beta ** (1.0 / alpha)
    leak = gamma ** (1.0 - 1.0 / alpha)
    return drain, leak


def online_feasible(alpha: float, beta: float, gamma: float) -> bool:
    """Whether ``(1-beta)(beta-gamma)/P^{-1}(beta) > gamma**(1-1/alpha)``."""
    drain, leak = _online_terms(alpha, beta, gamma)
    return drain > leak


def online_constants(alpha: float, beta: float = DEFAULT_BETA, gamma: float | None = None,
                     variant="flow-energy") -> BoundReport:
    """Smallest admissible ``c`` and the resulting ``kappa = (2 + c)/gamma``.

    Under the pure flow-time objective the bound is halved.
    """
    variant = ProblemVariant.parse(variant)
    if gamma is None:
        gamma = beta * beta
    drain, leak = _online_terms(alpha, beta, gamma)
    if not drain > leak:
        raise InfeasibleConstants(
            f"(1-beta)(beta-gamma)/P^-1(beta) = {drain:.6g} must exceed gamma^(1-1/alpha) = {leak:.6g}"
        )
    c = 2.0 / (drain - leak)
    if not c * drain > 1:
        raise InfeasibleConstants(f"c*(1-beta)(beta-gamma)/P^-1(beta) = {c * drain:.6g} must exceed 1")
    kappa = (2.0 + c) / gamma
    if not variant.counts_energy:
        kappa /= 2.0
    return BoundReport(alpha, variant, Setting.ONLINE, kappa, beta=beta, gamma=gamma, c=c,
                       margin=drain - leak)


def best_online_beta(alpha: float, variant="flow-energy", grid: int = 2000) -> BoundReport:
    """Grid search over beta with gamma = beta**2 for the smallest bound."""
    best = None
    for beta in np.linspace(1e-3, 0.999, grid):
        try:
            rep = online_constants(alpha, float(beta), float(beta) ** 2, variant)
        except InfeasibleConstants:
            continue
        if best is None or rep.kappa < best.kappa:
            best = rep
    if best is None:
        raise InfeasibleConstants(f"no feasible beta found for alpha={alpha}")
    return best


# -- potentials -----------------------------------------------------------------

def _paired_remaining(snap_a: SystemSnapshot, snap_ref: SystemSnapshot,
                      speeds_ref: np.ndarray | None = None):
    """Reference remaining work (and speed) for each job active under the algorithm.

    Jobs the reference has already finished count as zero remaining work.
    """
    if snap_a.time != snap_ref.time:
        raise ValueError(f"snapshots at different times: {snap_a.time} vs {snap_ref.time}")
    ids = snap_a.ids
    q_ref = np.zeros(len(ids))
    s_ref = np.zeros(len(ids))
    if len(ids) == 0:
        return q_ref, s_ref
    if snap_ref.n:
        order = np.argsort(snap_ref.ids)
        sorted_ids = snap_ref.ids[order]
        pos = np.minimum(np.searchsorted(sorted_ids, ids), len(sorted_ids) - 1)
        hit = sorted_ids[pos] == ids
        q_ref[hit] = snap_ref.remaining[order[pos[hit]]]
        if speeds_ref is not None:
            s_ref[hit] = speeds_ref[order[pos[hit]]]
    else:
        hit = np.zeros(len(ids), dtype=bool)
    if snap_ref.finished is not None and not hit.all():
        unknown = ~hit & ~np.isin(ids, snap_ref.finished)
        if unknown.any():
            raise ValueError(f"jobs {ids[unknown][:5].tolist()} unknown to the reference snapshot")
    return q_ref, s_ref


def sf_weight(n: int, model: PowerModel, variant: ProblemVariant) -> float:
    """Prefactor ``P^{-1}(n / min(n, p))`` (``p`` in place of the min for flow time)."""
    if n == 0:
        return 0.0
    return (n / variant.power_share(n, model.p_budget)) ** (1.0 / model.alpha)


def online_weights(n: int, model: PowerModel, variant: ProblemVariant) -> np.ndarray:
    """``r / (P^{-1}(min(r, p)) Q(r))`` for ranks ``r = 1..n``."""
    r = np.arange(1, n + 1, dtype=float)
    if variant.counts_energy:
        cap = np.minimum(r, model.p_budget)
    else:
        cap = np.full(n, float(model.p_budget))
    return r / (np.power(cap, 1.0 / model.alpha) * np.power(r, 1.0 - 1.0 / model.alpha))


def _ranks_positions(snap: SystemSnapshot) -> np.ndarray:
    """Rank of each active job (1 = earliest arrival), aligned with ``snap.ids``."""
    order = np.lexsort((snap.ids, snap.arrivals))
    ranks = np.empty(snap.n, dtype=np.int64)
    ranks[order] = np.arange(1, snap.n + 1)
    return ranks


def phi_sf(snap_a: SystemSnapshot, snap_ref: SystemSnapshot, c1: float, model: PowerModel,
           variant: "ProblemVariant | str" = ProblemVariant.FLOW_TIME_ENERGY) -> float:
    variant = ProblemVariant.parse(variant)
    if snap_a.n == 0:
        return 0.0
    q_ref, _ = _paired_remaining(snap_a, snap_ref)
    surplus = np.maximum(snap_a.remaining - q_ref, 0.0)
    return float(c1 * sf_weight(snap_a.n, model, variant) * surplus.sum())


def phi_online(snap_a: SystemSnapshot, snap_ref: SystemSnapshot, c: float, model: PowerModel,
               variant: "ProblemVariant | str" = ProblemVariant.FLOW_TIME_ENERGY) -> float:
    variant = ProblemVariant.parse(variant)
    if snap_a.n == 0:
        return 0.0
    q_ref, _ = _paired_remaining(snap_a, snap_ref)
    surplus = np.maximum(snap_a.remaining - q_ref, 0.0)
    w = online_weights(snap_a.n, model, variant)[_ranks_positions(snap_a) - 1]
    return float(c * np.dot(w, surplus))


PotentialFn = Callable[[SystemSnapshot, SystemSnapshot], float]
Potential = Union[str, PotentialFn]


def _job_weights(potential: str, snap_a: SystemSnapshot, c: float, model: PowerModel,
                 variant: ProblemVariant) -> np.ndarray:
    if potential == "sf":
        return np.full(snap_a.n, c * sf_weight(snap_a.n, model, variant))
    if potential == "online":
        return c * online_weights(snap_a.n, model, variant)[_ranks_positions(snap_a) - 1]
    raise ValueError(f"unknown potential {potential!r}")


def _resolve(potential: Potential, c: float, model: PowerModel, variant: ProblemVariant) -> PotentialFn:
    if callable(potential):
        return potential
    if potential == "sf":
        return lambda a, r: phi_sf(a, r, c, model, variant)
    if potential == "online":
        return lambda a, r: phi_online(a, r, c, model, variant)
    raise ValueError(f"unknown potential {potential!r}")


def default_constants(potential: str, alpha: float, variant, beta: float = DEFAULT_BETA,
                      gamma: float | None = None) -> BoundReport:
    if potential == "sf":
        return batch_constants(alpha, variant)
    if potential == "online":
        return online_constants(alpha, beta, gamma, variant)
    raise ValueError(f"unknown potential {potential!r}")


# -- monitors -------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSample:
    time: float
    phi: float
    dphi_dt: float
    lhs: float
    rhs: float


@dataclass(frozen=True)
class Violation:
    kind: str
    time: float
    margin: float
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _without(snap: SystemSnapshot, drop: np.ndarray) -> SystemSnapshot:
    if not drop.size:
        return snap
    keep = ~np.isin(snap.ids, drop)
    finished = drop if snap.finished is None else np.union1d(snap.finished, drop)
    return SystemSnapshot(snap.time, snap.ids[keep], snap.arrivals[keep], snap.remaining[keep],
                          None if snap.sizes is None else snap.sizes[keep], finished)


def potential_at(coupled: CoupledTraces, t: float, potential: Potential = "sf", c: float = 1.0,
                 side: str = "right") -> float:
    a, ref = coupled
    fn = _resolve(potential, c, a.model, a.variant)
    return fn(a.snapshot_at(t, side), ref.snapshot_at(t, side))


def check_boundary_jumps(coupled: CoupledTraces, potential: Potential = "sf", c: float | None = None,
                         *, tol: float = JUMP_TOL, check_arrivals: bool | None = None) -> list[Violation]:
    """Compare the potential across every event on either trace.

    Departures are applied before arrivals at a shared instant, so each event
    time is split into left limit -> after departures -> after arrivals.
    """
    a, ref = coupled
    model, variant = a.model, a.variant
    if c is None:
        c = _constant(potential, model.alpha, variant)
    fn = _resolve(potential, c, model, variant)
    if check_arrivals is None:
        check_arrivals = potential != "sf"
    arrival_times = set(np.unique(a.arrivals).tolist())
    out = []
    for b in coupled.boundaries.tolist():
        left_a, left_r = a.snapshot_at(b, "left"), ref.snapshot_at(b, "left")
        gone_a = a.job_ids[a.departures == b]
        gone_r = ref.job_ids[ref.departures == b]
        phi_left = fn(left_a, left_r)
        if gone_a.size or gone_r.size:
            phi_mid = fn(_without(left_a, gone_a), _without(left_r, gone_r))
            if phi_mid - phi_left > tol:
                who = "algorithm" if gone_a.size else "reference"
                out.append(Violation("departure-jump", b, phi_mid - phi_left,
                                     f"potential rose on {who} departure"))
        else:
            phi_mid = phi_left
        if check_arrivals and b in arrival_times:
            phi_right = fn(a.snapshot_at(b, "right"), ref.snapshot_at(b, "right"))
            if abs(phi_right - phi_mid) > tol:
                out.append(Violation("arrival-jump", b, abs(phi_right - phi_mid),
                                     "potential changed on arrival"))
    return out


def _constant(potential: Potential, alpha: float, variant: ProblemVariant) -> float:
    if callable(potential):
        return 1.0
    rep = default_constants(potential, alpha, variant)
    return rep.c1 if potential == "sf" else rep.c


def _positive_part_rate(x: np.ndarray, dx: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Right derivative of ``max(x, 0)`` given ``dx/dt``."""
    zero = np.abs(x) <= 1e-12 * scale
    return np.where(x > 0, dx, 0.0) * ~zero + np.maximum(dx, 0.0) * zero


def _negligible(lo: float, hi: float) -> bool:
    # Zero-measure pieces: rounding leftovers between near-coincident events.
    return hi - lo <= COMPLETION_TOL * max(1.0, abs(hi))


def running_condition_samples(coupled: CoupledTraces, potential: str = "sf", c: float | None = None,
                              kappa: float | None = None, *, beta: float = DEFAULT_BETA,
                              gamma: float | None = None) -> list[PotentialSample]:
    """Evaluate both sides of the running condition inside every merged interval.

    Each merged interval is cut further where some job's surplus changes sign,
    pieces no longer than the completion tolerance are skipped, and the condition is evaluated at each piece's start (right limit) and
    midpoint. Within a piece the potential is linear in time, so the reported
    drift is exact.
    """
    a, ref = coupled
    model, variant = a.model, a.variant
    if c is None or kappa is None:
        rep = default_constants(potential, model.alpha, variant, beta, gamma)
        c = (rep.c1 if potential == "sf" else rep.c) if c is None else c
        kappa = rep.kappa if kappa is None else kappa
    energy = variant.counts_energy
    samples = []
    for b0, b1 in coupled.merged_intervals:
        if _negligible(b0, b1):
            continue
        snap_a, asg_a = a.state_at(b0, "right")
        snap_r, asg_r = ref.state_at(b0, "right")
        n, n_ref = snap_a.n, snap_r.n
        p_a = assignment_power(asg_a, model) if energy else 0.0
        p_r = assignment_power(asg_r, model) if energy else 0.0
        rhs = kappa * (n_ref + p_r)
        if n == 0:
            for t in (b0, 0.5 * (b0 + b1)):
                samples.append(PotentialSample(t, 0.0, 0.0, p_a, rhs))
            continue
        q_ref, s_ref = _paired_remaining(snap_a, snap_r, asg_r.speeds)
        x0 = snap_a.remaining - q_ref
        dx = s_ref - asg_a.speeds
        w = _job_weights(potential, snap_a, c, model, variant)
        scale = np.maximum(snap_a.sizes, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = b0 - x0 / dx
        cuts = np.unique(cross[np.isfinite(cross) & (cross > b0) & (cross < b1)])
        edges = np.concatenate([[b0], cuts, [b1]])
        for lo, hi in zip(edges[:-1], edges[1:]):
            if _negligible(lo, hi):
                continue
            for t in (lo, 0.5 * (lo + hi)):
                x = x0 + dx * (t - b0)
                phi = float(np.dot(w, np.maximum(x, 0.0)))
                dphi = float(np.dot(w, _positive_part_rate(x, dx, scale)))
                samples.append(PotentialSample(float(t), phi, dphi, n + p_a + dphi, rhs))
    return samples


def check_running_condition(coupled: CoupledTraces, potential: str = "sf", c: float | None = None,
                            kappa: float | None = None, *, beta: float = DEFAULT_BETA,
                            gamma: float | None = None, slack: float = RUNNING_SLACK) -> list[Violation]:
    out = []
    for s in running_condition_samples(coupled, potential, c, kappa, beta=beta, gamma=gamma):
        if s.lhs > s.rhs + slack:
            out.append(Violation("running-condition", s.time, s.lhs - s.rhs,
                                 f"lhs={s.lhs:.6g} rhs={s.rhs:.6g} dphi={s.dphi_dt:.6g}"))
    return out


def drift_finite_difference(coupled: CoupledTraces, t: float, h: float, potential: str = "sf",
                            c: float = 1.0) -> float:
    """Central difference of the potential at an interior time ``t``."""
    return (potential_at(coupled, t + h, potential, c) - potential_at(coupled, t - h, potential, c)) / (2 * h)


def empirical_cr(trace_a: Trace, trace_ref: Trace, model: PowerModel | None = None,
                 variant: "ProblemVariant | str | None" = None) -> float:
    """Objective ratio; an upper estimate of the true ratio when the reference is not optimal."""
    num = objective(trace_a, model, variant)
    den = objective(trace_ref, model, variant)
    if den <= 0:
        raise ZeroDivisionError("reference objective is zero")
    return num / den
