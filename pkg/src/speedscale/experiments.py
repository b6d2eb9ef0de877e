"""Replicated experiments, figure reproduction and batch verification.

Within a replication every policy runs on the byte-identical workload
(common random numbers). Replication ``r`` draws its workload from the seed
stream ``(seed, r)``, so output does not depend on the worker count.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .engine import SimulationStall, simulate, simulate_coupled
from .metrics import MetricsReport, report
from .model import PowerModel, ProblemVariant
from .policies import PolicyKind, PolicySpec
from .workloads import Workload, gen_batch, gen_slotted_poisson, load_workload, make_rng

log = logging.getLogger(__name__)

WORKERS_ENV = "SPEEDSCALE_WORKERS"
CSV_COLUMNS = ["replication", "policy", "status"] + MetricsReport.columns()


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    policies: tuple[PolicySpec, ...]
    alpha: float = 2.0
    p_budget: float = 1000.0
    variant: ProblemVariant = ProblemVariant.FLOW_TIME
    workload: str = "batch"
    count: int = 1000
    mean_size: float = 20.0
    slots: int = 1000
    arrival_rate: float = 20.0
    workload_file: str | None = None
    reps: int = 1
    seed: int = 0
    output: str | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("replication count must be >= 1")
        if not self.policies:
            raise ValueError("at least one policy is required")
        if self.workload not in ("batch", "slotted-poisson", "file"):
            raise ValueError(f"unknown workload kind {self.workload!r}")
        if self.workload == "file" and not self.workload_file:
            raise ValueError("workload 'file' needs workload_file")
        PowerModel(self.alpha, self.p_budget)

    @property
    def model(self) -> PowerModel:
        return PowerModel(self.alpha, self.p_budget)

    def make_workload(self, rep: int) -> Workload:
        if self.workload == "batch":
            return gen_batch(self.count, self.mean_size, self.seed, rep)
        if self.workload == "slotted-poisson":
            return gen_slotted_poisson(self.slots, self.arrival_rate, self.mean_size, self.seed, rep)
        return load_workload(self.workload_file)

    _KEYS = {
        "policies": "policies", "alpha": "alpha", "p": "p_budget", "p_budget": "p_budget",
        "variant": "variant", "workload": "workload", "count": "count", "mean_size": "mean_size",
        "slots": "slots", "arrival_rate": "arrival_rate", "rate": "arrival_rate",
        "workload_file": "workload_file", "file": "workload_file", "reps": "reps",
        "seed": "seed", "output": "output", "workers": "workers",
    }

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        kw = {}
        for key, raw in values.items():
            if raw is None:
                continue
            name = cls._KEYS.get(key.replace("-", "_"))
            if name is None:
                raise ValueError(f"unknown config key {key!r}")
            kw[name] = raw
        if "policies" in kw and isinstance(kw["policies"], str):
            kw["policies"] = [p for p in kw["policies"].split(",") if p.strip()]
        kw["policies"] = tuple(PolicySpec.parse(p) for p in kw.get("policies", ()))
        if "variant" in kw:
            kw["variant"] = ProblemVariant.parse(kw["variant"])
        if kw.get("workload") in ("poisson", "slotted"):
            kw["workload"] = "slotted-poisson"
        for name in ("alpha", "p_budget", "mean_size", "arrival_rate"):
            if name in kw:
                kw[name] = float(kw[name])
        for name in ("count", "slots", "reps", "seed", "workers"):
            if name in kw:
                kw[name] = int(kw[name])
        return cls(**kw)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        """Read ``key = value`` lines; ``overrides`` (e.g. CLI flags) win."""
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.read_string("[experiment]\n" + Path(path).read_text())
        values = dict(parser["experiment"])
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_mapping(values)


@dataclass(frozen=True)
class RunRow:
    replication: int
    policy: str
    report: MetricsReport | None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.report is not None

    def csv_row(self) -> list:
        status = "ok" if self.ok else f"failed: {self.error}"
        metrics = self.report.row() if self.ok else [math.nan] * len(MetricsReport.columns())
        return [self.replication, self.policy, status] + metrics


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[RunRow] = field(default_factory=list)

    def policy_rows(self, label: str) -> list[RunRow]:
        return [r for r in self.rows if r.policy == label and r.ok]

    def summary(self) -> dict[str, dict[str, float]]:
        """Arithmetic mean of every metric column per policy over successful rows."""
        out = {}
        for spec in self.config.policies:
            rows = self.policy_rows(spec.label)
            if not rows:
                continue
            arr = np.array([r.report.row() for r in rows], dtype=float)
            out[spec.label] = dict(zip(MetricsReport.columns(), arr.mean(axis=0).tolist()))
        return out

    def mean_flow(self, label: str) -> float:
        return self.summary()[label]["mean_flow_time"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow(row.csv_row())
        for label, means in self.summary().items():
            w.writerow(["mean", label, "summary"] + [repr(means[c]) for c in MetricsReport.columns()])
        return buf.getvalue()


def run_replication(config: ExperimentConfig, rep: int) -> list[RunRow]:
    workload = config.make_workload(rep)
    model = config.model
    rows = []
    for spec in config.policies:
        try:
            trace = simulate(workload, spec, model, config.variant, record=False)
            rows.append(RunRow(rep, spec.label, report(trace)))
        except SimulationStall as exc:
            rows.append(RunRow(rep, spec.label, None, str(exc)))
    return rows


def _run_chunk(args):
    config, reps = args
    return [run_replication(config, r) for r in reps]


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    workers = workers or config.workers or default_workers()
    reps = list(range(config.reps))
    result = ExperimentResult(config)
    if workers <= 1 or len(reps) == 1:
        for r in reps:
            result.rows.extend(run_replication(config, r))
    else:
        chunks = [reps[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_run_chunk, [(config, c) for c in chunks if c]))
        by_rep = {}
        for chunk, block in zip([c for c in chunks if c], blocks):
            for r, rows in zip(chunk, block):
                by_rep[r] = rows
        for r in reps:
            result.rows.extend(by_rep[r])
    log.info("finished %d replications x %d policies", config.reps, len(config.policies))
    return result


# -- figure reproduction ----------------------------------------------------------

ONLINE_POLICIES = ("hesrpt", "equi", "lcfs:beta=1/2", "lcfs:beta=1/4", "lcfs:beta=1/6")


@dataclass(frozen=True)
class Figure:
    name: str
    workload: str
    alphas: tuple[float, ...]
    policies: tuple[str, ...]
    published: dict  # {alpha: {policy label: mean flow time}}
    default_reps: int


def _labels(policies, values):
    return {PolicySpec.parse(p).label: v for p, v in zip(policies, values)}


FIGURES = {
    "offline": Figure(
        "offline", "batch", (1.01, 2.0, 5.0, 10.0, 20.0), ("equi", "hesrpt"),
        {1.01: _labels(("equi", "hesrpt"), (371, 270)),
         2.0: _labels(("equi", "hesrpt"), (358, 338)),
         5.0: _labels(("equi", "hesrpt"), (367, 366)),
         10.0: _labels(("equi", "hesrpt"), (375, 370)),
         20.0: _labels(("equi", "hesrpt"), (380, 375))},
        500,
    ),
    "online-2": Figure("online-2", "slotted-poisson", (2.0,), ONLINE_POLICIES,
                       {2.0: _labels(ONLINE_POLICIES, (475, 505, 730, 1043, 1287))}, 200),
    "online-2.5": Figure("online-2.5", "slotted-poisson", (2.5,), ONLINE_POLICIES,
                         {2.5: _labels(ONLINE_POLICIES, (462.2, 476.28, 737, 1127, 1445))}, 200),
    "online-3": Figure("online-3", "slotted-poisson", (3.0,), ONLINE_POLICIES,
                       {3.0: _labels(ONLINE_POLICIES, (451, 460, 742, 1184, 1562))}, 200),
}


@dataclass(frozen=True)
class ComparisonRow:
    alpha: float
    policy: str
    measured: float
    published: float

    @property
    def rel_error(self) -> float:
        return (self.measured - self.published) / self.published


@dataclass
class Reproduction:
    figure: Figure
    rows: list[ComparisonRow]
    results: dict[float, ExperimentResult]

    def table(self) -> str:
        lines = [f"{'alpha':>6}  {'policy':<20} {'measured':>12} {'published':>10} {'rel.err':>9}"]
        for r in self.rows:
            lines.append(f"{r.alpha:>6g}  {r.policy:<20} {r.measured:>12.4f} {r.published:>10g} {r.rel_error:>+9.2%}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "policy", "measured_mean_flow_time", "published_value", "rel_error"])
        for r in self.rows:
            w.writerow([r.alpha, r.policy, repr(r.measured), r.published, repr(r.rel_error)])
        return buf.getvalue()


def figure_config(figure: Figure, alpha: float, *, reps: int | None = None, slots: int | None = None,
                  variant="flow", seed: int = 0, workers: int | None = None) -> ExperimentConfig:
    return ExperimentConfig(
        policies=tuple(PolicySpec.parse(p) for p in figure.policies),
        alpha=alpha,
        p_budget=1000.0,
        variant=ProblemVariant.parse(variant),
        workload=figure.workload,
        count=1000,
        mean_size=20.0,
        slots=1000 if slots is None else slots,
        arrival_rate=20.0,
        reps=figure.default_reps if reps is None else reps,
        seed=seed,
        workers=workers,
    )


def reproduce(figure_id: str, *, reps: int | None = None, slots: int | None = None,
              variant="flow", seed: int = 0, workers: int | None = None) -> Reproduction:
    try:
        figure = FIGURES[figure_id]
    except KeyError:
        raise ValueError(f"unknown figure {figure_id!r}; choose from {sorted(FIGURES)}") from None
    rows, results = [], {}
    for alpha in figure.alphas:
        cfg = figure_config(figure, alpha, reps=reps, slots=slots, variant=variant, seed=seed, workers=workers)
        res = run_experiment(cfg)
        results[alpha] = res
        summary = res.summary()
        for label, published in figure.published[alpha].items():
            rows.append(ComparisonRow(alpha, label, summary[label]["mean_flow_time"], published))
    return Reproduction(figure, rows, results)


# -- randomized verification -----------------------------------------------------

P_CHOICES = (0.5, 1.0, 3.0, 10.0, 50.0)


@dataclass(frozen=True)
class VerifyConfig:
    setting: str = "batch"
    alpha: float = 2.0
    beta: float = analysis.DEFAULT_BETA
    gamma: float | None = None
    variant: ProblemVariant = ProblemVariant.FLOW_TIME_ENERGY
    instances: int = 100
    seed: int = 0
    kappa: float | None = None
    max_jobs: int = 60
    max_slots: int = 25

    def __post_init__(self):
        if self.setting not in ("batch", "online"):
            raise ValueError(f"setting must be 'batch' or 'online', got {self.setting!r}")
        if self.instances < 1:
            raise ValueError("need at least one instance")


@dataclass(frozen=True)
class InstanceViolation:
    instance: int
    seed: int
    violation: analysis.Violation

    def to_dict(self) -> dict:
        return {"instance": self.instance, "seed": self.seed, **self.violation.to_dict()}


@dataclass
class VerifyResult:
    config: VerifyConfig
    constants: analysis.BoundReport
    kappa: float
    violations: list[InstanceViolation]
    checked_instances: int
    samples: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "setting": self.config.setting,
            "alpha": self.config.alpha,
            "variant": self.config.variant.value,
            "kappa": self.kappa,
            "constants": self.constants.to_dict(),
            "instances": self.checked_instances,
            "samples": self.samples,
            "violation_count": len(self.violations),
            "violations": [v.to_dict() for v in self.violations[:200]],
        }


def random_instance(setting: str, seed: int, stream: int, max_jobs: int = 60, max_slots: int = 25):
    """Random workload and power budget for the monitors."""
    rng = make_rng(seed, stream)
    p = float(rng.choice(P_CHOICES))
    sub = int(rng.integers(0, 2**31))
    if setting == "batch":
        count = int(rng.integers(1, max_jobs + 1))
        return gen_batch(count, 20.0, sub), p
    slots = int(rng.integers(2, max_slots + 1))
    rate = float(rng.uniform(0.3, 4.0))
    w = gen_slotted_poisson(slots, rate, float(rng.choice((1.0, 5.0, 20.0))), sub)
    if len(w) == 0:
        w = gen_batch(1, 5.0, sub)
    return w, p


def verify(cfg: VerifyConfig) -> VerifyResult:
    """Monitor the potential on random coupled instances against heSRPT."""
    potential = "sf" if cfg.setting == "batch" else "online"
    consts = analysis.default_constants(potential, cfg.alpha, cfg.variant, cfg.beta, cfg.gamma)
    c = consts.c1 if potential == "sf" else consts.c
    kappa = consts.kappa if cfg.kappa is None else cfg.kappa
    algo = PolicySpec(PolicyKind.EQUI) if cfg.setting == "batch" else PolicySpec(PolicyKind.LCFS_EQUI, cfg.beta)
    found, samples = [], 0
    for k in range(cfg.instances):
        workload, p = random_instance(cfg.setting, cfg.seed, k, cfg.max_jobs, cfg.max_slots)
        model = PowerModel(cfg.alpha, p)
        coupled = simulate_coupled(workload, algo, "hesrpt", model, cfg.variant)
        viol = analysis.check_boundary_jumps(coupled, potential, c)
        sample_list = analysis.running_condition_samples(coupled, potential, c, kappa)
        samples += len(sample_list)
        viol += [analysis.Violation("running-condition", s.time, s.lhs - s.rhs,
                                    f"lhs={s.lhs:.6g} rhs={s.rhs:.6g}")
                 for s in sample_list if s.lhs > s.rhs + analysis.RUNNING_SLACK]
        found += [InstanceViolation(k, cfg.seed, v) for v in viol]
    return VerifyResult(cfg, consts, kappa, found, cfg.instances, samples)
