"""Batch and slotted-Poisson job streams, plus a plain-text workload format.

File format: a header line ``# speedscale-workload key=value ...`` carrying
the generator descriptor, then one ``id arrival size`` record per line.
Floats are written with ``repr`` so a save/load round trip is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .model import Job

HEADER_TAG = "# speedscale-workload"


class WorkloadFormatError(ValueError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(frozen=True)
class WorkloadMeta:
    kind: str = "explicit"
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def header(self) -> str:
        parts = [HEADER_TAG, f"kind={self.kind}"]
        if self.seed is not None:
            parts.append(f"seed={self.seed}")
        parts += [f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in self.params.items()]
        return " ".join(parts)


def _coerce(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


@dataclass(frozen=True, eq=False)
class Workload:
    jobs: tuple[Job, ...]
    meta: WorkloadMeta = field(default_factory=WorkloadMeta)

    def __post_init__(self):
        seen = set()
        prev = None
        for job in self.jobs:
            if job.id in seen:
                raise ValueError(f"duplicate job id {job.id}")
            seen.add(job.id)
            key = (job.arrival_time, job.id)
            if prev is not None and key < prev:
                raise ValueError("jobs must be sorted by (arrival_time, id)")
            prev = key

    @classmethod
    def from_jobs(cls, jobs: Iterable[Job], meta: WorkloadMeta | None = None) -> "Workload":
        ordered = sorted(jobs, key=lambda j: (j.arrival_time, j.id))
        return cls(tuple(ordered), meta or WorkloadMeta())

    @classmethod
    def from_arrays(cls, arrivals, sizes, ids=None, meta: WorkloadMeta | None = None) -> "Workload":
        arrivals = np.asarray(arrivals, dtype=float)
        sizes = np.asarray(sizes, dtype=float)
        if ids is None:
            ids = np.arange(len(sizes))
        jobs = [Job(int(i), float(a), float(w)) for i, a, w in zip(ids, arrivals, sizes)]
        return cls.from_jobs(jobs, meta)

    def __len__(self) -> int:
        return len(self.jobs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Workload):
            return NotImplemented
        return self.jobs == other.jobs and self.meta == other.meta

    __hash__ = None

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(ids, arrivals, sizes)`` as numpy arrays in workload order."""
        ids = np.fromiter((j.id for j in self.jobs), dtype=np.int64, count=len(self.jobs))
        arr = np.fromiter((j.arrival_time for j in self.jobs), dtype=float, count=len(self.jobs))
        size = np.fromiter((j.size for j in self.jobs), dtype=float, count=len(self.jobs))
        return ids, arr, size

    @property
    def total_work(self) -> float:
        return float(sum(j.size for j in self.jobs))


def make_rng(seed: int, stream: int | None = None) -> np.random.Generator:
    """PCG64 generator; ``stream`` selects an independent child of ``seed``.

    Replication ``r`` of an experiment always uses ``make_rng(seed, r)``, so
    results do not depend on how replications are spread over workers.
    """
    entropy = [int(seed)] if stream is None else [int(seed), int(stream)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def exponential_sizes(rng: np.random.Generator, mean: float, count: int) -> np.ndarray:
    """Inverse-CDF exponential draws from uniforms on the open interval (0, 1)."""
    u = (rng.integers(0, 2**53, size=count, dtype=np.int64) + 0.5) / 2.0**53
    return -mean * np.log(u)


def gen_batch(count: int, mean_size: float, seed: int, stream: int | None = None) -> Workload:
    if count < 1:
        raise ValueError("count must be >= 1")
    if mean_size <= 0:
        raise ValueError("mean_size must be > 0")
    rng = make_rng(seed, stream)
    sizes = exponential_sizes(rng, mean_size, count)
    params = {"count": count, "mean_size": float(mean_size)}
    if stream is not None:
        params["stream"] = stream
    meta = WorkloadMeta("batch", params, seed)
    return Workload(tuple(Job(i, 0.0, float(w)) for i, w in enumerate(sizes)), meta)


def gen_slotted_poisson(slots: int, mean_arrivals_per_slot: float, mean_size: float,
                        seed: int, stream: int | None = None) -> Workload:
    """Poisson-many jobs released at the start of each integer slot."""
    if slots < 1:
        raise ValueError("slots must be >= 1")
    if mean_arrivals_per_slot < 0 or mean_size <= 0:
        raise ValueError("rates must be non-negative and mean_size positive")
    rng = make_rng(seed, stream)
    counts = rng.poisson(mean_arrivals_per_slot, size=slots)
    arrivals = np.repeat(np.arange(slots, dtype=float), counts)
    sizes = exponential_sizes(rng, mean_size, len(arrivals))
    params = {"slots": slots, "mean_arrivals_per_slot": float(mean_arrivals_per_slot),
              "mean_size": float(mean_size)}
    if stream is not None:
        params["stream"] = stream
    meta = WorkloadMeta("slotted-poisson", params, seed)
    jobs = tuple(Job(i, float(a), float(w)) for i, (a, w) in enumerate(zip(arrivals, sizes)))
    return Workload(jobs, meta)


def regenerate(meta: WorkloadMeta) -> Workload:
    p = meta.params
    if meta.kind == "batch":
        return gen_batch(p["count"], p["mean_size"], meta.seed, p.get("stream"))
    if meta.kind == "slotted-poisson":
        return gen_slotted_poisson(p["slots"], p["mean_arrivals_per_slot"], p["mean_size"],
                                   meta.seed, p.get("stream"))
    raise ValueError(f"cannot regenerate workload of kind {meta.kind!r}")


def save_workload(w: Workload, path) -> None:
    lines = [w.meta.header()]
    lines += [f"{j.id} {j.arrival_time!r} {j.size!r}" for j in w.jobs]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_header(line: str) -> WorkloadMeta:
    fields = line[len(HEADER_TAG):].split()
    kv = {}
    for item in fields:
        key, sep, value = item.partition("=")
        if not sep:
            raise WorkloadFormatError(1, f"malformed header field {item!r}")
        kv[key] = _coerce(value)
    kind = str(kv.pop("kind", "explicit"))
    seed = kv.pop("seed", None)
    return WorkloadMeta(kind, kv, seed)


def load_workload(path) -> Workload:
    text = Path(path).read_text()
    meta = WorkloadMeta()
    jobs = []
    seen: set[int] = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(HEADER_TAG):
            if line_no != 1:
                raise WorkloadFormatError(line_no, "header must be the first line")
            meta = _parse_header(line)
            continue
        if line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise WorkloadFormatError(line_no, f"expected 'id arrival size', got {raw!r}")
        try:
            job_id, arrival, size = int(parts[0]), float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise WorkloadFormatError(line_no, str(exc)) from None
        if job_id in seen:
            raise WorkloadFormatError(line_no, f"duplicate job id {job_id}")
        seen.add(job_id)
        try:
            jobs.append(Job(job_id, arrival, size))
        except ValueError as exc:
            raise WorkloadFormatError(line_no, str(exc)) from None
    return Workload.from_jobs(jobs, meta)
