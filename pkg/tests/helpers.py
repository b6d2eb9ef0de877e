"""Shared instance builders for the tests."""

import numpy as np

from speedscale.model import PowerModel
from speedscale.workloads import Workload, gen_batch, gen_slotted_poisson, make_rng

POLICIES = ("equi", "hesrpt", "lcfs:beta=1/2", "lcfs:beta=1/6")


def two_jobs() -> Workload:
    """Sizes {1, 2} released together; the running hand-worked instance."""
    return Workload.from_arrays([0.0, 0.0], [1.0, 2.0])


def random_workloads(count: int, seed: int = 0, online_share: float = 0.5):
    """Mixed batch / slotted workloads with a random budget and exponent."""
    rng = make_rng(seed, 999)
    for k in range(count):
        p = float(rng.choice([0.5, 1.0, 3.0, 10.0, 50.0]))
        alpha = float(rng.choice([1.5, 2.0, 2.5, 3.0, 5.0]))
        sub = int(rng.integers(0, 2**31))
        if rng.random() < online_share:
            w = gen_slotted_poisson(int(rng.integers(2, 15)), float(rng.uniform(0.5, 3)),
                                    float(rng.choice([1.0, 20.0])), sub)
            if len(w) == 0:
                w = gen_batch(1, 5.0, sub)
        else:
            w = gen_batch(int(rng.integers(1, 40)), 20.0, sub)
        yield w, PowerModel(alpha, p)


def traces_equal(a, b) -> bool:
    same = (np.array_equal(a.t_start, b.t_start) and np.array_equal(a.t_end, b.t_end)
            and np.array_equal(a.n_active, b.n_active) and np.array_equal(a.total_power, b.total_power)
            and np.array_equal(a.departures, b.departures))
    if not same:
        return False
    if a.detailed and b.detailed:
        return all(x == y for x, y in zip(a.assignments, b.assignments)) and all(
            np.array_equal(x, y) for x, y in zip(a.rem_end, b.rem_end))
    return True
