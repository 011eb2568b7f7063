"""Demand matrices, multi-day datasets, request-level adjacency, and the
Poisson day sampler.

A demand matrix is a dense (n, n) array of arrival rates in requests per
minute with a zero diagonal. A dataset is an ordered sequence of N such
matrices sharing one operation-period length T (minutes). Rates produced by
the sampler are always integer multiples of 1/T, because a day's rate is a
request count divided by T.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np


def _day_rng(seed, day):
    # Philox is counter-based; deriving each day's stream from (seed, day)
    # makes sampling order-independent and reproducible across platforms.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, day))))


def validate_demand_matrix(matrix, lambda_bound=None):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("demand matrix must be square")
    if np.any(matrix < 0):
        raise ValueError("demand rates must be nonnegative")
    if np.any(np.diagonal(matrix) != 0):
        raise ValueError("diagonal demand must be zero")
    if lambda_bound is not None and np.max(matrix, initial=0.0) > lambda_bound:
        raise ValueError("demand rate exceeds the stated bound")
    return matrix


@dataclass(frozen=True)
class DemandDataset:
    """Ordered days of demand-rate matrices over one operation period.

    Attributes:
        matrices: float array of shape (N, n, n), requests per minute.
        period_minutes: operation-period length T.
        seed: generation seed when the dataset was sampled, else None.
    """

    matrices: np.ndarray
    period_minutes: float
    seed: int | None = None

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[0] < 1 or mats.shape[1] != mats.shape[2]:
            raise ValueError("matrices must have shape (N, n, n) with N >= 1")
        if self.period_minutes <= 0:
            raise ValueError("period_minutes must be positive")
        for day in range(mats.shape[0]):
            validate_demand_matrix(mats[day])
        object.__setattr__(self, "matrices", mats)

    @property
    def day_count(self):
        return self.matrices.shape[0]

    @property
    def node_count(self):
        return self.matrices.shape[1]

    def day(self, t):
        """Demand matrix of day t (1-based, matching dataset order)."""
        if not 1 <= t <= self.day_count:
            raise IndexError(f"day {t} outside 1..{self.day_count}")
        return self.matrices[t - 1]


def sample_dataset(mean_demand, n_days, period_minutes, seed):
    """Draw an N-day dataset of Poisson daily demand around a mean-rate matrix.

    Each day's (o, d) request count is Poisson(mean_rate * T); the day's rate
    is that count divided by T. Deterministic given the seed; day t depends
    only on (seed, t).
    """
    mean_demand = validate_demand_matrix(mean_demand)
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    if period_minutes <= 0:
        raise ValueError("period_minutes must be positive")
    n = mean_demand.shape[0]
    days = np.empty((n_days, n, n))
    expected_counts = mean_demand * period_minutes
    for t in range(n_days):
        counts = _day_rng(seed, t + 1).poisson(expected_counts)
        days[t] = counts / period_minutes
        np.fill_diagonal(days[t], 0.0)
    return DemandDataset(matrices=days, period_minutes=float(period_minutes), seed=seed)


def make_adjacent(dataset, day, od, direction):
    """Dataset copy differing by exactly one request (1/T in one rate entry).

    Args:
        day: 1-based day index.
        od: (origin, destination) 0-based pair with origin != destination.
        direction: "add" or "remove".
    """
    o, d = od
    if o == d:
        raise ValueError("od pair must have distinct endpoints")
    if not 1 <= day <= dataset.day_count:
        raise ValueError(f"day {day} outside 1..{dataset.day_count}")
    delta = 1.0 / dataset.period_minutes
    if direction == "add":
        step = delta
    elif direction == "remove":
        step = -delta
    else:
        raise ValueError("direction must be 'add' or 'remove'")
    current = dataset.matrices[day - 1, o, d]
    if direction == "remove" and current < delta - 1e-12:
        raise ValueError("cannot remove a request from a rate below 1/T")
    matrices = dataset.matrices.copy()
    matrices[day - 1, o, d] = current + step
    return DemandDataset(
        matrices=matrices, period_minutes=dataset.period_minutes, seed=dataset.seed
    )


def is_adjacent(first, second):
    """True iff the datasets differ in exactly one entry of one day by at most 1/T."""
    if first.matrices.shape != second.matrices.shape:
        raise ValueError("datasets must share (N, n, n) shape")
    if first.period_minutes != second.period_minutes:
        raise ValueError("datasets must share the operation-period length")
    diff = first.matrices - second.matrices
    changed = np.argwhere(diff != 0)
    if changed.shape[0] != 1:
        return False
    t, o, d = changed[0]
    return abs(diff[t, o, d]) <= 1.0 / first.period_minutes + 1e-12


def lambda_max(dataset):
    """Largest arrival rate over all days and pairs."""
    return float(np.max(dataset.matrices))


def average_demand(dataset):
    """Entrywise mean of the dataset's daily matrices."""
    return dataset.matrices.mean(axis=0)


def dataset_to_csv(dataset):
    """Serialize to (csv_text, metadata_json_text).

    CSV columns: day, origin, destination, rate (1-based ids, zero rates
    omitted). The sidecar metadata records n, N, T, and the seed.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["day", "origin", "destination", "rate"])
    for t in range(dataset.day_count):
        for o, d in zip(*np.nonzero(dataset.matrices[t])):
            writer.writerow(
                [t + 1, int(o) + 1, int(d) + 1, "%.17g" % dataset.matrices[t, o, d]]
            )
    meta = json.dumps(
        {
            "n": dataset.node_count,
            "N": dataset.day_count,
            "T": dataset.period_minutes,
            "seed": dataset.seed,
        },
        indent=2,
        sort_keys=True,
    )
    return buf.getvalue(), meta


def dataset_from_csv(csv_text, metadata_json_text):
    meta = json.loads(metadata_json_text)
    matrices = np.zeros((meta["N"], meta["n"], meta["n"]))
    reader = csv.DictReader(io.StringIO(csv_text))
    for row in reader:
        matrices[int(row["day"]) - 1, int(row["origin"]) - 1, int(row["destination"]) - 1] = float(
            row["rate"]
        )
    return DemandDataset(
        matrices=matrices, period_minutes=float(meta["T"]), seed=meta["seed"]
    )
