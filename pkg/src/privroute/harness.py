"""Experiment orchestration: configuration, instance loading, and the three
CSV-producing experiments (convergence, privacy cost, sensitivity sweeps).

Unit conventions of the default configuration: demand rates are requests per
minute (trips files are hourly and divided by 60 at parse time); the
capacity column of the net file is interpreted as vehicles per minute
(capacity_scale 1.0). Setting capacity_scale to 1/60 instead reads the
column as vehicles per hour, which yields a much more congested instance;
the constants and regularizer defaults below are calibrated for the
per-minute reading.

Every run writes a metadata JSON capturing the fully resolved configuration,
and all CSV floats use 17 significant digits, so identical configs and seeds
reproduce byte-identical artifacts.
"""
from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import demand as demand_mod
from .baseline import frank_wolfe_solve
from .dp_sgd import (
    FINAL_PROJECTION_TOL,
    STEP_PROJECTION_TOL,
    PrivacyParams,
    descend,
    gaussian_noise_scale,
    perturb_and_project,
)
from .flow_polytope import (
    FlowProjector,
    initial_shortest_path_policy,
    pair_index,
    pair_of_index,
)
from .net_model import affine_latency_from, parse_tntp_network, parse_tntp_trips
from .objective import (
    compute_constants,
    empirical_cost,
    experimental_constants,
    regularized_cost,
    travel_time_cost,
)

BUILTIN_NET = "builtin:sioux_falls_net"
BUILTIN_TRIPS = "builtin:sioux_falls_trips"

CONVENTIONS = ("closed-form", "mean-eigenvalue")


@dataclass
class ExperimentConfig:
    """Resolved experiment configuration; round-trips losslessly via JSON."""

    net_path: str = BUILTIN_NET
    trips_path: str = BUILTIN_TRIPS
    n_days: int = 50
    period_minutes: float = 60.0
    alpha: float = 2e-4
    convention: str = "closed-form"
    capacity_scale: float = 1.0
    sensitivity_factor: float = 2.0
    demand_scale: float = 1.0
    epsilon: float = 0.1
    delta: float = 0.1
    n_grid: tuple = (10, 25, 50)
    epsilon_grid: tuple = (0.01, 0.1, 0.5)
    delta_grid: tuple = (0.1, 0.5)
    alpha_grid: tuple = (1e2, 1e3, 1e4)
    factor_grid: tuple = (1.5, 2.0, 5.0)
    scale_grid: tuple = (0.5, 1.0, 1.5)
    sweep_alpha: float = 1e3
    dataset_seed: int = 20240601
    noise_seeds: tuple = tuple(range(10))
    gap_tol_rel: float = 1e-4
    max_fw_iters: int = 30000
    step_tol: float = STEP_PROJECTION_TOL
    final_tol: float = FINAL_PROJECTION_TOL
    exact_empirical_eval: bool = False
    noise_scale_override: float | None = None  # None = calibrated sigma; 0 disables noise

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        for name in ("n_grid", "epsilon_grid", "delta_grid", "alpha_grid", "factor_grid", "scale_grid", "noise_seeds"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"{name} must be nonempty")
            setattr(self, name, value)
        for name in ("period_minutes", "alpha", "capacity_scale", "demand_scale", "epsilon", "gap_tol_rel", "step_tol", "final_tol", "sweep_alpha"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.sensitivity_factor < 1:
            raise ValueError("sensitivity_factor must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.n_days < 1 or self.max_fw_iters < 1:
            raise ValueError("n_days and max_fw_iters must be >= 1")
        if self.noise_scale_override is not None and self.noise_scale_override < 0:
            raise ValueError("noise_scale_override must be nonnegative")

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def _read_input(path_spec):
    if path_spec == BUILTIN_NET:
        return resources.files("privroute.data").joinpath("sioux_falls_net.tntp").read_text()
    if path_spec == BUILTIN_TRIPS:
        return resources.files("privroute.data").joinpath("sioux_falls_trips.tntp").read_text()
    return Path(path_spec).read_text()


@dataclass(frozen=True)
class Instance:
    network: object
    latency: object
    mean_demand: np.ndarray


def load_instance(config, sensitivity_factor=None, demand_scale=None):
    """Parse the configured files and apply the unit and scenario knobs."""
    network = parse_tntp_network(_read_input(config.net_path))
    network = network.with_capacity(network.capacity * config.capacity_scale)
    factor = config.sensitivity_factor if sensitivity_factor is None else sensitivity_factor
    scale = config.demand_scale if demand_scale is None else demand_scale
    latency = affine_latency_from(network, factor)
    mean_demand = parse_tntp_trips(_read_input(config.trips_path)) * scale
    if mean_demand.shape[0] != network.node_count:
        raise ValueError("trips zone count does not match the network node count")
    return Instance(network=network, latency=latency, mean_demand=mean_demand)


def resolve_constants(config, instance, dataset, alpha=None):
    """Constants per the configured convention, with the data-driven rate bound."""
    lam = demand_mod.lambda_max(dataset)
    alpha = config.alpha if alpha is None else alpha
    if config.convention == "mean-eigenvalue":
        return experimental_constants(
            demand_mod.average_demand(dataset), instance.latency, lam, alpha, config.period_minutes
        )
    return compute_constants(
        instance.network, instance.latency, lam, alpha, config.period_minutes
    )


def solve_baseline(config, instance, dataset, alpha=0.0):
    """Frank-Wolfe at the dataset's average demand (the fast evaluation path)."""
    avg = demand_mod.average_demand(dataset)
    x0_cost = travel_time_cost(
        initial_shortest_path_policy(instance.network), avg, instance.latency
    )
    return frank_wolfe_solve(
        avg,
        instance.network,
        instance.latency,
        alpha=alpha,
        gap_tol=config.gap_tol_rel * max(x0_cost, 1e-300),
        max_iters=config.max_fw_iters,
    )


def _format(value):
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(v) for v in row])


def write_metadata(out_dir, name, payload):
    path = Path(out_dir) / f"{name}_metadata.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _resolved_payload(config, extra=None):
    payload = {"config": json.loads(config.to_json())}
    if extra:
        payload.update(extra)
    return payload


def policy_to_csv(policy, network, path):
    """Policy CSV: origin, destination, edge_tail, edge_head, value (zeros omitted)."""
    n = network.node_count
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["origin", "destination", "edge_tail", "edge_head", "value"])
        for block in range(n * n):
            o, d = pair_of_index(block, n)
            for e in np.nonzero(policy[block])[0]:
                writer.writerow(
                    [
                        o + 1,
                        d + 1,
                        int(network.tails[e]) + 1,
                        int(network.heads[e]) + 1,
                        "%.17g" % policy[block, e],
                    ]
                )


def policy_from_csv(path, network):
    n = network.node_count
    policy = np.zeros((n * n, network.edge_count))
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            block = pair_index(int(row["origin"]) - 1, int(row["destination"]) - 1, n)
            e = network.edge_index(int(row["edge_tail"]) - 1, int(row["edge_head"]) - 1)
            policy[block, e] = float(row["value"])
    return policy


def paths_to_csv(distributions, network, path):
    """Path-distribution CSV: origin, destination, path (node sequence), weight."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["origin", "destination", "path", "weight"])
        for dist in distributions:
            o, d = dist.od
            for edges, weight in zip(dist.paths, dist.weights):
                nodes = [int(network.tails[edges[0]]) + 1] + [
                    int(network.heads[e]) + 1 for e in edges
                ]
                writer.writerow([o + 1, d + 1, "-".join(map(str, nodes)), "%.17g" % weight])


def _iterate_costs(iterates, dataset, latency, alpha, exact):
    """Cost of each stored iterate: at the dataset average by default, or the
    full empirical average when exact evaluation is requested."""
    avg = demand_mod.average_demand(dataset)
    reg, raw = [], []
    for X in iterates:
        if exact:
            reg.append(empirical_cost(X, dataset, latency, alpha))
            raw.append(
                float(
                    np.mean(
                        [travel_time_cost(X, dataset.matrices[t], latency) for t in range(dataset.day_count)]
                    )
                )
            )
        else:
            reg.append(regularized_cost(X, avg, latency, alpha))
            raw.append(travel_time_cost(X, avg, latency))
    return reg, raw


def _descend_with_iterates(dataset, instance, constants, x0, projector, step_tol):
    """Run the solver's deterministic part while keeping every iterate."""
    iterates = [np.asarray(x0, dtype=float).copy()]

    class _Recorder:
        def __init__(self, inner):
            self.inner = inner
            self.network = inner.network

        def reachable(self, o, d):
            return self.inner.reachable(o, d)

        def project_policy(self, x, tol):
            out = self.inner.project_policy(x, tol=tol)
            iterates.append(out)
            return out

    x_pre, cost_trace, travel_trace = descend(
        dataset,
        instance.network,
        instance.latency,
        constants,
        x0,
        projector=_Recorder(projector),
        step_tol=step_tol,
    )
    return x_pre, iterates


def run_convergence(config, out_dir):
    """Cost-ratio traces against the non-private baseline for each N.

    Emits convergence.csv with columns (N, iteration, cost_ratio) where the
    numerator is the iterate's travel time, plus convergence_regularized.csv
    with the regularized-numerator variant. Both are normalized by the
    unregularized baseline cost at the dataset average demand.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    instance = load_instance(config)
    projector = FlowProjector(instance.network)
    x0 = initial_shortest_path_policy(instance.network)
    rows, rows_reg = [], []
    baseline_costs = {}
    for n_days in config.n_grid:
        dataset = demand_mod.sample_dataset(
            instance.mean_demand, n_days, config.period_minutes, seed=config.dataset_seed
        )
        constants = resolve_constants(config, instance, dataset)
        x_base, _ = solve_baseline(config, instance, dataset)
        base_cost = travel_time_cost(
            x_base, demand_mod.average_demand(dataset), instance.latency
        )
        baseline_costs[n_days] = base_cost
        x_pre, iterates = _descend_with_iterates(
            dataset, instance, constants, x0, projector, config.step_tol
        )
        reg, raw = _iterate_costs(
            iterates, dataset, instance.latency, constants.alpha, config.exact_empirical_eval
        )
        for k, (r, rr) in enumerate(zip(raw, reg)):
            rows.append((n_days, k, r / base_cost))
            rows_reg.append((n_days, k, rr / base_cost))
    write_csv(out_dir / "convergence.csv", ["N", "iteration", "cost_ratio"], rows)
    write_csv(
        out_dir / "convergence_regularized.csv", ["N", "iteration", "cost_ratio"], rows_reg
    )
    write_metadata(
        out_dir,
        "convergence",
        _resolved_payload(config, {"baseline_costs": {str(k): v for k, v in baseline_costs.items()}}),
    )
    return out_dir / "convergence.csv"


def run_privacy_cost(config, out_dir):
    """Percentage travel-time increase of the noisy release over the final
    iterate, per (epsilon, delta) cell, averaged over the noise seeds."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    instance = load_instance(config)
    projector = FlowProjector(instance.network)
    x0 = initial_shortest_path_policy(instance.network)
    dataset = demand_mod.sample_dataset(
        instance.mean_demand, config.n_days, config.period_minutes, seed=config.dataset_seed
    )
    constants = resolve_constants(config, instance, dataset)
    avg = demand_mod.average_demand(dataset)
    x_pre, _, _ = descend(
        dataset,
        instance.network,
        instance.latency,
        constants,
        x0,
        projector=projector,
        step_tol=config.step_tol,
        trace_demand=avg,
    )
    cost_pre = travel_time_cost(x_pre, avg, instance.latency)
    rows = []
    sigmas = {}
    for eps in sorted(config.epsilon_grid):
        for delta in sorted(config.delta_grid):
            privacy = PrivacyParams(eps, delta)
            if config.noise_scale_override is None:
                sigma = gaussian_noise_scale(constants, dataset.day_count, privacy)
            else:
                sigma = float(config.noise_scale_override)
            sigmas[f"{eps},{delta}"] = sigma
            increases = []
            for seed in config.noise_seeds:
                if sigma == 0.0:
                    # nothing to repair: the noise-free release is the iterate
                    increases.append(0.0)
                    continue
                x_alg = perturb_and_project(
                    x_pre, sigma, seed, instance.network,
                    projector=projector, final_tol=config.final_tol,
                )
                cost_alg = travel_time_cost(x_alg, avg, instance.latency)
                increases.append(100.0 * (cost_alg - cost_pre) / cost_pre)
            rows.append((eps, delta, float(np.mean(increases))))
    write_csv(out_dir / "privacy_cost.csv", ["epsilon", "delta", "increase_percent"], rows)
    write_metadata(
        out_dir,
        "privacy_cost",
        _resolved_payload(config, {"sigma": sigmas, "cost_pre": cost_pre}),
    )
    return out_dir / "privacy_cost.csv"


def _sweep_trace(config, instance, alpha, out_rows, parameter):
    dataset = demand_mod.sample_dataset(
        instance.mean_demand, config.n_days, config.period_minutes, seed=config.dataset_seed
    )
    constants = resolve_constants(config, instance, dataset, alpha=alpha)
    x_base, _ = solve_baseline(config, instance, dataset)
    base_cost = travel_time_cost(x_base, demand_mod.average_demand(dataset), instance.latency)
    projector = FlowProjector(instance.network)
    x0 = initial_shortest_path_policy(instance.network)
    _, _, travel_trace = descend(
        dataset,
        instance.network,
        instance.latency,
        constants,
        x0,
        projector=projector,
        step_tol=config.step_tol,
        trace_demand=demand_mod.average_demand(dataset),
    )
    for k, cost in enumerate(travel_trace):
        out_rows.append((parameter, k, cost / base_cost))


def run_sensitivity_sweep(config, out_dir):
    """Three sweep CSVs (regularizer, latency factor, demand scale), each with
    columns (parameter, iteration, cost_ratio); the smoothness and cross
    constants are recomputed for every scenario."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    alpha_rows, factor_rows, scale_rows = [], [], []
    instance = load_instance(config)
    for alpha in config.alpha_grid:
        _sweep_trace(config, instance, alpha, alpha_rows, alpha)
    for factor in config.factor_grid:
        scenario = load_instance(config, sensitivity_factor=factor)
        _sweep_trace(config, scenario, config.sweep_alpha, factor_rows, factor)
    for scale in config.scale_grid:
        scenario = load_instance(config, demand_scale=scale)
        _sweep_trace(config, scenario, config.sweep_alpha, scale_rows, scale)
    paths = []
    for name, rows in [
        ("sweep_alpha", alpha_rows),
        ("sweep_latency", factor_rows),
        ("sweep_demand", scale_rows),
    ]:
        path = Path(out_dir) / f"{name}.csv"
        write_csv(path, ["parameter", "iteration", "cost_ratio"], rows)
        paths.append(path)
    write_metadata(out_dir, "sweep", _resolved_payload(config))
    return paths
