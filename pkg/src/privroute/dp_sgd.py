"""One-pass private projected stochastic gradient descent with output
perturbation.

The solver takes one projected gradient step per day of demand data, reading
each day exactly once, then releases the final iterate after adding Gaussian
noise calibrated to the iterate's worst-case sensitivity over request-level
adjacent datasets and projecting back onto the feasible set. Runs are
deterministic given the dataset and the noise seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow_polytope import FlowProjector
from .objective import regularized_cost, travel_time_cost

STEP_PROJECTION_TOL = 1e-6
FINAL_PROJECTION_TOL = 1e-8


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class PrivateSolution:
    """Output bundle of one private solve.

    cost_trace[k] is the regularized cost of iterate k (0 = the start) and
    travel_time_trace[k] the unregularized travel time, both evaluated at the
    trace demand passed to the solver (each day's own demand when omitted).
    """

    x_pre: np.ndarray
    x_alg: np.ndarray
    sigma: float
    seed: int
    cost_trace: tuple
    travel_time_trace: tuple
    constants: object
    privacy: PrivacyParams | None


def step_size(k, alpha, beta):
    """Step length for iteration k >= 1: min(1 / (alpha k), min(1, 2 alpha) / beta)."""
    if k < 1:
        raise ValueError("iterations are 1-based")
    if alpha <= 0 or beta < alpha:
        raise ValueError("need alpha > 0 and beta >= alpha")
    return min(1.0 / (alpha * k), min(1.0, 2.0 * alpha) / beta)


def sensitivity_bound(constants, n_days):
    """Worst-case final-iterate shift over request-level adjacent datasets.

    s = (C / T) * min(min(1, 2 alpha) / beta, 1 / (alpha N)) where C is the
    cross sensitivity constant and T the operation period.
    """
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    a = constants.alpha
    inner = min(min(1.0, 2.0 * a) / constants.beta, 1.0 / (a * n_days))
    return constants.cross_sensitivity / constants.period_minutes * inner


def gaussian_noise_scale(constants, n_days, privacy):
    """Noise standard deviation of the output perturbation: the Gaussian
    mechanism at sensitivity s gives sigma = (s / epsilon) sqrt(2 ln(1.25/delta))."""
    s = sensitivity_bound(constants, n_days)
    return s / privacy.epsilon * math.sqrt(2.0 * math.log(1.25 / privacy.delta))


def sample_gaussian(sigma, dim, seed):
    """dim i.i.d. N(0, sigma^2) draws via Box-Muller on Philox uniforms.

    The generator is counter-based and the transform has no rejection step,
    so equal seeds give bit-identical vectors on any platform. sigma = 0
    returns the zero vector without consuming randomness.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if dim < 0:
        raise ValueError("dim must be nonnegative")
    if sigma == 0.0:
        return np.zeros(dim)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    pairs = (dim + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # in (0, 1], keeps log finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2.0 * np.pi * u2), radius * np.sin(2.0 * np.pi * u2)])
    return sigma * z[:dim]


def _check_feasible_start(x0, projector, tol=1e-6):
    network = projector.network
    n, m = network.node_count, network.edge_count
    X = np.asarray(x0, dtype=float).reshape(n * n, m)
    if np.any(X < -1e-9) or np.any(X > 1 + 1e-9):
        raise ValueError("x0 violates the per-edge [0, 1] bounds")
    A = network.incidence_matrix()
    net_inflow = X @ A.T  # (n^2, n) net inflow per block
    for o in range(n):
        for d in range(n):
            expected = np.zeros(n)
            if o != d and projector.reachable(o, d):
                expected[o] = -1.0
                expected[d] = 1.0
            if np.max(np.abs(net_inflow[o * n + d] - expected)) > tol:
                raise ValueError(f"x0 block ({o + 1}, {d + 1}) is not a unit flow")
    return X


def descend(
    dataset,
    network,
    latency,
    constants,
    x0,
    *,
    projector=None,
    step_tol=STEP_PROJECTION_TOL,
    trace_demand=None,
):
    """Run the N projected gradient steps of the private solver (no noise).

    Each day's demand is read exactly once, in dataset order. Returns the
    final iterate and the two cost traces (length N + 1, starting at x0).
    """
    if projector is None:
        projector = FlowProjector(network)
    X = _check_feasible_start(x0, projector)
    n, m = network.node_count, network.edge_count
    alpha, beta = constants.alpha, constants.beta
    slope, free_flow = latency.slope, latency.free_flow

    def record(X_now, lam):
        where = lam if trace_demand is None else trace_demand
        cost_trace.append(regularized_cost(X_now, where, latency, alpha))
        travel_trace.append(travel_time_cost(X_now, where, latency))

    cost_trace = []
    travel_trace = []
    first_day = dataset.day(1)
    record(X, first_day)
    for k in range(1, dataset.day_count + 1):
        lam = first_day if k == 1 else dataset.day(k)
        lam_vec = np.asarray(lam, dtype=float).reshape(n * n)
        y = lam_vec @ X
        grad = np.outer(lam_vec, 2.0 * slope * y + free_flow) + alpha * X
        eta = step_size(k, alpha, beta)
        X = projector.project_policy(X - eta * grad, tol=step_tol)
        record(X, lam)
    return X, tuple(cost_trace), tuple(travel_trace)


def perturb_and_project(
    x_pre, sigma, seed, network, *, projector=None, final_tol=FINAL_PROJECTION_TOL
):
    """Add N(0, sigma^2 I) to a policy and project back onto the feasible set."""
    if projector is None:
        projector = FlowProjector(network)
    x_pre = np.asarray(x_pre, dtype=float)
    noise = sample_gaussian(sigma, x_pre.size, seed).reshape(x_pre.shape)
    return projector.project_policy(x_pre + noise, tol=final_tol)


def private_sgd(
    dataset,
    network,
    latency,
    constants,
    privacy,
    x0,
    seed,
    *,
    projector=None,
    step_tol=STEP_PROJECTION_TOL,
    final_tol=FINAL_PROJECTION_TOL,
    trace_demand=None,
    noise_scale=None,
):
    """Full private solve: N projected SGD steps, then output perturbation.

    Args:
        dataset: the demand days, consumed once each in order.
        constants: ModelConstants consistent with the network, latency and
            the dataset's rate bound.
        privacy: target (epsilon, delta); may be None when noise_scale is
            forced (e.g. sensitivity audits run with noise_scale=0).
        x0: feasible starting policy.
        seed: seed of the Gaussian output perturbation.
        trace_demand: optional fixed matrix at which iterate costs are
            recorded (defaults to each day's own demand).
        noise_scale: override for the noise standard deviation; None means
            the calibrated Gaussian-mechanism value.
    """
    if noise_scale is None:
        if privacy is None:
            raise ValueError("either privacy parameters or noise_scale is required")
        sigma = gaussian_noise_scale(constants, dataset.day_count, privacy)
    else:
        if noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")
        sigma = float(noise_scale)
    if projector is None:
        projector = FlowProjector(network)
    x_pre, cost_trace, travel_trace = descend(
        dataset,
        network,
        latency,
        constants,
        x0,
        projector=projector,
        step_tol=step_tol,
        trace_demand=trace_demand,
    )
    x_alg = perturb_and_project(
        x_pre, sigma, seed, network, projector=projector, final_tol=final_tol
    )
    return PrivateSolution(
        x_pre=x_pre,
        x_alg=x_alg,
        sigma=sigma,
        seed=seed,
        cost_trace=cost_trace,
        travel_time_trace=travel_trace,
        constants=constants,
        privacy=privacy,
    )
