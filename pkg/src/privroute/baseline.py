"""Non-private reference solver and the standard-formulation leak demo.

Frank-Wolfe exploits that every linearized subproblem over the policy set
splits into per-pair minimum-cost unit flows; the linearization coefficients
are nonnegative here, so each subproblem is solved by a shortest path. The
duality gap at the last iterate certifies suboptimality for the convex
objective.
"""
from __future__ import annotations

import numpy as np

from .flow_polytope import (
    UnreachablePairError,
    initial_shortest_path_policy,
    pair_index,
    reachability,
    shortest_path_flow,
)
from .objective import regularized_cost


def _linear_minimizer(gradient_blocks, edge_term, network, alpha, routable):
    """Vertex of the policy set minimizing the linearized objective.

    With alpha = 0 every block's cost vector is a nonnegative multiple of the
    shared marginal edge costs, so one shortest-path tree per origin covers
    all pairs. With alpha > 0 the per-block regularizer term makes costs
    block specific.
    """
    n = network.node_count
    if alpha == 0.0:
        return initial_shortest_path_policy(network, edge_term)
    S = np.zeros_like(gradient_blocks)
    for o, d in routable:
        block = pair_index(o, d, n)
        S[block] = shortest_path_flow((o, d), gradient_blocks[block], network)
    return S


def frank_wolfe_solve(demand, network, latency, alpha=0.0, gap_tol=1e-6, max_iters=5000):
    """Minimize the (optionally regularized) travel-time cost at one demand.

    Returns (policy, trace) where trace rows are (iteration, duality gap,
    objective value). Stops once the Frank-Wolfe gap drops to gap_tol or at
    max_iters; the gap is reported either way. Step lengths come from exact
    line search on the quadratic objective, falling back to 2 / (j + 2) when
    the directional curvature vanishes.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if gap_tol <= 0:
        raise ValueError("gap_tol must be positive")
    demand = np.asarray(demand, dtype=float)
    n, m = network.node_count, network.edge_count
    demand_vec = demand.reshape(n * n)
    positive = np.nonzero(demand_vec)[0]
    slope, free_flow = latency.slope, latency.free_flow

    X = initial_shortest_path_policy(network)
    for block in positive:
        o, d = divmod(int(block), n)
        if not np.any(X[block]):
            raise UnreachablePairError(f"no path serves demanded pair ({o + 1}, {d + 1})")
    reach = reachability(network)
    routable = [(o, d) for o in range(n) for d in range(n) if o != d and reach[o, d]]

    trace = []
    for j in range(max_iters):
        y = demand_vec @ X
        edge_term = 2.0 * slope * y + free_flow
        G = np.outer(demand_vec, edge_term) + alpha * X
        S = _linear_minimizer(G, edge_term, network, alpha, routable)
        D = S - X
        gap = float(-np.sum(G * D))
        cost = regularized_cost(X, demand, latency, alpha)
        trace.append((j, gap, cost))
        if gap <= gap_tol:
            break
        y_dir = demand_vec @ D
        curvature = float(y_dir @ (slope * y_dir)) + 0.5 * alpha * float(np.sum(D * D))
        if curvature > 0:
            gamma = min(1.0, gap / (2.0 * curvature))
        else:
            gamma = 2.0 / (j + 2.0)
        X = X + gamma * D
    return X, trace


def standard_feasible_flow(demand, network):
    """Feasible solution of the standard demand-scaled flow formulation.

    Block (o, d) carries demand(o, d) units on a cheapest free-flow path, so
    the net inflow at each node is exactly demand(o,d) * (1[d] - 1[o]).
    """
    demand = np.asarray(demand, dtype=float)
    n = demand.shape[0]
    flows = np.zeros((n * n, network.edge_count))
    for o in range(n):
        for d in range(n):
            if o == d or demand[o, d] == 0:
                continue
            flows[pair_index(o, d, n)] = demand[o, d] * shortest_path_flow(
                (o, d), network.free_flow_time, network
            )
    return flows


def detect_od_presence(solution, network, node, tol=1e-12):
    """True iff the node is a net source or sink of the released flows.

    Accepts either the total edge flow (shape (m,)) or a stacked per-pair
    solution (shape (n^2, m)); conservation is checked on the aggregate in
    both cases, which is what makes the standard formulation leak trips.
    """
    solution = np.asarray(solution, dtype=float)
    total = solution if solution.ndim == 1 else solution.sum(axis=0)
    A = network.incidence_matrix()
    return bool(abs(float(A[node] @ total)) > tol)
