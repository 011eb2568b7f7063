"""Shared fixtures: small networks, random feasible flows, and the
independent brute-force oracles used to cross-check the numerical code."""
from __future__ import annotations

from itertools import product

import numpy as np
import pytest

from privroute.net_model import LatencyModel, Network
from privroute.flow_polytope import conservation_rhs, pair_index, reachability


@pytest.fixture
def triangle():
    """Edges e0=(1,2), e1=(2,3), e2=(1,3); the spec's running example."""
    return Network(
        node_count=3,
        tails=[0, 1, 0],
        heads=[1, 2, 2],
        free_flow_time=[1.0, 1.0, 3.0],
        capacity=[1.0, 1.0, 1.0],
    )


@pytest.fixture
def triangle_latency():
    return LatencyModel(slope=[1.0, 1.0, 1.0], free_flow=[1.0, 1.0, 3.0])


@pytest.fixture
def two_node():
    return Network(
        node_count=2, tails=[0], heads=[1], free_flow_time=[5.0], capacity=[10.0]
    )


@pytest.fixture
def diamond4():
    """Strongly connected 4-node network with 10 edges."""
    edges = [(0, 1), (1, 0), (1, 3), (3, 1), (0, 2), (2, 0), (2, 3), (3, 2), (1, 2), (2, 1)]
    return Network(
        node_count=4,
        tails=[e[0] for e in edges],
        heads=[e[1] for e in edges],
        free_flow_time=[1.0, 1.0, 1.5, 1.5, 2.0, 2.0, 1.0, 1.0, 1.2, 1.2],
        capacity=[10.0] * 10,
    )


@pytest.fixture
def ring5():
    """5-node bidirectional ring; used by the sensitivity audit tests."""
    edges = [(i, (i + 1) % 5) for i in range(5)] + [((i + 1) % 5, i) for i in range(5)]
    return Network(
        node_count=5,
        tails=[e[0] for e in edges],
        heads=[e[1] for e in edges],
        free_flow_time=[1.0, 1.5, 2.0, 1.0, 1.5, 1.5, 1.0, 2.0, 1.5, 1.0],
        capacity=[10.0] * 10,
    )


@pytest.fixture
def ring5_demand():
    demand = np.zeros((5, 5))
    demand[0, 2] = 1.5
    demand[2, 0] = 1.0
    demand[1, 4] = 2.0
    demand[4, 1] = 1.0
    demand[0, 3] = 0.8
    demand[3, 1] = 1.2
    return demand


@pytest.fixture(scope="session")
def sioux_falls():
    from privroute.harness import ExperimentConfig, load_instance

    return load_instance(ExperimentConfig())


def make_random_network(rng, n, extra_edges=3):
    """Strongly connected random network: bidirectional ring plus chords."""
    edges = [(i, (i + 1) % n) for i in range(n)] + [((i + 1) % n, i) for i in range(n)]
    existing = set(edges)
    attempts = 0
    while extra_edges > 0 and attempts < 100:
        attempts += 1
        u, v = int(rng.integers(n)), int(rng.integers(n))
        if u != v and (u, v) not in existing:
            existing.add((u, v))
            edges.append((u, v))
            extra_edges -= 1
    m = len(edges)
    return Network(
        node_count=n,
        tails=[e[0] for e in edges],
        heads=[e[1] for e in edges],
        free_flow_time=rng.uniform(0.5, 3.0, size=m),
        capacity=rng.uniform(5.0, 20.0, size=m),
    )


def enumerate_simple_paths(network, origin, destination):
    """All simple origin -> destination paths as edge-index tuples (DFS)."""
    paths = []
    stack = [(origin, (), frozenset([origin]))]
    while stack:
        node, path, seen = stack.pop()
        if node == destination:
            paths.append(path)
            continue
        for e in network.out_edges(node):
            head = network.heads[e]
            if head not in seen:
                stack.append((head, path + (e,), seen | {head}))
    return paths


def random_unit_flow(network, od, rng, max_paths=4):
    """Random convex combination of simple od paths (exactly feasible)."""
    paths = enumerate_simple_paths(network, od[0], od[1])
    if not paths:
        raise ValueError("pair not connected")
    k = min(max_paths, len(paths))
    chosen = rng.choice(len(paths), size=k, replace=False)
    weights = rng.random(k) + 0.05
    weights = weights / weights.sum()
    x = np.zeros(network.edge_count)
    for idx, w in zip(chosen, weights):
        x[list(paths[idx])] += w
    return np.clip(x, 0.0, 1.0)


def random_policy(network, rng, max_paths=4):
    """Random feasible policy: path mixtures for every routable pair."""
    n = network.node_count
    reach = reachability(network)
    policy = np.zeros((n * n, network.edge_count))
    for o in range(n):
        for d in range(n):
            if o != d and reach[o, d]:
                policy[pair_index(o, d, n)] = random_unit_flow(network, (o, d), rng, max_paths)
    return policy


def qp_projection_oracle(v, od, network):
    """Brute-force Euclidean projection onto a unit-flow polytope.

    Enumerates every active-set assignment of the box constraints (each
    coordinate at 0, at 1, or free), solves the equality-constrained
    least-squares stationarity system on the free coordinates, and returns
    the feasible candidate closest to v. The true projection always appears
    under its own active set, and no other feasible candidate can be closer,
    so the minimum over candidates is exact. Only viable for small m.
    """
    v = np.asarray(v, dtype=float)
    m = network.edge_count
    A = network.incidence_matrix()[: network.node_count - 1]
    b = conservation_rhs(od, network.node_count)[: network.node_count - 1]
    best = None
    best_obj = np.inf
    for assignment in product((0, 1, 2), repeat=m):
        fixed1 = [i for i, a in enumerate(assignment) if a == 1]
        free = [i for i, a in enumerate(assignment) if a == 2]
        x = np.zeros(m)
        x[fixed1] = 1.0
        b_eff = b - (A[:, fixed1].sum(axis=1) if fixed1 else np.zeros_like(b))
        if free:
            A_free = A[:, free]
            gram = A_free @ A_free.T
            nu, *_ = np.linalg.lstsq(gram, A_free @ v[free] - b_eff, rcond=None)
            x[free] = v[free] - A_free.T @ nu
            if np.max(np.abs(A_free @ x[free] - b_eff)) > 1e-8:
                continue
            if np.min(x[free]) < -1e-9 or np.max(x[free]) > 1 + 1e-9:
                continue
        elif np.max(np.abs(b_eff)) > 1e-8:
            continue
        obj = float(np.sum((x - v) ** 2))
        if obj < best_obj:
            best_obj = obj
            best = x
    if best is None:
        raise RuntimeError("polytope appears empty under enumeration")
    return best
