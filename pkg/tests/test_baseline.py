import numpy as np
import pytest

from privroute.baseline import detect_od_presence, frank_wolfe_solve, standard_feasible_flow
from privroute.flow_polytope import (
    FlowProjector,
    UnreachablePairError,
    initial_shortest_path_policy,
    pair_index,
)
from privroute.net_model import LatencyModel, affine_latency_from
from privroute.objective import gradient, regularized_cost, travel_time_cost
from conftest import random_policy


def triangle_demand(rate=1.0):
    demand = np.zeros((3, 3))
    demand[0, 2] = rate
    return demand


def test_frank_wolfe_triangle_closed_form(triangle, triangle_latency):
    # with a unit of demand split a on the two-hop path, cost(a) = 3a^2 - 3a + 4,
    # minimized at a = 1/2 with value 13/4
    x, trace = frank_wolfe_solve(
        triangle_demand(), triangle, triangle_latency, alpha=0.0, gap_tol=1e-12, max_iters=10000
    )
    block = x[pair_index(0, 2, 3)]
    assert block == pytest.approx([0.5, 0.5, 0.5], abs=1e-6)
    assert travel_time_cost(x, triangle_demand(), triangle_latency) == pytest.approx(13 / 4, abs=1e-9)


def test_frank_wolfe_zero_demand(triangle, triangle_latency):
    x, trace = frank_wolfe_solve(
        np.zeros((3, 3)), triangle, triangle_latency, alpha=0.0, gap_tol=1e-9, max_iters=50
    )
    assert travel_time_cost(x, np.zeros((3, 3)), triangle_latency) == 0.0
    assert trace[-1][1] <= 1e-9


def test_frank_wolfe_gap_certificate(diamond4):
    # congested enough that the solver actually iterates before certifying
    lat = LatencyModel(slope=np.full(10, 0.3), free_flow=diamond4.free_flow_time)
    demand = np.zeros((4, 4))
    demand[0, 3] = 1.5
    demand[3, 0] = 1.0
    gap_tol = 1e-8
    x, trace = frank_wolfe_solve(demand, diamond4, lat, alpha=0.0, gap_tol=gap_tol, max_iters=50000)
    assert len(trace) > 3
    assert trace[-1][1] <= gap_tol
    # the gap upper-bounds suboptimality: every feasible point costs at least cost - gap
    rng = np.random.default_rng(0)
    cost = travel_time_cost(x, demand, lat)
    for _ in range(10):
        other = random_policy(diamond4, rng)
        assert travel_time_cost(other, demand, lat) >= cost - gap_tol - 1e-9


def test_frank_wolfe_regularized_matches_projected_gradient(diamond4):
    # independent projected-gradient solve as oracle on a small instance;
    # mild congestion keeps the regularized optimum in the relative interior,
    # where line-search Frank-Wolfe converges linearly
    lat = LatencyModel(slope=np.full(10, 0.01), free_flow=diamond4.free_flow_time)
    demand = np.zeros((4, 4))
    demand[0, 3] = 1.2
    demand[2, 1] = 0.7
    alpha = 0.5
    x_fw, trace = frank_wolfe_solve(demand, diamond4, lat, alpha=alpha, gap_tol=1e-11, max_iters=200000)
    assert trace[-1][1] <= 1e-11

    projector = FlowProjector(diamond4)
    x = initial_shortest_path_policy(diamond4)
    step = 0.05
    for _ in range(3000):
        x = projector.project_policy(x - step * gradient(x, demand, lat, alpha), tol=1e-10)
    c_fw = regularized_cost(x_fw, demand, lat, alpha)
    c_pg = regularized_cost(x, demand, lat, alpha)
    assert abs(c_fw - c_pg) / c_pg < 1e-6


def test_frank_wolfe_unreachable_demand(triangle, triangle_latency):
    demand = np.zeros((3, 3))
    demand[2, 0] = 1.0  # no 3 -> 1 path in the triangle
    with pytest.raises(UnreachablePairError):
        frank_wolfe_solve(demand, triangle, triangle_latency, alpha=0.0, gap_tol=1e-6)


def test_standard_feasible_flow_triangle(triangle):
    demand = triangle_demand(1.0 / 60.0)
    flows = standard_feasible_flow(demand, triangle)
    assert np.allclose(flows[pair_index(0, 2, 3)], np.array([1.0, 1.0, 0.0]) / 60.0)
    # conservation with demand scaling: net inflow at destination equals the rate
    A = triangle.incidence_matrix()
    residual = A @ flows[pair_index(0, 2, 3)]
    assert residual == pytest.approx([-1 / 60, 0.0, 1 / 60], abs=1e-15)
    assert np.all(standard_feasible_flow(np.zeros((3, 3)), triangle) == 0)


def test_detect_od_presence_triangle(triangle):
    demand = triangle_demand(1.0 / 60.0)
    flows = standard_feasible_flow(demand, triangle)
    assert detect_od_presence(flows, triangle, node=2)
    assert detect_od_presence(flows.sum(axis=0), triangle, node=2)
    empty = standard_feasible_flow(np.zeros((3, 3)), triangle)
    assert not detect_od_presence(empty, triangle, node=2)


def test_detect_od_presence_robust_to_circulations(diamond4):
    # adding circulations preserves node imbalances, so detection always fires
    rng = np.random.default_rng(1)
    demand = np.zeros((4, 4))
    demand[0, 3] = 0.5
    flows = standard_feasible_flow(demand, diamond4)
    total = flows.sum(axis=0)
    for _ in range(10):
        circ = np.zeros(diamond4.edge_count)
        # 2-cycles between node pairs are circulations
        u, v = rng.choice(4, size=2, replace=False)
        try:
            circ[[diamond4.edge_index(int(u), int(v)), diamond4.edge_index(int(v), int(u))]] = rng.uniform(0, 1)
        except KeyError:
            continue
        assert detect_od_presence(total + circ, diamond4, node=3)
        assert not detect_od_presence(total + circ, diamond4, node=1)


def test_frank_wolfe_cap_out_reports_gap(triangle, triangle_latency):
    x, trace = frank_wolfe_solve(
        triangle_demand(), triangle, triangle_latency, alpha=0.0, gap_tol=1e-14, max_iters=1
    )
    assert len(trace) == 1
    assert trace[-1][1] > 0  # gap reported even on cap-out
