import itertools

import numpy as np
import pytest

from evrebalance.generator import five_node_instance, illustrative_instance, tiny_instance
from evrebalance.graph import build_graph
from evrebalance.lp import solve_lp
from evrebalance.model import assemble
from evrebalance.solver import iter_placements
from evrebalance.subproblems import (
    assign_demand,
    decompose_paths,
    flow_subsystem,
    min_cost_flow,
    server_capacity,
    session_count,
    solve_gap,
)


def _brute_gap(w, cost, cap):
    n, m = cost.shape
    best, arg = np.inf, None
    for choice in itertools.product(range(m), repeat=n):
        choice = np.array(choice)
        c = cost[np.arange(n), choice]
        if np.any(np.isinf(c)):
            continue
        load = np.bincount(choice, weights=w, minlength=m)
        if np.any(load > cap + 1e-9):
            continue
        z = float(w @ c)
        if z < best:
            best, arg = z, choice
    return best, arg


@pytest.mark.parametrize("seed", range(30))
def test_gap_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 7)), int(rng.integers(1, 4))
    w = np.round(rng.uniform(0.1, 2.0, size=n), 2)
    cost = np.round(rng.uniform(0, 5, size=(n, m)), 1)
    cost[rng.random((n, m)) < 0.2] = np.inf
    cap = np.round(rng.uniform(0.5, 1.2, size=m) * w.sum() / m * 1.3, 2)
    best, _ = _brute_gap(w, cost, cap)
    status, choice = solve_gap(w, cost, cap)
    if not np.isfinite(best):
        assert choice is None and status == "infeasible"
        return
    assert status == "optimal"
    assert float(w @ cost[np.arange(n), choice]) == pytest.approx(best, abs=1e-9)
    assert np.all(np.bincount(choice, weights=w, minlength=m) <= cap + 1e-9)


def test_myopic_assignment_is_nearest():
    inst = illustrative_instance(seed=2)
    g = build_graph(inst)
    counts = np.zeros(24, dtype=np.int64)
    counts[[g.vid(0, 4), g.vid(5, 4), g.vid(2, 2)]] = 1
    asg = assign_demand(inst, counts, "myopic", g)
    assert asg.status == "optimal"
    assert asg.server[g.vid(1, 1)] == g.vid(0, 4)  # equidistant from nodes 0 and 2, lowest id wins
    assert asg.server[g.vid(2, 1)] == g.vid(2, 2)
    assert asg.server[g.vid(4, 3)] == g.vid(5, 4)


def test_tie_break_lowest_vertex():
    inst = illustrative_instance(seed=2)
    g = build_graph(inst)
    counts = np.zeros(24, dtype=np.int64)
    counts[[g.vid(0, 4), g.vid(2, 4)]] = 1
    asg = assign_demand(inst, counts, "myopic", g)
    assert asg.server[g.vid(1, 1)] == g.vid(0, 4)


def test_uncoverable_demand():
    inst = illustrative_instance(seed=2)
    counts = np.zeros(24, dtype=np.int64)
    counts[0] = 3
    assert assign_demand(inst, counts, "myopic").status == "infeasible"


def test_non_myopic_respects_capacity():
    # at mu=70 the nearest-server loads overflow the single-server vertex
    inst = illustrative_instance(seed=2).with_service_rate(70.0)
    g = build_graph(inst)
    counts = np.zeros(24, dtype=np.int64)
    counts[[g.vid(1, 4), g.vid(4, 4)]] = [2, 1]
    lam = inst.arrival_rate.reshape(-1)
    cap = server_capacity(inst, counts)
    nearest = assign_demand(inst, counts, "myopic", g)
    assert np.any(np.bincount(nearest.server, weights=lam, minlength=24) > cap + 1e-9)
    asg = assign_demand(inst, counts, "non-myopic", g)
    assert asg.status == "optimal"
    assert np.all(np.bincount(asg.server, weights=lam, minlength=24) <= cap + 1e-9)
    assert asg.cost > nearest.cost
    assert assign_demand(inst.with_service_rate(60.0), counts, "non-myopic", g).status == "infeasible"


def test_session_accounting():
    assert session_count([1, 0, 1]) == 2
    assert session_count([2, 2, 2]) == 2
    assert decompose_paths([1, 0, 1]) == [(1, 2, 1), (3, 4, 1)]
    assert decompose_paths([2, 1, 1]) == [(1, 2, 1), (1, 4, 1)]
    assert decompose_paths([0, 0, 0]) == []


def test_relocation_through_station():
    inst = five_node_instance()
    g = build_graph(inst)
    counts = np.zeros(20, dtype=np.int64)
    counts[[g.vid(0, 2), g.vid(2, 4)]] = 1
    flow = min_cost_flow(inst, counts, g)
    assert flow.status == "optimal"
    assert flow.arc_flow.sum() > 0
    assert np.all(flow.arc_flow == np.round(flow.arc_flow))


def test_session_bound_triggers_exact_repair():
    # both vehicles sit at the station node; one wants 1->2, the other 3->4
    inst = five_node_instance(vehicles=((2, 1), (2, 3)), capacity=1)
    g = build_graph(inst)
    counts = np.zeros(20, dtype=np.int64)
    counts[[g.vid(2, 2), g.vid(2, 4)]] = 1
    tight = min_cost_flow(inst, counts, g)
    loose = min_cost_flow(five_node_instance(vehicles=((2, 1), (2, 3)), capacity=2), counts, g)
    assert tight.repaired and tight.status == "optimal"
    assert tight.cost > loose.cost
    assert tight.cost == pytest.approx(solve_lp(flow_subsystem(inst, counts, g)).objective)
    assert np.sum(tight.path_flow[: 6]) <= 1 and np.sum(tight.path_flow[6:]) <= 1


@pytest.mark.parametrize("seed", range(10))
def test_flow_matches_lp_on_every_placement(seed):
    inst = tiny_instance(seed)
    m = assemble(inst)
    for counts in iter_placements(m.layout.nv, inst.n_vehicles, inst.max_servers):
        counts = np.array(counts)
        flow = min_cost_flow(inst, counts, m.graph, m.paths)
        lp = solve_lp(flow_subsystem(inst, counts, m.graph, m.paths))
        assert (flow.status == "optimal") == lp.optimal
        if lp.optimal:
            assert flow.cost == pytest.approx(lp.objective, abs=1e-6)


def test_wrong_placement_size():
    inst = five_node_instance()
    with pytest.raises(ValueError):
        min_cost_flow(inst, np.zeros(20, dtype=np.int64))
