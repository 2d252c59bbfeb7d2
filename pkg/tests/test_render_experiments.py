import numpy as np
import pytest

from evrebalance.experiments import SweepPoint, _carry_over, SweepSpec, run_sweep, sweep_csv
from evrebalance.generator import five_node_instance, illustrative_instance
from evrebalance.model import assemble
from evrebalance.render import render_solution
from evrebalance.solver import solve


def _edges(dot: str) -> list[str]:
    return [line for line in dot.splitlines() if "->" in line]


def test_no_solution_has_no_edges(illustrative):
    dot = render_solution(illustrative, None)
    assert not _edges(dot)
    assert dot.count("rank=same") == illustrative.levels


def test_zero_flow_solution_has_no_edges():
    # a single fully charged vehicle covers every level where it stands
    demand = np.zeros((5, 4))
    demand[0, 0] = 1.0
    inst = five_node_instance(vehicles=((0, 4),), demand=demand)
    sol = solve(inst)
    assert sol.status == "optimal"
    assert not _edges(render_solution(inst, sol.values))


def test_edge_count_matches_used_arcs(illustrative):
    m = assemble(illustrative)
    sol = solve(illustrative, model=m)
    W = sol.values[m.layout.block("W")]
    dot = render_solution(illustrative, sol.values, m)
    assert len(_edges(dot)) == int(np.sum(W > 1e-6))
    assert "servers=" in dot and "idle=" in dot


def test_charging_chain_labels():
    # one vehicle at (node 4, level 1) must climb to the top level through a station
    demand = np.zeros((5, 4))
    demand[0, 2] = 1.0
    inst = five_node_instance(vehicles=((4, 1),), demand=demand)
    sol = solve(inst)
    assert sol.status == "optimal"
    dot = render_solution(inst, sol.values)
    edges = _edges(dot)
    assert edges and all('label="1"' in e for e in edges)
    assert any("dashed" in e for e in edges)


def test_sweep_spec_validation(illustrative):
    with pytest.raises(ValueError):
        SweepSpec("temperature", (1, 2), illustrative)
    with pytest.raises(ValueError):
        SweepSpec("capacity", (1, 3, 2), illustrative)
    with pytest.raises(ValueError):
        SweepSpec("capacity", (1.5, 2), illustrative)
    with pytest.raises(ValueError):
        SweepSpec("mu", (0, 1), illustrative)
    with pytest.raises(ValueError):
        SweepSpec("capacity", (), illustrative)
    assert SweepSpec("mu", (1, 2), illustrative).kind == "service-rate"


def test_capacity_sweep_monotone():
    spec = SweepSpec("capacity", (1, 2, 3), illustrative_instance(seed=0))
    points = run_sweep(spec)
    z = [p.Z for p in points]
    assert all(p.status == "optimal" for p in points)
    assert z[0] >= z[1] - 1e-9 >= z[2] - 2e-9


def test_parallel_sweep_keeps_order():
    spec = SweepSpec("capacity", (3, 2, 1), illustrative_instance(seed=2))
    serial = run_sweep(spec, workers=1)
    parallel = run_sweep(spec, workers=2)
    assert [p.param_value for p in parallel] == [3, 2, 1]
    assert [p.Z for p in parallel] == pytest.approx([p.Z for p in serial])


def test_carry_over_fills_unproven_point():
    base = illustrative_instance(seed=0)
    spec = SweepSpec("capacity", (1, 2), base)
    tight = solve(base.with_capacity(1))
    points = [
        SweepPoint(1.0, "myopic", "optimal", tight.objective, 1.0, 0.0, tight.values, tight.objective),
        SweepPoint(2.0, "myopic", "time-limit", float("nan"), 1.0, float("nan"), None, tight.objective - 5.0),
    ]
    out = _carry_over(spec, points)
    assert out[0] is points[0]
    assert out[1].feasible and out[1].status == "time-limit"
    assert out[1].Z == pytest.approx(tight.objective)
    assert out[1].gap == pytest.approx(5.0 / tight.objective)
    assert "adopted" in out[1].note


def test_carry_over_leaves_optimal_points():
    base = illustrative_instance(seed=0)
    spec = SweepSpec("capacity", (1, 2), base)
    points = run_sweep(spec)
    assert _carry_over(spec, points) == points


def test_csv_marks_infeasible():
    rows = sweep_csv([SweepPoint(5.0, "non-myopic", "infeasible", float("nan"), 0.5, float("nan"))])
    assert rows.splitlines()[1] == "5,non-myopic,NF,NF,0.500,"
