import numpy as np
import pytest

from conftest import two_node_instance
from evrebalance.generator import GeneratorConfig, five_node_instance, generate_instance, generator_counts
from evrebalance.model import (
    FAMILIES,
    ModelError,
    assemble,
    check_solution,
    compose_values,
    count_constraints,
    count_variables,
    evaluate_objective,
)
from evrebalance.solver import brute_force, evaluate_placement, solve


@pytest.mark.parametrize("n, nvar, ncon", [(10, 1828, 1907), (50, 41028, 41547)])
def test_generator_model_sizes(n, nvar, ncon):
    m = assemble(generate_instance(GeneratorConfig(n, seed=2)))
    assert (m.n_cols, m.n_rows) == (nvar, ncon)
    assert generator_counts(n) == (nvar, ncon)
    assert nvar == 16 * n * n + 20 * n + 28
    assert ncon == 16 * n * n + 31 * n - 3


def test_family_breakdown():
    n, H, C, J = 10, 4, 3, 4
    m = assemble(generate_instance(GeneratorConfig(n, seed=2)))
    fc = m.family_counts()
    nv = n * H
    assert fc["EQ2"] == nv
    assert fc["EQ3"] == n * (H - 1)
    assert fc["EQ4"] == nv * (C - 1)
    assert fc["EQ5R"] == nv and "EQ5" not in fc
    assert fc["EQ6"] == 1
    assert fc["EQ7"] == nv * nv
    assert fc["EQ8"] == fc["EQ9"] == nv - 10
    assert fc["EQ10"] == nv
    assert fc["EQ11"] == J * (H - 1)
    assert fc["EQ12"] == J
    assert m.kind_counts() == {"X": nv * nv, "Y": nv * C, "W": 8 * n + 4, "P": J * H * (H - 1) // 2}


def test_non_myopic_swaps_the_queueing_family():
    inst = generate_instance(GeneratorConfig(10, seed=2))
    fc = assemble(inst, mode="non-myopic").family_counts()
    assert fc["EQ5"] == 40 and "EQ5R" not in fc
    assert assemble(inst, mode="non-myopic").n_rows == assemble(inst).n_rows


def test_count_formulas_match_assembly(tiny):
    m = assemble(tiny)
    g = m.graph
    J = len(tiny.stations)
    assert m.n_cols == count_variables(tiny.node_count, tiny.levels, g.n_arcs, J, tiny.max_servers)
    assert m.n_rows == count_constraints(tiny.node_count, tiny.levels, J, tiny.max_servers, len(tiny.origins))


def test_column_domains(illustrative):
    m = assemble(illustrative)
    L = m.layout
    assert np.all(m.integer[L.block("X")]) and np.all(m.ub[L.block("X")] == 1)
    assert np.all(m.integer[L.block("Y")]) and np.all(m.ub[L.block("Y")] == 1)
    assert np.all(m.integer[L.block("W")]) and np.all(np.isinf(m.ub[L.block("W")]))
    assert not np.any(m.integer[L.block("P")])
    assert m.variable(L.y(3, 2)).kind == "Y"
    assert m.variable(0).domain == "binary"


def test_names_are_unique(illustrative):
    m = assemble(illustrative, mode="non-myopic")
    rows = [m.row_name(r) for r in range(m.n_rows)]
    cols = [m.col_name(k) for k in range(m.n_cols)]
    assert len(set(rows)) == len(rows)
    assert len(set(cols)) == len(cols)
    assert all(r.split("_")[0] in FAMILIES for r in rows)


def test_two_node_objective():
    inst = two_node_instance()
    m = assemble(inst)
    # server at node 0, the vehicle moves 1 -> 0, both demands use node 0
    x = compose_values(m, [0, 0], [1, 0], [0.0, 1.0], [])
    assert m.graph.arc(1) == ((1, 1), (0, 1))
    assert check_solution(m, x).feasible
    assert evaluate_objective(inst, x) == pytest.approx(12.0)
    assert float(m.c @ x) == pytest.approx(12.0)
    # staying put costs 2 * 10 = 20, so relocating is optimal
    sol = solve(inst)
    assert sol.status == "optimal" and sol.objective == pytest.approx(12.0)


def test_theta_scales_only_relocation():
    inst = two_node_instance()
    m = assemble(inst)
    x = compose_values(m, [0, 0], [1, 0], [0.0, 1.0], [])
    z1 = evaluate_objective(inst, x)
    z2 = evaluate_objective(inst.replace(theta=0.4), x)
    assert z2 - z1 == pytest.approx(0.2 * 10.0)


def test_zero_objective():
    inst = two_node_instance().replace(arrival_rate=[[0.0], [0.0]])
    m = assemble(inst)
    x = compose_values(m, [1, 1], [0, 1], [0.0, 0.0], [])
    assert evaluate_objective(inst, x) == 0.0


def test_station_overuse_is_reported():
    # both vehicles charge at the station on node 2; fine with u=2, one session too many with u=1
    counts = np.zeros(20, dtype=np.int64)
    wide = assemble(five_node_instance(capacity=2))
    counts[wide.graph.vid(2, 4)] = 2
    pv = evaluate_placement(wide, counts)
    assert pv.feasible
    tight = assemble(five_node_instance(capacity=1))
    report = check_solution(tight, pv.values)
    assert report.by_family["EQ12"] == pytest.approx(1.0)
    assert not report.feasible


def test_server_order_violation(illustrative):
    m = assemble(illustrative)
    sol = solve(illustrative)
    x = sol.values.copy()
    v = int(np.nonzero(x[m.layout.block("Y")].reshape(-1, 3)[:, 0] > 0.5)[0][0])
    x[m.layout.y(v, 1)] = 0.0
    x[m.layout.y(v, 2)] = 1.0
    assert check_solution(m, x).by_family["EQ4"] == pytest.approx(1.0)


@pytest.mark.parametrize("mode", ["myopic", "non-myopic"])
def test_solver_output_is_clean(tiny, mode):
    m = assemble(tiny, mode=mode)
    sol = solve(tiny, mode, model=m)
    if not sol.feasible:
        assert sol.status == "infeasible" and brute_force(m).status == "infeasible"
        return
    rep = check_solution(m, sol.values)
    assert rep.feasible and rep.max_violation <= 1e-6
    assert evaluate_objective(tiny, sol.values) == pytest.approx(sol.objective, abs=1e-6)


def test_feasible_solution_structure(illustrative):
    m = assemble(illustrative)
    x = solve(illustrative, model=m).values
    L, g = m.layout, m.graph
    X = x[L.block("X")].reshape(L.nv, L.nv)
    assert np.allclose(X.sum(axis=1), 1.0)
    d, s = np.nonzero(X > 0.5)
    assert np.all(g.vertex_level[s] >= g.vertex_level[d])
    Y = x[L.block("Y")].reshape(L.nv, L.max_servers)
    assert Y.sum() == illustrative.n_vehicles
    W = x[L.block("W")]
    net = np.zeros(L.nv)
    np.add.at(net, g.head, W)
    np.subtract.at(net, g.tail, W)
    assert np.allclose(illustrative.idle_stock.reshape(-1) + net, Y.sum(axis=1))


def test_unknown_mode(illustrative):
    with pytest.raises((ModelError, ValueError)):
        assemble(illustrative, mode="sideways")
