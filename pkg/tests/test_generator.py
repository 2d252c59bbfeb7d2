import numpy as np
import pytest

from evrebalance.generator import (
    GeneratorConfig,
    default_seed,
    generate_instance,
    generator_counts,
    illustrative_instance,
    station_nodes,
)
from evrebalance.instance import save_instance
from evrebalance.model import assemble, count_constraints, count_variables, line_arc_count

# N -> (variables, constraints) for the scalability family
COUNTS = {
    10: (1_828, 1_907),
    50: (41_028, 41_547),
    100: (162_028, 163_097),
    200: (644_028, 646_197),
    400: (2_568_028, 2_572_397),
    800: (10_256_028, 10_264_797),
    1000: (16_020_028, 16_030_997),
}


@pytest.mark.parametrize("n", sorted(COUNTS))
def test_counts_from_formula(n):
    assert generator_counts(n) == COUNTS[n]
    assert count_variables(n, 4, line_arc_count(n, 4, 4), 4, 3) == COUNTS[n][0]
    assert count_constraints(n, 4, 4, 3, 10) == COUNTS[n][1]


@pytest.mark.parametrize("n", [10, 50])
def test_counts_from_assembly(n):
    m = assemble(generate_instance(GeneratorConfig(n, seed=0)))
    assert (m.n_cols, m.n_rows) == COUNTS[n]


def test_same_seed_same_file(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_instance(generate_instance(GeneratorConfig(30, seed=11)), a)
    save_instance(generate_instance(GeneratorConfig(30, seed=11)), b)
    assert a.read_bytes() == b.read_bytes()


def test_different_seed_differs():
    a = generate_instance(GeneratorConfig(30, seed=1))
    b = generate_instance(GeneratorConfig(30, seed=2))
    assert not np.array_equal(a.arrival_rate, b.arrival_rate)


def test_structure():
    inst = generate_instance(GeneratorConfig(20, seed=5))
    assert inst.node_count == 20 and inst.levels == 4
    assert inst.idle_stock.sum() == 10 and inst.idle_stock.max() == 1
    assert [s.node for s in inst.stations] == station_nodes(20, 4)
    assert all(s.capacity == 4 for s in inst.stations)
    assert np.all((inst.arrival_rate >= 0) & (inst.arrival_rate <= 1))
    assert np.allclose(inst.service_rate, 20.0)


def test_station_nodes_spread():
    assert station_nodes(8, 4) == [0, 2, 4, 6]
    assert station_nodes(4, 4) == [0, 1, 2, 3]
    for n in (10, 37, 1000):
        nodes = station_nodes(n, 4)
        assert nodes == sorted(set(nodes)) and 0 <= nodes[0] and nodes[-1] < n


def test_random_mu_policy():
    inst = generate_instance(GeneratorConfig(10, seed=0, mu=10.0, mu_policy="random"))
    assert np.all((inst.service_rate >= 5.0) & (inst.service_rate <= 15.0))
    assert np.unique(inst.service_rate).size > 1


@pytest.mark.parametrize("kwargs", [{"n_nodes": 3}, {"n_nodes": 4, "n_vehicles": 17}, {"n_nodes": 10, "mu_policy": "x"}])
def test_config_rejected(kwargs):
    with pytest.raises(ValueError):
        GeneratorConfig(**kwargs)


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("REBALANCE_SEED", "42")
    assert default_seed() == 42
    assert GeneratorConfig(10).seed == 42
    monkeypatch.delenv("REBALANCE_SEED")
    assert default_seed() == 0


def test_illustrative_layout():
    inst = illustrative_instance(capacity=2, seed=3)
    assert [(s.node, s.capacity) for s in inst.stations] == [(1, 2), (5, 2)]
    assert sorted(zip(*np.nonzero(inst.idle_stock))) == [(0, 1), (1, 2), (2, 0)]
    assert np.all(inst.arrival_rate == np.round(inst.arrival_rate, 1))
