import numpy as np
import pytest

from evrebalance.lp import LinearProgram, complementary_slackness, primal_residual, solve_lp


def _random_lp(rng, m, n, bounded=True):
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0, 1, size=n)
    slack = rng.uniform(0, 1, size=m)
    b = A @ x0 + slack  # x0 is feasible
    c = rng.normal(size=n)
    ub = np.full(n, 2.0) if bounded else np.full(n, np.inf)
    return LinearProgram.from_arrays(c, A_ub=A, b_ub=b, lb=np.zeros(n), ub=ub)


@pytest.mark.parametrize("seed", range(25))
def test_simplex_matches_highs(seed):
    rng = np.random.default_rng(seed)
    lp = _random_lp(rng, int(rng.integers(2, 12)), int(rng.integers(2, 15)))
    a = solve_lp(lp, engine="simplex")
    b = solve_lp(lp, engine="highs")
    assert a.status == b.status == "optimal"
    assert a.objective == pytest.approx(b.objective, abs=1e-7)
    assert primal_residual(lp, a.x) <= 1e-8
    assert complementary_slackness(lp, a) <= 1e-7


def test_equality_rows():
    # min x + 2y  s.t.  x + y = 1, x - y >= -0.5
    lp = LinearProgram.from_arrays(
        np.array([1.0, 2.0]), A_ub=np.array([[-1.0, 1.0]]), b_ub=np.array([0.5]),
        A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0]), lb=np.zeros(2), ub=np.full(2, 5.0),
    )
    for engine in ("simplex", "highs"):
        res = solve_lp(lp, engine=engine)
        assert res.optimal
        assert res.x == pytest.approx([1.0, 0.0], abs=1e-9)


def test_infeasible():
    lp = LinearProgram.from_arrays(
        np.array([1.0]), A_ub=np.array([[1.0], [-1.0]]), b_ub=np.array([1.0, -2.0]), lb=[0.0], ub=[10.0]
    )
    for engine in ("simplex", "highs"):
        assert solve_lp(lp, engine=engine).status == "infeasible"


def test_unbounded():
    lp = LinearProgram.from_arrays(np.array([-1.0, 0.0]), A_ub=np.array([[0.0, 1.0]]), b_ub=np.array([1.0]),
                                   lb=[0.0, 0.0], ub=[np.inf, np.inf])
    assert solve_lp(lp, engine="highs").status == "unbounded"


def test_crossed_bounds_short_circuit():
    lp = _random_lp(np.random.default_rng(0), 3, 3)
    res = solve_lp(lp, lb=np.array([1.0, 0, 0]), ub=np.array([0.5, 1, 1]))
    assert res.status == "infeasible"


def test_degenerate_problem_terminates():
    # many redundant tight rows through the optimum
    n = 6
    A = np.vstack([np.eye(n), np.ones((8, n))])
    b = np.concatenate([np.ones(n), np.full(8, float(n))])
    lp = LinearProgram.from_arrays(-np.ones(n), A_ub=A, b_ub=b, lb=np.zeros(n), ub=np.full(n, np.inf))
    res = solve_lp(lp, engine="simplex")
    assert res.optimal and res.objective == pytest.approx(-n)


def test_unknown_engine():
    with pytest.raises(ValueError):
        solve_lp(_random_lp(np.random.default_rng(1), 2, 2), engine="magic")


@pytest.mark.parametrize("seed", [58, 369])
def test_big_m_rows_do_not_break_the_dense_simplex(seed):
    # tiny pivots on big-M rows once produced a singular basis and a false optimum
    from evrebalance.generator import tiny_instance
    from evrebalance.model import assemble, check_solution

    m = assemble(tiny_instance(seed), mode="non-myopic")
    dense, sparse = solve_lp(m, engine="simplex"), solve_lp(m, engine="highs")
    assert dense.status == sparse.status
    if dense.status == "optimal":
        assert dense.objective == pytest.approx(sparse.objective, abs=1e-6)
        assert primal_residual(LinearProgram.from_model(m), dense.x) <= 1e-6


def test_inaccurate_dense_result_falls_back(monkeypatch):
    from evrebalance import lp as lp_module

    prog = LinearProgram.from_arrays(np.ones(2), A_ub=-np.ones((1, 2)), b_ub=np.array([-2.0]),
                                     lb=np.zeros(2), ub=np.full(2, 5.0))
    monkeypatch.setattr(lp_module._BoundedSimplex, "solve",
                        lambda self: lp_module.LpResult("optimal", np.zeros(2), 0.0))
    res = solve_lp(prog, engine="simplex")
    assert res.engine == "highs"
    assert res.objective == pytest.approx(2.0)
