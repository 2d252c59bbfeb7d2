import math

import numpy as np
import pytest

from evrebalance.queueing import (
    MAX_SERVERS,
    RhoTable,
    capacity_coefficients,
    eq17_lhs,
    rho_table,
    solve_rho,
    solve_rho_table,
)

# Roots of the reliability equation computed independently with 40-digit
# mpmath bisection (see scripts/oracles.py).
ORACLE = {
    (1, 0, 0.95): 0.22360679774997897,
    (2, 0, 0.95): 0.64163964721946637,
    (3, 0, 0.95): 1.1575742204286496,
    (2, 1, 0.9): 1.0510604670428306,
    (3, 2, 0.8): 2.1711724623283978,
    (5, 0, 0.99): 1.6634955451872408,
}


def test_table_values():
    table = solve_rho_table(3, b=0, eta=0.95)
    assert np.allclose(table.coefficients, (0.2236, 0.6416, 1.1576), atol=1e-4)


@pytest.mark.parametrize("key", sorted(ORACLE))
def test_matches_high_precision_oracle(key):
    assert solve_rho(*key) == pytest.approx(ORACLE[key], abs=1e-12)


def test_lhs_single_server_is_inverse_square():
    for r in (0.1, 0.5, 2.0):
        assert eq17_lhs(r, 1, 0) == pytest.approx(1 / r**2)


def test_lhs_hand_expansions():
    r = 0.6416
    assert eq17_lhs(r, 2, 0) == pytest.approx(4 / r**3 + 2 / r**2)
    assert eq17_lhs(r, 2, 0) == pytest.approx(20.0, abs=0.01)
    r = 1.1576
    assert eq17_lhs(r, 3, 0) == pytest.approx(18 / r**4 + 12 / r**3 + 3 / r**2)
    assert eq17_lhs(r, 3, 0) == pytest.approx(20.0, abs=0.01)


def test_lhs_rejects_non_positive_rho():
    with pytest.raises(ValueError):
        eq17_lhs(0.0, 1, 0)
    with pytest.raises(ValueError):
        eq17_lhs(-1.0, 2, 0)


@pytest.mark.parametrize("b", [0, 1, 3])
@pytest.mark.parametrize("eta", [0.5, 0.9, 0.95, 0.999])
def test_closed_form_single_server(b, eta):
    assert solve_rho(1, b, eta) == pytest.approx((1 - eta) ** (1 / (b + 2)), abs=1e-10)


def test_eta_zero_limit():
    assert solve_rho(1, 0, 1e-12) == pytest.approx(1.0, abs=1e-6)


def test_server_limit():
    solve_rho(MAX_SERVERS, 0, 0.9)
    with pytest.raises(ValueError):
        solve_rho(MAX_SERVERS + 1, 0, 0.9)
    with pytest.raises(ValueError):
        solve_rho(0, 0, 0.9)


@pytest.mark.parametrize("eta", [0.0, 1.0, -0.1])
def test_eta_domain(eta):
    with pytest.raises(ValueError):
        solve_rho(2, 0, eta)


def test_capacity_coefficients_example():
    inc = capacity_coefficients(RhoTable((0.2236, 0.6416, 1.1576)), 50.0)
    assert np.allclose(inc, (11.18, 20.90, 25.80), atol=1e-9)
    assert inc.sum() == pytest.approx(50 * 1.1576)


def test_capacity_coefficients_single():
    assert np.allclose(capacity_coefficients([0.5], 1.0), [0.5])


def test_non_increasing_table_rejected():
    with pytest.raises(ValueError):
        RhoTable((0.5, 0.4))
    with pytest.raises(ValueError):
        capacity_coefficients([0.5, 0.5], 1.0)
    with pytest.raises(ValueError):
        RhoTable((0.0, 0.4))


def test_rho_table_from_params():
    explicit = rho_table({"rho": [0.2, 0.3, 0.5]}, 3)
    assert explicit.coefficients == pytest.approx((0.2, 0.3, 0.5))
    solved = rho_table({"eta": 0.95, "b": 0}, 2)
    assert len(solved.coefficients) == 2
    with pytest.raises(ValueError):
        rho_table({"rho": [0.2]}, 3)
    assert math.isfinite(solved.coefficients[-1])
