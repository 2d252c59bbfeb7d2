"""Independent high-precision roots of the reliability equation.

Used offline to freeze the reference values in tests/test_queueing.py;
mpmath is not a package dependency.

    python scripts/oracles.py
"""

from __future__ import annotations

import mpmath as mp

mp.mp.dps = 40

CASES = [(1, 0, "0.95"), (2, 0, "0.95"), (3, 0, "0.95"), (2, 1, "0.9"), (3, 2, "0.8"), (5, 0, "0.99")]


def lhs(rho, m: int, b: int):
    return mp.fsum(
        (m - k) * mp.factorial(m) * mp.mpf(m) ** b / mp.factorial(k) / rho ** (m + b + 1 - k) for k in range(m)
    )


def root(m: int, b: int, eta: str):
    target = 1 / (1 - mp.mpf(eta))
    lo, hi = mp.mpf("1e-6"), mp.mpf(1)
    while lhs(hi, m, b) >= target:
        hi *= 2
    for _ in range(200):
        mid = (lo + hi) / 2
        if lhs(mid, m, b) >= target:
            lo = mid
        else:
            hi = mid
    return lo


def main() -> None:
    for m, b, eta in CASES:
        r = root(m, b, eta)
        print(f"({m}, {b}, {eta}): {mp.nstr(r, 17)}    residual {mp.nstr(lhs(r, m, b) - 1 / (1 - mp.mpf(eta)), 3)}")


if __name__ == "__main__":
    main()
