import mpmath
import numpy as np
import pytest


def random_skew(rng, n, norm=None):
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    M = (Z - Z.conj().T) / 2
    if norm is not None:
        M *= norm / np.linalg.norm(M, 2)
    return M


def series_exp(M, terms=80):
    """Plain Taylor series; accurate for ||M|| <= 2 in double precision."""
    out = np.eye(M.shape[0], dtype=complex)
    term = np.eye(M.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def odd_fit_oracle(alpha, rho, degree, dps=50):
    """Least squares through mpmath normal equations at high precision."""
    mpmath.mp.dps = dps
    L = (degree - 1) // 2
    V = mpmath.matrix([[mpmath.mpf(a) ** (2 * l + 1) for l in range(L + 1)] for a in alpha])
    y = mpmath.matrix([mpmath.mpf(r) for r in rho])
    c = mpmath.lu_solve(V.T * V, V.T * y)
    resid = V * c - y
    return [float(x) for x in c], float(max(abs(r) for r in resid))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
