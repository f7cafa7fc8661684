"""Dense complex matrix kernels.

Everything here accepts either a single ``(n, n)`` array or a stack
``(..., n, n)``; stacks are how the ensemble code evaluates a whole
alpha-grid at once.
"""

from __future__ import annotations

from math import factorial

import numpy as np

from .errors import DimensionError

SKEW_TOL = 1e-12
UNITARY_TOL = 1e-10

# Diagonal [8/8] Pade approximant of exp; scaled inputs satisfy
# ||M / 2**s||_1 <= _SQUARING_THRESHOLD, where the truncation error is
# far below double precision.
_PADE_ORDER = 8
_SQUARING_THRESHOLD = 0.5
_PADE_COEFFS = np.array(
    [
        factorial(2 * _PADE_ORDER - k)
        * factorial(_PADE_ORDER)
        / (factorial(2 * _PADE_ORDER) * factorial(k) * factorial(_PADE_ORDER - k))
        for k in range(_PADE_ORDER + 1)
    ]
)


def _as_square(M) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise DimensionError(f"expected square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def matrix_exp(M) -> np.ndarray:
    """Matrix exponential by scaling and squaring with an [8/8] Pade approximant."""
    M = _as_square(M)
    n = M.shape[-1]
    eye = np.broadcast_to(np.eye(n, dtype=complex), M.shape)
    norm1 = float(np.max(np.abs(M).sum(axis=-2))) if M.size else 0.0
    s = 0
    if norm1 > _SQUARING_THRESHOLD:
        s = int(np.ceil(np.log2(norm1 / _SQUARING_THRESHOLD)))
    A = M / 2.0**s

    c = _PADE_COEFFS
    A2 = A @ A
    powers = [eye, A2]
    for _ in range(_PADE_ORDER // 2 - 1):
        powers.append(powers[-1] @ A2)
    even = sum(c[2 * k] * powers[k] for k in range(_PADE_ORDER // 2 + 1))
    odd = A @ sum(c[2 * k + 1] * powers[k] for k in range(_PADE_ORDER // 2))
    E = np.linalg.solve(even - odd, even + odd)
    for _ in range(s):
        E = E @ E
    return E


def operator_norm(M, squarings: int = 40) -> float:
    """Largest singular value of a single matrix.

    Runs the power method on ``M^H M`` with repeated squaring, so the
    dominance ratio of the top eigenvalue is raised to ``2**squarings``;
    the estimate is the Rayleigh quotient of a column of the resulting
    near-projector.
    """
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {M.shape}")
    if M.size == 0:
        return 0.0
    # rescale first so that M^H M neither underflows nor overflows
    peak = float(np.max(np.abs(M)))
    if peak == 0.0 or not np.isfinite(peak):
        return peak
    # exact power-of-two scaling; complex division by a tiny float overflows
    e = int(np.frexp(peak)[1])
    M = np.ldexp(M.real, -e) + 1j * np.ldexp(M.imag, -e)
    G = M.conj().T @ M
    P = G / np.trace(G).real
    for _ in range(squarings):
        P = P @ P
        tr = np.trace(P).real
        if tr == 0.0:
            break
        P = P / tr
    v = P[:, int(np.argmax(np.linalg.norm(P, axis=0)))]
    for _ in range(3):
        v = G @ v
        v = v / np.linalg.norm(v)
    rq = (v.conj() @ G @ v).real
    return float(np.ldexp(np.sqrt(max(rq, 0.0)), e))


def commutator(X, Y) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    if X.shape != Y.shape or X.shape[-1] != X.shape[-2]:
        raise DimensionError(f"commutator of shapes {X.shape} and {Y.shape}")
    return X @ Y - Y @ X


def unitarity_defect(U) -> float:
    U = _as_square(U)
    return operator_norm(U.conj().T @ U - np.eye(U.shape[-1]))


def is_skew_hermitian(M, tol: float = SKEW_TOL) -> bool:
    M = np.asarray(M, dtype=complex)
    return operator_norm(M + M.conj().T) <= tol


def dagger(M) -> np.ndarray:
    return np.swapaxes(np.conj(M), -1, -2)
