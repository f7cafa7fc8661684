"""Two-level auxiliary system: bracket generators, odd angle curves, pulse trains.

The generators are M^nu = [[0, b12 e^{i nu}], [-conj(b12) e^{-i nu}, 0]],
with X = M^{pi/2} and Y = M^0.  Even-depth brackets ad_X^{2k} Y are
multiples of Y, so an odd polynomial in alpha can be realised as a sum of
such brackets and then approximated by products of e^{t alpha X} and
e^{t alpha Y}.

Pulse trains are stored in chronological order: the first segment acts
first, so it sits rightmost in the matrix product.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import pi
from typing import Sequence

import numpy as np

from .linalg import commutator, matrix_exp

TAGS = ("X", "Y")


@dataclass(frozen=True)
class AuxGenerator:
    b12: complex
    nu: float

    @property
    def matrix(self) -> np.ndarray:
        z = complex(self.b12) * np.exp(1j * self.nu)
        return np.array([[0.0, z], [-np.conj(z), 0.0]], dtype=complex)

    def at(self, alpha: float) -> np.ndarray:
        return alpha * self.matrix


def aux_pair(b12: complex) -> tuple[AuxGenerator, AuxGenerator]:
    if b12 == 0:
        raise ValueError("b12 must be nonzero")
    return AuxGenerator(b12, pi / 2), AuxGenerator(b12, 0.0)


def rotating_frame(x, t: float, b11: complex, b22: complex, alpha: float) -> np.ndarray:
    """exp(-t alpha diag(b11, b22)) x; leaves coordinate moduli unchanged."""
    phase = np.exp(-t * alpha * np.array([b11, b22], dtype=complex))
    return phase[:, None] * np.asarray(x, dtype=complex)


def bracket(word: str, X, Y) -> np.ndarray:
    """Right-nested bracket [w1, [w2, [..., wm]]] of a word over {X, Y}."""
    if not word or any(c not in TAGS for c in word):
        raise ValueError(f"bad bracket word {word!r}")
    mats = {"X": np.asarray(X, dtype=complex), "Y": np.asarray(Y, dtype=complex)}
    out = mats[word[-1]]
    for c in reversed(word[:-1]):
        out = commutator(mats[c], out)
    return out


def bracket_word(k: int) -> str:
    return "X" * (2 * k) + "Y"


def bracket_generator(b12: complex, order: int) -> np.ndarray:
    """ad_X^{2k} Y evaluated by nested commutators (k = order)."""
    if order < 0:
        raise ValueError("order must be >= 0")
    X, Y = aux_pair(b12)
    return bracket(bracket_word(order), X.matrix, Y.matrix)


def bracket_scale(b12: complex, order: int) -> float:
    """Real factor kappa with ad_X^{2k} Y = kappa Y, read off the direct bracket."""
    C = bracket_generator(b12, order)
    return float((C[0, 1] / b12).real)


@dataclass(frozen=True)
class OddAngleCurve:
    """rho(alpha) = sum_l c_l alpha^(2l+1)."""

    coefficients: tuple[float, ...]
    sup_error: float = 0.0
    converged: bool = True

    @property
    def degree(self) -> int:
        return 2 * len(self.coefficients) - 1

    def __call__(self, alpha):
        a = np.asarray(alpha, dtype=float)
        return sum(c * a ** (2 * l + 1) for l, c in enumerate(self.coefficients)) + 0.0 * a


def _odd_design(alpha: np.ndarray, L: int) -> np.ndarray:
    return np.stack([alpha ** (2 * l + 1) for l in range(L + 1)], axis=1)


def fit_odd_angle_curve(
    samples: Sequence[tuple[float, float]], degree: int, tolerance: float
) -> OddAngleCurve:
    """Least-squares fit by odd monomials up to ``degree``.

    When the sup error over the samples exceeds ``tolerance`` the curve is
    still returned, with ``converged=False`` and the achieved error.
    """
    if degree < 1 or degree % 2 == 0:
        raise ValueError("degree must be a positive odd integer")
    pts = np.asarray(samples, dtype=float)
    alpha, rho = pts[:, 0], pts[:, 1]
    L = (degree - 1) // 2
    if np.unique(alpha[alpha != 0]).size < L + 1:
        raise ValueError("fewer distinct nonzero alphas than coefficients")
    V = _odd_design(alpha, L)
    coef, *_ = np.linalg.lstsq(V, rho, rcond=None)
    err = float(np.max(np.abs(V @ coef - rho)))
    return OddAngleCurve(tuple(float(c) for c in coef), err, err <= tolerance)


@dataclass(frozen=True)
class BracketTerm:
    beta: float
    word: str

    @property
    def length(self) -> int:
        return len(self.word) - 1


@dataclass(frozen=True)
class BracketProgram:
    X: AuxGenerator
    Y: AuxGenerator
    terms: tuple[BracketTerm, ...]
    horizon: float

    def generator(self, alpha: float) -> np.ndarray:
        """sum_j beta_j C_j(alpha X, alpha Y)."""
        out = np.zeros((2, 2), dtype=complex)
        for term in self.terms:
            out += term.beta * bracket(term.word, self.X.at(alpha), self.Y.at(alpha))
        return out

    def target(self, alpha: float) -> np.ndarray:
        return matrix_exp(self.horizon * self.generator(alpha))


def program_from_curve(
    curve: OddAngleCurve,
    X: AuxGenerator,
    Y: AuxGenerator,
    horizon: float = 1.0,
    drop_below: float = 1e-10,
) -> BracketProgram:
    """One term per non-negligible coefficient, scaled so the angle is rho(alpha)."""
    if X.b12 == 0 or X.b12 != Y.b12:
        raise ValueError("X and Y must come from the same nonzero b12")
    mod = abs(X.b12)
    terms = []
    for l, c in enumerate(curve.coefficients):
        if abs(c) <= drop_below:
            continue
        kappa = bracket_scale(X.b12, l)
        terms.append(BracketTerm(beta=c / (horizon * mod * kappa), word=bracket_word(l)))
    return BracketProgram(X=X, Y=Y, terms=tuple(terms), horizon=horizon)


@dataclass(frozen=True)
class PulseTrain:
    segments: tuple[tuple[str, float], ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.segments)

    def inverse(self) -> "PulseTrain":
        return PulseTrain(tuple((g, -d) for g, d in reversed(self.segments)))

    def __add__(self, other: "PulseTrain") -> "PulseTrain":
        """Chronological concatenation: ``self`` runs first."""
        return PulseTrain(self.segments + other.segments)

    def total_time(self) -> float:
        return float(sum(abs(d) for _, d in self.segments))

    def to_json(self) -> str:
        return json.dumps(
            {"segments": [{"tag": g, "duration": f"{d:.17g}"} for g, d in self.segments]},
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "PulseTrain":
        doc = json.loads(text)
        return cls(tuple((s["tag"], float(s["duration"])) for s in doc["segments"]))


def _group_commutator(P: PulseTrain, Q: PulseTrain) -> PulseTrain:
    """Train whose propagator is P Q P^-1 Q^-1 (matrix order)."""
    return Q.inverse() + P.inverse() + Q + P


def realize_bracket(word: str, s: float) -> PulseTrain:
    """Train approximating exp(s C_word(X, Y)) for small |s|.

    A length-m word uses an outer step t = |s|^(1/(m+1)) and recurses with
    s / t on the inner word.  Negative s swaps the commutator order.
    """
    if len(word) == 1:
        return PulseTrain(((word, s),)) if s != 0 else PulseTrain()
    if s == 0:
        return PulseTrain()
    m = len(word) - 1
    t = abs(s) ** (1.0 / (m + 1))
    outer = PulseTrain(((word[0], t),))
    inner = realize_bracket(word[1:], abs(s) / t)
    if s > 0:
        return _group_commutator(outer, inner)
    return _group_commutator(inner, outer)


def synthesize_pulse_train(program: BracketProgram, n: int) -> PulseTrain:
    """First-order splitting over ``n`` slices of the realised bracket terms."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not program.terms:
        return PulseTrain()
    # a lone Y-term is exact, no slicing needed
    if len(program.terms) == 1 and program.terms[0].length == 0:
        term = program.terms[0]
        return realize_bracket(term.word, term.beta * program.horizon)
    slice_train = PulseTrain()
    for term in program.terms:
        slice_train = slice_train + realize_bracket(term.word, term.beta * program.horizon / n)
    return PulseTrain(slice_train.segments * n)


def evaluate_pulse_train(
    train: PulseTrain, X: AuxGenerator, Y: AuxGenerator, alpha: float
) -> np.ndarray:
    gens = {"X": X.matrix, "Y": Y.matrix}
    U = np.eye(2, dtype=complex)
    for tag, d in train.segments:
        U = matrix_exp(d * alpha * gens[tag]) @ U
    return U


def evaluate_pulse_train_grid(
    train: PulseTrain, X: AuxGenerator, Y: AuxGenerator, alphas
) -> np.ndarray:
    """Batched evaluation over an alpha-grid, shape (len(alphas), 2, 2)."""
    a = np.asarray(alphas, dtype=float)[:, None, None]
    gens = {"X": X.matrix, "Y": Y.matrix}
    U = np.broadcast_to(np.eye(2, dtype=complex), (a.shape[0], 2, 2)).copy()
    cache: dict = {}
    for seg in train.segments:
        E = cache.get(seg)
        if E is None:
            E = cache[seg] = matrix_exp(seg[1] * a * gens[seg[0]])
        U = E @ U
    return U


def group_commutator_power(X, Y, t: float, n: int, alpha: float) -> np.ndarray:
    """(e^{t a X} e^{t a Y} e^{-t a X} e^{-t a Y})^n in matrix order."""
    X = np.asarray(X) * alpha
    Y = np.asarray(Y) * alpha
    W = matrix_exp(t * X) @ matrix_exp(t * Y) @ matrix_exp(-t * X) @ matrix_exp(-t * Y)
    return np.linalg.matrix_power(W, n)
