"""Propagators of truncated systems under piecewise-constant controls."""

from __future__ import annotations

import csv
import io
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .linalg import matrix_exp, operator_norm
from .spectral import SpectralModel, TruncatedSystem, truncate


@dataclass(frozen=True, eq=False)
class PiecewiseControl:
    durations: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.durations, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if d.shape != v.shape:
            raise ValueError("durations and values differ in length")
        if np.any(d <= 0) or not np.all(np.isfinite(d)) or not np.all(np.isfinite(v)):
            raise ValueError("segments need finite positive durations and finite values")
        object.__setattr__(self, "durations", d)
        object.__setattr__(self, "values", v)

    @classmethod
    def empty(cls) -> "PiecewiseControl":
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def pause(cls, duration: float) -> "PiecewiseControl":
        if duration <= 0:
            return cls.empty()
        return cls(np.array([duration]), np.array([0.0]))

    def __len__(self):
        return self.durations.size

    @property
    def total_duration(self) -> float:
        return float(self.durations.sum())

    @property
    def max_amplitude(self) -> float:
        return float(np.max(np.abs(self.values), initial=0.0))

    def abs_integral(self) -> float:
        return float(np.sum(self.durations * np.abs(self.values)))

    def __add__(self, other: "PiecewiseControl") -> "PiecewiseControl":
        return PiecewiseControl(
            np.concatenate([self.durations, other.durations]),
            np.concatenate([self.values, other.values]),
        )

    @classmethod
    def concatenate(cls, parts) -> "PiecewiseControl":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.durations for p in parts]),
            np.concatenate([p.values for p in parts]),
        )

    def merged(self) -> "PiecewiseControl":
        """Fuse neighbouring segments with identical values (same propagator)."""
        if len(self) == 0:
            return self
        starts = np.flatnonzero(np.r_[True, self.values[1:] != self.values[:-1]])
        return PiecewiseControl(np.add.reduceat(self.durations, starts), self.values[starts])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t_start,duration,value\n")
        starts = np.concatenate([[0.0], np.cumsum(self.durations)[:-1]])
        for t0, d, v in zip(starts, self.durations, self.values):
            buf.write(f"{t0:.17g},{d:.17g},{v:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PiecewiseControl":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            np.array([float(r["duration"]) for r in rows]),
            np.array([float(r["value"]) for r in rows]),
        )


class _ExpCache:
    """Bounded LRU of segment propagators keyed by (duration, value)."""

    def __init__(self, A, B, alphas, maxsize: int = 2048):
        self.A = np.asarray(A, dtype=complex)
        self.B = np.asarray(B, dtype=complex)
        self.alphas = np.asarray(alphas, dtype=float)[:, None, None]
        self.maxsize = maxsize
        self._store: OrderedDict = OrderedDict()

    def __call__(self, d: float, v: float) -> np.ndarray:
        key = (d, v)
        E = self._store.get(key)
        if E is not None:
            self._store.move_to_end(key)
            return E
        E = matrix_exp(d * (self.A + (v * self.alphas) * self.B))
        self._store[key] = E
        if len(self._store) > self.maxsize:
            self._store.popitem(last=False)
        return E


def _check_alpha(alphas):
    a = np.asarray(alphas, dtype=float).reshape(-1)
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError("alpha values must lie in [0, 1]")
    return a


def ensemble_propagate(
    system: TruncatedSystem, control: PiecewiseControl, alpha_grid, history: bool = False
):
    """Propagators for every alpha of the grid, shape (len(grid), N, N).

    The segment loop is sequential and the alpha axis is batched, so the
    reduction order is fixed and results are reproducible bit for bit.
    With ``history=True`` also returns the cumulative propagators after
    every segment, shape (len(control), len(grid), N, N).
    """
    a = _check_alpha(alpha_grid)
    N = system.N
    U = np.broadcast_to(np.eye(N, dtype=complex), (a.size, N, N)).copy()
    step = _ExpCache(system.A, system.B, a)
    hist = [] if history else None
    for d, v in zip(control.durations, control.values):
        U = step(float(d), float(v)) @ U
        if history:
            hist.append(U)
    if history:
        return U, np.array(hist).reshape(len(control), a.size, N, N)
    return U


def propagate(system: TruncatedSystem, control: PiecewiseControl, alpha: float) -> np.ndarray:
    return ensemble_propagate(system, control, [alpha])[0]


def block_moduli(U) -> np.ndarray:
    """|<phi_j, U phi_k>| for j, k in {1, 2}; works on stacks."""
    return np.abs(np.asarray(U)[..., :2, :2])


def target_moduli(m) -> np.ndarray:
    """Moduli table of the rotation whose (1,1) modulus is m."""
    m = np.clip(np.asarray(m, dtype=float), 0.0, 1.0)
    s = np.sqrt(1.0 - m * m)
    return np.stack([np.stack([m, s], -1), np.stack([s, m], -1)], -2)


@dataclass
class EnsembleReport:
    alpha_grid: np.ndarray
    moduli: np.ndarray
    targets: np.ndarray
    per_alpha_error: np.ndarray = field(init=False)
    sup_error: float = field(init=False)

    def __post_init__(self):
        self.alpha_grid = np.asarray(self.alpha_grid, dtype=float)
        self.moduli = np.asarray(self.moduli, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        self.per_alpha_error = np.max(np.abs(self.moduli - self.targets), axis=(-1, -2))
        self.sup_error = float(np.max(self.per_alpha_error, initial=0.0))

    def check_subunitary(self, tol: float = 1e-8) -> bool:
        rows = np.sqrt(np.sum(self.moduli**2, axis=-1))
        cols = np.sqrt(np.sum(self.moduli**2, axis=-2))
        return bool(np.all(rows <= 1 + tol) and np.all(cols <= 1 + tol))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("alpha,m11,m12,m21,m22,t11,t12,t21,t22,err\n")
        for a, m, t, e in zip(self.alpha_grid, self.moduli, self.targets, self.per_alpha_error):
            vals = [a, *m.reshape(-1), *t.reshape(-1), e]
            buf.write(",".join(f"{x:.15e}" for x in vals) + "\n")
        return buf.getvalue()


def ensemble_report(system, control, alpha_grid, target_modulus) -> tuple[EnsembleReport, np.ndarray]:
    a = _check_alpha(alpha_grid)
    U = ensemble_propagate(system, control, a)
    return EnsembleReport(a, block_moduli(U), target_moduli(target_modulus(a))), U


@dataclass
class TruncationCheck:
    distance: float
    tail: float
    interior_coupling: float
    e_defect: float | None
    K: float | None
    tail_term: float | None = None
    commutator_term: float | None = None

    @property
    def bound(self) -> float | None:
        if self.tail_term is None or self.commutator_term is None:
            return None
        return self.tail_term + self.commutator_term


def truncation_consistency(
    model: SpectralModel,
    control: PiecewiseControl,
    alpha: float,
    N: int,
    Nbig: int,
    tracking=None,
) -> TruncationCheck:
    """Distance between the pi_2 blocks of the N and Nbig simulations.

    With a tracking result, the measured ingredients of the estimate
    ||pi_2 (U_big - U_N) pi_2|| <= int|u| ||pi_2 B (1-pi_N)||
    + 4 sup_s ||E(s)|| K ||pi_N B (1-pi_N)|| are assembled alongside,
    E(s) being the deviation of the N-level propagator from its averaged
    prediction and K the integrated-amplitude constant.
    """
    if not 2 <= N < Nbig <= model.dimension:
        raise DimensionError(f"need 2 <= N < Nbig <= {model.dimension}")
    small, big = truncate(model, N), truncate(model, Nbig)
    Us, hist = ensemble_propagate(small, control, [alpha], history=True)
    Ub = ensemble_propagate(big, control, [alpha])
    distance = operator_norm(Ub[0, :2, :2] - Us[0, :2, :2])
    # the Nbig-range stands in for the full system beyond N
    tail = operator_norm(big.B[:2, N:])
    interior = operator_norm(big.B[:N, N:])
    check = TruncationCheck(distance, tail, interior, None, None)
    if tracking is not None:
        times = np.cumsum(control.durations)
        defects = [0.0]
        for k, t in enumerate(times):
            pred = tracking.predicted_at(t, alpha)
            defects.append(operator_norm(hist[k, 0] - pred))
        check.e_defect = float(max(defects))
        check.K = tracking.constants.K
        # K bounds int|u_n| inside the validity window; take the larger to stay safe
        check.tail_term = max(check.K, control.abs_integral() * alpha) * tail
        check.commutator_term = 4.0 * check.e_defect * check.K * interior
    return check

