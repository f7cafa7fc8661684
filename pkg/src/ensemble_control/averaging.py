"""Resonant periodic pulses and the averaged dynamics they produce.

A pulse u* of period T = 2 pi / omega, omega = lambda_2 - lambda_1, scaled
down to u*/n, makes the truncated propagator follow

    X(t, 0) ~ exp(t A) exp(v_n(t) alpha M_dag),   v_n(t) = (1/n) int_0^t |u*|,

with an O(1/n) error.  M_dag keeps the couplings whose gap is an integer
multiple of omega, weighted by the pulse's Fourier coefficient at that gap.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import ceil, floor, pi

import numpy as np
from scipy.optimize import brentq

from .errors import BudgetExhausted, PhaseAlignmentError, ValidityWindowError
from .galerkin import PiecewiseControl
from .linalg import matrix_exp, operator_norm
from .spectral import GAP_TOL, TruncatedSystem

ORTHO_TOL = 1e-10
DEFAULT_STEPS_PER_PERIOD = 200


def _exp_integral(kappa: float, a: float, b: float) -> complex:
    """int_a^b exp(i kappa s) ds."""
    if abs(kappa) * max(abs(a), abs(b), b - a) < 1e-300 or kappa == 0.0:
        return complex(b - a)
    return (np.exp(1j * kappa * b) - np.exp(1j * kappa * a)) / (1j * kappa)


def _abs_cos_primitive(y):
    """H(y) = int_{-pi/2}^{y} |cos s| ds, continuous and increasing."""
    y = np.asarray(y, dtype=float)
    m = np.floor((y + pi / 2) / pi)
    return 2 * m + 1 + np.where(m % 2 == 0, 1.0, -1.0) * np.sin(y)


@dataclass(frozen=True)
class PeriodicPulse:
    """cos(omega t + theta), or a {0,1} pattern on equal cells of the period.

    The phase convention makes the (1,2) entry of the averaged generator
    proportional to b12 e^{i theta}.
    """

    shape: str
    omega: float
    theta: float = 0.0
    pattern: tuple[int, ...] = ()
    shift: float = 0.0

    @property
    def period(self) -> float:
        return 2 * pi / abs(self.omega)

    def sample(self, t):
        t = np.asarray(t, dtype=float)
        if self.shape == "cosine":
            return np.cos(self.omega * t + self.theta)
        m = len(self.pattern)
        cell = np.floor(((t + self.shift) % self.period) / (self.period / m)).astype(int)
        return np.asarray(self.pattern, dtype=float)[np.clip(cell, 0, m - 1)]

    def pieces(self, t0: float, t1: float):
        """Exact constant pieces (start, end, value) of a binary pulse on [t0, t1]."""
        if self.shape != "binary":
            raise ValueError("only binary pulses are piecewise constant")
        T, m = self.period, len(self.pattern)
        h = T / m
        out = []
        k = floor((t0 + self.shift) / h)
        while True:
            a = max(t0, k * h - self.shift)
            b = min(t1, (k + 1) * h - self.shift)
            if b > a:
                out.append((a, b, float(self.pattern[k % m])))
            if (k + 1) * h - self.shift >= t1:
                break
            k += 1
        return out

    def fourier(self, w: float) -> complex:
        """int_0^T u*(s) e^{i w s} ds."""
        T = self.period
        if self.shape == "cosine":
            return 0.5 * (
                np.exp(1j * self.theta) * _exp_integral(w + self.omega, 0.0, T)
                + np.exp(-1j * self.theta) * _exp_integral(w - self.omega, 0.0, T)
            )
        return complex(sum(v * _exp_integral(w, a, b) for a, b, v in self.pieces(0.0, T)))

    def abs_integral(self, t) -> float:
        """int_0^t |u*(s)| ds."""
        if self.shape == "cosine":
            w = abs(self.omega)
            th = self.theta if self.omega > 0 else -self.theta
            return float((_abs_cos_primitive(w * t + th) - _abs_cos_primitive(th)) / w)
        T = self.period
        q = floor(t / T)
        per = sum((b - a) * abs(v) for a, b, v in self.pieces(0.0, T))
        rest = sum((b - a) * abs(v) for a, b, v in self.pieces(q * T, t)) if t > q * T else 0.0
        return float(q * per + rest)

    def inverse_abs_integral(self, target: float) -> float:
        """Smallest t with int_0^t |u*| = target."""
        if target <= 0:
            return 0.0
        I = self.abs_integral(self.period)
        q = floor(target / I)
        lo, hi = q * self.period, (q + 1) * self.period
        rem = target - q * I
        if rem <= 0:
            return lo
        return brentq(lambda t: self.abs_integral(t) - target, lo, hi, xtol=1e-14, rtol=1e-15)


def _gap_multiple(gap: float, omega: float) -> int | None:
    q = gap / omega
    k = round(q)
    return k if abs(q - k) <= GAP_TOL else None


def coupled_pairs(system: TruncatedSystem):
    """Pairs (j, k), 0-based, coupled by B and touching level 1 or 2."""
    nz = np.abs(system.B) > 0
    for j, k in zip(*np.nonzero(nz)):
        if j < 2 or k < 2:
            yield int(j), int(k)


def orthogonality_requirements(system: TruncatedSystem) -> list[tuple[int, int, int]]:
    """(j, k, q) with lambda_j - lambda_k = q (lambda_1 - lambda_2), q not +-1."""
    lam = system.lambdas
    omega = lam[0] - lam[1]
    out = []
    for j, k in coupled_pairs(system):
        q = _gap_multiple(lam[j] - lam[k], omega)
        if q is not None and abs(q) != 1:
            out.append((j, k, q))
    return out


def orthogonality_violations(system: TruncatedSystem, pulse: PeriodicPulse):
    T = pulse.period
    lam = system.lambdas
    bad = []
    for j, k, q in orthogonality_requirements(system):
        val = pulse.fourier(lam[j] - lam[k])
        if abs(val) > ORTHO_TOL * T:
            bad.append((j + 1, k + 1, q, abs(val)))
    return bad


def _binary_candidates(required: set[int], max_cells: int):
    """Best {0,1} cell pattern annihilating the Fourier modes in ``required``."""
    for m in range(2, max_cells + 1):
        best, best_eff = None, 0.0
        cells = np.arange(m)
        for bits in itertools.product((0, 1), repeat=m):
            if not any(bits):
                continue
            b = np.asarray(bits, dtype=float)
            ok = True
            for q in required:
                if q == 0:
                    ok = False
                    break
                # modes in units of omega with T = 2 pi: cell j spans [2 pi j/m, 2 pi (j+1)/m]
                ph = np.exp(2j * pi * q * (cells + 1) / m) - np.exp(2j * pi * q * cells / m)
                if abs(np.sum(b * ph)) > 1e-12:
                    ok = False
                    break
            if not ok:
                continue
            ph1 = np.exp(2j * pi * (cells + 1) / m) - np.exp(2j * pi * cells / m)
            eff = abs(np.sum(b * ph1)) / (2 * pi * b.sum() / m)
            if eff > best_eff + 1e-12:
                best, best_eff = bits, eff
        if best is not None:
            return best
    return None


def design_periodic_pulse(
    system: TruncatedSystem, theta: float, shape: str = "cosine", max_cells: int = 12
) -> PeriodicPulse:
    """Resonant pulse for the 1-2 transition, checked against the orthogonality
    conditions of every coupled pair touching levels 1 and 2."""
    omega = system.omega
    if omega <= 0:
        raise ValueError("need lambda_2 > lambda_1")
    if system.b12 == 0:
        raise ValueError("b12 vanishes")
    tried = []
    if shape == "cosine":
        pulse = PeriodicPulse("cosine", omega, theta)
        bad = orthogonality_violations(system, pulse)
        if not bad:
            return pulse
        tried.append(("cosine", bad))
    required = {q for _, _, q in orthogonality_requirements(system)}
    bits = _binary_candidates(required, max_cells)
    if bits is not None:
        base = PeriodicPulse("binary", omega, theta, tuple(bits), 0.0)
        # shifting by s multiplies F(-omega) by e^{i omega s}
        phase0 = np.angle(base.fourier(-omega))
        shift = ((theta - phase0) / omega) % base.period
        pulse = PeriodicPulse("binary", omega, theta, tuple(bits), shift)
        bad = orthogonality_violations(system, pulse)
        if not bad:
            return pulse
        tried.append(("binary", bad))
    else:
        tried.append(("binary", "no pattern found"))
    raise ValueError(f"no admissible periodic pulse: {tried}")


@dataclass(frozen=True, eq=False)
class AveragingConstants:
    I: float
    efficiency: float
    Tstar: float
    K: float
    C: float
    Mdagger: np.ndarray
    period: float
    resonant_fourier: complex

    def as_dict(self) -> dict:
        return {
            "I": self.I,
            "efficiency": self.efficiency,
            "Tstar": self.Tstar,
            "K": self.K,
            "C": self.C,
            "period": self.period,
            "mdagger_12": [self.Mdagger[0, 1].real, self.Mdagger[0, 1].imag],
        }


def compute_constants(system: TruncatedSystem, pulse: PeriodicPulse) -> AveragingConstants:
    lam = system.lambdas
    omega = lam[1] - lam[0]
    T = pulse.period
    I = pulse.abs_integral(T)
    F12 = pulse.fourier(lam[0] - lam[1])
    if abs(F12) == 0 or I == 0:
        raise ValueError("pulse has zero efficiency on the 1-2 transition")
    eff = abs(F12) / I
    Tstar = pi * T / (2 * abs(system.b12) * abs(F12))
    K = I * Tstar / T

    C = 0.0
    for j, k in coupled_pairs(system):
        gap = abs(lam[j] - lam[k])
        if _gap_multiple(gap, omega) is not None:
            continue
        ratio = abs(pulse.fourier(lam[j] - lam[k]) / np.sin(pi * gap / abs(omega)))
        C = max(C, ratio)

    N = system.N
    Md = np.zeros((N, N), dtype=complex)
    for j, k in zip(*np.nonzero(np.abs(system.B) > 0)):
        if _gap_multiple(lam[j] - lam[k], omega) is not None:
            Md[j, k] = system.B[j, k] * pulse.fourier(lam[j] - lam[k]) / I
    return AveragingConstants(I, eff, Tstar, K, C, Md, T, F12)


def error_bound(constants: AveragingConstants, normB: float, n: float) -> float:
    """Averaging error bound I (C+1) ||B|| (1 + 2 K ||B||) / n."""
    if n <= 0:
        raise ValueError("n must be positive")
    c = constants
    return c.I * (c.C + 1) * normB * (1 + 2 * c.K * normB) / n


def v_n(pulse: PeriodicPulse, n: float, t: float) -> float:
    return pulse.abs_integral(t) / n


def v_n_inverse(pulse: PeriodicPulse, n: float, v: float) -> float:
    return pulse.inverse_abs_integral(v * n)


def sampled_control(
    pulse: PeriodicPulse,
    amplitude: float,
    duration: float,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
) -> PiecewiseControl:
    """amplitude * u* on [0, duration] as a piecewise-constant schedule.

    Cosine pulses take midpoint values on a grid of ``steps_per_period``
    cells per period; binary pulses are emitted exactly.
    """
    if duration <= 0:
        return PiecewiseControl.empty()
    if pulse.shape == "binary":
        pieces = pulse.pieces(0.0, duration)
        d = np.array([b - a for a, b, _ in pieces])
        v = amplitude * np.array([val for _, _, val in pieces])
        keep = d > 0
        return PiecewiseControl(d[keep], v[keep])
    h = pulse.period / steps_per_period
    full = int(np.floor(duration / h * (1 + 1e-15)))
    edges = np.arange(full + 1) * h
    if duration - edges[-1] > 1e-12 * h:
        edges = np.append(edges, duration)
    else:
        edges[-1] = duration
    d = np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    return PiecewiseControl(d, amplitude * pulse.sample(mid))


@dataclass(eq=False)
class TrackingResult:
    n: float
    duration: float
    effective_time: float
    rotation: float
    theta: float
    control: PiecewiseControl
    pulse: PeriodicPulse
    constants: AveragingConstants
    A: np.ndarray
    bound: float
    budget_limited: bool = False
    predicted: dict = field(default_factory=dict)

    def predicted_at(self, t: float, alpha: float) -> np.ndarray:
        """exp(t A) exp(v_n(t) alpha M_dag) at an intermediate time of the stage."""
        v = v_n(self.pulse, self.n, t)
        return np.diag(np.exp(t * np.diag(self.A))) @ matrix_exp(
            v * alpha * self.constants.Mdagger
        )

    @property
    def window_ratio(self) -> float:
        """duration / (n T*); the averaging estimate is stated for values <= 1."""
        return self.duration / (self.n * self.constants.Tstar)


def _check_window(system: TruncatedSystem, r: float):
    angle = r * abs(system.b12)
    if angle > pi / 2 * (1 + 1e-12):
        raise ValidityWindowError(
            f"rotation angle {angle:.6g} exceeds pi/2: r too large for the window t <= n T*"
        )


def rotation_stage(
    system: TruncatedSystem,
    pulse: PeriodicPulse,
    constants: AveragingConstants,
    r: float,
    n: float,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    whole_periods: bool = False,
) -> tuple[float, float, PiecewiseControl]:
    """Control realising exp(r M^theta_alpha) on the 1-2 block, up to exp(tA).

    Returns (n_used, duration, control).  With ``whole_periods`` the stage
    is stretched to an integer number of periods and the amplitude 1/n is
    lowered accordingly (n_used >= n), which cancels the end-of-stage
    micromotion.
    """
    _check_window(system, r)
    v_target = r / constants.efficiency
    if r == 0:
        return n, 0.0, PiecewiseControl.empty()
    if whole_periods:
        periods = max(1, ceil(n * v_target / constants.I - 1e-12))
        n = periods * constants.I / v_target
        duration = periods * pulse.period
    else:
        duration = v_n_inverse(pulse, n, v_target)
    return n, duration, sampled_control(pulse, 1.0 / n, duration, steps_per_period)


def choose_n(constants: AveragingConstants, normB: float, epsilon: float,
             n_max: int, delta: float | None = None) -> tuple[int, bool]:
    """Smallest integer n with error_bound <= epsilon / 2 (and 1/n <= delta)."""
    need = error_bound(constants, normB, 1.0) / (epsilon / 2)
    n = max(1, ceil(need - 1e-12))
    if delta is not None:
        n = max(n, ceil(1.0 / delta - 1e-12))
    if n > n_max:
        return n_max, True
    return n, False


def track_rotation(
    system: TruncatedSystem,
    alpha_grid,
    theta: float,
    r: float,
    epsilon: float,
    n_max: int = 4096,
    n: int | None = None,
    delta: float | None = None,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    shape: str = "cosine",
    strict_budget: bool = False,
) -> TrackingResult:
    """Choose n from the averaging bound and build the control u*/n on [0, t].

    ``n`` overrides the bound-driven choice.  ``predicted`` maps each alpha
    of the grid to exp(t A) exp(v_n(t) alpha M_dag); on the 1-2 block the
    second factor equals exp(r M^theta_alpha).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    pulse = design_periodic_pulse(system, theta, shape)
    const = compute_constants(system, pulse)
    normB = operator_norm(system.B)
    limited = False
    if n is None:
        n, limited = choose_n(const, normB, epsilon, n_max, delta)
        if limited and strict_budget:
            raise BudgetExhausted(f"averaging bound needs n > {n_max}")
    if r == 0:
        n = 1
    _check_window(system, r)
    n, duration, control = rotation_stage(system, pulse, const, r, n, steps_per_period)
    res = TrackingResult(
        n=n,
        duration=duration,
        effective_time=v_n(pulse, n, duration),
        rotation=r,
        theta=theta,
        control=control,
        pulse=pulse,
        constants=const,
        A=system.A,
        bound=error_bound(const, normB, n),
        budget_limited=limited,
    )
    for a in np.asarray(alpha_grid, dtype=float):
        res.predicted[float(a)] = res.predicted_at(duration, float(a))
    return res


@dataclass
class PhaseAlignment:
    s: float
    k: int
    defects: np.ndarray

    @property
    def max_defect(self) -> float:
        return float(np.max(self.defects, initial=0.0))


def find_phase_alignment(
    lambdas,
    rstar: float,
    epsilon: float,
    horizon: float,
    offset: float = 0.0,
    chunk: int = 65536,
) -> PhaseAlignment:
    """Smallest s = k r* (k >= 1, or k >= 0 when offset > 0) with every
    lambda_j (offset + s) / 2 pi within epsilon of an integer.

    The scan is exhaustive over k up to horizon / r*.  ``defects`` lists the
    distance to the nearest integer per frequency, followed by the defect of
    s / r*, which is zero by construction.
    """
    if epsilon <= 0 or horizon <= 0 or rstar <= 0:
        raise ValueError("epsilon, horizon and rstar must be positive")
    lam = np.asarray(lambdas, dtype=float)
    k0 = 0 if offset > 0 else 1
    kmax = int(np.floor(horizon / rstar + 1e-12))
    for start in range(k0, kmax + 1, chunk):
        ks = np.arange(start, min(start + chunk, kmax + 1))
        times = offset + ks * rstar
        ph = np.outer(times, lam) / (2 * pi)
        dist = np.abs(ph - np.rint(ph))
        ok = np.flatnonzero(np.all(dist <= epsilon, axis=1))
        if ok.size:
            i = int(ok[0])
            return PhaseAlignment(
                s=float(ks[i] * rstar), k=int(ks[i]), defects=np.append(dist[i], 0.0)
            )
    raise PhaseAlignmentError(
        f"no phase alignment within horizon {horizon:g} (epsilon={epsilon:g})"
    )
