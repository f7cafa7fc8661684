"""Planar rigid rotor driven through a cos(theta) dipole coupling.

Basis ordering: phi_0 = 1/sqrt(2 pi), phi_{2k-1} = cos(k theta)/sqrt(pi),
phi_{2k} = sin(k theta)/sqrt(pi), with eigenvalue k**2.  phi_m sits at
1-based index m + 1.  B multiplies by -i cos(theta).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi, sin, sqrt

import numpy as np
from scipy import integrate

from .errors import AssumptionError, DimensionError
from .spectral import SpectralModel, validate_assumptions

QUADRATURE_TOL = 1e-10


def _wavenumber(m: int) -> int:
    return (m + 1) // 2


def basis_function(m: int):
    """phi_m as a real function of theta."""
    k = _wavenumber(m)
    if m == 0:
        return lambda th: np.full_like(np.asarray(th, dtype=float), 1.0 / sqrt(2 * pi))
    if m % 2 == 1:
        return lambda th: np.cos(k * th) / sqrt(pi)
    return lambda th: np.sin(k * th) / sqrt(pi)


def _analytic_coupling(m: int, p: int) -> complex:
    """<phi_m, -i cos(theta) phi_p> from the product-to-sum identities."""
    if m > p:
        return -np.conj(_analytic_coupling(p, m))
    if m == 0:
        return -1j / sqrt(2) if p == 1 else 0.0
    # same trigonometric family and wavenumbers differing by one
    if (m % 2) == (p % 2) and p == m + 2:
        return -0.5j
    return 0.0


def quadrature_coupling(m: int, p: int) -> complex:
    """Independent oracle: integrate phi_m cos(theta) phi_p over [0, 2 pi]."""
    fm, fp = basis_function(m), basis_function(p)
    val, _ = integrate.quad(
        lambda th: float(fm(th) * np.cos(th) * fp(th)),
        0.0,
        2 * pi,
        limit=200,
        epsabs=1e-13,
        epsrel=1e-13,
    )
    return -1j * val


def build_planar_rotor(N: int, verify: bool = True) -> SpectralModel:
    if N < 2:
        raise DimensionError("planar rotor needs N >= 2")
    lam = np.array([_wavenumber(m) ** 2 for m in range(N)], dtype=float)
    b = np.zeros((N, N), dtype=complex)
    for m in range(N):
        for p in range(max(0, m - 2), min(N, m + 3)):
            b[m, p] = _analytic_coupling(m, p)
    if verify:
        for m in range(N):
            for p in range(m, min(N, m + 4)):
                ref = quadrature_coupling(m, p)
                if abs(ref - b[m, p]) > QUADRATURE_TOL:
                    raise AssertionError(
                        f"rotor coupling ({m},{p}) = {b[m, p]} disagrees with "
                        f"quadrature {ref}"
                    )
    return SpectralModel(lambdas=lam, couplings=b, band_limit=2, finite=False,
                         name="planar_rotor")


def smoothstep_modulus(alpha, lo: float = 0.5, hi: float = sqrt(3) / 2):
    """1 below ``lo``, 0 above ``hi``, cubic smoothstep in between."""
    a = np.asarray(alpha, dtype=float)
    x = np.clip((a - lo) / (hi - lo), 0.0, 1.0)
    return 1.0 - x * x * (3.0 - 2.0 * x)


@dataclass
class RotorScenario:
    """Orientation task: keep weakly tilted molecules, transfer strongly tilted ones.

    The ensemble label is alpha = sin(tilt), tilt being the angle between
    the molecule and the field plane.
    """

    N: int
    epsilon: float
    delta: float
    model: SpectralModel
    lo: float = 0.5
    hi: float = sqrt(3) / 2
    report: object = field(default=None, repr=False)

    def target_modulus(self, alpha):
        return smoothstep_modulus(alpha, self.lo, self.hi)

    def target_angle(self, alpha):
        return np.arccos(np.clip(self.target_modulus(alpha), -1.0, 1.0))

    @staticmethod
    def alpha_from_tilt(tilt):
        return np.sin(tilt)

    @staticmethod
    def tilt_from_alpha(alpha):
        return np.arcsin(alpha)


def orientation_scenario(
    N: int,
    epsilon: float,
    delta: float,
    keep_below: float = pi / 6,
    transfer_above: float = pi / 3,
) -> RotorScenario:
    if N < 4:
        raise DimensionError("orientation scenario needs N >= 4")
    model = build_planar_rotor(N)
    report = validate_assumptions(model)
    if not report.passed:
        raise AssumptionError(report)
    return RotorScenario(
        N=N,
        epsilon=epsilon,
        delta=delta,
        model=model,
        lo=sin(keep_below),
        hi=sin(transfer_above),
        report=report,
    )


__all__ = [
    "RotorScenario",
    "basis_function",
    "build_planar_rotor",
    "orientation_scenario",
    "quadrature_coupling",
    "smoothstep_modulus",
]
