"""Spectral description of the system family x' = Ax + u alpha Bx.

A is diagonal in its eigenbasis, A phi_j = -i lambda_j phi_j, and B is
given by its matrix entries b_jk = <phi_j, B phi_k>.  Indices in the
public API are 1-based to match the usual labelling of eigenvectors;
arrays are stored 0-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, ModelError, UnboundedTailError
from .linalg import operator_norm

GAP_TOL = 1e-9
COUPLING_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Eigenvalues and couplings over a declared index range.

    ``finite`` says whether the stored range is the whole system.  When it
    is not, the stored data is a prefix of an infinite system and tail
    quantities are only computable through ``band_limit``.
    """

    lambdas: np.ndarray
    couplings: np.ndarray
    band_limit: int | None = None
    finite: bool = True
    name: str = "custom"

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        b = np.asarray(self.couplings, dtype=complex)
        if lam.ndim != 1 or lam.size == 0:
            raise ModelError("lambdas must be a non-empty 1-d sequence")
        if b.shape != (lam.size, lam.size):
            raise ModelError(
                f"couplings shape {b.shape} does not match {lam.size} eigenvalues"
            )
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(b))):
            raise ModelError("non-finite spectral data")
        if np.max(np.abs(b + b.conj().T), initial=0.0) > COUPLING_TOL:
            raise ModelError("couplings are not skew-symmetric: b_kj != -conj(b_jk)")
        if self.band_limit is not None:
            j, k = np.nonzero(np.abs(b) > 0)
            if np.any(np.abs(j - k) > self.band_limit):
                raise ModelError("couplings exceed the declared band limit")
        lam.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "couplings", b)

    @property
    def dimension(self) -> int:
        return self.lambdas.size

    def b(self, j: int, k: int) -> complex:
        """Coupling <phi_j, B phi_k>, 1-based."""
        return complex(self.couplings[j - 1, k - 1])

    @property
    def b12(self) -> complex:
        return self.b(1, 2)


@dataclass
class Violation:
    item: str
    indices: tuple
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violations": [
                {"item": v.item, "indices": list(v.indices), "message": v.message}
                for v in self.violations
            ],
        }


@dataclass(frozen=True, eq=False)
class TruncatedSystem:
    N: int
    A: np.ndarray
    B: np.ndarray
    lambdas: np.ndarray

    @property
    def b12(self) -> complex:
        return complex(self.B[0, 1])

    @property
    def omega(self) -> float:
        return float(self.lambdas[1] - self.lambdas[0])


def _eigenspaces(lambdas: np.ndarray) -> list[tuple[float, list[int]]]:
    """Group 0-based indices whose eigenvalues agree within GAP_TOL."""
    order = np.argsort(lambdas, kind="stable")
    groups: list[tuple[float, list[int]]] = []
    for i in order:
        if groups and abs(lambdas[i] - groups[-1][0]) <= GAP_TOL:
            groups[-1][1].append(int(i))
        else:
            groups.append((float(lambdas[i]), [int(i)]))
    return groups


def validate_assumptions(model: SpectralModel) -> ValidationReport:
    """Check the coupling and non-degeneracy conditions over the stored range.

    Degenerate eigenvalues are grouped into eigenspaces first; a pair of
    eigenspaces whose gap equals |lambda_1 - lambda_2| is acceptable when it
    is the (lambda_1, lambda_2) pair itself, shares no eigenvalue with it,
    or is not coupled by B.
    """
    if model.dimension == 0:
        raise ModelError("empty model")
    report = ValidationReport()
    lam, b = model.lambdas, model.couplings
    if model.dimension < 2:
        report.violations.append(
            Violation("coupling", (1,), "need at least two eigenvectors")
        )
        return report
    l1, l2 = lam[0], lam[1]
    if not l1 < l2:
        report.violations.append(
            Violation("coupling", (1, 2), f"lambda_1={l1} is not below lambda_2={l2}")
        )
    if abs(b[0, 1]) <= COUPLING_TOL:
        report.violations.append(
            Violation("coupling", (1, 2), "b_12 vanishes: phi_1 and phi_2 are not coupled")
        )

    gap = abs(l2 - l1)
    targets = {round(float(l1), 9), round(float(l2), 9)}
    spaces = _eigenspaces(lam)
    for a in range(len(spaces)):
        mu, ia = spaces[a]
        for c in range(a + 1, len(spaces)):
            nu, ic = spaces[c]
            if abs(abs(nu - mu) - gap) > GAP_TOL:
                continue
            pair = {round(mu, 9), round(nu, 9)}
            if _same_values(pair, targets) or not _overlaps(pair, targets):
                continue
            block = b[np.ix_(ia, ic)]
            if np.max(np.abs(block)) > COUPLING_TOL:
                jj, kk = np.unravel_index(np.argmax(np.abs(block)), block.shape)
                report.violations.append(
                    Violation(
                        "non-degeneracy",
                        (ia[jj] + 1, ic[kk] + 1),
                        f"eigenvalues ({mu:g}, {nu:g}) share the gap {gap:g} "
                        "with (lambda_1, lambda_2), overlap it, and are coupled",
                    )
                )
    return report


def _same_values(p: set, q: set) -> bool:
    return all(any(abs(x - y) <= GAP_TOL for y in q) for x in p) and all(
        any(abs(x - y) <= GAP_TOL for y in p) for x in q
    )


def _overlaps(p: set, q: set) -> bool:
    return any(abs(x - y) <= GAP_TOL for x in p for y in q)


def truncate(model: SpectralModel, N: int) -> TruncatedSystem:
    if N < 2:
        raise DimensionError("truncation needs N >= 2")
    if N > model.dimension:
        raise DimensionError(f"N={N} exceeds the declared range {model.dimension}")
    lam = model.lambdas[:N].copy()
    A = np.diag(-1j * lam)
    B = model.couplings[:N, :N].copy()
    return TruncatedSystem(N=N, A=A, B=B, lambdas=lam)


def tail_norm(model: SpectralModel, N: int, rows: int = 2) -> float:
    """Operator norm of the block (b_jl), j <= rows, l > N.

    With the default ``rows=2`` this is ||pi_2 B (1 - pi_N)||; ``rows=N``
    gives the interior coupling ||pi_N B (1 - pi_N)||.
    """
    if N < 2:
        raise DimensionError("tail_norm needs N >= 2")
    if not model.finite:
        if model.band_limit is None:
            raise UnboundedTailError(
                "model has neither a band limit nor a finite index range"
            )
        if rows + model.band_limit > model.dimension:
            raise UnboundedTailError(
                f"band reaches index {rows + model.band_limit}, beyond the "
                f"stored range {model.dimension}"
            )
    if N >= model.dimension:
        return 0.0
    return operator_norm(model.couplings[:rows, N:])


def truncation_rank(
    model: SpectralModel,
    epsilon: float,
    r: float,
    threshold: float | None = None,
) -> int:
    """Smallest N >= 2 whose pi_2 tail is below ``threshold``.

    The default threshold is 5 epsilon / (2 r).
    """
    if epsilon <= 0 or r <= 0:
        raise ValueError("epsilon and r must be positive")
    if threshold is None:
        threshold = 5.0 * epsilon / (2.0 * r)
    for N in range(2, model.dimension + 1):
        if tail_norm(model, N) < threshold:
            return N
    raise DimensionError(
        f"no truncation within the declared range has tail below {threshold:g}"
    )


def load_model(path) -> SpectralModel:
    with open(path) as fh:
        doc = json.load(fh)
    return model_from_dict(doc)


def model_from_dict(doc: dict) -> SpectralModel:
    if doc.get("generator"):
        if doc["generator"] != "planar_rotor":
            raise ModelError(f"unknown generator {doc['generator']!r}")
        from .rotor import build_planar_rotor

        return build_planar_rotor(int(doc["dimension"]))
    lam = np.asarray(doc["lambdas"], dtype=float)
    n = lam.size
    b = np.zeros((n, n), dtype=complex)
    given = np.zeros((n, n), dtype=bool)
    for j, k, re, im in doc.get("couplings", []):
        j, k = int(j) - 1, int(k) - 1
        b[j, k] = complex(re, im)
        given[j, k] = True
    # fill mirrored entries that were not listed explicitly
    fill = given.T & ~given
    b[fill] = -np.conj(b.T[fill])
    band = doc.get("band_limit")
    return SpectralModel(
        lambdas=lam,
        couplings=b,
        band_limit=None if band is None else int(band),
        finite=bool(doc.get("finite", True)),
        name=doc.get("name", "custom"),
    )


def model_to_dict(model: SpectralModel) -> dict:
    entries = []
    for j, k in zip(*np.nonzero(model.couplings)):
        z = model.couplings[j, k]
        entries.append([int(j) + 1, int(k) + 1, float(z.real), float(z.imag)])
    doc = {
        "name": model.name,
        "lambdas": [float(x) for x in model.lambdas],
        "couplings": entries,
        "finite": model.finite,
    }
    if model.band_limit is not None:
        doc["band_limit"] = model.band_limit
    return doc


def save_model(model: SpectralModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))
