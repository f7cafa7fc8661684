import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ensemble_control.averaging import track_rotation
from ensemble_control.errors import DimensionError
from ensemble_control.galerkin import (
    EnsembleReport,
    PiecewiseControl,
    block_moduli,
    ensemble_propagate,
    ensemble_report,
    propagate,
    target_moduli,
    truncation_consistency,
)
from ensemble_control.linalg import matrix_exp, unitarity_defect
from ensemble_control.rotor import build_planar_rotor
from ensemble_control.spectral import truncate

ROTOR = build_planar_rotor(9)


def random_control(seed, k=12):
    rng = np.random.default_rng(seed)
    return PiecewiseControl(rng.uniform(0.01, 1.0, k), rng.uniform(-1, 1, k))


def test_control_validation_and_csv():
    with pytest.raises(ValueError):
        PiecewiseControl([1.0, 0.0], [0.1, 0.2])
    with pytest.raises(ValueError):
        PiecewiseControl([1.0], [0.1, 0.2])
    c = random_control(3)
    back = PiecewiseControl.from_csv(c.to_csv())
    assert np.array_equal(back.durations, c.durations) and np.array_equal(back.values, c.values)
    assert len(PiecewiseControl.pause(0.0)) == 0
    assert c.abs_integral() == pytest.approx(np.sum(c.durations * np.abs(c.values)))


@settings(max_examples=20, deadline=None)
@given(s1=st.integers(0, 10**6), s2=st.integers(0, 10**6), a=st.floats(0, 1))
def test_group_law_and_unitarity(s1, s2, a):
    sysm = truncate(ROTOR, 5)
    c1, c2 = random_control(s1, 5), random_control(s2, 4)
    U12 = propagate(sysm, c1 + c2, a)
    assert np.max(np.abs(U12 - propagate(sysm, c2, a) @ propagate(sysm, c1, a))) < 1e-12
    assert unitarity_defect(U12) < 1e-10


def test_single_segment_and_history():
    sysm = truncate(ROTOR, 4)
    c = random_control(1, 6)
    grid = [0.0, 0.3, 1.0]
    U, hist = ensemble_propagate(sysm, c, grid, history=True)
    assert hist.shape == (6, 3, 4, 4) and np.array_equal(hist[-1], U)
    d, v = c.durations[0], c.values[0]
    assert np.allclose(hist[0][1], matrix_exp(d * (sysm.A + v * 0.3 * sysm.B)), atol=1e-14)
    # merging equal neighbours does not change the propagator
    dup = PiecewiseControl([0.2, 0.3, 0.1], [0.5, 0.5, -0.1])
    assert len(dup.merged()) == 2
    assert np.allclose(propagate(sysm, dup, 0.8), propagate(sysm, dup.merged(), 0.8), atol=1e-13)
    with pytest.raises(ValueError):
        ensemble_propagate(sysm, c, [1.5])


def test_report_and_targets():
    t = target_moduli([1.0, 0.6, 0.0])
    assert np.allclose(t[1], [[0.6, 0.8], [0.8, 0.6]])
    sysm = truncate(ROTOR, 5)
    rep, U = ensemble_report(sysm, random_control(9), np.linspace(0, 1, 5), lambda a: np.cos(a))
    assert rep.check_subunitary()
    assert np.array_equal(rep.moduli, block_moduli(U))
    assert rep.sup_error == pytest.approx(np.max(np.abs(rep.moduli - rep.targets)))
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("alpha,m11") and len(lines) == 6
    bad = EnsembleReport([0.0], np.full((1, 2, 2), 0.9), target_moduli([1.0]))
    assert not bad.check_subunitary()


def test_determinism():
    sysm = truncate(ROTOR, 5)
    c = random_control(5, 40)
    grid = np.linspace(0, 1, 21)
    r1, _ = ensemble_report(sysm, c, grid, np.cos)
    r2, _ = ensemble_report(sysm, c, grid, np.cos)
    assert r1.to_csv() == r2.to_csv()


def test_truncation_consistency_rotor():
    grid = [1.0]
    res = track_rotation(truncate(ROTOR, 5), grid, 0.0, math.pi / math.sqrt(2), 0.05, n=8)
    chk = truncation_consistency(ROTOR, res.control, 1.0, 5, 9, tracking=res)
    assert chk.tail == 0.0 and chk.tail_term == 0.0
    assert chk.distance <= chk.bound
    with pytest.raises(DimensionError):
        truncation_consistency(ROTOR, res.control, 1.0, 9, 5)
