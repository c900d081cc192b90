import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpfluor.dicke import (
    closed_form_deviation,
    closed_form_omega0,
    closed_form_zero_set,
    critical_curve,
    critical_lambda_a,
    critical_lambda_a_bisection,
    determinant,
    estimate_critical_N,
    lowest_mode,
    mode_coefficients,
    stiffness_matrix,
)
from mpfluor.io import read_table

lam = st.floats(0.0, 0.6)


def test_stiffness_structure():
    K = stiffness_matrix(1.0, 0.5, 1.0, 0.0, 0.0)
    assert np.array_equal(K, np.diag([1.0, 0.5, 1.0]))
    K = stiffness_matrix(1.0, 0.5, 1.0, 0.2, 0.1)
    assert np.array_equal(K, K.T) and K[1, 2] == 0.0
    with pytest.raises(ValueError):
        stiffness_matrix(1.0, 0.0, 1.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        stiffness_matrix(1.0, 1.0, 1.0, -0.1, 0.1)


@given(st.floats(0.0, 0.4))
def test_two_oscillator_reduction(la):
    w = np.linalg.eigvalsh(stiffness_matrix(1, 1, 1, la, 0.0))
    assert np.allclose(np.sort(w), np.sort([1 - 2 * la, 1.0, 1 + 2 * la]), atol=1e-12)


@given(lam, lam)
def test_resonant_lowest_eigenvalue(la, lb):
    r = lowest_mode(stiffness_matrix(1, 1, 1, la, lb))
    assert r.omega0 == pytest.approx(1 - 2 * math.hypot(la, lb), abs=1e-12)
    assert abs(np.sum(r.weights) - 1) < 1e-12


@given(lam, lam, st.floats(0.2, 2.0), st.floats(0.2, 2.0), st.floats(0.2, 2.0))
def test_eigenpair_residual(la, lb, ws, wa, wb):
    K = stiffness_matrix(ws, wa, wb, la, lb)
    r = lowest_mode(K)
    assert np.max(np.abs(K @ r.vector - r.omega0 * r.vector)) < 1e-12


def test_resonant_zero_examples():
    assert lowest_mode(stiffness_matrix(1, 1, 1, 0.3, 0.4)).omega0 == pytest.approx(0.0, abs=1e-12)
    assert lowest_mode(stiffness_matrix(1, 1, 1, 0.5, 0.0)).omega0 == pytest.approx(0.0, abs=1e-12)


def test_resonant_critical_curve_semicircle():
    lb = np.linspace(0, 0.5, 51)
    c = critical_curve(1, 1, 1, lb)
    assert np.max(np.abs(c.lam_a - np.sqrt(0.25 - lb**2))) < 1e-12
    assert np.max(np.abs(c.lam_a_bisection - c.lam_a)) < 1e-10


def test_nonresonant_critical_curve():
    lb = np.linspace(0, 0.49, 50)
    c = critical_curve(1, 0.5, 1, lb)
    assert c.lam_a[0] == pytest.approx(math.sqrt(1 / 8), abs=1e-14)
    for la, b in zip(c.lam_a, lb):
        assert abs(determinant(1, 0.5, 1, la, b)) < 1e-10
        assert abs(lowest_mode(stiffness_matrix(1, 0.5, 1, la, b)).omega0) < 1e-10
    assert np.all(c.lam_a < np.sqrt(0.25 - lb**2))
    # lambda_a = 0 leg: lambda_b,c = 0.5
    assert determinant(1, 0.5, 1, 0.0, 0.5) == pytest.approx(0.0, abs=1e-15)
    assert critical_lambda_a(1, 0.5, 1, 0.5) == 0.0
    assert critical_lambda_a(1, 0.5, 1, 0.6) is None
    assert critical_lambda_a_bisection(1, 0.5, 1, 0.6) is None


def test_critical_curve_flags_and_csv(tmp_path):
    c = critical_curve(1, 1, 1, [0.1, 0.7])
    assert list(c.flagged) == [False, True]
    header, data = read_table(c.to_csv(tmp_path / "crit.csv"))
    assert header == ["lambda_b", "lambda_a_c", "c_s2", "c_a2", "c_b2"] and data.shape == (1, 5)


def test_mode_coefficients():
    assert np.allclose(mode_coefficients(stiffness_matrix(1, 0.5, 1, 0, 0)), (0, 1, 0), atol=0)
    cs, ca, cb = mode_coefficients(stiffness_matrix(1, 0.5, 1, 0.2, 0.0))
    assert cb == 0.0
    c = critical_curve(1, 0.5, 1, np.linspace(0.05, 0.45, 9))
    assert np.all(c.weights[:, 1] > 0) and np.all(c.weights[:, 2] > 0)


def test_monotone_in_couplings():
    g = np.linspace(0, 0.5, 26)
    for fixed in (0.05, 0.1, 0.2):
        a = [lowest_mode(stiffness_matrix(1, 0.5, 1, x, fixed)).omega0 for x in g]
        b = [lowest_mode(stiffness_matrix(1, 0.5, 1, fixed, x)).omega0 for x in g]
        assert np.all(np.diff(a) < 0) and np.all(np.diff(b) < 0)
    # with lambda_a = 0 the bare pump oscillator (0.5) stays lowest until the s-b branch crosses it
    b = [lowest_mode(stiffness_matrix(1, 0.5, 1, 0.0, x)).omega0 for x in g]
    assert np.all(np.diff(b) <= 0) and b[0] == b[5] == 0.5


def test_closed_form_cross_check():
    r = closed_form_omega0(0.0, 0.0)
    assert r.beta == 1 / 16 and r.label == "CROSS-CHECK"
    assert r.value == pytest.approx(0.75, abs=1e-12)
    assert lowest_mode(stiffness_matrix(1, 0.5, 1, 0, 0)).omega0 == 0.5
    # the deviation surface and zero set are archived, not asserted
    dev = closed_form_deviation([0.0, 0.1], [0.0, 0.1, 0.2])
    assert dev.shape == (2, 3) and np.all(np.isfinite(dev))
    zs = closed_form_zero_set([0.0])
    assert np.isnan(zs[0]) or 0 < zs[0] < 1


def test_complex_branch_reports_residue():
    # a large lambda pushes a^2 - 4 b^3 negative
    r = closed_form_omega0(0.1, 0.3)
    assert r.alpha**2 - 4 * r.beta**3 < 0
    assert np.isfinite(r.value) and np.isfinite(r.imag_residue)


def test_estimate_critical_N():
    assert estimate_critical_N(0.03, 0.01) == 12
    assert estimate_critical_N(0.0, 0.01) == math.ceil(0.5 / 0.01)
    with pytest.raises(ValueError):
        estimate_critical_N(0.0, 0.0)
