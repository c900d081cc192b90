"""Normal-mode analysis of the bosonised array coupled to two modes.

After the Holstein-Primakoff mapping the array, pump and fluorescence
modes are three coupled oscillators.  In canonical coordinates their
quadratic form is the stiffness matrix

    K = [[w_s, 2 l_a, 2 l_b], [2 l_a, w_a, 0], [2 l_b, 0, w_b]]

with collective couplings l_a = N g_a, l_b = N g_b.  The normal state is
stable while the lowest eigenvalue Omega_0 of K is positive; it reaches zero
where det K = w_s w_a w_b - 4 l_a^2 w_b - 4 l_b^2 w_a vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .io import write_table

DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class NormalModeResult:
    omega0: float
    vector: np.ndarray  # (c_s, c_a, c_b), unit norm
    degenerate: bool = False

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.vector) ** 2


def stiffness_matrix(omega_s: float, omega_a: float, omega_b: float, lam_a: float, lam_b: float) -> np.ndarray:
    if min(omega_s, omega_a, omega_b) <= 0:
        raise ValueError("frequencies must be positive")
    if lam_a < 0 or lam_b < 0:
        raise ValueError("couplings must be nonnegative")
    return np.array(
        [
            [omega_s, 2.0 * lam_a, 2.0 * lam_b],
            [2.0 * lam_a, omega_a, 0.0],
            [2.0 * lam_b, 0.0, omega_b],
        ]
    )


def lowest_mode(K: np.ndarray) -> NormalModeResult:
    w, v = np.linalg.eigh(K)
    vec = v[:, 0]
    # fix the sign so the largest component is positive
    vec = vec * np.sign(vec[np.argmax(np.abs(vec))])
    return NormalModeResult(float(w[0]), vec, bool(w[1] - w[0] < DEGENERACY_TOL))


def mode_coefficients(K: np.ndarray) -> tuple[float, float, float]:
    """(|c_s|^2, |c_a|^2, |c_b|^2) of the lowest normal mode."""
    return tuple(float(x) for x in lowest_mode(K).weights)


def determinant(omega_s, omega_a, omega_b, lam_a, lam_b) -> float:
    return omega_s * omega_a * omega_b - 4.0 * lam_a**2 * omega_b - 4.0 * lam_b**2 * omega_a


def critical_lambda_a(omega_s, omega_a, omega_b, lam_b) -> float | None:
    """Root of det K = 0 in lambda_a at fixed lambda_b; None if the lambda_b leg alone is critical."""
    rest = omega_s * omega_a * omega_b - 4.0 * lam_b**2 * omega_a
    if rest < 0:
        return None
    return math.sqrt(rest / (4.0 * omega_b))


def critical_lambda_a_bisection(omega_s, omega_a, omega_b, lam_b, xtol: float = 1e-14) -> float | None:
    """Same root from the zero crossing of the lowest eigenvalue (independent route)."""

    def f(lam_a):
        return lowest_mode(stiffness_matrix(omega_s, omega_a, omega_b, lam_a, lam_b)).omega0

    if f(0.0) < 0:
        return None
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            return None
    return brentq(f, 0.0, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)


@dataclass
class CriticalCurve:
    lam_b: np.ndarray
    lam_a: np.ndarray  # NaN where no critical point exists
    lam_a_bisection: np.ndarray
    weights: np.ndarray  # (n, 3) lowest-mode weights on the curve
    flagged: np.ndarray  # True where the point is absent

    def to_csv(self, path, overwrite: bool = False, metadata=None) -> Path:
        rows = [
            (lb, la, w[0], w[1], w[2])
            for lb, la, w, bad in zip(self.lam_b, self.lam_a, self.weights, self.flagged)
            if not bad
        ]
        return write_table(path, ("lambda_b", "lambda_a_c", "c_s2", "c_a2", "c_b2"), rows, metadata, overwrite)


def critical_curve(omega_s, omega_a, omega_b, lam_b_grid) -> CriticalCurve:
    lam_b_grid = np.asarray(lam_b_grid, dtype=float)
    la = np.full(len(lam_b_grid), np.nan)
    lb_bis = np.full(len(lam_b_grid), np.nan)
    weights = np.full((len(lam_b_grid), 3), np.nan)
    for i, lb in enumerate(lam_b_grid):
        root = critical_lambda_a(omega_s, omega_a, omega_b, lb)
        if root is None:
            continue
        la[i] = root
        lb_bis[i] = critical_lambda_a_bisection(omega_s, omega_a, omega_b, lb)
        weights[i] = lowest_mode(stiffness_matrix(omega_s, omega_a, omega_b, root, lb)).weights
    return CriticalCurve(lam_b_grid, la, lb_bis, weights, np.isnan(la))


@dataclass(frozen=True)
class ClosedFormResult:
    """Printed nonresonant closed form; a cross-check only."""

    value: float
    imag_residue: float
    alpha: float
    beta: float
    label: str = "CROSS-CHECK"


def closed_form_omega0(lam_a: float, lam_b: float, branch: str = "real") -> ClosedFormResult:
    """Omega_0 = [11 - 4 b (2/A)^(1/3) - 4 (A/2)^(1/3)] / 12 with A = a - sqrt(a^2 - 4 b^3).

    a = 1/32 + 9 l_a^2 - 18 l_b^2 and b = 1/16 + 12 l_a^2 + 12 l_b^2, for
    w_s = w_b = 1, w_a = 1/2.  With ``branch="real"`` real cube roots are used
    whenever A is real; a negative discriminant switches to principal complex
    roots and the imaginary part is reported rather than discarded silently.
    """
    a = 1.0 / 32.0 + 9.0 * lam_a**2 - 18.0 * lam_b**2
    b = 1.0 / 16.0 + 12.0 * lam_a**2 + 12.0 * lam_b**2
    disc = a * a - 4.0 * b**3
    if disc >= 0 and branch == "real":
        A = a - math.sqrt(disc)
        if A == 0.0:
            return ClosedFormResult(float("nan"), 0.0, a, b)
        value = (11.0 - 4.0 * b * np.cbrt(2.0 / A) - 4.0 * np.cbrt(A / 2.0)) / 12.0
        return ClosedFormResult(float(value), 0.0, a, b)
    A = complex(a) - np.sqrt(complex(disc))
    z = (11.0 - 4.0 * b * (2.0 / A) ** (1.0 / 3.0) - 4.0 * (A / 2.0) ** (1.0 / 3.0)) / 12.0
    return ClosedFormResult(float(z.real), float(z.imag), a, b)


def closed_form_deviation(lam_b_grid, lam_a_grid) -> np.ndarray:
    """Closed form minus eigensolver Omega_0 on a (lam_b, lam_a) grid, nonresonant case."""
    out = np.empty((len(lam_b_grid), len(lam_a_grid)))
    for i, lb in enumerate(lam_b_grid):
        for j, la in enumerate(lam_a_grid):
            ref = lowest_mode(stiffness_matrix(1.0, 0.5, 1.0, la, lb)).omega0
            out[i, j] = closed_form_omega0(la, lb).value - ref
    return out


def closed_form_zero_set(lam_b_grid, lam_a_max: float = 1.0, n: int = 2001) -> np.ndarray:
    """lambda_a where the closed form changes sign (first crossing), per lambda_b; NaN if none."""
    la = np.linspace(0.0, lam_a_max, n)
    out = np.full(len(lam_b_grid), np.nan)
    for i, lb in enumerate(lam_b_grid):
        vals = np.array([closed_form_omega0(x, lb).value for x in la])
        s = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
        if len(s):
            k = s[0]
            out[i] = la[k] - vals[k] * (la[k + 1] - la[k]) / (vals[k + 1] - vals[k])
    return out


def estimate_critical_N(g_a: float, g_b: float, omega_s: float = 1.0, omega_a: float = 0.5, omega_b: float = 1.0) -> int:
    """Smallest N with (N g_a, N g_b) on or beyond the critical curve.

    det K is 1 at N = 0 and decreases as N^2, so the crossing is
    N^2 = w_s w_a w_b / (4 g_a^2 w_b + 4 g_b^2 w_a).
    """
    if g_a < 0 or g_b < 0 or g_a == g_b == 0:
        raise ValueError("need nonnegative couplings, not both zero")
    n2 = omega_s * omega_a * omega_b / (4.0 * g_a**2 * omega_b + 4.0 * g_b**2 * omega_a)
    N = max(1, math.ceil(math.sqrt(n2) - 1e-12))
    # guard against rounding at an exact crossing
    while determinant(omega_s, omega_a, omega_b, N * g_a, N * g_b) > 0:
        N += 1
    while N > 1 and determinant(omega_s, omega_a, omega_b, (N - 1) * g_a, (N - 1) * g_b) <= 0:
        N -= 1
    return N
