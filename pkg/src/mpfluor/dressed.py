"""Dressed-state energies, level curves versus coupling, and parity.

The parity of a two-level-plus-modes state is the product of the electronic
sign (level 1 -> +1, level 2 -> -1) and (-1) for every photon in each mode.
Both σ_x couplings flip the electronic sign and change one photon number by
one, so H commutes with Π and its eigenstates split into even and odd.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

from .fock import ELECTRON, FLUORESCENCE, PUMP, BasisLayout
from .hamiltonian import OperatorMatrix, build_hamiltonian
from .io import write_table
from .models import Family, ModelSpec

DEGENERACY_TOL = 1e-9
TRACKING_MIN_OVERLAP = 0.5


@dataclass(frozen=True)
class DressedLevels:
    n: int
    centre: float
    shift: float  # half the splitting, g_a sqrt(n)
    flagged: bool = False

    @property
    def plus(self) -> float:
        return self.centre + self.shift

    @property
    def minus(self) -> float:
        return self.centre - self.shift

    @property
    def splitting(self) -> float:
        return 2.0 * self.shift


def dressed_energies(n: int, eps1: float, eps2: float, omega_a: float, g_a: float) -> DressedLevels:
    """Resonant dressed pair (eps1 + eps2)/2 + (n - 1/2) omega_a ± g_a sqrt(n).

    ``n = 0`` has only the uncoupled ground level |1, 0>; it is returned as a
    degenerate, flagged pair.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return DressedLevels(0, eps1, 0.0, flagged=True)
    centre = 0.5 * (eps1 + eps2) + (n - 0.5) * omega_a
    shift = g_a * np.sqrt(n)
    return DressedLevels(n, centre, shift)


# ----------------------------------------------------------------------
# parity


def parity_signs(layout: BasisLayout, convention: int = 1) -> np.ndarray:
    """Diagonal of Π on the flat basis.

    The electronic factor is +1 for level 1 and -1 for level 2 (times
    ``convention``).  For a collective spin |S, m> it is (-1)^(m + S), which
    reduces to the same for one atom.
    """
    if convention not in (1, -1):
        raise ValueError("convention must be +1 or -1")
    signs = np.ones(layout.total_dim)
    e = layout.label_values(ELECTRON)
    signs *= np.where(e % 2 == 0, 1.0, -1.0) * convention
    for label in (PUMP, FLUORESCENCE):
        if layout.has(label):
            signs *= np.where(layout.label_values(label) % 2 == 0, 1.0, -1.0)
    return signs


def parity_operator(layout: BasisLayout, convention: int = 1) -> sp.csr_matrix:
    return sp.diags(parity_signs(layout, convention), format="csr")


def commutator_norm(H, signs: np.ndarray, t: float = 0.0) -> float:
    """max |[H(t), Π]| elementwise for a diagonal Π."""
    M = H.evaluate(t) if isinstance(H, OperatorMatrix) else sp.csr_matrix(H)
    coo = M.tocoo()
    if coo.nnz == 0:
        return 0.0
    return float(np.max(np.abs(coo.data * (signs[coo.col] - signs[coo.row]))))


def parity_expectation(psi, signs: np.ndarray) -> float:
    psi = np.asarray(getattr(psi, "amplitudes", psi))
    return float(np.real(np.vdot(psi, signs * psi)))


@dataclass
class ParityResult:
    signs: np.ndarray
    energies: np.ndarray
    parities: np.ndarray
    commutator: float
    flagged: bool = False

    @property
    def labels(self) -> list[str]:
        return ["e" if p > 0 else "o" for p in self.parities]


def _resolve_degenerate(E, V, signs):
    """Rotate degenerate eigenvectors so each has definite parity."""
    V = V.copy()
    i = 0
    n = len(E)
    while i < n:
        j = i + 1
        while j < n and abs(E[j] - E[i]) < DEGENERACY_TOL * max(1.0, abs(E[i])):
            j += 1
        if j - i > 1:
            block = V[:, i:j]
            P = block.conj().T @ (signs[:, None] * block)
            _, R = np.linalg.eigh(P)
            V[:, i:j] = block @ R
        i = j
    return V


def parity_classify(H: OperatorMatrix, n_states: int = 20, t: float = 0.0, convention: int = 1) -> ParityResult:
    """Commutator check and parity of the lowest eigenstates of H(t)."""
    if H.model is not None and H.model.family not in (Family.TWO_LEVEL, Family.ARRAY):
        raise ValueError("parity is defined here for two-level and array models")
    signs = parity_signs(H.layout, convention)
    comm = commutator_norm(H, signs, t)
    dense = H.evaluate(t).toarray().real
    E, V = np.linalg.eigh(dense)
    k = min(n_states, len(E))
    # include the full degenerate cluster at the cut
    while k < len(E) and abs(E[k] - E[k - 1]) < DEGENERACY_TOL * max(1.0, abs(E[k])):
        k += 1
    E, V = E[:k], _resolve_degenerate(E[:k], V[:, :k], signs)
    par = np.einsum("ik,i,ik->k", V.conj(), signs, V).real
    return ParityResult(signs, E, par, comm, flagged=comm > 1e-10)


# ----------------------------------------------------------------------
# level curves


@dataclass
class LevelCurves:
    g_grid: np.ndarray
    energies: np.ndarray  # (n_g, n_levels), continuity-tracked columns
    flags: list = field(default_factory=list)  # (g_a, min overlap) where tracking failed

    def to_csv(self, path, overwrite: bool = False, metadata=None) -> Path:
        rows = [
            (g, k, e)
            for g, row in zip(self.g_grid, self.energies)
            for k, e in enumerate(row)
        ]
        return write_table(path, ("g_a", "level", "energy"), rows, metadata, overwrite=overwrite)


def single_mode_parts(model: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """(H at g_a = 0, coupling per unit g_a) without the fluorescence mode.

    H(g) = H0 + g C holds for any real g, including negative values.
    """
    h0 = build_hamiltonian(model.replace(g_a=0.0, n_b_max=0, g_b=0.0)).static.toarray().real
    h1 = build_hamiltonian(model.replace(g_a=1.0, n_b_max=0, g_b=0.0)).static.toarray().real
    return h0, h1 - h0


def energy_levels_vs_coupling(model: ModelSpec, g_grid, n_levels: int | None = None) -> LevelCurves:
    """Eigenvalues of the two-level + pump-mode Hamiltonian across a g_a grid.

    Columns are connected between neighbouring grid points by maximising
    the total squared eigenvector overlap.
    """
    if model.family is not Family.TWO_LEVEL:
        raise ValueError("level curves are computed for the two-level model")
    if model.pump_cutoff > 60:
        raise ValueError(f"n_a_max={model.pump_cutoff}: level curves use a modest cutoff (<= 60)")
    g_grid = np.asarray(g_grid, dtype=float)
    h0, c = single_mode_parts(model)
    rows = []
    flags = []
    prev = None
    for g in g_grid:
        E, V = np.linalg.eigh(h0 + g * c)
        k = len(E) if n_levels is None else min(n_levels, len(E))
        if prev is not None:
            ov = np.abs(prev.T @ V) ** 2
            _, perm = linear_sum_assignment(-ov)
            E, V = E[perm], V[:, perm]
            worst = float(ov[np.arange(len(perm)), perm][:k].min())
            if worst < TRACKING_MIN_OVERLAP:
                flags.append((float(g), worst))
        prev = V
        rows.append(E[:k])
    return LevelCurves(g_grid, np.asarray(rows), flags)


def sorted_levels(model: ModelSpec, g_a: float) -> np.ndarray:
    h0, c = single_mode_parts(model)
    return np.linalg.eigvalsh(h0 + g_a * c)
