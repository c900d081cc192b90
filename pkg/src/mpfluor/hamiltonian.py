"""Sparse Hermitian generators for every model family.

Time dependence enters only through real scalar envelopes attached to fixed
sparse matrices, so ``H(t) = base + omega_b * n_b + sum_k env_k(t) * M_k``
costs one pass over the stored nonzeros.  The fluorescence frequency is kept
out of the static matrix because spectra scan it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .fock import (
    ELECTRON,
    FLUORESCENCE,
    POSITION,
    PUMP,
    BasisLayout,
    build_basis,
    position_grid,
)
from .models import Family, ModelSpec, SpecError

HERMITIAN_TOL = 1e-13


# ----------------------------------------------------------------------
# envelopes


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t):
        return self.value * np.ones_like(np.asarray(t, dtype=float))[()]


@dataclass(frozen=True)
class ExpDecay:
    """``amplitude * exp(-rate * (t - t0))``."""

    amplitude: float
    rate: float
    t0: float = 0.0

    def __call__(self, t):
        return self.amplitude * np.exp(-self.rate * (np.asarray(t, dtype=float) - self.t0))[()]


@dataclass(frozen=True)
class Cosine:
    amplitude: float
    omega: float

    def __call__(self, t):
        return self.amplitude * np.cos(self.omega * np.asarray(t, dtype=float))[()]


# ----------------------------------------------------------------------
# single-factor operators


def annihilation(n_max: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1, format="csr")


def number(n_max: int) -> sp.csr_matrix:
    return sp.diags(np.arange(n_max + 1, dtype=float), 0, format="csr")


def quadrature(n_max: int) -> sp.csr_matrix:
    a = annihilation(n_max)
    return (a + a.T).tocsr()


def spin_jz(n_atoms: int) -> sp.csr_matrix:
    s = n_atoms / 2.0
    return sp.diags(np.arange(n_atoms + 1) - s, 0, format="csr")


def spin_jplus(n_atoms: int) -> sp.csr_matrix:
    """Raising operator on |S=N/2, m>, basis index m + S."""
    s = n_atoms / 2.0
    m = np.arange(n_atoms) - s
    return sp.diags(np.sqrt(s * (s + 1) - m * (m + 1)), -1, format="csr")


def spin_jx(n_atoms: int) -> sp.csr_matrix:
    jp = spin_jplus(n_atoms)
    return (0.5 * (jp + jp.T)).tocsr()


def level_coupling(dim: int, i: int, j: int) -> sp.csr_matrix:
    """``|i><j| + |j><i|`` between zero-based electronic levels."""
    m = sp.lil_matrix((dim, dim))
    m[i, j] = 1.0
    m[j, i] = 1.0
    return m.tocsr()


SIGMA_X = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))


def embed(layout: BasisLayout, **ops: sp.spmatrix) -> sp.csr_matrix:
    """Kronecker product of per-factor operators, identity where omitted.

    Keyword names are the factor labels with dashes replaced by underscores.
    """
    mats = []
    for label, dim in layout.factors:
        op = ops.pop(label.replace("-", "_"), None)
        mats.append(sp.identity(dim, format="csr") if op is None else sp.csr_matrix(op))
    if ops:
        raise KeyError(f"layout has no factor(s) {sorted(ops)}")
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out.tocsr()


# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    layout: BasisLayout
    base: sp.csr_matrix
    terms: tuple = ()
    number_b: np.ndarray | None = None
    omega_b: float = 0.0
    model: ModelSpec | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        n = self.layout.total_dim
        if self.base.shape != (n, n):
            raise ValueError("base matrix does not match layout")
        for mat, _ in self.terms:
            if mat.shape != (n, n):
                raise ValueError("envelope matrix does not match layout")

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    @property
    def static(self) -> sp.csr_matrix:
        if self.number_b is None or self.omega_b == 0.0:
            return self.base
        return (self.base + sp.diags(self.omega_b * self.number_b)).tocsr()

    def with_omega_b(self, omega_b: float) -> "OperatorMatrix":
        return OperatorMatrix(self.layout, self.base, self.terms, self.number_b, float(omega_b), self.model)

    def envelope_values(self, t: float) -> np.ndarray:
        return np.array([float(env(t)) for _, env in self.terms])

    def evaluate(self, t: float) -> sp.csr_matrix:
        out = self.static
        for (mat, env), c in zip(self.terms, self.envelope_values(t)):
            out = out + c * mat
        return sp.csr_matrix(out)

    def apply(self, x: np.ndarray, t: float) -> np.ndarray:
        """``H(t) @ x`` without materialising the summed matrix."""
        y = self.base @ x
        if self.number_b is not None and self.omega_b != 0.0:
            nb = self.number_b if x.ndim == 1 else self.number_b[:, None]
            y = y + self.omega_b * nb * x
        for (mat, env), c in zip(self.terms, self.envelope_values(t)):
            if c != 0.0:
                y = y + c * (mat @ x)
        return y

    def hermiticity_defect(self) -> float:
        worst = _hermitian_defect(self.base)
        for mat, _ in self.terms:
            worst = max(worst, _hermitian_defect(mat))
        return worst

    @property
    def is_real(self) -> bool:
        return not (np.iscomplexobj(self.base.data) or any(np.iscomplexobj(m.data) for m, _ in self.terms))

    @cached_property
    def packed(self) -> "PackedOperator":
        return PackedOperator.from_operator(self)


@dataclass(frozen=True, eq=False)
class PackedOperator:
    """All matrices of an OperatorMatrix on one shared CSR pattern."""

    indptr: np.ndarray
    indices: np.ndarray
    base_data: np.ndarray
    term_data: np.ndarray  # (n_terms, nnz)
    envelopes: tuple
    number_b: np.ndarray

    @classmethod
    def from_operator(cls, op: OperatorMatrix) -> "PackedOperator":
        mats = [op.base] + [m for m, _ in op.terms]
        pattern = abs(mats[0]).astype(float)
        for m in mats[1:]:
            pattern = pattern + abs(m).astype(float)
        pattern = sp.csr_matrix(pattern)
        pattern.sort_indices()
        coo = pattern.tocoo()
        rows, cols = coo.row, coo.col
        dtype = complex if not op.is_real else float

        def aligned(m):
            m = sp.csr_matrix(m)
            return np.asarray(m[rows, cols]).ravel().astype(dtype)

        base = aligned(op.base)
        terms = np.array([aligned(m) for m, _ in op.terms]).reshape(len(op.terms), len(rows))
        nb = op.number_b if op.number_b is not None else np.zeros(op.dim)
        return cls(
            pattern.indptr.astype(np.int64),
            pattern.indices.astype(np.int64),
            base,
            terms,
            tuple(env for _, env in op.terms),
            np.asarray(nb, dtype=float),
        )

    def data_at(self, t: float) -> np.ndarray:
        out = self.base_data.copy()
        for row, env in zip(self.term_data, self.envelopes):
            out += float(env(t)) * row
        return out


def _hermitian_defect(m: sp.spmatrix) -> float:
    d = (m - m.conj().T).tocsr()
    return float(abs(d).max()) if d.nnz else 0.0


# ----------------------------------------------------------------------
# builders


def _electron_energies(model: ModelSpec) -> sp.csr_matrix:
    if model.family in (Family.THREE_LEVEL_V1, Family.THREE_LEVEL_V2):
        return sp.diags([model.eps1, model.eps2, float(model.eps3)], 0, format="csr")
    return sp.diags([model.eps1, model.eps2], 0, format="csr")


def _number_b(layout: BasisLayout) -> np.ndarray | None:
    if not layout.has(FLUORESCENCE):
        return None
    return layout.label_values(FLUORESCENCE).astype(float)


def _require(model: ModelSpec, *families: Family) -> None:
    if model.family not in families:
        names = ", ".join(f.value for f in families)
        raise SpecError(f"family={model.family.value!r}: builder expects {names}")


def build_two_level(model: ModelSpec) -> OperatorMatrix:
    _require(model, Family.TWO_LEVEL)
    layout = build_basis(model)
    na = layout.dim(PUMP) - 1
    nb = layout.dim(FLUORESCENCE) - 1
    base = (
        embed(layout, electron=_electron_energies(model))
        + model.omega_a * embed(layout, pump_photon=number(na))
        + model.coupling_a * embed(layout, electron=SIGMA_X, pump_photon=quadrature(na))
    )
    terms = (
        (embed(layout, electron=SIGMA_X, fluorescence_photon=quadrature(nb)), ExpDecay(model.g_b, model.gamma)),
    )
    return OperatorMatrix(layout, base.tocsr(), terms, _number_b(layout), model.omega_b, model)


def build_three_level(model: ModelSpec) -> OperatorMatrix:
    _require(model, Family.THREE_LEVEL_V1, Family.THREE_LEVEL_V2)
    layout = build_basis(model)
    na = layout.dim(PUMP) - 1
    nb = layout.dim(FLUORESCENCE) - 1
    ladder = level_coupling(3, 0, 1) + level_coupling(3, 1, 2)
    base = (
        embed(layout, electron=_electron_energies(model))
        + model.omega_a * embed(layout, pump_photon=number(na))
        + model.f * embed(layout, electron=ladder, pump_photon=quadrature(na))
    )
    if model.family is Family.THREE_LEVEL_V2:
        base = base + model.coupling_a * embed(layout, electron=level_coupling(3, 0, 2), pump_photon=quadrature(na))
    terms = (
        (
            embed(layout, electron=level_coupling(3, 0, 2), fluorescence_photon=quadrature(nb)),
            ExpDecay(model.g_b, model.gamma),
        ),
    )
    return OperatorMatrix(layout, base.tocsr(), terms, _number_b(layout), model.omega_b, model)


def build_array(model: ModelSpec) -> OperatorMatrix:
    """Collective-spin sector |S = N/2, m> of N identical two-level systems.

    The fields couple to the Pauli sum sum_i sigma_x,i = 2 J_x, so N = 1
    reproduces :func:`build_two_level` up to a constant shift.
    """
    _require(model, Family.ARRAY)
    layout = build_basis(model)
    n = model.n_atoms
    na = layout.dim(PUMP) - 1
    nb = layout.dim(FLUORESCENCE) - 1
    omega_s = model.omega_i[0] if model.omega_i else model.eps
    pauli_sum = 2.0 * spin_jx(n)
    base = (
        omega_s * embed(layout, electron=spin_jz(n))
        + model.omega_a * embed(layout, pump_photon=number(na))
        + model.coupling_a * embed(layout, electron=pauli_sum, pump_photon=quadrature(na))
    )
    terms = (
        (embed(layout, electron=pauli_sum, fluorescence_photon=quadrature(nb)), ExpDecay(model.g_b, model.gamma)),
    )
    return OperatorMatrix(layout, base.tocsr(), terms, _number_b(layout), model.omega_b, model)


def kinetic_matrix(model: ModelSpec) -> sp.csr_matrix:
    """p^2 / 2M by second-order central differences with hard walls."""
    n = model.n_grid
    dx = model.length / (n + 1)
    c = 1.0 / (2.0 * model.mass * dx * dx)
    return sp.diags([-c * np.ones(n - 1), 2 * c * np.ones(n), -c * np.ones(n - 1)], [-1, 0, 1], format="csr")


def cavity_mask(model: ModelSpec) -> np.ndarray:
    x = position_grid(model)
    return (x >= model.x1) & (x <= model.x2)


def pump_profile(model: ModelSpec, x=None) -> np.ndarray:
    """g_a sin(pi (x - x1) / l) inside the cavity, zero outside."""
    if x is None:
        x = position_grid(model)
    x = np.asarray(x, dtype=float)
    inside = (x >= model.x1) & (x <= model.x2)
    l = model.x2 - model.x1
    return np.where(inside, model.coupling_a * np.sin(np.pi * (x - model.x1) / l), 0.0)


def build_moving_atom(model: ModelSpec, include_fluorescence: bool | None = None) -> OperatorMatrix:
    _require(model, Family.MOVING_ATOM)
    if include_fluorescence is not None and include_fluorescence != model.include_fluorescence:
        model = model.replace(include_fluorescence=include_fluorescence)
    inside = cavity_mask(model)
    if inside.sum() < 10:
        raise SpecError(
            f"n_grid={model.n_grid}: the cavity [x1, x2] spans {int(inside.sum())} grid points, need >= 10"
        )
    layout = build_basis(model)
    na = layout.dim(PUMP) - 1
    base = (
        embed(layout, electron=_electron_energies(model))
        + embed(layout, position=kinetic_matrix(model))
        + model.omega_a * embed(layout, pump_photon=number(na))
        + embed(layout, electron=SIGMA_X, position=sp.diags(pump_profile(model)), pump_photon=quadrature(na))
    )
    terms: tuple = ()
    if layout.has(FLUORESCENCE):
        nb = layout.dim(FLUORESCENCE) - 1
        q = quadrature(nb)
        terms = (
            (
                embed(layout, electron=SIGMA_X, position=sp.diags(inside.astype(float)), fluorescence_photon=q),
                ExpDecay(model.g1, model.gamma1),
            ),
            (
                embed(layout, electron=SIGMA_X, position=sp.diags((~inside).astype(float)), fluorescence_photon=q),
                ExpDecay(model.g2, model.gamma2),
            ),
        )
    return OperatorMatrix(layout, base.tocsr(), terms, _number_b(layout), model.omega_b, model)


def build_semiclassical(model: ModelSpec) -> OperatorMatrix:
    """Classical pump 2 g_a alpha cos(omega_a t) sigma_x; quantized fluorescence."""
    _require(model, Family.SEMICLASSICAL)
    layout = build_basis(model)
    nb = layout.dim(FLUORESCENCE) - 1
    base = embed(layout, electron=_electron_energies(model))
    terms = (
        (embed(layout, electron=SIGMA_X), Cosine(2.0 * model.coupling_a * model.alpha, model.omega_a)),
        (embed(layout, electron=SIGMA_X, fluorescence_photon=quadrature(nb)), ExpDecay(model.g_b, model.gamma)),
    )
    return OperatorMatrix(layout, base.tocsr(), terms, _number_b(layout), model.omega_b, model)


def build_rwa_aea(model: ModelSpec) -> OperatorMatrix:
    """Effective levels (1, 3) after RWA and adiabatic elimination of level 2.

    The pump drives the 1 -> 3 transition through a^2; no counter-rotating
    terms are kept.
    """
    _require(model, Family.RWA_AEA)
    layout = build_basis(model)
    na = layout.dim(PUMP) - 1
    nb = layout.dim(FLUORESCENCE) - 1
    half = 0.5 * (float(model.eps3) - model.eps1)
    raise_13 = sp.csr_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]))
    a = annihilation(na)
    b = annihilation(nb)
    two_photon = embed(layout, electron=raise_13, pump_photon=a @ a)
    emission = embed(layout, electron=raise_13, fluorescence_photon=b)
    base = (
        embed(layout, electron=sp.diags([-half, half]))
        + model.omega_a * embed(layout, pump_photon=number(na))
        + model.f * (two_photon + two_photon.T)
    )
    terms = (((emission + emission.T).tocsr(), ExpDecay(model.g_b, model.gamma)),)
    return OperatorMatrix(layout, base.tocsr(), terms, _number_b(layout), model.omega_b, model)


_BUILDERS = {
    Family.TWO_LEVEL: build_two_level,
    Family.THREE_LEVEL_V1: build_three_level,
    Family.THREE_LEVEL_V2: build_three_level,
    Family.ARRAY: build_array,
    Family.MOVING_ATOM: build_moving_atom,
    Family.SEMICLASSICAL: build_semiclassical,
    Family.RWA_AEA: build_rwa_aea,
}


def build_hamiltonian(model: ModelSpec) -> OperatorMatrix:
    return _BUILDERS[model.family](model)


def evaluate(H: OperatorMatrix, t: float) -> sp.csr_matrix:
    if t < 0:
        raise ValueError("t must be nonnegative")
    return H.evaluate(t)


def dense_hamiltonian(H: OperatorMatrix, t: float) -> np.ndarray:
    return H.evaluate(t).toarray()


def sigma_x_operator(layout: BasisLayout) -> sp.csr_matrix:
    """Electronic sigma_x on the full layout (two-level electron only)."""
    if layout.dim(ELECTRON) != 2:
        raise ValueError("sigma_x needs a two-level electronic factor")
    return embed(layout, electron=SIGMA_X)


def position_operator_diag(model: ModelSpec, layout: BasisLayout, values: np.ndarray) -> np.ndarray:
    """Broadcast a function of the grid point onto the flat basis."""
    idx = layout.label_values(POSITION)
    return np.asarray(values)[idx]


def pump_quadrature_operator(layout: BasisLayout) -> sp.csr_matrix:
    return embed(layout, pump_photon=quadrature(layout.dim(PUMP) - 1))


