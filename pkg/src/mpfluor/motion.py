"""Atom moving through a cavity: quantum and classical centre-of-mass treatments.

Quantum route: diagonalise the fluorescence-free Hamiltonian H0 on the
spatial grid once, then evaluate the one-photon spectrum in its eigenbasis
and evolve nuclear densities exactly.  Classical route (Ehrenfest): a point
particle driven by the quantum expectation of -dH/dx, with the electronic
and photonic state propagated along the trajectory.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .fock import (
    ELECTRON,
    FLUORESCENCE,
    POSITION,
    PUMP,
    BasisLayout,
    CoherentSpec,
    coherent_state,
    initial_state,
    position_grid,
)
from .hamiltonian import (
    SIGMA_X,
    OperatorMatrix,
    PackedOperator,
    build_moving_atom,
    cavity_mask,
    embed,
    number,
    quadrature,
)
from .io import write_table
from .models import Family, ModelSpec, SpecError
from .propagator import KrylovConfig, PackedGenerator, _advance, _Workspaces
from .spectra import SpectrumDataset, dataset_metadata, first_order_probability

DIAG_CEILING = 12000


# fields that enter the fluorescence-free Hamiltonian; the wavepacket and the
# fluorescence couplings do not, so they are left out of the cache key
_H0_FIELDS = (
    "family", "units", "eps1", "eps2", "omega_a", "alpha", "n_a_max", "g_a",
    "mass", "length", "x1", "x2", "n_grid",
)


def spec_hash(model: ModelSpec, fields=None) -> str:
    data = model.to_dict()
    if fields is not None:
        data = {k: data[k] for k in fields}
        data["pump_cutoff"] = model.pump_cutoff
    text = json.dumps(data, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _require_motion(model: ModelSpec) -> None:
    if model.family is not Family.MOVING_ATOM:
        raise SpecError(f"family={model.family.value!r}: a moving-atom model is required")


# ----------------------------------------------------------------------
# H0 eigenbasis


@dataclass(eq=False)
class EigenDecomposition:
    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors over (electron, position, pump)
    layout: BasisLayout
    model: ModelSpec

    @property
    def dim(self) -> int:
        return len(self.energies)

    def coefficients(self, psi: np.ndarray) -> np.ndarray:
        return self.vectors.T @ psi

    def evolve(self, psi0: np.ndarray, t: float) -> np.ndarray:
        c = self.coefficients(psi0)
        return self.vectors @ (np.exp(-1j * self.energies * t) * c)


def _h0_model(model: ModelSpec) -> ModelSpec:
    return model.replace(include_fluorescence=False)


def diagonalize_h0(model: ModelSpec, ceiling: int = DIAG_CEILING, cache_dir=None) -> EigenDecomposition:
    """Full eigendecomposition of the fluorescence-free moving-atom Hamiltonian.

    With ``cache_dir`` the result is stored as ``h0_<hash>.npz`` keyed by
    every field that enters H0, so any such change misses the cache.  The
    returned decomposition carries the caller's model (wavepacket and
    fluorescence parameters included).
    """
    _require_motion(model)
    m0 = _h0_model(model)
    H0 = build_moving_atom(m0)
    if H0.dim > ceiling:
        raise SpecError(
            f"n_grid, n_a_max: H0 has dimension {H0.dim} > ceiling {ceiling}; "
            "reduce the grid or the pump cutoff (CI preset: 250 points, n_a_max=8)"
        )
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"h0_{spec_hash(m0, _H0_FIELDS)}.npz"
        if path.exists():
            data = np.load(path)
            return EigenDecomposition(data["energies"], data["vectors"], H0.layout, m0)
    E, V = np.linalg.eigh(H0.static.toarray().real)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, energies=E, vectors=V)
    return EigenDecomposition(E, V, H0.layout, m0)


# ----------------------------------------------------------------------
# S coefficients and the perturbative spectrum


@dataclass(eq=False)
class SCoefficients:
    inside: np.ndarray
    outside: np.ndarray
    g1: float
    g2: float


def region_sigma_x(layout: BasisLayout, mask: np.ndarray) -> sp.csr_matrix:
    """σ_x χ(x) on the fluorescence-free layout."""
    return embed(layout, electron=SIGMA_X, position=sp.diags(mask.astype(float)))


def s_coefficients(decomp: EigenDecomposition, g1: float | None = None, g2: float | None = None) -> SCoefficients:
    """S^k = g_k <λ| σ_x χ_k(x) |λ'> for k = inside, outside (couplings folded in)."""
    model = decomp.model
    g1 = model.g1 if g1 is None else g1
    g2 = model.g2 if g2 is None else g2
    inside = cavity_mask(model)
    V = decomp.vectors
    out = []
    for g, mask in ((g1, inside), (g2, ~inside)):
        if g == 0.0:
            out.append(np.zeros((decomp.dim, decomp.dim)))
            continue
        M = region_sigma_x(decomp.layout, mask)
        out.append(g * (V.T @ (M @ V)))
    return SCoefficients(out[0], out[1], g1, g2)


def initial_coefficients(decomp: EigenDecomposition, model: ModelSpec | None = None) -> np.ndarray:
    """<λ|1, φ, α> for the model's wavepacket (defaults to the decomposition's model)."""
    m = _h0_model(model or decomp.model)
    psi0 = initial_state(m).amplitudes
    return decomp.vectors.T @ psi0


def perturbative_spectrum(
    decomp: EigenDecomposition,
    S: SCoefficients,
    coeffs: np.ndarray,
    omega_grid,
    times=None,
    active_tol: float = 1e-7,
) -> SpectrumDataset:
    """One-photon spectrum P(t, ω) from the H0 eigenbasis.

    ``times=None`` gives the t -> infinity limit (one row, time recorded as
    inf).  Initial-state components with |c| <= active_tol * max|c| are
    dropped from the inner sum.
    """
    model = decomp.model
    rates = [model.gamma1, model.gamma2]
    omega_grid = np.asarray(omega_grid, dtype=float)
    tol = active_tol * float(np.max(np.abs(coeffs)))
    if times is None:
        rows = [first_order_probability(decomp.energies, [S.inside, S.outside], rates, coeffs, omega_grid, None, tol)]
        tgrid = np.array([np.inf])
    else:
        tgrid = np.asarray(times, dtype=float)
        rows = [
            first_order_probability(decomp.energies, [S.inside, S.outside], rates, coeffs, omega_grid, t, tol)
            for t in tgrid
        ]
    meta = dataset_metadata(model, KrylovConfig(), omega_grid=omega_grid, method="perturbative", active_tol=active_tol)
    meta["config"].pop("numerics")
    return SpectrumDataset(omega_grid, tgrid, np.asarray(rows), None, meta)


# ----------------------------------------------------------------------
# nuclear densities


@dataclass
class DensityTrajectory:
    times: np.ndarray
    x: np.ndarray
    density: np.ndarray  # (n_t, n_x), integrates to 1 with weight dx
    model: ModelSpec

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def regions(self, index: int = -1) -> dict[str, float]:
        """Probability mass left of, inside and right of the cavity."""
        N = self.density[index] * self.dx
        m = self.model
        return {
            "reflected": float(N[self.x < m.x1].sum()),
            "inside": float(N[(self.x >= m.x1) & (self.x <= m.x2)].sum()),
            "transmitted": float(N[self.x > m.x2].sum()),
        }

    def to_csv(self, path, overwrite: bool = False, metadata=None) -> Path:
        rows = [(t, x, n) for t, row in zip(self.times, self.density) for x, n in zip(self.x, row)]
        return write_table(path, ("t", "x", "N"), rows, metadata, overwrite=overwrite)


def nuclear_density(psi, layout: BasisLayout, model: ModelSpec) -> np.ndarray:
    """N(x) = sum over electron and photon labels of |ψ|^2, per unit length."""
    psi = np.asarray(getattr(psi, "amplitudes", psi))
    p = (np.abs(psi) ** 2).reshape(layout.shape)
    ax = layout.axis(POSITION)
    N = p.sum(axis=tuple(i for i in range(p.ndim) if i != ax))
    dx = model.length / (model.n_grid + 1)
    return N / dx


def density_evolution(model: ModelSpec, times, decomp: EigenDecomposition | None = None) -> DensityTrajectory:
    """N(x, t) without the fluorescence mode, exact in the H0 eigenbasis."""
    _require_motion(model)
    m0 = _h0_model(model)
    decomp = decomp or diagonalize_h0(m0)
    psi0 = initial_state(m0).amplitudes
    c = decomp.vectors.T @ psi0
    times = np.asarray(times, dtype=float)
    rows = [nuclear_density(decomp.vectors @ (np.exp(-1j * decomp.energies * t) * c), decomp.layout, m0) for t in times]
    return DensityTrajectory(times, position_grid(m0), np.asarray(rows), m0)


def density_evolution_krylov(model: ModelSpec, times, cfg: KrylovConfig) -> DensityTrajectory:
    """Same densities by direct Lanczos propagation (optionally with the fluorescence mode)."""
    from .propagator import propagate

    _require_motion(model)
    H = build_moving_atom(model)
    psi0 = initial_state(model).amplitudes
    traj = propagate(H, psi0, times, {"N": lambda t, psi: nuclear_density(psi, H.layout, model)}, cfg)
    return DensityTrajectory(np.asarray(times, float), position_grid(model), traj["N"], model)


def mean_force(model: ModelSpec, psi: np.ndarray, layout: BasisLayout) -> float:
    """<-dH/dx> for a grid state, from the pump-coupling gradient."""
    x = position_grid(model)
    grad = pump_profile_gradient(model, x)
    coupling = embed(layout, electron=SIGMA_X, position=sp.diags(grad), pump_photon=quadrature(layout.dim(PUMP) - 1))
    return -float(np.real(np.vdot(psi, coupling @ psi)))


# ----------------------------------------------------------------------
# Ehrenfest


def pump_profile_value(model: ModelSpec, x: float) -> float:
    if model.x1 <= x <= model.x2:
        return model.coupling_a * np.sin(np.pi * (x - model.x1) / (model.x2 - model.x1))
    return 0.0


def pump_profile_gradient(model: ModelSpec, x):
    x = np.asarray(x, dtype=float)
    l = model.x2 - model.x1
    inside = (x >= model.x1) & (x <= model.x2)
    return np.where(inside, model.coupling_a * (np.pi / l) * np.cos(np.pi * (x - model.x1) / l), 0.0)


@dataclass
class EhrenfestResult:
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    energy: np.ndarray  # classical kinetic + <H_q>
    quantum_norm: np.ndarray
    P: np.ndarray  # fluorescence probability per time (column per omega)
    omega_grid: np.ndarray
    cavity_exit_time: float | None
    boundary_exit_time: float | None

    def spectrum(self, model: ModelSpec, cfg: KrylovConfig) -> SpectrumDataset:
        meta = dataset_metadata(model, cfg, omega_grid=self.omega_grid, method="ehrenfest")
        return SpectrumDataset(self.omega_grid, self.times, self.P, None, meta)


class _QuantumPart:
    """Electron x pump x fluorescence operators of the Ehrenfest subsystem."""

    def __init__(self, model: ModelSpec):
        factors = [(ELECTRON, 2), (PUMP, model.pump_cutoff + 1)]
        if model.include_fluorescence:
            factors.append((FLUORESCENCE, model.n_b_max + 1))
        self.layout = BasisLayout(tuple(factors))
        na = model.pump_cutoff
        kw = {}
        if model.include_fluorescence:
            kw = {"fluorescence_photon": quadrature(model.n_b_max)}
        base = embed(self.layout, electron=sp.diags([model.eps1, model.eps2])) + model.omega_a * embed(
            self.layout, pump_photon=number(na)
        )
        self.pump = embed(self.layout, electron=SIGMA_X, pump_photon=quadrature(na))
        terms = [(self.pump, None)]
        if model.include_fluorescence:
            self.fluor = embed(self.layout, electron=SIGMA_X, **kw)
            terms.append((self.fluor, None))
        nb = self.layout.label_values(FLUORESCENCE).astype(float) if model.include_fluorescence else None
        op = OperatorMatrix(self.layout, base.tocsr(), tuple(terms), nb, model.omega_b)
        self.packed = PackedOperator.from_operator(op)
        self.op = op
        e = np.zeros(2)
        e[0] = 1.0
        parts = [e, coherent_state(CoherentSpec(model.alpha, na, override=model.allow_short_cutoff))]
        if model.include_fluorescence:
            v = np.zeros(model.n_b_max + 1)
            v[0] = 1.0
            parts.append(v)
        psi = parts[0]
        for q in parts[1:]:
            psi = np.kron(psi, q)
        self.psi0 = psi.astype(complex)

    def data(self, u: float, f: float) -> np.ndarray:
        d = self.packed.base_data + u * self.packed.term_data[0]
        if len(self.packed.term_data) > 1:
            d = d + f * self.packed.term_data[1]
        return d


def fluorescence_envelope(model: ModelSpec, x: float, t: float, t0: float | None) -> float:
    """g1 inside; g2 outside, decaying at rate gamma2 once the atom has left (t0)."""
    if model.x1 <= x <= model.x2:
        return model.g1
    if t0 is None:
        return model.g2
    return model.g2 * np.exp(-model.gamma2 * (t - t0))


def ehrenfest_evolve(
    model: ModelSpec,
    t_grid,
    omega_grid=None,
    cfg: KrylovConfig = KrylovConfig(dt=1.0, krylov_dim=16),
    x0: float | None = None,
    freeze_envelopes: bool = False,
) -> EhrenfestResult:
    """Velocity-Verlet centre of mass coupled to the quantum subsystem.

    Each omega_b has its own trajectory (the fluorescence mode acts back on
    the force only through the electronic state).  ``x0`` overrides the
    classical start point; momentum is ``model.p0``.  Returns per-time x, p
    and energy for the first omega and P for every omega.
    """
    _require_motion(model)
    t_grid = np.asarray(t_grid, dtype=float)
    omegas = np.atleast_1d(np.asarray(omega_grid if omega_grid is not None else [model.omega_b], dtype=float))
    runs = [_ehrenfest_single(model, t_grid, w, cfg, model.x0 if x0 is None else x0, freeze_envelopes) for w in omegas]
    first = runs[0]
    n = min(len(r["t"]) for r in runs)
    P = np.array([r["P"][:n] for r in runs]).T
    return EhrenfestResult(
        first["t"][:n],
        first["x"][:n],
        first["p"][:n],
        first["E"][:n],
        first["norm"][:n],
        P,
        omegas,
        first["t_exit"],
        first["t_wall"],
    )


def _ehrenfest_single(model, t_grid, omega_b, cfg, x0, freeze):
    q = _QuantumPart(model.replace(omega_b=float(omega_b)))
    M = model.mass
    work = _Workspaces()
    xr = np.ascontiguousarray(q.psi0.real.reshape(-1, 1))
    xi = np.ascontiguousarray(q.psi0.imag.reshape(-1, 1))
    omegas = np.array([float(omega_b)])
    nb_mask = None
    if model.include_fluorescence:
        nb_mask = q.layout.label_values(FLUORESCENCE) > 0
    x, p = float(x0), float(model.p0)
    t0 = None
    t_wall = None
    dt = cfg.dt

    def state():
        return xr[:, 0] + 1j * xi[:, 0]

    def force(xpos, psi):
        g = float(pump_profile_gradient(model, xpos))
        if g == 0.0:
            return 0.0
        return -g * float(np.real(np.vdot(psi, q.pump @ psi)))

    def envelope(xpos, t):
        if freeze:
            return model.g1 if model.x1 <= xpos <= model.x2 else model.g2
        return fluorescence_envelope(model, xpos, t, t0)

    def energy(xpos, t, psi):
        d = q.data(pump_profile_value(model, xpos), envelope(xpos, t))
        H = sp.csr_matrix((d, q.packed.indices, q.packed.indptr), shape=(len(psi), len(psi)))
        eq = np.real(np.vdot(psi, H @ psi))
        if nb_mask is not None:
            eq += omega_b * float(np.sum(np.abs(psi[nb_mask]) ** 2 * q.layout.label_values(FLUORESCENCE)[nb_mask]))
        return p * p / (2 * M) + eq

    out = {"t": [], "x": [], "p": [], "E": [], "norm": [], "P": []}

    def record(t):
        psi = state()
        out["t"].append(t)
        out["x"].append(x)
        out["p"].append(p)
        out["E"].append(energy(x, t, psi))
        out["norm"].append(float(np.linalg.norm(psi)))
        out["P"].append(float(np.sum(np.abs(psi[nb_mask]) ** 2)) if nb_mask is not None else 0.0)

    record(t_grid[0])
    F = force(x, state())
    for a, b in zip(t_grid[:-1], t_grid[1:]):
        nsub = max(1, int(np.ceil((b - a) / dt - 1e-9)))
        h = (b - a) / nsub
        for j in range(nsub):
            t = a + j * h
            p_half = p + 0.5 * h * F
            x_new = x + h * p_half / M
            xm = 0.5 * (x + x_new)
            tm = t + 0.5 * h
            data = q.data(pump_profile_value(model, xm), envelope(xm, tm))
            gen = PackedGenerator(q.packed.indptr, q.packed.indices, lambda _t, d=data: d, q.packed.number_b)
            _advance(gen, xr, xi, omegas, t, h, dataclasses.replace(cfg, midpoint_rule=True), work)
            x = x_new
            F = force(x, state())
            p = p_half + 0.5 * h * F
            if t0 is None and x > model.x2:
                t0 = t + h
            if not (0.0 <= x <= model.length):
                t_wall = t + h
                break
        record(b)
        if t_wall is not None:
            break
    result = {k: np.asarray(v) for k, v in out.items()}
    result["t_exit"] = t0
    result["t_wall"] = t_wall
    return result


# ----------------------------------------------------------------------
# scaling map

_ENERGY_FIELDS = (
    "eps1",
    "eps2",
    "eps3",
    "omega_a",
    "omega_b",
    "g_a",
    "g_b",
    "f",
    "gamma",
    "g1",
    "g2",
    "gamma1",
    "gamma2",
)


def rescale(model: ModelSpec, Z: float) -> ModelSpec:
    """Model with H~(t) = H(t / Z) / Z: energies and rates over Z, mass times Z.

    Propagating the result to time Z t reproduces the original state at t.
    """
    if not Z > 0:
        raise ValueError("Z must be positive")
    changes = {}
    for name in _ENERGY_FIELDS:
        v = getattr(model, name)
        if v is not None:
            changes[name] = v / Z
    if model.omega_i is not None:
        changes["omega_i"] = tuple(w / Z for w in model.omega_i)
    changes["mass"] = model.mass * Z
    return model.replace(**changes)


def rescale_times(times, Z: float) -> np.ndarray:
    return np.asarray(times, dtype=float) * Z
