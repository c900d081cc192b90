"""Tensor-product bases, coherent states and initial states."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import erfc, gammaln

from .models import Family, ModelSpec, SpecError

ELECTRON = "electron"
POSITION = "position"
PUMP = "pump-photon"
FLUORESCENCE = "fluorescence-photon"

_FACTOR_ORDER = (ELECTRON, POSITION, PUMP, FLUORESCENCE)

TAIL_MASS = 1e-10
# extra pump states above the static cutoff; the drive exchanges a few photons
CUTOFF_HEADROOM = 5


@dataclass(frozen=True)
class BasisLayout:
    """Ordered tensor-product factors and the flat-index bijection."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        labels = [label for label, _ in self.factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate factor labels: {labels}")
        for label, dim in self.factors:
            if label not in _FACTOR_ORDER:
                raise ValueError(f"unknown factor label {label!r}")
            if int(dim) <= 0:
                raise ValueError(f"factor {label!r} has non-positive dimension {dim}")
        ranks = [_FACTOR_ORDER.index(label) for label in labels]
        if ranks != sorted(ranks):
            raise ValueError("factors must follow (electron, position, pump, fluorescence) order")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(d) for _, d in self.factors)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.factors)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.shape))

    def has(self, label: str) -> bool:
        return label in self.labels

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"layout has no {label!r} factor") from None

    def dim(self, label: str) -> int:
        return self.shape[self.axis(label)]

    def flat_index(self, multi) -> int | np.ndarray:
        return np.ravel_multi_index(tuple(multi), self.shape)

    def multi_index(self, flat) -> tuple:
        return np.unravel_index(flat, self.shape)

    def label_values(self, label: str) -> np.ndarray:
        """Per-basis-state value of one factor's index, as a flat array."""
        ax = self.axis(label)
        shape = [1] * len(self.shape)
        shape[ax] = self.shape[ax]
        idx = np.arange(self.shape[ax]).reshape(shape)
        return np.broadcast_to(idx, self.shape).ravel().copy()


@dataclass(frozen=True)
class CoherentSpec:
    alpha: float
    n_max: int
    override: bool = False

    def __post_init__(self) -> None:
        if self.n_max < 0:
            raise SpecError(f"n_a_max={self.n_max}: must be nonnegative")
        need = min_cutoff(self.alpha)
        if self.n_max < need and not self.override:
            raise SpecError(
                f"n_a_max={self.n_max}: a coherent state with alpha={self.alpha} "
                f"needs n_a_max >= ceil(|alpha|^2 + 8|alpha|) = {need} "
                "(set allow_short_cutoff to override)"
            )


def min_cutoff(alpha: float) -> int:
    a = abs(alpha)
    return int(math.ceil(a * a + 8.0 * a))


def poisson_tail(alpha: float, n_max: int) -> float:
    """Photon-number probability above ``n_max`` for an untruncated coherent state."""
    return float(stats.poisson.sf(n_max, abs(alpha) ** 2))


def default_cutoff(alpha: float) -> int:
    n = min_cutoff(alpha)
    while poisson_tail(alpha, n) >= TAIL_MASS:
        n += 1
    return n + CUTOFF_HEADROOM


def coherent_amplitudes(alpha: float, n_max: int) -> np.ndarray:
    """Untruncated-norm amplitudes e^{-|a|^2/2} a^n / sqrt(n!) for n <= n_max.

    Evaluated in the log domain so large ``n_max`` does not overflow.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    n = np.arange(n_max + 1)
    out = np.zeros(n_max + 1)
    if alpha == 0:
        out[0] = 1.0
        return out
    a = abs(alpha)
    logc = -0.5 * a * a + n * math.log(a) - 0.5 * gammaln(n + 1)
    out = np.exp(logc)
    if alpha < 0:
        out[1::2] *= -1.0
    return out


def coherent_state(spec: CoherentSpec) -> np.ndarray:
    c = coherent_amplitudes(spec.alpha, spec.n_max)
    return c / np.linalg.norm(c)


# ----------------------------------------------------------------------
# spatial grid for the moving atom


def position_grid(model: ModelSpec) -> np.ndarray:
    """Interior points of a hard-wall grid on [0, L]."""
    dx = model.length / (model.n_grid + 1)
    return dx * np.arange(1, model.n_grid + 1)


def wavepacket(model: ModelSpec) -> np.ndarray:
    x = position_grid(model)
    outside = wavepacket_outside_mass(model)
    if outside > model.boundary_tol:
        raise SpecError(
            f"x0, sigma: wavepacket mass outside [0, L] is {outside:.3g} "
            f"> boundary_tol={model.boundary_tol:g}"
        )
    phi = np.exp(-((x - model.x0) ** 2) / model.sigma**2) * np.exp(1j * x * model.p0)
    return phi / np.linalg.norm(phi)


def wavepacket_outside_mass(model: ModelSpec) -> float:
    # |phi|^2 is a normal density with standard deviation sigma / 2
    s = model.sigma / 2.0
    left = 0.5 * erfc(model.x0 / (s * math.sqrt(2)))
    right = 0.5 * erfc((model.length - model.x0) / (s * math.sqrt(2)))
    return float(left + right)


# ----------------------------------------------------------------------


def electron_dim(model: ModelSpec) -> int:
    if model.family in (Family.THREE_LEVEL_V1, Family.THREE_LEVEL_V2):
        return 3
    if model.family is Family.ARRAY:
        return model.n_atoms + 1
    return 2


def build_basis(model: ModelSpec) -> BasisLayout:
    factors = [(ELECTRON, electron_dim(model))]
    if model.family is Family.MOVING_ATOM:
        factors.append((POSITION, int(model.n_grid)))
    if model.has_pump_mode:
        factors.append((PUMP, model.pump_cutoff + 1))
    if model.has_fluorescence_mode:
        factors.append((FLUORESCENCE, model.n_b_max + 1))
    return BasisLayout(tuple(factors))


@dataclass(frozen=True)
class StateVector:
    layout: BasisLayout
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        if self.amplitudes.shape != (self.layout.total_dim,):
            raise ValueError("amplitude vector does not match layout")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.shape)

    def marginal(self, label: str) -> np.ndarray:
        """Probability distribution of one factor's index."""
        p = np.abs(self.tensor()) ** 2
        ax = self.layout.axis(label)
        other = tuple(i for i in range(p.ndim) if i != ax)
        return p.sum(axis=other)


def initial_state(model: ModelSpec) -> StateVector:
    """Ground electron level, coherent pump, empty fluorescence mode."""
    layout = build_basis(model)
    parts = []
    electron = np.zeros(layout.dim(ELECTRON), dtype=complex)
    electron[0] = 1.0  # level 1, or m = -N/2 for the array
    parts.append(electron)
    if layout.has(POSITION):
        parts.append(wavepacket(model))
    if layout.has(PUMP):
        parts.append(
            coherent_state(
                CoherentSpec(model.alpha, layout.dim(PUMP) - 1, override=model.allow_short_cutoff)
            ).astype(complex)
        )
    if layout.has(FLUORESCENCE):
        vac = np.zeros(layout.dim(FLUORESCENCE), dtype=complex)
        vac[0] = 1.0
        parts.append(vac)
    psi = parts[0]
    for p in parts[1:]:
        psi = np.kron(psi, p)
    psi = psi / np.linalg.norm(psi)
    return StateVector(layout, psi)
