"""Fluorescence observable, spectrum scans, time-resolved maps and peak metrics.

The observable is the probability that at least one photon sits in the
fluorescence mode, P = sum_{m>0} P_m.  The scan frequency omega_b enters the
Hamiltonian, so every grid point is an independent propagation; all points
are advanced together as columns of one Lanczos block and, optionally,
split into chunks over worker processes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from . import __version__
from .fock import FLUORESCENCE, StateVector, initial_state
from .hamiltonian import build_hamiltonian
from ._kernels import first_order_amplitude
from .io import config_hash, read_metadata, read_table, write_table
from .models import ModelSpec, resolved_cutoffs
from .propagator import KrylovConfig, PackedGenerator, PropagationError, evolve_block

NOISE_FLOOR = 1e-8
DECAY_TARGET = 8.0


class ScanError(RuntimeError):
    def __init__(self, message: str, failed_omegas):
        super().__init__(message)
        self.failed_omegas = list(failed_omegas)


# ----------------------------------------------------------------------


def fluorescence_probability(psi: StateVector) -> tuple[float, np.ndarray]:
    """(P, P_m): at-least-one-photon probability and the photon-number marginal."""
    if not psi.layout.has(FLUORESCENCE):
        raise ValueError("state has no fluorescence-photon factor")
    pm = psi.marginal(FLUORESCENCE)
    return float(pm[1:].sum()), pm


class FluorescenceObserver:
    """Per-column P_m for a block of states whose last factor is the fluorescence mode."""

    def __init__(self, n_fluor: int):
        self.n_fluor = n_fluor

    def __call__(self, t, X):
        p = np.abs(X) ** 2
        return p.reshape(-1, self.n_fluor, X.shape[1]).sum(axis=0).T  # (K, n_fluor)


@dataclass
class SpectrumDataset:
    omega_grid: np.ndarray
    time_grid: np.ndarray
    P: np.ndarray  # (n_t, n_omega)
    Pm: np.ndarray | None = None  # (n_t, n_omega, n_b + 1)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.omega_grid = np.asarray(self.omega_grid, dtype=float)
        self.time_grid = np.asarray(self.time_grid, dtype=float)
        self.P = np.asarray(self.P, dtype=float).reshape(len(self.time_grid), len(self.omega_grid))

    def validate(self, tol: float = 1e-9) -> None:
        if np.any(self.P < -tol) or np.any(self.P > 1 + tol):
            raise ValueError("P outside [0, 1]")
        if self.Pm is not None:
            if np.max(np.abs(self.Pm[..., 1:].sum(-1) - self.P)) > tol:
                raise ValueError("P differs from sum of P_m over m > 0")
            if np.max(np.abs(self.Pm.sum(-1) - 1.0)) > tol:
                raise ValueError("P_m does not sum to one")

    @property
    def final(self) -> np.ndarray:
        return self.P[-1]

    def at_time(self, t: float) -> np.ndarray:
        return self.P[int(np.argmin(np.abs(self.time_grid - t)))]

    def rows(self):
        for i, t in enumerate(self.time_grid):
            for j, w in enumerate(self.omega_grid):
                yield (t, w, self.P[i, j])

    def to_csv(self, path, overwrite: bool = False) -> Path:
        meta = dict(self.metadata)
        meta["config_hash"] = config_hash(meta.get("config", meta))
        return write_table(path, ("t", "omega_b", "P"), list(self.rows()), meta, overwrite=overwrite)

    @classmethod
    def from_csv(cls, path) -> "SpectrumDataset":
        header, data = read_table(path)
        if header != ["t", "omega_b", "P"]:
            raise ValueError(f"unexpected columns {header}")
        times = np.unique(data[:, 0])
        omegas = data[: len(data) // len(times), 1]
        try:
            meta = read_metadata(path)
        except FileNotFoundError:
            meta = {}
        return cls(omegas, times, data[:, 2].reshape(len(times), len(omegas)), None, meta)


def dataset_metadata(model: ModelSpec, cfg: KrylovConfig, **extra) -> dict:
    config = {"model": model.to_dict(), "numerics": cfg.to_dict(), "cutoffs": resolved_cutoffs(model)}
    config.update(extra)
    return {"config": config, "code_version": __version__}


# ----------------------------------------------------------------------
# scans


def _scan_chunk(model_dict, omegas, time_grid, cfg_dict):
    model = ModelSpec.from_dict(model_dict)
    cfg = KrylovConfig(**cfg_dict)
    H = build_hamiltonian(model)
    gen = PackedGenerator.from_operator(H)
    psi0 = initial_state(model).amplitudes
    obs = FluorescenceObserver(H.layout.dim(FLUORESCENCE))
    try:
        _, rec = evolve_block(gen, psi0, omegas, time_grid, cfg, obs)
    except PropagationError as exc:
        return None, exc.omega, str(exc)
    return rec, None, None


def _chunks(n: int, parts: int):
    parts = max(1, min(parts, n))
    edges = np.linspace(0, n, parts + 1).round().astype(int)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def time_resolved_map(
    model: ModelSpec,
    omega_grid,
    time_grid,
    cfg: KrylovConfig = KrylovConfig(),
    workers: int = 1,
    keep_pm: bool = True,
    chunk_size: int | None = None,
) -> SpectrumDataset:
    """P(t, omega_b) on the full grid; one column per scan frequency."""
    omega_grid = np.asarray(omega_grid, dtype=float)
    time_grid = np.asarray(time_grid, dtype=float)
    if time_grid[0] != 0.0:
        raise ValueError("time grid must start at 0")
    n = len(omega_grid)
    parts = max(workers, 1)
    if chunk_size:
        parts = max(parts, int(np.ceil(n / chunk_size)))
    spans = _chunks(n, parts)
    args = [(model.to_dict(), omega_grid[a:b], time_grid, cfg.to_dict()) for a, b in spans]
    if workers > 1 and len(spans) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_chunk, *zip(*args)))
    else:
        results = [_scan_chunk(*a) for a in args]
    failed = [(w, msg) for rec, w, msg in results if rec is None]
    if failed:
        raise ScanError(
            "propagation failed at omega_b = " + ", ".join(f"{w:g}" for w, _ in failed) + f" ({failed[0][1]})",
            [w for w, _ in failed],
        )
    pm = np.concatenate([rec for rec, _, _ in results], axis=1)  # (n_t, n_omega, n_fluor)
    P = pm[..., 1:].sum(-1)
    meta = dataset_metadata(model, cfg, omega_grid=omega_grid, time_grid=time_grid)
    ds = SpectrumDataset(omega_grid, time_grid, P, pm if keep_pm else None, meta)
    ds.validate()
    return ds


def scan_spectrum(
    model: ModelSpec,
    omega_grid,
    t_final: float | None = None,
    cfg: KrylovConfig = KrylovConfig(),
    workers: int = 1,
    sample_every: float | None = None,
    check_decay: bool = True,
) -> SpectrumDataset:
    """Asymptotic spectrum P(t_final, omega_b).

    ``t_final`` defaults to 8 / Gamma.  The returned dataset keeps only the
    final row; ``sample_every`` controls the intermediate grid used for the
    propagation (and therefore matches a time-resolved map on that grid).
    """
    gamma = _fluorescence_rate(model)
    if t_final is None:
        if gamma <= 0:
            raise ValueError("t_final is required when the fluorescence coupling does not decay")
        t_final = DECAY_TARGET / gamma
    if check_decay and gamma * t_final < DECAY_TARGET - 1e-9:
        raise ValueError(f"t_final={t_final:g}: need Gamma * t_final >= {DECAY_TARGET:g} for an asymptotic spectrum")
    if sample_every:
        n = max(1, int(round(t_final / sample_every)))
        grid = np.linspace(0.0, t_final, n + 1)
    else:
        grid = np.array([0.0, t_final])
    ds = time_resolved_map(model, omega_grid, grid, cfg, workers)
    return SpectrumDataset(ds.omega_grid, ds.time_grid[-1:], ds.P[-1:], ds.Pm[-1:], ds.metadata)


def _fluorescence_rate(model: ModelSpec) -> float:
    return float(model.gamma)


# ----------------------------------------------------------------------
# peaks


@dataclass(frozen=True)
class PeakMetrics:
    peak_frequency: float
    height: float
    rise_time: float
    flagged: bool = False
    note: str = ""


def local_maxima(omega, P, window=None, floor: float = NOISE_FLOOR, prominence: float | None = None):
    """Interior local maxima of P (optionally restricted to a window), above ``floor``."""
    omega = np.asarray(omega, dtype=float)
    P = np.asarray(P, dtype=float)
    idx, _ = find_peaks(P, height=floor, prominence=prominence)
    if window is not None:
        lo, hi = window
        idx = idx[(omega[idx] >= lo) & (omega[idx] <= hi)]
    return idx


def half_rise_time(times, values, level) -> float:
    """Earliest time where ``values`` reaches ``level``, linearly interpolated."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    hit = np.flatnonzero(values >= level)
    if len(hit) == 0:
        return float("nan")
    i = hit[0]
    if i == 0:
        return float(times[0])
    v0, v1 = values[i - 1], values[i]
    return float(times[i - 1] + (level - v0) / (v1 - v0) * (times[i] - times[i - 1]))


def peak_metrics(ds: SpectrumDataset, peak_window) -> PeakMetrics:
    lo, hi = peak_window
    sel = (ds.omega_grid >= lo) & (ds.omega_grid <= hi)
    if sel.sum() < 5:
        raise ValueError("peak window must contain at least 5 grid points")
    final = ds.P[-1]
    idx = local_maxima(ds.omega_grid, final, window=peak_window)
    if len(idx) == 0:
        j = np.flatnonzero(sel)[np.argmax(final[sel])]
        return PeakMetrics(float(ds.omega_grid[j]), float(final[j]), float("nan"), True, "no local maximum above noise floor")
    j = idx[np.argmax(final[idx])]
    height = float(final[j])
    window_max = ds.P[:, sel].max(axis=1)
    T = half_rise_time(ds.time_grid, window_max, 0.5 * height)
    return PeakMetrics(float(ds.omega_grid[j]), height, T)


def nearest_peak(omega, P, target, window, floor: float = NOISE_FLOOR) -> int | None:
    """Index of the local maximum nearest ``target`` inside ``window``."""
    idx = local_maxima(omega, P, window=window, floor=floor)
    if len(idx) == 0:
        return None
    return int(idx[np.argmin(np.abs(np.asarray(omega)[idx] - target))])


def full_width_half_max(omega, P, index: int) -> float:
    """FWHM of the peak at ``index`` by linear interpolation on both flanks."""
    omega = np.asarray(omega, dtype=float)
    P = np.asarray(P, dtype=float)
    half = 0.5 * P[index]
    i = index
    while i > 0 and P[i] > half:
        i -= 1
    if P[i] > half:
        left = omega[0]
    else:
        left = omega[i] + (half - P[i]) / (P[i + 1] - P[i]) * (omega[i + 1] - omega[i])
    j = index
    while j < len(P) - 1 and P[j] > half:
        j += 1
    if P[j] > half:
        right = omega[-1]
    else:
        right = omega[j - 1] + (P[j - 1] - half) / (P[j - 1] - P[j]) * (omega[j] - omega[j - 1])
    return float(right - left)


# ----------------------------------------------------------------------
# first order in the fluorescence coupling


def _phi1(w: np.ndarray) -> np.ndarray:
    """(e^w - 1) / w, with a Taylor branch near w = 0."""
    w = np.asarray(w, dtype=complex)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-2
    ws = w[small]
    out[small] = 1 + ws / 2 + ws**2 / 6 + ws**3 / 24 + ws**4 / 120 + ws**5 / 720
    wl = w[~small]
    out[~small] = np.expm1(wl) / wl
    return out


def first_order_probability(energies, couplings, rates, coeffs, omegas, t=None, active_tol: float = 0.0):
    """One-photon probability to first order in decaying couplings.

    ``couplings`` is a list of matrices S^k in the eigenbasis of the
    photon-free Hamiltonian (coupling strengths folded in), each switched
    on with ``exp(-rates[k] t)``.  ``coeffs`` are the initial-state
    amplitudes in that eigenbasis.  With ``t=None`` the t -> infinity limit
    is returned (all rates must be positive).
    """
    E = np.asarray(energies, dtype=float)
    c = np.asarray(coeffs, dtype=complex)
    active = np.flatnonzero(np.abs(c) > active_tol) if active_tol > 0 else np.arange(len(c))
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    if t is None and min(rates) <= 0:
        raise ValueError("the asymptotic limit needs positive decay rates")
    S = np.ascontiguousarray(np.stack([np.asarray(M, dtype=float)[:, active] for M in couplings]))
    r = np.asarray(rates, dtype=float)
    ca = np.ascontiguousarray(c[active])
    Ea = np.ascontiguousarray(E[active])
    tt = -1.0 if t is None else float(t)
    out = np.empty(len(omegas))
    for i, w in enumerate(omegas):
        amp = first_order_amplitude(E, Ea, S, r, ca, float(w), tt)
        out[i] = float(np.sum(amp.real**2 + amp.imag**2))
    return out


def static_first_order(model: ModelSpec, omegas, t=None) -> np.ndarray:
    """First-order-in-g_b spectrum of a static model (dual route to propagation)."""
    H = build_hamiltonian(model)
    layout = H.layout
    # photon-free block: fluorescence index 0 of the static part
    idx0 = np.flatnonzero(layout.label_values(FLUORESCENCE) == 0)
    idx1 = np.flatnonzero(layout.label_values(FLUORESCENCE) == 1)
    Hs = H.base.toarray()[np.ix_(idx0, idx0)].real
    E, V = np.linalg.eigh(Hs)
    # coupling matrix element <., m=1| M |., m=0> restricted to the electron/pump part
    M = H.terms[0][0].toarray()[np.ix_(idx1, idx0)].real
    S = model.g_b * (V.T @ M @ V)
    psi0 = initial_state(model).amplitudes[idx0]
    c = V.T @ psi0
    return first_order_probability(E, [S], [model.gamma], c, omegas, t)
