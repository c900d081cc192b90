"""Short iterated Lanczos propagation of time-dependent Schrödinger equations.

Each step applies ``exp(-i H(t + dt/2) dt)`` in an m-dimensional Krylov
subspace.  When the a-posteriori estimate ``beta_m |c_m|`` exceeds the
tolerance, the step is split in two halves (recursively, up to
``max_halvings`` levels).  Many scan frequencies are advanced together as
columns of one block; adaptivity is per column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .hamiltonian import OperatorMatrix


class PropagationError(RuntimeError):
    def __init__(self, message: str, time: float | None = None, omega: float | None = None):
        super().__init__(message)
        self.time = time
        self.omega = omega


@dataclass(frozen=True)
class KrylovConfig:
    krylov_dim: int = 12
    dt: float = 0.05
    step_tolerance: float = 1e-10
    midpoint_rule: bool = True
    max_halvings: int = 20

    def __post_init__(self) -> None:
        if not 2 <= int(self.krylov_dim) <= 64:
            raise ValueError(f"krylov_dim={self.krylov_dim}: need 2 <= krylov_dim <= 64")
        if not self.dt > 0:
            raise ValueError(f"dt={self.dt}: must be positive")
        if not self.step_tolerance > 0:
            raise ValueError(f"step_tolerance={self.step_tolerance}: must be positive")

    def to_dict(self) -> dict:
        return {
            "krylov_dim": self.krylov_dim,
            "dt": self.dt,
            "step_tolerance": self.step_tolerance,
            "midpoint_rule": self.midpoint_rule,
            "max_halvings": self.max_halvings,
        }


@dataclass(frozen=True, eq=False)
class PackedGenerator:
    """Real symmetric H(t) on a fixed CSR pattern plus a diagonal scan shift."""

    indptr: np.ndarray
    indices: np.ndarray
    data_at: Callable[[float], np.ndarray]
    diag_w: np.ndarray

    @classmethod
    def from_operator(cls, H: OperatorMatrix) -> "PackedGenerator":
        if not H.is_real:
            raise NotImplementedError("the Lanczos kernels expect a real symmetric generator")
        p = H.packed
        return cls(p.indptr, p.indices, p.data_at, p.number_b)

    @property
    def dim(self) -> int:
        return len(self.indptr) - 1


@dataclass
class Trajectory:
    times: np.ndarray
    observables: dict[str, np.ndarray]
    final_state: np.ndarray | None = None
    step_errors: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.observables[name]


class _Workspaces:
    def __init__(self) -> None:
        self._by_k: dict[int, _kernels.Workspace] = {}

    def get(self, m: int, dim: int, K: int):
        ws = self._by_k.setdefault(K, _kernels.Workspace())
        return ws.get(m, dim, K)


def _advance(gen, xr, xi, omegas, t, h, cfg, work, depth=0):
    tm = t + 0.5 * h if cfg.midpoint_rule else t
    data = gen.data_at(tm)
    yr = xr.copy()
    yi = xi.copy()
    err = _kernels.krylov_block_step(
        gen.indptr, gen.indices, data, gen.diag_w, omegas, yr, yi, h, cfg.krylov_dim, work
    )
    bad = ~(err <= cfg.step_tolerance)
    if not bad.any():
        xr[:] = yr
        xi[:] = yi
        return
    good = ~bad
    xr[:, good] = yr[:, good]
    xi[:, good] = yi[:, good]
    if depth >= cfg.max_halvings:
        k = int(np.flatnonzero(bad)[0])
        raise PropagationError(
            f"Krylov step tolerance {cfg.step_tolerance:g} not met after {depth} halvings "
            f"(estimate {err[k]:.3g})",
            time=t,
            omega=float(omegas[k]),
        )
    sub = np.flatnonzero(bad)
    sr = np.ascontiguousarray(xr[:, sub])
    si = np.ascontiguousarray(xi[:, sub])
    so = np.ascontiguousarray(omegas[sub])
    _advance(gen, sr, si, so, t, 0.5 * h, cfg, work, depth + 1)
    _advance(gen, sr, si, so, t + 0.5 * h, 0.5 * h, cfg, work, depth + 1)
    xr[:, sub] = sr
    xi[:, sub] = si


def substeps(t0: float, t1: float, dt: float) -> tuple[int, float]:
    """Equal substeps no longer than dt that land exactly on t1."""
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    return n, (t1 - t0) / n


def _check_grid(t_grid) -> np.ndarray:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0:
        raise ValueError("time grid must be a non-empty 1-D array")
    if t_grid[0] != 0.0:
        raise ValueError("time grid must start at 0")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return t_grid


def evolve_block(
    gen: PackedGenerator,
    psi0: np.ndarray,
    omegas,
    t_grid,
    cfg: KrylovConfig = KrylovConfig(),
    observer: Callable[[float, np.ndarray], np.ndarray] | None = None,
    t_start: float = 0.0,
):
    """Advance K copies of a state (one per scan frequency) over a grid.

    ``psi0`` is a single vector (broadcast to every column) or a (dim, K)
    block.  ``observer(t, X)`` receives the complex (dim, K) block at every
    grid time, including the first.  Returns (final block, stacked observer
    outputs or None).
    """
    omegas = np.ascontiguousarray(np.atleast_1d(np.asarray(omegas, dtype=float)))
    K = len(omegas)
    psi0 = np.asarray(psi0)
    if psi0.ndim == 1:
        psi0 = np.repeat(psi0[:, None], K, axis=1)
    if psi0.shape != (gen.dim, K):
        raise ValueError(f"initial block has shape {psi0.shape}, expected {(gen.dim, K)}")
    t_grid = np.asarray(t_grid, dtype=float)
    xr = np.ascontiguousarray(psi0.real, dtype=float)
    xi = np.ascontiguousarray(psi0.imag, dtype=float)
    work = _Workspaces()
    records = []
    if observer is not None:
        records.append(observer(t_grid[0] + t_start, xr + 1j * xi))
    for a, b in zip(t_grid[:-1], t_grid[1:]):
        n, h = substeps(a, b, cfg.dt)
        for j in range(n):
            _advance(gen, xr, xi, omegas, t_start + a + j * h, h, cfg, work)
        if observer is not None:
            records.append(observer(b + t_start, xr + 1j * xi))
    out = xr + 1j * xi
    return out, (np.asarray(records) if observer is not None else None)


def krylov_step(H: OperatorMatrix, psi: np.ndarray, t: float, cfg: KrylovConfig = KrylovConfig()) -> np.ndarray:
    """psi(t + dt) from psi(t) with one (possibly subdivided) Lanczos step."""
    gen = PackedGenerator.from_operator(H)
    xr = np.ascontiguousarray(np.real(psi), dtype=float).reshape(-1, 1)
    xi = np.ascontiguousarray(np.imag(psi), dtype=float).reshape(-1, 1)
    _advance(gen, xr, xi, np.array([H.omega_b]), float(t), cfg.dt, cfg, _Workspaces())
    return (xr + 1j * xi)[:, 0]


def propagate(
    H: OperatorMatrix,
    psi0: np.ndarray,
    t_grid,
    observers: Mapping[str, Callable[[float, np.ndarray], object]] | None = None,
    cfg: KrylovConfig = KrylovConfig(),
    keep_states: bool = False,
) -> Trajectory:
    """Propagate one state; observers are called as ``f(t, psi)``.

    The norm is always recorded.  With ``keep_states`` the full state at
    every grid time is stored under ``"state"``.
    """
    t_grid = _check_grid(t_grid)
    gen = PackedGenerator.from_operator(H)
    psi0 = np.asarray(getattr(psi0, "amplitudes", psi0), dtype=complex)
    observers = dict(observers or {})
    names = list(observers)

    def observe(t, X):
        psi = X[:, 0]
        row = {"norm": np.linalg.norm(psi)}
        for name in names:
            row[name] = observers[name](t, psi)
        if keep_states:
            row["state"] = psi.copy()
        return row

    rows = []

    def collect(t, X):
        rows.append(observe(t, X))
        return 0.0

    try:
        final, _ = evolve_block(gen, psi0, [H.omega_b], t_grid, cfg, collect)
    except PropagationError as exc:
        raise PropagationError(f"propagation failed at t={exc.time}: {exc}", exc.time, exc.omega) from exc
    obs = {key: np.asarray([r[key] for r in rows]) for key in rows[0]}
    return Trajectory(t_grid, obs, final[:, 0])


def dense_propagate(H: OperatorMatrix, psi0: np.ndarray, t_final: float, dt: float) -> np.ndarray:
    """Reference midpoint-exponential integrator with dense expm (small systems)."""
    from scipy.linalg import expm

    psi = np.asarray(getattr(psi0, "amplitudes", psi0), dtype=complex).copy()
    n, h = substeps(0.0, t_final, dt)
    for j in range(n):
        Hm = H.evaluate(j * h + 0.5 * h).toarray()
        psi = expm(-1j * h * Hm) @ psi
    return psi


def energy_expectation(H: OperatorMatrix, psi: np.ndarray, t: float) -> float:
    return float(np.real(np.vdot(psi, H.apply(psi, t))))
