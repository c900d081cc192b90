"""Declarative model descriptions shared by every builder.

A :class:`ModelSpec` carries all physical parameters and truncations of one
model family.  Static families work in units of the level spacing
(``hbar = 1``, time unit ``hbar / eps``); the moving-atom family works in
atomic units.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from enum import Enum
from typing import Any


class Family(str, Enum):
    TWO_LEVEL = "two_level"
    THREE_LEVEL_V1 = "three_level_v1"
    THREE_LEVEL_V2 = "three_level_v2"
    ARRAY = "array"
    MOVING_ATOM = "moving_atom"
    SEMICLASSICAL = "semiclassical"
    RWA_AEA = "rwa_aea"


STATIC_FAMILIES = frozenset(
    {
        Family.TWO_LEVEL,
        Family.THREE_LEVEL_V1,
        Family.THREE_LEVEL_V2,
        Family.ARRAY,
        Family.RWA_AEA,
    }
)

# fields that must never be negative
_NONNEGATIVE = (
    "g_b", "f", "gamma", "gamma1", "gamma2", "g1", "g2", "sigma",
)


class SpecError(ValueError):
    """Invalid model or run configuration; the message names the key."""


@dataclass(frozen=True)
class ModelSpec:
    family: Family = Family.TWO_LEVEL
    units: str = "energy"

    # electronic levels
    eps1: float = 0.0
    eps2: float = 1.0
    eps3: float | None = None

    # field modes
    omega_a: float = 1.0
    omega_b: float = 1.0
    alpha: float = 0.0
    n_a_max: int | None = None
    n_b_max: int = 10
    allow_short_cutoff: bool = False

    # couplings and damping
    g_a: float | None = None
    g_b: float = 0.0
    f: float = 0.0
    gamma: float = 0.0

    # array
    n_atoms: int = 1
    omega_i: tuple[float, ...] | None = None

    # moving atom (atomic units)
    mass: float = 10.0
    length: float = 1.0e5
    x1: float = 4.0e4
    x2: float = 5.0e4
    n_grid: int = 250
    x0: float = 3.5e4
    sigma: float = 3.0e4
    p0: float = 0.0
    g1: float = 0.0
    g2: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    include_fluorescence: bool = True
    boundary_tol: float = 1e-6

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        if self.omega_i is not None:
            object.__setattr__(self, "omega_i", tuple(float(w) for w in self.omega_i))
        self.validate()

    # ------------------------------------------------------------------
    @property
    def eps(self) -> float:
        """Transition energy of the driven pair of levels."""
        if self.family in (Family.THREE_LEVEL_V1, Family.THREE_LEVEL_V2, Family.RWA_AEA):
            return float(self.eps3) - self.eps1
        return self.eps2 - self.eps1

    @property
    def coupling_a(self) -> float:
        return 0.0 if self.g_a is None else float(self.g_a)

    @property
    def pump_cutoff(self) -> int:
        from .fock import default_cutoff

        if self.n_a_max is not None:
            return int(self.n_a_max)
        return default_cutoff(self.alpha)

    @property
    def has_pump_mode(self) -> bool:
        return self.family is not Family.SEMICLASSICAL

    @property
    def has_fluorescence_mode(self) -> bool:
        if self.family is Family.MOVING_ATOM:
            return self.include_fluorescence
        return True

    def validate(self) -> None:
        for name in _NONNEGATIVE:
            value = getattr(self, name)
            if value < 0:
                raise SpecError(f"{name}={value!r}: must be nonnegative")
        if self.g_a is not None and self.g_a < 0:
            raise SpecError(f"g_a={self.g_a!r}: must be nonnegative")
        if self.units not in ("energy", "atomic"):
            raise SpecError(f"units={self.units!r}: must be 'energy' or 'atomic'")
        if self.family is Family.MOVING_ATOM and self.units != "atomic":
            raise SpecError("units: moving-atom models are declared in atomic units")
        if self.n_b_max < 0:
            raise SpecError(f"n_b_max={self.n_b_max!r}: must be nonnegative")
        if self.n_a_max is not None and self.n_a_max < 0:
            raise SpecError(f"n_a_max={self.n_a_max!r}: must be nonnegative")
        if self.n_atoms < 1:
            raise SpecError(f"n_atoms={self.n_atoms!r}: must be a positive integer")
        if not math.isfinite(self.alpha):
            raise SpecError("alpha: must be finite")
        if self.family in (Family.THREE_LEVEL_V1, Family.THREE_LEVEL_V2, Family.RWA_AEA):
            if self.eps3 is None:
                raise SpecError(f"eps3: required for family {self.family.value}")
        if self.family is Family.THREE_LEVEL_V2 and self.g_a is None:
            raise SpecError("g_a: the V2 three-level model needs the direct 1<->3 pump coupling")
        if self.family is Family.ARRAY and self.omega_i is not None:
            if len(self.omega_i) != self.n_atoms:
                raise SpecError("omega_i: one splitting per atom is required")
            if max(self.omega_i) - min(self.omega_i) > 0.0:
                raise SpecError(
                    "omega_i: unequal splittings leave the collective-spin sector; "
                    "only equal omega_i are supported"
                )
        if self.family is Family.MOVING_ATOM:
            if not (0.0 < self.x1 < self.x2 < self.length):
                raise SpecError("x1, x2: need 0 < x1 < x2 < length")
            if self.mass <= 0:
                raise SpecError(f"mass={self.mass!r}: must be positive")
            if self.n_grid < 2:
                raise SpecError(f"n_grid={self.n_grid!r}: too few grid points")
            if self.sigma <= 0:
                raise SpecError(f"sigma={self.sigma!r}: must be positive")
        if self.has_pump_mode:
            from .fock import CoherentSpec

            CoherentSpec(self.alpha, self.pump_cutoff, override=self.allow_short_cutoff)

    # ------------------------------------------------------------------
    def replace(self, **changes: Any) -> "ModelSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for fld in fields(self):
            value = getattr(self, fld.name)
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            out[fld.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelSpec":
        known = {fld.name for fld in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SpecError(f"unknown model keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise SpecError(str(exc)) from exc


def resolved_cutoffs(spec: ModelSpec) -> dict[str, int]:
    """Truncations actually used when building the basis."""
    out = {"n_b_max": spec.n_b_max}
    if spec.has_pump_mode:
        out["n_a_max"] = spec.pump_cutoff
    return out
