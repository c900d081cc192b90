"""scikit-learn style façades over the functional API.

The estimators take frequencies (or couplings) as a single-column input
array and return the corresponding observable, so they slot into
pipelines, ``clone`` and ``get_params``/``set_params`` tooling.  "Fitting"
builds and validates the model; nothing is learned from data.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dicke import critical_lambda_a, lowest_mode, stiffness_matrix
from .hamiltonian import build_hamiltonian
from .models import ModelSpec
from .propagator import KrylovConfig
from .spectra import DECAY_TARGET, scan_spectrum, static_first_order


def _column(X, name: str) -> np.ndarray:
    X = check_array(X, ensure_2d=True, dtype=np.float64)
    if X.shape[1] != 1:
        raise ValueError(f"{name} must be a single column, got shape {X.shape}")
    return X[:, 0]


def _as_spec(model) -> ModelSpec:
    if isinstance(model, ModelSpec):
        return model
    if isinstance(model, dict):
        return ModelSpec.from_dict(model)
    raise TypeError("model must be a ModelSpec or a dict of ModelSpec fields")


class FluorescenceSpectrum(TransformerMixin, BaseEstimator):
    """All-orders asymptotic spectrum: X = omega_b column -> P column."""

    def __init__(self, model=None, krylov_dim: int = 12, dt: float = 0.05, t_final=None, workers: int = 1):
        self.model = model
        self.krylov_dim = krylov_dim
        self.dt = dt
        self.t_final = t_final
        self.workers = workers

    def fit(self, X=None, y=None):
        spec = _as_spec(self.model)
        self.spec_ = spec
        self.config_ = KrylovConfig(krylov_dim=self.krylov_dim, dt=self.dt)
        self.dim_ = build_hamiltonian(spec).dim
        self.t_final_ = self.t_final if self.t_final is not None else DECAY_TARGET / spec.gamma
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        omegas = _column(X, "omega_b")
        ds = scan_spectrum(self.spec_, omegas, self.t_final_, self.config_, self.workers)
        return ds.final.reshape(-1, 1)


class PerturbativeSpectrum(TransformerMixin, BaseEstimator):
    """First order in the fluorescence coupling; same input/output layout."""

    def __init__(self, model=None, t=None):
        self.model = model
        self.t = t

    def fit(self, X=None, y=None):
        self.spec_ = _as_spec(self.model)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        omegas = _column(X, "omega_b")
        return static_first_order(self.spec_, omegas, self.t).reshape(-1, 1)


class CriticalCoupling(BaseEstimator):
    """Normal-mode stability of the three-oscillator model.

    ``predict`` maps a lambda_b column to the critical lambda_a (NaN where
    none exists); ``transform`` maps (lambda_a, lambda_b) rows to Omega_0.
    """

    def __init__(self, omega_s: float = 1.0, omega_a: float = 0.5, omega_b: float = 1.0):
        self.omega_s = omega_s
        self.omega_a = omega_a
        self.omega_b = omega_b

    def fit(self, X=None, y=None):
        if min(self.omega_s, self.omega_a, self.omega_b) <= 0:
            raise ValueError("frequencies must be positive")
        self.frequencies_ = (float(self.omega_s), float(self.omega_a), float(self.omega_b))
        return self

    def predict(self, X):
        check_is_fitted(self, "frequencies_")
        out = []
        for lb in _column(X, "lambda_b"):
            root = critical_lambda_a(*self.frequencies_, lb)
            out.append(np.nan if root is None else root)
        return np.asarray(out)

    def transform(self, X):
        check_is_fitted(self, "frequencies_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 2:
            raise ValueError("expected columns (lambda_a, lambda_b)")
        vals = [lowest_mode(stiffness_matrix(*self.frequencies_, la, lb)).omega0 for la, lb in X]
        return np.asarray(vals).reshape(-1, 1)
