import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mpfluor.estimators import CriticalCoupling, FluorescenceSpectrum, PerturbativeSpectrum
from mpfluor.models import ModelSpec
from mpfluor.propagator import KrylovConfig
from mpfluor.spectra import scan_spectrum, static_first_order

MODEL = dict(family="two_level", alpha=1.0, g_a=0.1, g_b=0.01, gamma=0.1, n_a_max=10, n_b_max=2, allow_short_cutoff=True)


def test_spectrum_estimator_matches_functional_api():
    X = np.linspace(0.8, 1.2, 5).reshape(-1, 1)
    est = FluorescenceSpectrum(model=MODEL, krylov_dim=16, dt=0.2)
    P = est.fit().transform(X)
    ref = scan_spectrum(ModelSpec(**MODEL), X[:, 0], cfg=KrylovConfig(krylov_dim=16, dt=0.2)).final
    assert np.array_equal(P[:, 0], ref)
    assert est.get_params()["dt"] == 0.2
    assert clone(est).get_params() == est.get_params()


def test_input_validation():
    est = FluorescenceSpectrum(model=MODEL)
    with pytest.raises(NotFittedError):
        est.transform([[1.0]])
    est.fit()
    with pytest.raises(ValueError):
        est.transform(np.ones((3, 2)))
    with pytest.raises(ValueError):
        est.transform([[np.nan]])
    with pytest.raises(TypeError):
        FluorescenceSpectrum(model="two_level").fit()


def test_perturbative_estimator():
    X = np.array([[0.9], [1.0]])
    P = PerturbativeSpectrum(model=MODEL).fit_transform(X)
    assert np.array_equal(P[:, 0], static_first_order(ModelSpec(**MODEL), X[:, 0]))


def test_critical_coupling_estimator():
    est = CriticalCoupling(1.0, 1.0, 1.0).fit()
    lb = np.array([[0.0], [0.3], [0.6]])
    pred = est.predict(lb)
    assert pred[0] == pytest.approx(0.5) and pred[1] == pytest.approx(0.4) and np.isnan(pred[2])
    assert est.transform([[0.3, 0.4]])[0, 0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        CriticalCoupling(0.0).fit()
