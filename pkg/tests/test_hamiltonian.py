import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mpfluor.dressed import commutator_norm, parity_signs
from mpfluor.fock import PUMP, position_grid
from mpfluor.hamiltonian import (
    ExpDecay,
    build_array,
    build_hamiltonian,
    build_moving_atom,
    build_rwa_aea,
    build_semiclassical,
    build_three_level,
    build_two_level,
    evaluate,
    kinetic_matrix,
    pump_profile,
    spin_jx,
)
from mpfluor.models import ModelSpec, SpecError


def two_level(**kw):
    base = dict(family="two_level", alpha=1.0, g_a=0.1, g_b=0.01, gamma=0.02, n_a_max=12, n_b_max=3)
    base.update(kw)
    return ModelSpec(**base)


def element(H, layout, bra, ket, t=0.0):
    M = H.evaluate(t)
    return M[layout.flat_index(bra), layout.flat_index(ket)]


def test_pump_ladder_elements():
    m = two_level()
    H = build_two_level(m)
    L = H.layout
    for n in range(1, 13):
        for mb in range(4):
            assert element(H, L, (0, n, mb), (1, n - 1, mb)) == pytest.approx(0.1 * np.sqrt(n), abs=1e-15)
            # counter-rotating partner is present too
            assert element(H, L, (0, n - 1, mb), (1, n, mb)) == pytest.approx(0.1 * np.sqrt(n), abs=1e-15)


def test_uncoupled_limit_is_diagonal():
    m = two_level(g_a=0.0, g_b=0.0, omega_a=0.7, omega_b=1.3)
    H = build_two_level(m)
    M = H.evaluate(3.0).toarray()
    assert np.count_nonzero(M - np.diag(np.diag(M))) == 0
    i, n, mb = H.layout.multi_index(np.arange(H.dim))
    expected = np.where(i == 0, 0.0, 1.0) + 0.7 * n + 1.3 * mb
    assert np.allclose(np.diag(M), expected, atol=1e-14)


@pytest.mark.parametrize("t", [0.0, 5.0])
def test_two_level_commutes_with_parity(t):
    H = build_two_level(two_level())
    assert commutator_norm(H, parity_signs(H.layout), t) < 1e-12


def all_models():
    return [
        two_level(),
        ModelSpec(family="three_level_v1", eps2=0.5, eps3=1.0, omega_a=0.5, f=0.1, alpha=1.0, g_b=0.01, gamma=0.02, n_b_max=3),
        ModelSpec(family="three_level_v2", eps2=0.5, eps3=1.0, omega_a=0.5, f=0.1, g_a=0.1, alpha=1.0, g_b=0.01, gamma=0.02, n_b_max=3),
        ModelSpec(family="array", n_atoms=4, omega_a=0.5, alpha=1.0, g_a=0.03, g_b=0.01, gamma=0.02, n_b_max=3),
        ModelSpec(family="semiclassical", alpha=1.0, g_a=0.1, g_b=0.01, gamma=0.02, n_b_max=3),
        ModelSpec(family="rwa_aea", eps3=1.0, omega_a=0.5, f=0.01, alpha=1.0, g_b=0.01, gamma=0.02, n_b_max=3),
        ModelSpec(
            family="moving_atom", units="atomic", eps2=0.043, omega_a=0.043, omega_b=0.043, alpha=1.0, n_a_max=3,
            allow_short_cutoff=True, g_a=0.0043, g1=0.0043, g2=0.00043, gamma1=0.0004, gamma2=0.0008,
            n_grid=120, boundary_tol=0.02,
        ),
    ]


@pytest.mark.parametrize("model", all_models(), ids=lambda m: m.family.value)
def test_hermitian_builders(model):
    H = build_hamiltonian(model)
    assert H.hermiticity_defect() < 1e-13
    for t in (0.0, 1.3, 50.0):
        M = H.evaluate(t)
        assert abs(M - M.T.conj()).max() < 1e-13


@pytest.mark.parametrize("model", all_models(), ids=lambda m: m.family.value)
def test_matrix_free_apply(model):
    H = build_hamiltonian(model)
    rng = np.random.default_rng(0)
    x = rng.normal(size=H.dim) + 1j * rng.normal(size=H.dim)
    for t in (0.0, 2.5):
        ref = H.evaluate(t) @ x
        assert np.max(np.abs(H.apply(x, t) - ref)) < 1e-14 * max(1.0, np.max(np.abs(ref)))


def test_packed_data_matches_evaluate():
    H = build_hamiltonian(two_level())
    p = H.packed
    for t in (0.0, 7.0):
        M = sp.csr_matrix((p.data_at(t), p.indices, p.indptr), shape=(H.dim, H.dim)) + sp.diags(H.omega_b * p.number_b)
        assert abs(M - H.evaluate(t)).max() < 1e-15


def test_envelope_values():
    H = build_two_level(two_level())
    assert H.envelope_values(0.0)[0] == 0.01
    assert H.envelope_values(100.0)[0] == pytest.approx(0.01 * 0.1353352832366127, rel=1e-14)
    assert ExpDecay(1.0, 0.02)(100.0) == pytest.approx(np.exp(-2.0))
    with pytest.raises(ValueError):
        evaluate(H, -1.0)


def test_three_level_selection_rules():
    v1 = ModelSpec(family="three_level_v1", eps2=0.5, eps3=1.0, omega_a=0.5, f=0.1, alpha=1.0, g_b=0.01, gamma=0.02)
    H = build_three_level(v1)
    L = H.layout
    for n in range(1, 8):
        assert element(H, L, (0, n, 0), (2, n - 1, 0)) == 0.0
        # two pump actions through level 2 connect 1 and 3
        assert element(H, L, (0, n, 0), (1, n - 1, 0)) == pytest.approx(0.1 * np.sqrt(n))
        assert element(H, L, (1, n - 1, 0), (2, n - 2, 0) if n >= 2 else (2, 0, 0)) != 0.0 or n < 2
    v2 = v1.replace(family="three_level_v2", g_a=0.1)
    H2 = build_three_level(v2)
    for n in range(1, 8):
        assert element(H2, H2.layout, (0, n, 0), (2, n - 1, 0)) == pytest.approx(0.1 * np.sqrt(n))
    with pytest.raises(SpecError, match="g_a"):
        v1.replace(family="three_level_v2")


def test_figure3_configuration_constructible():
    m = ModelSpec(
        family="three_level_v2", eps1=0.0, eps2=0.5, eps3=1.0, omega_a=0.5, f=0.1, g_a=0.1, alpha=1.0,
        g_b=0.01, gamma=0.02, n_b_max=10,
    )
    H = build_three_level(m)
    assert H.layout.shape[0] == 3


@given(st.integers(1, 12))
@settings(max_examples=12, deadline=None)
def test_spin_ladder(n_atoms):
    s = n_atoms / 2
    jx = spin_jx(n_atoms).toarray()
    for j in range(n_atoms):
        mval = j - s
        assert jx[j + 1, j] == pytest.approx(0.5 * np.sqrt(s * (s + 1) - mval * (mval + 1)), abs=1e-15)


def test_array_single_atom_matches_two_level():
    kw = dict(alpha=1.0, g_a=0.1, g_b=0.01, gamma=0.02, n_a_max=12, n_b_max=3, omega_a=0.5)
    A = build_array(ModelSpec(family="array", n_atoms=1, **kw))
    T = build_two_level(ModelSpec(family="two_level", **kw))
    for t in (0.0, 3.0):
        D = (A.evaluate(t) - T.evaluate(t)).toarray()
        shift = D[0, 0]
        assert np.max(np.abs(D - shift * np.eye(A.dim))) < 1e-14
        assert shift == pytest.approx(-0.5)


def test_array_dimension_and_parity():
    m = ModelSpec(family="array", n_atoms=10, omega_a=0.5, alpha=3.0, g_a=0.03, g_b=0.01, gamma=0.02, n_b_max=10)
    H = build_array(m)
    assert H.dim == 11 * (m.pump_cutoff + 1) * 11 < 10**5
    assert commutator_norm(H, parity_signs(H.layout), 4.0) < 1e-12
    with pytest.raises(SpecError, match="omega_i"):
        ModelSpec(family="array", n_atoms=2, omega_i=(1.0, 1.1), alpha=1.0)


def test_moving_atom_profile_and_kinetic():
    m = ModelSpec(
        family="moving_atom", units="atomic", eps2=0.043, omega_a=0.043, alpha=1.0, n_a_max=3,
        allow_short_cutoff=True, g_a=0.0043, n_grid=250, boundary_tol=0.02,
    )
    x = position_grid(m)
    prof = pump_profile(m)
    outside = (x < m.x1) | (x > m.x2)
    assert np.all(prof[outside] == 0.0)
    assert np.all(prof[~outside] >= 0)
    T = kinetic_matrix(m)
    assert abs(T - T.T).max() < 1e-15
    with pytest.raises(SpecError, match="n_grid"):
        build_moving_atom(m.replace(n_grid=20))
    H0 = build_moving_atom(m, include_fluorescence=False)
    assert H0.layout.labels == ("electron", "position", "pump-photon")
    assert H0.terms == ()


def test_box_levels():
    # free particle, electron ground, zero photons: finite-difference box modes
    m = ModelSpec(
        family="moving_atom", units="atomic", eps2=0.043, omega_a=0.043, alpha=0.0, n_a_max=0,
        g_a=0.0, n_grid=250, boundary_tol=1.0, x0=5e4, sigma=1e4,
    )
    T = kinetic_matrix(m).toarray()
    E = np.linalg.eigvalsh(T)[:10]
    k = np.arange(1, 11)
    n = m.n_grid
    dx = m.length / (n + 1)
    fd = (1 - np.cos(k * np.pi / (n + 1))) / (m.mass * dx * dx)
    analytic = k**2 * np.pi**2 / (2 * m.mass * m.length**2)
    assert np.allclose(E, fd, rtol=1e-10, atol=0)
    # FD dispersion: E_fd = E_exact (1 - (k pi dx / L)^2 / 12 + ...)
    bound = analytic * (k * np.pi * dx / m.length) ** 2 / 12 * 1.01
    assert np.all(np.abs(E - analytic) <= bound)


def test_semiclassical_reduction():
    a = build_semiclassical(ModelSpec(family="semiclassical", alpha=5.0, g_a=0.02, g_b=0.01, gamma=0.02, n_b_max=3))
    b = build_semiclassical(ModelSpec(family="semiclassical", alpha=1.0, g_a=0.1, g_b=0.01, gamma=0.02, n_b_max=3))
    assert not a.layout.has(PUMP)
    assert a.envelope_values(0.0)[0] == pytest.approx(0.2)
    for t in (0.0, 1.7, 33.0):
        assert abs(a.evaluate(t) - b.evaluate(t)).max() < 1e-15
    z = build_semiclassical(ModelSpec(family="semiclassical", alpha=0.0, g_a=0.1, n_b_max=3))
    assert z.envelope_values(2.0)[0] == 0.0


def test_rwa_aea_two_photon_elements():
    m = ModelSpec(family="rwa_aea", eps3=1.0, omega_a=0.5, f=0.05, alpha=1.0, g_b=0.01, gamma=0.02, n_b_max=3, n_a_max=12)
    H = build_rwa_aea(m)
    L = H.layout
    for n in range(2, 13):
        assert element(H, L, (1, n - 2, 0), (0, n, 0)) == pytest.approx(0.05 * np.sqrt(n * (n - 1)))
    for n in (0, 1):
        col = H.base[:, L.flat_index((0, n, 0))].toarray().ravel()
        col[L.flat_index((0, n, 0))] = 0
        assert np.all(col == 0)
    # no counter-rotating term: raising the atom never creates a pump photon
    assert element(H, L, (1, 3, 0), (0, 1, 0)) == 0.0
