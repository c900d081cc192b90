import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpfluor.dressed import (
    dressed_energies,
    energy_levels_vs_coupling,
    parity_classify,
    parity_expectation,
    parity_operator,
    parity_signs,
    single_mode_parts,
    sorted_levels,
)
from mpfluor.fock import initial_state
from mpfluor.hamiltonian import build_array, build_two_level
from mpfluor.io import read_table
from mpfluor.models import ModelSpec


def single_mode(**kw):
    base = dict(family="two_level", alpha=1.0, g_a=0.1, n_a_max=20, n_b_max=0, g_b=0.0)
    base.update(kw)
    return ModelSpec(**base)


def test_dressed_pair_example():
    d = dressed_energies(1, 0.0, 1.0, 1.0, 0.1)
    assert d.plus == pytest.approx(1.1) and d.minus == pytest.approx(0.9)
    z = dressed_energies(5, 0.0, 1.0, 1.0, 0.0)
    assert z.splitting == 0.0
    assert dressed_energies(0, 0.0, 1.0, 1.0, 0.1).flagged


@given(st.integers(1, 400), st.floats(0.0, 1.0, allow_subnormal=False), st.floats(0.1, 3.0))
def test_splitting_identity(n, g, w):
    # operand order differs from the implementation, so allow a few ulps
    d = dressed_energies(n, 0.0, w, w, g)
    assert d.splitting == pytest.approx(2 * g * np.sqrt(n), rel=4 * np.finfo(float).eps, abs=0.0)


def test_successive_splittings_large_n():
    g, alpha = 0.02, 5.0
    n = int(alpha**2)
    a, b = dressed_energies(n, 0.0, 1.0, 1.0, g), dressed_energies(n + 1, 0.0, 1.0, 1.0, g)
    assert b.plus - a.minus == pytest.approx(1 + 2 * g * alpha, abs=2e-3)
    assert b.minus - a.plus == pytest.approx(1 - 2 * g * alpha, abs=2e-3)
    assert b.plus - a.plus == pytest.approx(1.0, abs=2e-3)


def test_resonant_dressed_levels_in_rwa_limit():
    # JC doublets appear as eigenvalues of the full (counter-rotating) model up to Bloch-Siegert O(g^2)
    m = single_mode(g_a=0.005, n_a_max=30, alpha=0.0)
    E = sorted_levels(m, 0.005)
    for n in (1, 4, 9):
        d = dressed_energies(n, 0.0, 1.0, 1.0, 0.005)
        for e in (d.plus, d.minus):
            assert np.min(np.abs(E - e)) < 5 * 0.005**2 * n


def test_uncoupled_eigenvalues():
    m = single_mode(g_a=0.0, omega_a=0.5)
    E = sorted_levels(m, 0.0)
    ref = np.sort(np.concatenate([np.arange(21) * 0.5, 1 + np.arange(21) * 0.5]))
    assert np.max(np.abs(E - ref)) < 1e-14


@given(st.floats(0.0, 0.3))
@settings(max_examples=20, deadline=None)
def test_levels_even_in_coupling(g):
    m = single_mode(omega_a=0.5, n_a_max=15)
    assert np.max(np.abs(sorted_levels(m, g) - sorted_levels(m, -g))) < 1e-12


def test_avoided_crossing_second_order():
    # omega_a = 1/2: |1, n+2> and |2, n> are degenerate at g = 0 and split at order g^2
    m = single_mode(omega_a=0.5, n_a_max=20)
    h0, c = single_mode_parts(m)
    gs = np.array([0.005, 0.01, 0.02])
    gaps = []
    for g in gs:
        E = np.linalg.eigvalsh(h0 + g * c)
        near = np.sort(E[np.abs(E - 1.5) < 0.1])
        gaps.append(near[1] - near[0])
    slope = np.polyfit(np.log(gs), np.log(gaps), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


def test_level_curves_tracking_and_csv(tmp_path):
    m = single_mode(omega_a=0.5, n_a_max=12)
    curves = energy_levels_vs_coupling(m, np.linspace(0, 0.2, 21), n_levels=8)
    assert curves.energies.shape == (21, 8)
    # tracked columns move continuously
    assert np.max(np.abs(np.diff(curves.energies, axis=0))) < 0.05
    path = curves.to_csv(tmp_path / "levels.csv")
    header, data = read_table(path)
    assert header == ["g_a", "level", "energy"] and len(data) == 21 * 8
    with pytest.raises(ValueError, match="n_a_max"):
        energy_levels_vs_coupling(single_mode(n_a_max=61, allow_short_cutoff=True), [0.0])


def test_parity_operator_properties():
    H = build_two_level(ModelSpec(family="two_level", alpha=1.0, g_a=0.1, g_b=0.01, gamma=0.02, n_a_max=10, n_b_max=3))
    P = parity_operator(H.layout)
    assert (P @ P - np.eye(H.dim)).max() == 0 and abs(P - P.T).max() == 0
    assert np.array_equal(parity_signs(H.layout, -1), -parity_signs(H.layout))
    with pytest.raises(ValueError):
        parity_signs(H.layout, 2)


def test_low_states_have_definite_parity():
    m = ModelSpec(family="two_level", alpha=1.0, g_a=0.1, g_b=0.01, gamma=0.02, n_a_max=12, n_b_max=3)
    res = parity_classify(build_two_level(m), n_states=20)
    assert res.commutator < 1e-12 and not res.flagged
    assert np.max(np.abs(np.abs(res.parities) - 1)) < 1e-8
    flipped = parity_classify(build_two_level(m), n_states=20, convention=-1)
    assert np.allclose(flipped.parities, -res.parities, atol=1e-8)


def test_ground_state_support():
    # even states live on |1, even n> and |2, odd n> in the fluorescence vacuum
    m = single_mode(g_a=0.1)
    res = parity_classify(build_two_level(m), n_states=1)
    E, V = np.linalg.eigh(build_two_level(m).static.toarray())
    gs = V[:, 0]
    e, n, _ = build_two_level(m).layout.multi_index(np.arange(len(gs)))
    odd_support = ((e == 0) & (n % 2 == 1)) | ((e == 1) & (n % 2 == 0))
    assert res.parities[0] == pytest.approx(1.0)
    assert np.max(np.abs(gs[odd_support])) < 1e-12


def test_array_parity():
    m = ModelSpec(family="array", n_atoms=3, omega_a=0.5, alpha=1.0, g_a=0.03, g_b=0.01, gamma=0.02, n_a_max=10, n_b_max=2)
    res = parity_classify(build_array(m), n_states=12)
    assert res.commutator < 1e-12
    assert np.max(np.abs(np.abs(res.parities) - 1)) < 1e-8


def test_coherent_state_breaks_parity():
    m = ModelSpec(family="two_level", alpha=1.0, g_a=0.1, n_a_max=30, n_b_max=2)
    psi = initial_state(m)
    signs = parity_signs(psi.layout)
    val = parity_expectation(psi, signs)
    assert 0 < abs(val) < 1
    assert val == pytest.approx(np.exp(-2.0), rel=1e-9)
    number = np.zeros(psi.layout.total_dim)
    number[psi.layout.flat_index((0, 3, 0))] = 1
    assert parity_expectation(number, signs) == -1.0
