import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirac_sk import perturbation as pt
from dirac_sk.clifford import build_gamma_set
from dirac_sk.lattice_gauge import GaugeField, LatticeGeometry

from conftest import J_GENERIC, J_UNIFORM


def random_antisymmetric(rng, n, rank_drop=0):
    a = rng.normal(size=(n, n))
    a = a - a.T
    if rank_drop:
        P = np.eye(n)[:, : n - rank_drop]
        a = P @ P.T @ a @ P @ P.T
    return a


@settings(deadline=None, max_examples=40)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1), st.sampled_from([0, 2]))
def test_block_diagonalize(k, seed, drop):
    n = 2 * k
    J = random_antisymmetric(np.random.default_rng(seed), n, drop if n > drop else 0)
    dec = pt.block_diagonalize(J)
    assert dec.orthogonality_defect() < 1e-12
    assert dec.block_defect() < 1e-10
    assert np.all(dec.eps >= 0) and np.all(np.diff(dec.eps) <= 1e-12)
    assert np.allclose(np.sort(np.concatenate([dec.eps, dec.eps])), np.sort(np.abs(np.linalg.eigvals(J).imag)), atol=1e-9)


def test_block_diagonalize_validation():
    with pytest.raises(ValueError):
        pt.block_diagonalize(np.eye(2))
    with pytest.raises(ValueError):
        pt.block_diagonalize(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        pt.block_diagonalize(1j * np.array([[0, 1], [-1, 0]]))


@pytest.mark.parametrize("J", [J_UNIFORM, J_GENERIC])
def test_sector_hopping_matrix(J):
    geom = LatticeGeometry(2, 2)
    g = GaugeField.random(geom, np.random.default_rng(0))
    h = pt.hopping_matrix(g.to_bits(), J, geom)
    assert h.shape == (geom.N, geom.N)
    assert np.abs(h + h.T).max() == 0


@settings(deadline=None, max_examples=20)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 2), (4, 2)]), st.sampled_from([J_UNIFORM, J_GENERIC]))
def test_master_matrix_is_stochastic(seed, shape, J):
    geom = LatticeGeometry(*shape)
    g = GaugeField.random(geom, np.random.default_rng(seed))
    M = pt.sector_master_matrix(g.to_bits(), J, geom)
    assert np.allclose(M.matrix, M.matrix.T)
    assert np.abs(M.matrix.sum(axis=0)).max() < 1e-12  # probability conserved
    assert np.all(M.matrix - np.diag(np.diag(M.matrix)) >= -1e-15)
    # every site flips one c-mode and one d-mode with total weight 1
    assert np.allclose(M.weights.sum(), geom.N)
    ev = M.eigenvalues()
    assert ev[0] == pytest.approx(0, abs=1e-12) and np.all(ev <= 1e-12)


def test_master_labels():
    M = pt.uniform_master_matrix(4)
    for i in range(16):
        assert M.index(*M.label(i)) == i
    assert M.label(0b1001) == ((1, 0), (0, 1))


@pytest.mark.parametrize("N", [2, 4, 6, 8])
def test_uniform_matches_closed_form(N):
    M = pt.uniform_master_matrix(N)
    assert np.abs(M.eigenvalues() - pt.lambda_spectrum(N)).max() < 1e-9


@pytest.mark.parametrize("shape", [(2, 2), (4, 2)])
@pytest.mark.parametrize("J", [J_UNIFORM, J_GENERIC])
def test_translation_invariant_sector_has_uniform_weights(shape, J):
    geom = LatticeGeometry(*shape)
    M = pt.sector_master_matrix(GaugeField.uniform(geom).to_bits(), J, geom)
    assert np.allclose(M.weights, 4.0 / geom.N, atol=1e-12)
    assert np.abs(M.eigenvalues() - pt.lambda_spectrum(geom.N)).max() < 1e-9


def test_closed_form_values():
    assert pt.lambda_closed_form([1, 1], [1, 1]) == 0
    assert pt.lambda_closed_form([1, 1], [-1, -1]) == -8
    assert pt.lambda_closed_form([1, -1], [1, 1]) == -4
    with pytest.raises(ValueError):
        pt.lambda_closed_form([0, 1], [1, 1])
    with pytest.raises(ValueError):
        pt.uniform_master_matrix(3)


def test_small_gamma_slope():
    assert pt.small_gamma_slope(pt.uniform_master_matrix(4)) == pytest.approx(4.0)


def test_delta_table_shape():
    t = pt.DELTA_TILDE.signs
    assert t.shape == (4, 8)
    assert set(np.unique(t)) == {-1, 1}
    assert len({tuple(c) for c in t.T}) == 8  # labels are distinguishable
    assert np.all(t[:, 0] == 1)
    assert pt.DELTA_TILDE(2, 5) == -1
    with pytest.raises(ValueError):
        t[0, 0] = -1


def test_delta_table_matches_gamma_algebra():
    derived = {tuple(r) for r in pt.derived_sign_patterns()}
    table = {tuple(c) for c in pt.DELTA_TILDE.signs.T}
    assert derived == table


def test_bond_maps_are_involutions():
    D = pt.bond_maps()
    for d in range(4):
        assert np.allclose(D[d] @ D[d], np.eye(8))
    A = pt.stable_operators()
    G5 = build_gamma_set(2)[5]
    for a in A:
        # stable operators commute with the dissipator channel
        assert np.allclose(G5 @ a @ G5, a)


def test_s_values_basic():
    geom = LatticeGeometry(2, 2)
    for q in range(1, 9):
        assert pt.s_eigenvalue(pt.QConfig.uniform(geom, q), geom) == 0
    q = pt.QConfig.single_defect(LatticeGeometry(4, 4), 0, 2, 1)
    assert pt.s_eigenvalue(q, LatticeGeometry(4, 4)) == 4
    assert len(pt.bad_bonds(q, LatticeGeometry(4, 4))) == 2


@settings(deadline=None, max_examples=40)
@given(st.lists(st.integers(1, 8), min_size=8, max_size=8))
def test_s_counts_bad_bonds(labels):
    geom = LatticeGeometry(4, 2)
    q = pt.QConfig(labels)
    s = pt.s_eigenvalue(q, geom)
    assert s == 2 * len(pt.bad_bonds(q, geom))
    assert s % 2 == 0 and 0 <= s <= 4 * geom.N


def test_qconfig_validation():
    with pytest.raises(ValueError):
        pt.QConfig((0, 1))
    with pytest.raises(ValueError):
        pt.s_eigenvalue(pt.QConfig((1, 1)), LatticeGeometry(2, 2))
    with pytest.raises(ValueError):
        pt.all_configs(LatticeGeometry(4, 4))
    with pytest.raises(ValueError):
        pt.min_nonzero_s(LatticeGeometry(2, 2), "pairs")


def test_min_nonzero_s_restrictions():
    geom = LatticeGeometry(2, 2)
    assert pt.min_nonzero_s(geom, "uniform") is None
    assert pt.min_nonzero_s(geom, "single") == 4


@settings(deadline=None, max_examples=60)
@given(st.floats(0, 200), st.floats(0.01, 100))
def test_large_gamma_roots(s, gamma):
    slow, fast = pt.large_gamma_rates(s, gamma)
    for w in (slow, fast):
        scale = max(abs(w) ** 2, 4 * gamma * abs(w), 2 * s, 1.0)
        assert abs(w**2 + 4 * gamma * w + 2 * s) <= 1e-12 * scale
    assert slow.real >= fast.real - 1e-12 * gamma


def test_large_gamma_asymptotics():
    slow, fast = pt.large_gamma_rates(4, 1e4)
    assert slow.real == pytest.approx(-4 / (2 * 1e4), rel=1e-6)
    assert fast.real == pytest.approx(-4e4, rel=1e-6)
    with pytest.raises(ValueError):
        pt.large_gamma_rates(2, 0)
    assert pt.dissipator_sector_rate(3, 0.5) == -3.0
    with pytest.raises(ValueError):
        pt.dissipator_sector_rate(-1, 1.0)


@pytest.mark.parametrize("shape", [(4, 4), (6, 2)])
@pytest.mark.parametrize("J", [J_UNIFORM, J_GENERIC])
def test_plane_wave_basis_gives_uniform_weights(shape, J):
    # degenerate levels (including zero modes) are resolved by translations
    geom = LatticeGeometry(*shape)
    h = pt.hopping_matrix(GaugeField.uniform(geom).to_bits(), J, geom)
    T = pt.lattice_translations(h, geom)
    assert len(T) == 4
    dec = pt.block_diagonalize(h, T)
    assert dec.block_defect() < 1e-10 and dec.orthogonality_defect() < 1e-12
    assert np.allclose(pt.flip_weights(dec, geom), 4.0 / geom.N, atol=1e-12)


def test_generic_sector_has_no_translations():
    geom = LatticeGeometry(4, 4)
    g = GaugeField.random(geom, np.random.default_rng(5))
    assert pt.lattice_translations(pt.hopping_matrix(g.to_bits(), J_GENERIC, geom), geom) == []
