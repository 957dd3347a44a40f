import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirac_sk import quadratic_spectrum as qs
from dirac_sk.liouville_ed import multiset_distance
from dirac_sk.lattice_gauge import GaugeField, LatticeGeometry, SectorId, gauge_from_sector

from conftest import J_GENERIC, J_UNIFORM, all_sector_results

couplings = st.tuples(*[st.floats(0.2, 4.0)] * 4)
# rates below the zero tolerance (~1e-9) are indistinguishable from zero
gammas = st.one_of(st.just(0.0), st.floats(1e-3, 8.0))


def random_antisymmetric(rng, n, complex_=True):
    a = rng.normal(size=(n, n)) + (1j * rng.normal(size=(n, n)) if complex_ else 0)
    return a - a.T


@settings(deadline=None, max_examples=40)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_pfaffian_squares_to_determinant(k, seed):
    A = random_antisymmetric(np.random.default_rng(seed), 2 * k)
    pf = qs.pfaffian(A)
    assert np.isclose(pf**2, np.linalg.det(A), rtol=1e-9, atol=1e-12)


def test_pfaffian_known_values():
    A = np.array([[0, 2.0], [-2.0, 0]])
    assert qs.pfaffian(A) == pytest.approx(2.0)
    B = np.zeros((4, 4))
    B[0, 1], B[2, 3] = 3.0, 5.0
    B = B - B.T
    assert qs.pfaffian(B) == pytest.approx(15.0)
    stack = np.stack([A, 2 * A])
    assert np.allclose(qs.pfaffian(stack), [2.0, 4.0])


def test_coupling_validation():
    with pytest.raises(ValueError):
        qs.CouplingParams(J_UNIFORM, -0.1)
    with pytest.raises(ValueError):
        qs.CouplingParams((0, 0, 0, 0), 1.0)
    with pytest.raises(ValueError):
        qs.CouplingParams((1, 1, 1), 1.0)


@settings(deadline=None, max_examples=25)
@given(couplings, gammas, st.integers(0, 2**32 - 1))
def test_structure_matrix_antisymmetric(J, gamma, seed):
    geom = LatticeGeometry(2, 2)
    g = GaugeField.random(geom, np.random.default_rng(seed))
    A = qs.assemble_structure_matrix(g, qs.CouplingParams(J, gamma), geom)
    assert A.matrix.shape == (2 * geom.N, 2 * geom.N)
    assert np.abs(A.matrix + A.matrix.T).max() == 0
    assert A.offset == pytest.approx(-1j * gamma * geom.N)


@settings(deadline=None, max_examples=25)
@given(couplings, gammas, st.integers(0, 2**32 - 1))
def test_rapidities_are_eigenvalue_pairs(J, gamma, seed):
    geom = LatticeGeometry(2, 2)
    g = GaugeField.random(geom, np.random.default_rng(seed))
    A = qs.assemble_structure_matrix(g, qs.CouplingParams(J, gamma), geom)
    r = qs.compute_rapidities(A)
    lam = np.linalg.eigvals(A.matrix)
    ours = np.concatenate([r.betas, -r.betas])
    # split Jordan clusters in lam deviate by up to ~eps^(1/4)
    assert multiset_distance(lam, ours) < 1e-3 * max(1.0, np.abs(lam).max())
    assert r.pf_sign in (-1, 0, 1)


@settings(deadline=None, max_examples=30)
@given(couplings, gammas, st.integers(0, 2**13 - 1))
def test_greedy_matches_enumeration(J, gamma, code):
    geom = LatticeGeometry(2, 2)
    s = SectorId.from_int(code, geom.n_sector_bits)
    p = qs.CouplingParams(J, gamma)
    full = qs.solve_sector(s, p, geom, full=True)
    fast = qs.solve_sector(s, p, geom)
    assert fast.zero_mode_count == full.zero_mode_count
    assert fast.min_nonzero_rate == pytest.approx(full.min_nonzero_rate, rel=1e-9, abs=1e-12)
    assert full.full_spectrum.size == 2 ** (geom.N - 1)


@settings(deadline=None, max_examples=25)
@given(couplings, gammas, st.integers(0, 2**13 - 1))
def test_sector_spectrum_properties(J, gamma, code):
    geom = LatticeGeometry(2, 2)
    res = qs.solve_sector(SectorId.from_int(code, 13), qs.CouplingParams(J, gamma), geom, full=True)
    E = res.full_spectrum
    # relaxation rates are nonnegative
    assert np.all(-E.imag >= -1e-9 * max(1.0, np.abs(E).max()))
    # E -> -E* closure within the sector
    d = np.abs(E[:, None] + E.conj()[None, :]).min(axis=1)
    assert d.max() < 1e-8 * max(1.0, np.abs(E).max())
    # the trace of W restricted to a sector is offset * dim
    assert np.sum(E) == pytest.approx(-1j * gamma * geom.N * E.size, abs=1e-8 * E.size)


def test_batched_matches_single():
    geom = LatticeGeometry(2, 2)
    p = qs.CouplingParams(J_GENERIC, 0.7)
    rng = np.random.default_rng(1)
    S = rng.integers(0, 2, (30, geom.n_sector_bits)).astype(np.uint8)
    z, r = qs.evaluate_sectors(S, p, geom)
    for row, zz, rr in zip(S, z, r):
        res = qs.solve_sector(SectorId(row), p, geom)
        assert res.zero_mode_count == zz
        assert res.min_nonzero_rate == pytest.approx(rr, rel=1e-10)


def test_parity_prefactor_counts_states():
    # every sector contributes exactly half of the 2^(2N) patterns
    geom = LatticeGeometry(2, 2)
    res = qs.solve_sector(SectorId.from_int(5, 13), qs.CouplingParams(J_UNIFORM, 0.4), geom, full=True)
    assert res.full_spectrum.size * 2**geom.n_sector_bits == 16**geom.N
    assert qs.bilayer_parity_prefactor(2, 2) in (-1, 1)


def test_zero_gamma_has_no_decay():
    geom = LatticeGeometry(2, 2)
    res = qs.solve_sector(SectorId.from_int(0, 13), qs.CouplingParams(J_UNIFORM, 0.0), geom, full=True)
    assert np.abs(res.full_spectrum.imag).max() < 1e-10


def test_pairing_failure_raises():
    with pytest.raises(ValueError):
        qs.pair_eigenvalues(np.array([1.0, 2.0]))


def test_merge_clusters_collapses_split_pairs():
    lam = np.array([1 + 1e-7, 1 - 1e-7, -1 + 1e-7, -1 - 1e-7, 3.0, -3.0])
    out = qs.merge_clusters(lam, 1e-5)
    assert np.allclose(out[:4], [1, 1, -1, -1], atol=1e-14)
    assert np.allclose(out[4:], [3, -3])


def test_jordan_block_recovered():
    # u v^T - v u^T with u.u = v.v = u.v = 0 is nilpotent but nonzero
    u, v = np.array([1, 1j, 0, 0]), np.array([0, 0, 1, 1j])
    A = np.outer(u, v) - np.outer(v, u)
    lam = qs.stable_eigvals(A)
    assert np.abs(lam).max() < 1e-9
    r = qs.compute_rapidities(A)
    assert np.abs(r.betas).max() < 1e-9
    assert r.pf_sign == 0


def test_fallback_skips_extended_precision_for_large_matrices():
    rng = np.random.default_rng(2)
    A = random_antisymmetric(rng, qs.MAX_EP_DIM + 2)
    with pytest.warns(RuntimeWarning):
        lam = qs.fallback_eigvals(A)
    assert lam.size == A.shape[0]


def test_coefficient_check_rejects_distinct_merge():
    A = np.diag([1.0, 1.001, -1.0, -1.001]).astype(complex)
    lam = np.linalg.eigvals(A)
    sv = np.linalg.svd(A, compute_uv=False)
    assert qs.coefficients_consistent(lam, lam, sv)
    assert not qs.coefficients_consistent(lam, qs.merge_clusters(lam, 1e-2), sv)


def test_exceptional_point_sectors_agree_with_reference():
    # rows of the 2x2 uniform sweep where double precision splits Jordan blocks
    geom = LatticeGeometry(2, 2)
    _, z, r = all_sector_results(J_UNIFORM, 2.0)
    for code in (0, 1, 4095, 8191):
        res = qs.solve_sector(SectorId.from_int(code, 13), qs.CouplingParams(J_UNIFORM, 2.0), geom, full=True)
        assert res.zero_mode_count == z[code]
        assert res.min_nonzero_rate == pytest.approx(r[code], rel=1e-8)


@pytest.mark.parametrize("shape", [(4, 2), (4, 4)])
def test_larger_lattices_run(shape):
    geom = LatticeGeometry(*shape)
    rng = np.random.default_rng(0)
    S = rng.integers(0, 2, (20, geom.n_sector_bits)).astype(np.uint8)
    z, r = qs.evaluate_sectors(S, qs.CouplingParams(J_UNIFORM, 0.4), geom)
    assert np.all(r > 0) and np.all(z >= 0)


def test_sk_structure_matrix():
    u = np.ones(2)
    A = qs.assemble_sk_structure_matrix(u, u, u, u, np.ones(4), 1.0, 1.5, 0.3, 2)
    assert np.abs(A.matrix + A.matrix.T).max() == 0
    assert A.offset == pytest.approx(-1j * 0.3 * 4)
