"""Perturbative limits of the relaxation spectrum.

Small gamma: within one gauge sector the populations of the Hamiltonian
eigenstates |m, n> (c-mode occupations m from the block-diagonalized hopping
matrix, d-mode occupations n from pairs of dangling theta^5 Majoranas) obey a
classical master equation dP/dt = gamma M P.  Each Gamma^5_r flips exactly
one c-mode and one d-mode, weighted by the squared entries of the orthogonal
block-diagonalizing matrix.

Large gamma: the Hamiltonian couples the dissipator-stable operators only
through nearest-neighbour bonds, and the effective decay rates follow from
omega^2 + 4 gamma omega + 2 s = 0 with s = 2 x (number of bad bonds) of a
configuration of single-site labels q_r in 1..8.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import quadratic_spectrum as qs
from .clifford import build_gamma_set
from .lattice_gauge import DIRECTIONS, LatticeGeometry

SCHUR_TOL = 1e-10
MAX_M_SITES = 12
MAX_Q_CONFIGS = 10**7


# ----------------------------------------------------------------------
# small gamma
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class OrthogonalBlockDecomposition:
    """``Q.T @ J @ Q = diag([[0, e_k], [-e_k, 0]])`` with ``e`` descending."""

    J: np.ndarray
    Q: np.ndarray
    eps: np.ndarray

    def block_matrix(self) -> np.ndarray:
        n = self.Q.shape[0]
        B = np.zeros((n, n))
        for k, e in enumerate(self.eps):
            B[2 * k, 2 * k + 1], B[2 * k + 1, 2 * k] = e, -e
        return B

    def block_defect(self) -> float:
        return float(np.abs(self.Q.T @ self.J @ self.Q - self.block_matrix()).max(initial=0.0))

    def orthogonality_defect(self) -> float:
        return float(np.abs(self.Q.T @ self.Q - np.eye(self.Q.shape[0])).max(initial=0.0))


def block_diagonalize(J, symmetries=()) -> OrthogonalBlockDecomposition:
    """Real Schur form of an antisymmetric ``J`` arranged as 2x2 blocks.

    Within a degenerate block cluster the basis is arbitrary; orthogonal
    ``symmetries`` commuting with ``J`` (lattice translations) fix it to their
    joint eigenmodes, which are the plane waves of a translation-invariant
    sector.
    """
    J = np.asarray(J)
    if np.iscomplexobj(J):
        if np.abs(J.imag).max(initial=0.0) > 0:
            raise ValueError("hopping matrix must be real")
        J = J.real
    J = J.astype(float)
    n = J.shape[0]
    if J.shape != (n, n) or n % 2:
        raise ValueError(f"need an even square matrix, got shape {J.shape}")
    scale = max(np.abs(J).max(initial=0.0), 1.0)
    if np.abs(J + J.T).max(initial=0.0) > 1e-12 * scale:
        raise ValueError("hopping matrix is not antisymmetric")
    J = 0.5 * (J - J.T)
    T, Z = sla.schur(J, output="real")
    # real Schur of a normal matrix is block diagonal; zero eigenvalues come
    # out as 1x1 blocks which are paired up here
    blocks, i = [], 0
    while i < n:
        if i + 1 < n and abs(T[i + 1, i]) > SCHUR_TOL * scale:
            e = T[i, i + 1]
            cols = [i, i + 1] if e >= 0 else [i + 1, i]
            blocks.append((abs(e), cols))
            i += 2
        else:
            blocks.append((0.0, [i]))
            i += 1
    pairs = [b for b in blocks if len(b[1]) == 2]
    singles = [b[1][0] for b in blocks if len(b[1]) == 1]
    pairs += [(0.0, singles[j : j + 2]) for j in range(0, len(singles), 2)]
    pairs.sort(key=lambda b: -b[0])
    Q = Z[:, [c for _, cols in pairs for c in cols]]
    eps = np.array([e for e, _ in pairs])
    if len(symmetries):
        Q = _resolve_degenerate(Q, eps, symmetries, scale)
    dec = OrthogonalBlockDecomposition(J, Q, eps)
    if dec.block_defect() > SCHUR_TOL * scale:
        raise RuntimeError(f"block diagonalization failed, defect {dec.block_defect():.2e}")
    return dec


def _resolve_degenerate(Q: np.ndarray, eps: np.ndarray, symmetries, scale: float) -> np.ndarray:
    """Rotate each degenerate cluster onto joint eigenmodes of ``symmetries``.

    Columns ``(2k, 2k+1)`` combine into ``v = (q1 + i q2)/sqrt(2)`` with
    ``J v = i e v``, so a unitary rotation of the cluster's v's keeps the
    block form; the rotated v's give back real columns via Re and Im.  Zero
    modes are re-paired as (k, -k) plane waves instead.
    """
    Q = Q.copy()
    # fixed irrational weights separate joint eigenvalues generically
    S = sum(np.sqrt(2.0 + j) * T for j, T in enumerate(symmetries))
    tol = SCHUR_TOL * scale
    k = 0
    while k < eps.size:
        m = 1
        while k + m < eps.size and abs(eps[k + m] - eps[k]) <= tol:
            m += 1
        cols = np.arange(2 * k, 2 * (k + m))
        if eps[k] > tol and m > 1:
            V = (Q[:, cols[0::2]] + 1j * Q[:, cols[1::2]]) / np.sqrt(2.0)
            _, Z = sla.schur(V.conj().T @ S @ V, output="complex")
            V = V @ Z
            Q[:, cols[0::2]] = np.sqrt(2.0) * V.real
            Q[:, cols[1::2]] = np.sqrt(2.0) * V.imag
        elif eps[k] <= tol:
            Q[:, cols] = _plane_wave_pairs(Q[:, cols], S)
        k += m
    return Q


def _plane_wave_pairs(R: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Real orthonormal basis of span(R) ordered as (Re v, Im v) pairs of
    eigenmodes of ``S``; real eigenmodes are paired with each other."""
    T, Z = sla.schur(R.T @ S @ R, output="complex")
    lam = np.diag(T)
    tol = 1e-9 * max(np.abs(lam).max(initial=0.0), 1.0)
    out = []
    for j in np.nonzero(lam.imag > tol)[0]:
        v = R @ Z[:, j]
        out += [np.sqrt(2.0) * v.real, np.sqrt(2.0) * v.imag]
    real = np.nonzero(np.abs(lam.imag) <= tol)[0]
    while real.size:
        # one real eigenspace at a time so that different momenta never mix
        grp = real[np.abs(lam[real] - lam[real[0]]) <= tol]
        real = np.setdiff1d(real, grp)
        B = R @ np.concatenate([Z[:, grp].real, Z[:, grp].imag], axis=1)
        U, _, _ = np.linalg.svd(B, full_matrices=False)
        out += list(U[:, : grp.size].T)
    if len(out) != R.shape[1]:
        return R  # eigenvalue bookkeeping failed; keep the Schur basis
    return np.array(out).T


def lattice_translations(J: np.ndarray, geom: LatticeGeometry, tol: float = 1e-12) -> list[np.ndarray]:
    """Sublattice-preserving translations (as permutation matrices) that commute with ``J``."""
    out = []
    for dx, dy in ((2, 0), (0, 2), (1, 1), (1, -1)):
        T = np.zeros((geom.N, geom.N))
        for r in range(geom.N):
            T[geom.shift(r, dx, dy), r] = 1.0
        if np.abs(T @ J - J @ T).max() <= tol * max(np.abs(J).max(), 1.0):
            out.append(T)
    return out


def hopping_matrix(link_bits, J, geom: LatticeGeometry) -> np.ndarray:
    """Real antisymmetric single-layer hopping ``J_{r r'}`` of one gauge sector."""
    A = qs.structure_matrices(np.asarray(link_bits)[None], qs.CouplingParams(tuple(J), 0.0), geom)[0]
    return A[::2, ::2].imag


@dataclass(frozen=True)
class ClassicalMasterMatrix:
    """``M`` over labels ``(m, n)``; row index is the integer whose binary
    digits are ``m_1..m_Nc n_1..n_Nc`` (most significant first)."""

    matrix: np.ndarray
    weights: np.ndarray
    n_c: int

    def label(self, index: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        bits = [(index >> (2 * self.n_c - 1 - k)) & 1 for k in range(2 * self.n_c)]
        return tuple(bits[: self.n_c]), tuple(bits[self.n_c :])

    def index(self, m, n) -> int:
        out = 0
        for b in list(m) + list(n):
            out = (out << 1) | int(b)
        return out

    def eigenvalues(self) -> np.ndarray:
        return np.sort(np.linalg.eigvalsh(self.matrix))[::-1]


def flip_weights(dec: OrthogonalBlockDecomposition, geom: LatticeGeometry) -> np.ndarray:
    """``w[S, R]``: summed squared Q entries coupling c-mode S and d-mode R.

    c-mode k is built from the columns ``(2k, 2k+1)`` of Q, d-mode R from the
    sites ``R`` and ``R + x`` with R running over the A sublattice.
    """
    Q = dec.Q
    rows = np.array([[R, geom.shift(R, 1, 0)] for R in geom.a_sites])
    sq = Q**2
    csum = sq[:, 0::2] + sq[:, 1::2]  # (sites, c-modes)
    return (csum[rows[:, 0]] + csum[rows[:, 1]]).T


def master_from_weights(w: np.ndarray) -> ClassicalMasterMatrix:
    nc = w.shape[0]
    if w.shape != (nc, nc):
        raise ValueError("weight matrix must be square (N/2 c-modes by N/2 d-modes)")
    if 2 * nc > MAX_M_SITES:
        raise ValueError(f"master matrix limited to N <= {MAX_M_SITES} sites")
    dim = 4**nc
    M = np.zeros((dim, dim))
    idx = np.arange(dim)
    for S in range(nc):
        for R in range(nc):
            M[idx, idx ^ (1 << (2 * nc - 1 - S)) ^ (1 << (nc - 1 - R))] += w[S, R]
    M[idx, idx] -= 2 * nc
    return ClassicalMasterMatrix(M, w, nc)


def classical_master_matrix(dec: OrthogonalBlockDecomposition, geom: LatticeGeometry) -> ClassicalMasterMatrix:
    if dec.Q.shape[0] != geom.N:
        raise ValueError("decomposition does not match the geometry")
    return master_from_weights(flip_weights(dec, geom))


def sector_master_matrix(link_bits, J, geom: LatticeGeometry) -> ClassicalMasterMatrix:
    h = hopping_matrix(link_bits, J, geom)
    return classical_master_matrix(block_diagonalize(h, lattice_translations(h, geom)), geom)


def uniform_master_matrix(N: int) -> ClassicalMasterMatrix:
    """The translation-invariant limit with every flip weight equal to 4/N."""
    if N % 2:
        raise ValueError("N must be even")
    return master_from_weights(np.full((N // 2, N // 2), 4.0 / N))


def lambda_closed_form(sigma, mu) -> float:
    """``(4/N)(sum sigma)(sum mu) - N`` with sigma, mu in {+1, -1}."""
    sigma, mu = np.asarray(sigma), np.asarray(mu)
    if sigma.size != mu.size or not np.all(np.isin(sigma, (-1, 1))) or not np.all(np.isin(mu, (-1, 1))):
        raise ValueError("sigma and mu must be equal-length +-1 vectors")
    N = 2 * sigma.size
    return 4.0 / N * sigma.sum() * mu.sum() - N


def lambda_spectrum(N: int) -> np.ndarray:
    """All ``2^N`` closed-form values, sorted descending."""
    nc = N // 2
    vals = [lambda_closed_form(s, m) for s in itertools.product((1, -1), repeat=nc) for m in itertools.product((1, -1), repeat=nc)]
    return np.sort(vals)[::-1]


def small_gamma_slope(M: ClassicalMasterMatrix, tol: float = 1e-9) -> float:
    """Smallest nonzero relaxation rate per unit gamma predicted by M."""
    ev = -M.eigenvalues()
    nz = ev[ev > tol * max(np.abs(ev).max(), 1.0)]
    return float(nz.min()) if nz.size else np.inf


# ----------------------------------------------------------------------
# large gamma
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class DeltaTables:
    """``signs[delta-1, q-1]``: eigenvalue of the bond map Delta^delta on label q."""

    signs: np.ndarray

    def __call__(self, delta: int, q) -> np.ndarray:
        return self.signs[delta - 1, np.asarray(q) - 1]


DELTA_TILDE = DeltaTables(
    np.array(
        [
            [+1, +1, -1, -1, +1, +1, -1, -1],
            [+1, +1, -1, -1, -1, -1, +1, +1],
            [+1, -1, +1, -1, -1, +1, -1, +1],
            [+1, -1, +1, -1, +1, -1, +1, -1],
        ],
        dtype=int,
    )
)
DELTA_TILDE.signs.setflags(write=False)


def stable_operators() -> list[np.ndarray]:
    """``A_p`` for p = 1..8: |mu><mu| then |mu><5-mu| (mu = 1..4)."""
    out = []
    for p in range(8):
        mu = p % 4
        nu = mu if p < 4 else 3 - mu
        A = np.zeros((4, 4))
        A[mu, nu] = 1.0
        out.append(A)
    return out


def bond_maps() -> np.ndarray:
    """``Delta[delta-1]`` with ``Gamma^d A_p Gamma^d = sum_p' Delta[p, p'] A_p'``."""
    gs = build_gamma_set(2)
    A = stable_operators()
    flat = np.array([a.ravel() for a in A])  # (8, 16)
    out = np.zeros((4, 8, 8))
    for d in range(1, 5):
        for p, a in enumerate(A):
            img = (gs[d] @ a @ gs[d]).ravel()
            coef, res, *_ = np.linalg.lstsq(flat.T, img, rcond=None)
            if np.abs(flat.T @ coef - img).max() > 1e-12:
                raise RuntimeError("bond map leaves the stable operator space")
            out[d - 1, p] = coef.real
    return out


def derived_sign_patterns() -> np.ndarray:
    """Joint eigenvalue patterns ``(8, 4)`` of the four bond maps."""
    D = bond_maps()
    # generic combination separates the joint eigenspaces
    w = np.array([1.0, 2.0, 4.0, 8.0])
    comb = np.tensordot(w, D, axes=1)
    _, vecs = np.linalg.eig(comb.T)
    pats = np.array([[np.real(v.conj() @ (D[d].T @ v)) / np.real(v.conj() @ v) for d in range(4)] for v in vecs.T])
    return np.rint(pats).astype(int)


@dataclass(frozen=True)
class QConfig:
    q: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(int(v) for v in self.q))
        if any(not 1 <= v <= 8 for v in self.q):
            raise ValueError("q labels must lie in 1..8")

    @classmethod
    def uniform(cls, geom: LatticeGeometry, q: int = 1) -> "QConfig":
        return cls((q,) * geom.N)

    @classmethod
    def single_defect(cls, geom: LatticeGeometry, site: int = 0, q: int = 2, background: int = 1) -> "QConfig":
        v = [background] * geom.N
        v[site] = q
        return cls(tuple(v))


def _bonds(geom: LatticeGeometry) -> np.ndarray:
    """``(2N, 3)`` rows ``(R, R + delta, delta)`` with R on the A sublattice."""
    out = []
    for R in geom.a_sites:
        for d, (dx, dy) in DIRECTIONS.items():
            out.append((R, geom.shift(R, dx, dy), d))
    return np.array(out)


def s_values(q: np.ndarray, geom: LatticeGeometry) -> np.ndarray:
    """Vectorized s for a stack ``(B, N)`` of labels."""
    q = np.atleast_2d(np.asarray(q))
    if q.shape[1] != geom.N:
        raise ValueError(f"configuration needs {geom.N} labels")
    b = _bonds(geom)
    t = DELTA_TILDE.signs
    left = t[b[:, 2] - 1, q[:, b[:, 0]] - 1]
    right = t[b[:, 2] - 1, q[:, b[:, 1]] - 1]
    return np.sum(1 - left * right, axis=1)


def s_eigenvalue(q: QConfig, geom: LatticeGeometry) -> int:
    if len(q.q) != geom.N:
        raise ValueError(f"configuration needs {geom.N} labels, got {len(q.q)}")
    return int(s_values(np.array(q.q), geom)[0])


def bad_bonds(q: QConfig, geom: LatticeGeometry) -> list[tuple[int, int, int]]:
    b = _bonds(geom)
    qq = np.array(q.q)
    bad = DELTA_TILDE.signs[b[:, 2] - 1, qq[b[:, 0]] - 1] != DELTA_TILDE.signs[b[:, 2] - 1, qq[b[:, 1]] - 1]
    return [tuple(int(v) for v in row) for row in b[bad]]


def all_configs(geom: LatticeGeometry) -> np.ndarray:
    if 8**geom.N > MAX_Q_CONFIGS:
        raise ValueError(f"8^{geom.N} configurations exceed the guard {MAX_Q_CONFIGS}")
    return np.array(list(itertools.product(range(1, 9), repeat=geom.N)))


def min_nonzero_s(geom: LatticeGeometry, restrict: str = "all") -> int | None:
    """Smallest nonzero s by exhaustion; ``restrict`` is 'all', 'single' or 'uniform'.

    Returns None when the restricted family has no nonzero value.
    """
    if restrict == "all":
        q = all_configs(geom)
    elif restrict == "single":
        q = np.array([QConfig.single_defect(geom, r, a, b).q for r in range(geom.N) for a in range(1, 9) for b in range(1, 9)])
    elif restrict == "uniform":
        q = np.array([QConfig.uniform(geom, a).q for a in range(1, 9)])
    else:
        raise ValueError(f"unknown restriction {restrict!r}")
    s = s_values(q, geom)
    nz = s[s > 0]
    return int(nz.min()) if nz.size else None


def large_gamma_rates(s: float, gamma: float) -> tuple[complex, complex]:
    """Roots ``(slow, fast)`` of ``omega^2 + 4 gamma omega + 2 s``.

    ``slow = -2 gamma + sqrt(4 gamma^2 - 2 s) -> -s / (2 gamma)`` for large
    gamma and ``fast -> -4 gamma``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    disc = np.sqrt(complex(4 * gamma**2 - 2 * s))
    plus, minus = -2 * gamma + disc, -2 * gamma - disc
    # overdamped: slow root without cancellation, from the product of roots 2 s
    if 4 * gamma**2 > 2 * s:
        plus = 2 * s / minus
    return complex(plus), complex(minus)


def dissipator_sector_rate(k: int, gamma: float) -> float:
    if k < 0:
        raise ValueError("k must be nonnegative")
    return -2.0 * k * gamma
