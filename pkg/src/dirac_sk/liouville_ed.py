"""Explicit vectorized generators for small systems and end-to-end checks.

Density matrices are flattened row-major, ``vec(rho)[m * d + n] = rho[m, n]``,
so ``vec(A rho B) = (A x B^T) vec(rho)`` and the GKLS generator becomes

    W = H x 1 - 1 x H^T + i sum_r (L_r x L_r^* - 1/2 L_r^+ L_r x 1 - 1/2 1 x L_r^T L_r^*)

with ``i d/dt vec(rho) = W vec(rho)``.  Eigenvalues E of W relate to the
Liouvillian eigenvalues by ``E = i Lambda``; the relaxation rate is ``-Im E``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components

from . import quadratic_spectrum as qs
from .clifford import build_gamma_set, build_model_operators, site_operator
from .lattice_gauge import LatticeGeometry, gauge_bits_from_sectors

MAX_VEC_DIM = 2**20


@dataclass(frozen=True)
class VectorizedGenerator:
    matrix: sp.csr_matrix
    hilbert_dim: int
    model: str = "generic"
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace_defect(self) -> float:
        """max |<I| W|: the identity row vector must annihilate W."""
        ident = vec(np.eye(self.hilbert_dim))
        return float(np.abs(self.matrix.T @ ident).max(initial=0.0))


@dataclass
class NessReport:
    labels: list[str]
    residuals: np.ndarray
    tol: float

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max(initial=0.0))

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residuals <= self.tol))


@dataclass
class MomentReport:
    orders: tuple[int, ...]
    generator: np.ndarray
    sectors: np.ndarray
    rtol: float
    abs_moments: np.ndarray | None = None

    @property
    def rel_errors(self) -> np.ndarray:
        # sum |E|^m as the floor keeps vanishing moments (gamma = 0) meaningful
        floor = self.abs_moments if self.abs_moments is not None else 0.0
        scale = np.maximum(np.maximum(np.abs(self.generator), floor), 1e-300)
        return np.abs(self.generator - self.sectors) / scale

    @property
    def passed(self) -> bool:
        return bool(np.all(self.rel_errors <= self.rtol))


@dataclass
class MultisetReport:
    label: str
    size: int
    max_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def vec(rho) -> np.ndarray:
    if sp.issparse(rho):
        rho = rho.toarray()
    return np.asarray(rho, dtype=complex).reshape(-1)


def _as_sparse(m) -> sp.csr_matrix:
    return sp.csr_matrix(m, dtype=complex)


def build_vectorized_W(H, jumps, model: str = "generic", params: dict | None = None) -> VectorizedGenerator:
    H = _as_sparse(H)
    d = H.shape[0]
    if H.shape != (d, d):
        raise ValueError("H must be square")
    if d * d > MAX_VEC_DIM:
        raise ValueError(f"vectorized dimension {d * d} exceeds guard {MAX_VEC_DIM}")
    if abs(H - H.conj().T).max() > 1e-12 * max(abs(H).max(), 1.0):
        raise ValueError("H is not Hermitian")
    eye = sp.identity(d, dtype=complex, format="csr")
    W = sp.kron(H, eye) - sp.kron(eye, H.T)
    for L in jumps:
        L = _as_sparse(L)
        if L.shape != (d, d):
            raise ValueError(f"jump operator shape {L.shape} does not match H {(d, d)}")
        LdL = L.conj().T @ L
        W = W + 1j * (sp.kron(L, L.conj()) - 0.5 * sp.kron(LdL, eye) - 0.5 * sp.kron(eye, LdL.T))
    W = W.tocsr()
    W.eliminate_zeros()
    return VectorizedGenerator(W, d, model, dict(params or {}))


def check_ness_annihilation(gen: VectorizedGenerator, projectors, tol: float = 1e-9) -> NessReport:
    labels, res = [], []
    for P in projectors:
        m = getattr(P, "matrix", P)
        v = vec(m)
        labels.append(getattr(P, "label", f"op{len(labels)}"))
        res.append(np.linalg.norm(gen.matrix @ v) / max(np.linalg.norm(v), 1e-300))
    return NessReport(labels, np.array(res), tol)


def trace_moments(W: sp.spmatrix, orders=(1, 2, 3), chunk: int = 4096) -> np.ndarray:
    """``Tr(W^m)`` from the sparse entries, accumulated over row blocks."""
    W = sp.csr_matrix(W)
    WT = W.T.tocsr()
    out = []
    for m in orders:
        if m < 1:
            raise ValueError("moment order must be >= 1")
        if m == 1:
            out.append(W.diagonal().sum())
            continue
        total = 0.0 + 0.0j
        for s in range(0, W.shape[0], chunk):
            P = W[s : s + chunk]
            for _ in range(m - 2):
                P = P @ W
            total += P.multiply(WT[s : s + chunk]).sum()
        out.append(total)
    return np.array(out, dtype=complex)


def spectrum_moments(E, orders=(1, 2, 3)) -> np.ndarray:
    E = np.asarray(E, dtype=complex)
    return np.array([np.sum(E**m) for m in orders])


def moment_crosscheck(gen: VectorizedGenerator, spectrum, orders=(1, 2, 3), rtol: float = 1e-8) -> MomentReport:
    spectrum = np.asarray(spectrum)
    if spectrum.size != gen.dim:
        raise ValueError(f"merged sector spectrum has {spectrum.size} entries, generator has dimension {gen.dim}")
    orders = tuple(orders)
    absm = np.array([np.sum(np.abs(spectrum) ** m) for m in orders])
    return MomentReport(orders, trace_moments(gen.matrix, orders), spectrum_moments(spectrum, orders), rtol, absm)


def multiset_distance(a, b) -> float:
    """Max deviation of the optimal one-to-one matching between two multisets."""
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    if a.shape != b.shape:
        raise ValueError(f"multiset sizes differ: {a.size} vs {b.size}")
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max(initial=0.0))


def cluster_centroids(E, radius: float) -> np.ndarray:
    """Replace every single-linkage cluster of ``E`` (links shorter than
    ``radius``) by its centroid, keeping the multiplicity.

    A k-fold defective eigenvalue comes out of a dense solver split by
    ~eps^(1/k) while the centroid of the split cluster stays accurate to
    ~eps, so multisets from defective generators are compared through
    their centroids.
    """
    E = np.asarray(E, complex)
    order = np.argsort(E.real, kind="stable")
    adj = sp.lil_matrix((E.size, E.size), dtype=bool)
    # neighbours in Re within radius are the only candidates
    for k, i in enumerate(order):
        for j in order[k + 1 :]:
            if E[j].real - E[i].real > radius:
                break
            if abs(E[j] - E[i]) < radius:
                adj[i, j] = True
    n, labels = connected_components(adj.tocsr(), directed=False)
    means = np.array([E[labels == c].mean() for c in range(n)])
    return means[labels]


def cluster_distance(a, b, radius: float = 1e-3) -> float:
    """``multiset_distance`` between cluster-centroid versions of ``a`` and ``b``."""
    return multiset_distance(cluster_centroids(a, radius), cluster_centroids(b, radius))


def conjugation_closure_defect(E) -> float:
    """Distance between the multisets ``{E}`` and ``{-E*}``."""
    E = np.asarray(E, complex)
    return multiset_distance(E, -E.conj())


# ----------------------------------------------------------------------
# sector-side spectra
# ----------------------------------------------------------------------
def _pattern_signs(n: int) -> np.ndarray:
    return 1 - 2 * ((np.arange(2**n)[:, None] >> np.arange(n)) & 1)


def sector_spectra_from_matrices(A: np.ndarray, req_links: np.ndarray, offset: complex) -> np.ndarray:
    """Parity-allowed many-body eigenvalues ``(B, 2^(N-1))`` for a matrix stack.

    ``req_links`` is the constraint-side parity factor ``C(u)`` per matrix.
    """
    betas, pf_signs = qs.rapidities_batch(A)
    n = betas.shape[1]
    signs = _pattern_signs(n)
    parity = np.prod(signs, axis=1)
    req = pf_signs * req_links
    # a zero rapidity makes both parities give the same multiset
    req = np.where(req == 0, 1, req)
    out = np.empty((A.shape[0], 2 ** (n - 1)), dtype=complex)
    for i in range(A.shape[0]):
        keep = signs[parity == req[i]]
        out[i] = offset + keep @ betas[i]
    return out


def bilayer_sector_spectrum(geom: LatticeGeometry, p: qs.CouplingParams, chunk: int = 2048) -> np.ndarray:
    """All ``16^N`` eigenvalues of W assembled from the ``2^(3N+1)`` sectors."""
    nb = geom.n_sector_bits
    if nb > 16:
        raise ValueError("full sector spectrum limited to 2x2 geometries")
    allS = ((np.arange(2**nb)[:, None] >> np.arange(nb)) & 1).astype(np.uint8)
    out = []
    for s in range(0, allS.shape[0], chunk):
        lb = gauge_bits_from_sectors(allS[s : s + chunk], geom)
        A = qs.structure_matrices(lb, p, geom)
        out.append(sector_spectra_from_matrices(A, qs.allowed_parity_bits(lb, geom), -1j * p.gamma * geom.N))
    return np.concatenate(out).ravel()


def bilayer_generator(Nx: int, Ny: int, p: qs.CouplingParams) -> VectorizedGenerator:
    ops = build_model_operators(Nx, Ny, p.J)
    jumps = [np.sqrt(p.gamma) * L.matrix for L in ops.jumps]
    return build_vectorized_W(ops.H.matrix, jumps, "bilayer", {"Nx": Nx, "Ny": Ny, "J": p.J, "gamma": p.gamma})


# ----------------------------------------------------------------------
# two-leg ladder (spin-1/2 chain with Z dephasing)
# ----------------------------------------------------------------------
def sk_hamiltonian(Jx: float, Jy: float, n_cells: int) -> sp.csr_matrix:
    """Periodic chain with XX on bonds (2n-1, 2n) and YY on (2n, 2n+1)."""
    N = 2 * n_cells
    gs = build_gamma_set(1)
    H = sp.csr_matrix((2**N, 2**N), dtype=complex)
    for n in range(n_cells):
        a, b, c = 2 * n, 2 * n + 1, (2 * n + 2) % N
        H = H + Jx * site_operator(N, a, gs[1]) @ site_operator(N, b, gs[1])
        H = H + Jy * site_operator(N, b, gs[2]) @ site_operator(N, c, gs[2])
    return H.tocsr()


def sk_generator(Jx: float, Jy: float, gamma: float, n_cells: int) -> VectorizedGenerator:
    N = 2 * n_cells
    gs = build_gamma_set(1)
    jumps = [np.sqrt(gamma) * site_operator(N, j, gs[3]) for j in range(N)]
    return build_vectorized_W(sk_hamiltonian(Jx, Jy, n_cells), jumps, "sk-ladder", {"Jx": Jx, "Jy": Jy, "gamma": gamma})


def sk_gauge_representatives(n_cells: int) -> np.ndarray:
    """One link configuration per gauge orbit, rows ``(x, y, ~x, ~y, z)`` as +-1.

    Orbits are identified by the rung plaquettes and the bottom-leg loop,
    which together with the rung count fix all gauge-invariant data.
    """
    N = 2 * n_cells
    nl = 2 * n_cells * 2 + N
    if nl > 20:
        raise ValueError("ladder too large for orbit enumeration")
    bits = (np.arange(2**nl)[:, None] >> np.arange(nl)) & 1
    u = 1 - 2 * bits
    x, y = u[:, :n_cells], u[:, n_cells : 2 * n_cells]
    xt, yt = u[:, 2 * n_cells : 3 * n_cells], u[:, 3 * n_cells : 4 * n_cells]
    z = u[:, 4 * n_cells :]
    xb, yb = qs.sk_link_pairs(n_cells)
    plaq = [x[:, n] * xt[:, n] * z[:, a] * z[:, b] for n, (a, b) in enumerate(xb)]
    plaq += [y[:, n] * yt[:, n] * z[:, a] * z[:, b] for n, (a, b) in enumerate(yb)]
    loop = np.prod(x, axis=1) * np.prod(y, axis=1)
    sig = np.stack(plaq + [loop], axis=1)
    _, first = np.unique(sig, axis=0, return_index=True)
    return u[np.sort(first)]


def sk_sector_spectrum(Jx: float, Jy: float, gamma: float, n_cells: int) -> np.ndarray:
    N = 2 * n_cells
    reps = sk_gauge_representatives(n_cells)
    c = n_cells
    A = np.stack(
        [
            qs.assemble_sk_structure_matrix(u[:c], u[c : 2 * c], u[2 * c : 3 * c], u[3 * c : 4 * c], u[4 * c :], Jx, Jy, gamma, n_cells).matrix
            for u in reps
        ]
    )
    req = qs.sk_parity_prefactor(n_cells) * np.prod(reps, axis=1)
    return sector_spectra_from_matrices(A, req, -1j * gamma * N).ravel()


def sk_ed_check(Jx: float, Jy: float, gamma: float, n_cells: int = 2, tol: float = 1e-8, radius: float = 1e-3) -> MultisetReport:
    """Dense ED of the vectorized ladder against the sector enumeration."""
    gen = sk_generator(Jx, Jy, gamma, n_cells)
    dense = np.linalg.eigvals(gen.matrix.toarray())
    sectors = sk_sector_spectrum(Jx, Jy, gamma, n_cells)
    dev = cluster_distance(dense, sectors, radius)
    return MultisetReport(f"sk Jx={Jx} Jy={Jy} gamma={gamma}", dense.size, dev, tol)


def all_sign_patterns(n: int):
    return itertools.product((1, -1), repeat=n)
