"""Per-sector quadratic spectrum of the vectorized generator W.

Within a gauge sector W is quadratic in the itinerant Majoranas,

    W = 1/2 phi^T A phi + offset,    phi = (th0_1, ~th0_1, th0_2, ~th0_2, ...),

with A complex antisymmetric.  The 2N eigenvalues of A come in pairs
+-beta_j and the many-body eigenvalues are ``offset + sum_j p_j beta_j``,
``p_j = +-1``, subject to one global parity constraint:

    prod_j p_j = [prod_j (i beta_j) / Pf(A)] * C(u),

where C(u) = prod_r (i th0_r ~th0_r) is the itinerant parity fixed by the
local constraints and the link values.  Canonical rapidities satisfy
Im beta <= 0 (ties: Re beta >= 0), so the all-minus pattern has the smallest
relaxation rate ``gamma N - sum_j |Im beta_j|``.
"""

from __future__ import annotations

import functools
import itertools
import warnings
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.sparse.csgraph import connected_components

from .lattice_gauge import GaugeField, LatticeGeometry, SectorId, gauge_bits_from_sectors

ZERO_RTOL = 1e-9  # zero detection, relative to max |beta|
PAIR_TOL = 1e-8
PF_TOL = 1e-6  # prod(i beta)/Pf(A) must round cleanly to +-1
NOISY_RTOL = 1e-10  # +-asymmetry that marks a split (defective) cluster
COEF_RTOL = 1e-9  # merged clusters must reproduce the characteristic polynomial
CLUSTER_LADDER = (2, 12)  # merge radii 10^-2 .. 10^-12 (relative)
EP_DPS = 60
MAX_EP_DIM = 40  # extended precision costs ~5 s at 32x32 and grows as n^3
MERGE_FACTOR = 20.0
MAX_ENUM = 20


@dataclass(frozen=True)
class CouplingParams:
    J: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "J", tuple(float(j) for j in self.J))
        if len(self.J) != 4:
            raise ValueError("need four couplings J1..J4")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not any(self.J):
            raise ValueError("at least one coupling must be nonzero")


@dataclass(frozen=True)
class StructureMatrix:
    matrix: np.ndarray
    offset: complex

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] // 2


@dataclass(frozen=True)
class RapiditySet:
    """Canonical rapidities plus the Pfaffian sign tying patterns to parity.

    ``pf_sign`` is ``prod(i beta) / Pf(A)`` rounded to +-1, or 0 when some
    rapidity vanishes (then both parities give the same spectrum).
    """

    betas: np.ndarray
    eigenvalues: np.ndarray
    pf_sign: int


@dataclass
class SectorResult:
    zero_mode_count: int
    min_nonzero_rate: float
    sector: SectorId | None = None
    full_spectrum: np.ndarray | None = field(default=None, repr=False)


# ----------------------------------------------------------------------
# Pfaffian
# ----------------------------------------------------------------------
def pfaffian(A: np.ndarray) -> np.ndarray:
    """Pfaffian of one or a stack of antisymmetric matrices.

    Parlett-Reid tridiagonalization with partial pivoting, vectorized over
    the leading axis.
    """
    A = np.array(A, dtype=complex)
    single = A.ndim == 2
    if single:
        A = A[None]
    B, n, _ = A.shape
    if n % 2:
        return np.zeros(B, complex)[0] if single else np.zeros(B, complex)
    pf = np.ones(B, dtype=complex)
    rows = np.arange(B)
    for k in range(0, n - 1, 2):
        kp = k + 1 + np.argmax(np.abs(A[:, k + 1 :, k]), axis=1)
        swap = kp != k + 1
        if np.any(swap):
            tmp = A[rows, k + 1, :].copy()
            A[rows, k + 1, :] = A[rows, kp, :]
            A[rows, kp, :] = tmp
            tmp = A[rows, :, k + 1].copy()
            A[rows, :, k + 1] = A[rows, :, kp]
            A[rows, :, kp] = tmp
            pf[swap] *= -1
        piv = A[:, k, k + 1]
        pf *= piv
        if k + 2 < n:
            # a (near-)vanishing pivot already makes pf ~ 0; avoid overflow
            safe = np.where(np.abs(piv) < 1e-300, 1.0, piv)
            tau = A[:, k, k + 2 :] / safe[:, None]
            col = A[:, k + 2 :, k + 1]
            A[:, k + 2 :, k + 2 :] += tau[:, :, None] * col[:, None, :] - col[:, :, None] * tau[:, None, :]
    return pf[0] if single else pf


# ----------------------------------------------------------------------
# local-constraint bookkeeping
# ----------------------------------------------------------------------
def _perm_sign(perm) -> int:
    perm = list(perm)
    seen = [False] * len(perm)
    sign = 1
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def parity_prefactor(n_flavors, n_sites, site_value, c_pairs, link_pairs) -> complex:
    """Constant C0 with ``prod_r (i th_a th_b) = C0 * prod(u)`` on the physical space.

    Majoranas are labelled ``(site, flavor)``; each site carries the constraint
    ``prod_f th_(site,f) = site_value``.  ``c_pairs`` lists the itinerant pairs
    ``(a, b)``; ``link_pairs`` lists the Majorana pairs of each link with
    ``u = -i th_a th_b``.  Together they must use every Majorana once.
    """
    order = [(s, f) for s in range(n_sites) for f in range(n_flavors)]
    target = [m for pair in c_pairs for m in pair] + [m for pair in link_pairs for m in pair]
    if sorted(target) != order:
        raise ValueError("c_pairs and link_pairs must cover every Majorana exactly once")
    pos = {m: i for i, m in enumerate(order)}
    sigma = _perm_sign([pos[m] for m in target])
    # prod_s D_s = sigma * prod(th_a th_b over c pairs) * prod(th th over links)
    #            = sigma * (-i)^Nc_pairs * P_c * i^L * prod(u)
    total = site_value**n_sites
    return total / (sigma * (-1j) ** len(c_pairs) * 1j ** len(link_pairs))


@functools.lru_cache(maxsize=None)
def bilayer_parity_prefactor(Nx: int, Ny: int) -> int:
    geom = LatticeGeometry(Nx, Ny)
    N = geom.N
    top = lambda r: N + r  # noqa: E731
    c_pairs = [((r, 0), (top(r), 0)) for r in range(N)]
    links = []
    for layer in (0, 1):
        for a, R in enumerate(geom.a_sites):
            for d in (1, 2, 3, 4):
                nb = int(geom.neighbors[a, d - 1])
                s, t = (int(R), nb) if layer == 0 else (top(int(R)), top(nb))
                links.append(((s, d), (t, d)))
    links += [((r, 5), (top(r), 5)) for r in range(N)]
    # D = th0 th1 ... th5 = -i on every site of both layers
    c0 = parity_prefactor(6, 2 * N, -1j, c_pairs, links)
    out = int(round(c0.real))
    assert abs(c0 - out) < 1e-12 and out in (1, -1)
    return out


def allowed_parity(g: GaugeField, geom: LatticeGeometry) -> int:
    """Required itinerant parity ``prod_r (i th0_r ~th0_r)`` in sector ``g``."""
    return bilayer_parity_prefactor(geom.Nx, geom.Ny) * int(np.prod(g.to_vector()))


def allowed_parity_bits(link_bits: np.ndarray, geom: LatticeGeometry) -> np.ndarray:
    total = np.asarray(link_bits, dtype=np.int64).sum(axis=-1)
    return bilayer_parity_prefactor(geom.Nx, geom.Ny) * (1 - 2 * (total % 2))


# ----------------------------------------------------------------------
# structure matrices
# ----------------------------------------------------------------------
@functools.lru_cache(maxsize=None)
def _bilayer_index(Nx: int, Ny: int):
    geom = LatticeGeometry(Nx, Ny)
    rows, cols, kind, coup = [], [], [], []
    for layer in (0, 1):
        for a, R in enumerate(geom.a_sites):
            for d in (1, 2, 3, 4):
                nb = int(geom.neighbors[a, d - 1])
                rows.append(2 * int(R) + layer)
                cols.append(2 * nb + layer)
                kind.append(layer)
                coup.append(d - 1)
    for r in range(geom.N):
        rows.append(2 * r)
        cols.append(2 * r + 1)
        kind.append(2)
        coup.append(-1)
    return np.array(rows), np.array(cols), np.array(kind), np.array(coup)


def structure_matrices(link_bits: np.ndarray, p: CouplingParams, geom: LatticeGeometry) -> np.ndarray:
    """Stack of structure matrices ``(B, 2N, 2N)`` for link bits ``(B, 5N)``."""
    lb = np.atleast_2d(np.asarray(link_bits))
    u = 1.0 - 2.0 * lb
    rows, cols, kind, coup = _bilayer_index(geom.Nx, geom.Ny)
    J = np.asarray(p.J)
    coeff = np.where(kind == 0, 1j, np.where(kind == 1, -1j, 0)) * np.where(coup >= 0, J[coup], 0)
    coeff = coeff + np.where(kind == 2, -p.gamma, 0)
    vals = u * coeff[None, :]
    B = lb.shape[0]
    A = np.zeros((B, 2 * geom.N, 2 * geom.N), dtype=complex)
    # np.add.at handles the repeated (R, R+delta) pairs of the 2x2 multigraph
    bidx = np.repeat(np.arange(B), rows.size)
    np.add.at(A, (bidx, np.tile(rows, B), np.tile(cols, B)), vals.ravel())
    return A - A.transpose(0, 2, 1)


def assemble_structure_matrix(g: GaugeField, p: CouplingParams, geom: LatticeGeometry) -> StructureMatrix:
    A = structure_matrices(g.to_bits()[None], p, geom)[0]
    return StructureMatrix(A, -1j * p.gamma * geom.N)


def sk_link_pairs(n_cells: int):
    """Majorana pairs of the ladder links, in the order (x, y, ~x, ~y, z)."""
    N = 2 * n_cells
    xb = [(2 * n, 2 * n + 1) for n in range(n_cells)]
    yb = [(2 * n + 1, (2 * n + 2) % N) for n in range(n_cells)]
    return xb, yb


def assemble_sk_structure_matrix(mu_x, mu_y, mu_x_t, mu_y_t, mu_z, Jx, Jy, gamma, n_cells) -> StructureMatrix:
    """Structure matrix of the dissipative two-leg ladder (periodic legs).

    ``mu_x[n]`` lives on bond (2n+1, 2n+2) and ``mu_y[n]`` on (2n+2, 2n+3)
    (1-based sites, wrapping), ``mu_z[j]`` on the rung at site j+1.
    """
    N = 2 * n_cells
    A = np.zeros((2 * N, 2 * N), dtype=complex)
    xb, yb = sk_link_pairs(n_cells)
    for n, (a, b) in enumerate(xb):
        A[2 * a, 2 * b] += 1j * Jx * mu_x[n]
        A[2 * a + 1, 2 * b + 1] += -1j * Jx * mu_x_t[n]
    for n, (a, b) in enumerate(yb):
        A[2 * a, 2 * b] += 1j * Jy * mu_y[n]
        A[2 * a + 1, 2 * b + 1] += -1j * Jy * mu_y_t[n]
    for j in range(N):
        A[2 * j, 2 * j + 1] += -gamma * mu_z[j]
    return StructureMatrix(A - A.T, -1j * gamma * N)


@functools.lru_cache(maxsize=None)
def sk_parity_prefactor(n_cells: int) -> int:
    N = 2 * n_cells
    xb, yb = sk_link_pairs(n_cells)
    c_pairs = [((j, 0), (N + j, 0)) for j in range(N)]
    links = [((a, 1), (b, 1)) for a, b in xb] + [((a, 2), (b, 2)) for a, b in yb]
    links += [((N + a, 1), (N + b, 1)) for a, b in xb] + [((N + a, 2), (N + b, 2)) for a, b in yb]
    links += [((j, 3), (N + j, 3)) for j in range(N)]
    c0 = parity_prefactor(4, 2 * N, 1, c_pairs, links)
    out = int(round(c0.real))
    assert abs(c0 - out) < 1e-12
    return out


# ----------------------------------------------------------------------
# rapidities
# ----------------------------------------------------------------------
def _canonical(b: np.ndarray, tol: float) -> np.ndarray:
    flip = (b.imag > tol) | ((np.abs(b.imag) <= tol) & (b.real < 0))
    return np.where(flip, -b, b)


def pair_mismatch(lam: np.ndarray) -> np.ndarray:
    """Distance from each eigenvalue to the closest negated eigenvalue."""
    return np.abs(lam[..., :, None] + lam[..., None, :]).min(axis=-1)


def refined_eigvals(M: np.ndarray, dps: int = EP_DPS) -> np.ndarray:
    """Eigenvalues of ``M`` from an extended-precision solve.

    Near exceptional points the structure matrix is defective and a double
    precision solve splits a k-fold Jordan cluster by ~eps^(1/k), which can
    reach 1e-4 for k=4.  At 60 digits the split stays far below 1e-9.
    """
    with mpmath.workdps(dps):
        ev = mpmath.eig(mpmath.matrix(np.asarray(M).tolist()), left=False, right=False)
        return np.array([complex(e) for e in ev])


def fallback_eigvals(M: np.ndarray) -> np.ndarray:
    """Last resort when the cluster ladder fails: extended precision for small
    matrices, otherwise the double-precision spectrum merged at the radius set
    by its +- asymmetry (with a warning)."""
    if M.shape[0] <= MAX_EP_DIM:
        return merge_clusters(refined_eigvals(M))
    warnings.warn(f"{M.shape[0]}x{M.shape[0]} structure matrix: skipping extended precision", RuntimeWarning, stacklevel=2)
    return merge_clusters(np.linalg.eigvals(M))


def merge_clusters(lam: np.ndarray, radius: float | None = None) -> np.ndarray:
    """Replace each cluster of nearly equal eigenvalues by its mean.

    By default the cluster radius is estimated from how badly the spectrum
    fails to be symmetric under lam -> -lam, which holds exactly in exact
    arithmetic.
    """
    lam = np.asarray(lam, dtype=complex)
    scale = max(np.abs(lam).max(initial=0.0), 1.0)
    if radius is None:
        # errors of mirrored clusters are correlated, so use the sector-wide spread
        radius = MERGE_FACTOR * pair_mismatch(lam).max() + 1e-12 * scale
    adj = np.abs(lam[:, None] - lam[None, :]) < radius
    ncomp, labels = connected_components(adj, directed=False)
    if ncomp == lam.size:
        return lam
    means = np.array([lam[labels == c].mean() for c in range(ncomp)])
    return means[labels]


def coefficient_bound(singular_values: np.ndarray, rtol: float = COEF_RTOL) -> np.ndarray:
    """Tolerance on the characteristic-polynomial coefficients (highest power first).

    The coefficient of x^(n-k) is a sum of k x k principal minors; a backward
    error E moves it by about ``|E| (n-k+1) e_(k-1)(sigma)`` with sigma the
    singular values, independently of how defective the matrix is.
    """
    sv = np.sort(np.asarray(singular_values, dtype=float))[::-1]
    n = sv.size
    esym = np.poly(-sv).real  # e_k(sigma), k = 0..n
    k = np.arange(1, n + 1)
    bound = np.zeros(n + 1)
    bound[1:] = rtol * max(sv[0], 1e-300) * (n - k + 1) * esym[:-1]
    return bound + 1e-300


def coefficients_consistent(raw: np.ndarray, merged: np.ndarray, singular_values: np.ndarray, rtol: float = COEF_RTOL) -> bool:
    """Whether two eigenvalue multisets give the same characteristic polynomial
    within :func:`coefficient_bound`.

    Merging a split Jordan cluster stays inside the bound while merging
    distinct eigenvalues a distance d apart leaves it once d^2 >> rtol * sigma^2.
    """
    return bool(np.all(np.abs(np.poly(raw) - np.poly(merged)) <= coefficient_bound(singular_values, rtol)))


def stable_eigvals(M: np.ndarray, lam: np.ndarray | None = None) -> np.ndarray:
    """Eigenvalues with split defective clusters collapsed onto their centroids.

    Clusters are merged with the largest radius from a descending ladder for
    which the result is +-symmetric and reproduces the characteristic
    polynomial.  If no radius works the matrix is re-solved in extended
    precision.
    """
    if lam is None:
        lam = np.linalg.eigvals(M)
    lam = np.asarray(lam, dtype=complex)
    scale = max(np.abs(lam).max(initial=0.0), 1.0)
    bound = coefficient_bound(np.linalg.svd(M, compute_uv=False))
    c_raw = np.poly(lam)
    for k in range(CLUSTER_LADDER[0], CLUSTER_LADDER[1] + 1):
        merged = merge_clusters(lam, 10.0**-k * scale)
        if pair_mismatch(merged).max(initial=0.0) <= ZERO_RTOL * scale and np.all(np.abs(c_raw - np.poly(merged)) <= bound):
            return merged
    return fallback_eigvals(M)


def pair_eigenvalues(lam: np.ndarray, tol: float = PAIR_TOL) -> np.ndarray:
    """Greedy +-pairing of ``lam`` into canonical rapidities; raises on failure."""
    lam = merge_clusters(np.asarray(lam, dtype=complex))
    scale = max(np.abs(lam).max(initial=0.0), 1.0)
    left = list(np.argsort(-np.abs(lam), kind="stable"))
    betas = []
    while left:
        i = left.pop(0)
        j = min(left, key=lambda k: abs(lam[i] + lam[k]))
        if abs(lam[i] + lam[j]) > tol * scale:
            raise ValueError(f"cannot pair eigenvalue {lam[i]} (closest partner {lam[j]})")
        left.remove(j)
        betas.append(0.5 * (lam[i] - lam[j]))
    betas = _canonical(np.array(betas), ZERO_RTOL * scale)
    order = np.lexsort((betas.real, betas.imag))
    return betas[order]


def _pf_sign(betas, pf, tol) -> int:
    if np.min(np.abs(betas), initial=np.inf) <= tol:
        return 0
    if pf == 0:
        raise ValueError("Pfaffian vanishes but no zero rapidity was found")
    ratio = np.prod(1j * betas) / pf
    s = 1 if ratio.real > 0 else -1
    if abs(ratio - s) > PF_TOL:
        raise ValueError(f"Pfaffian consistency check failed: prod(i beta)/Pf = {ratio}")
    return s


def _needs_merge(lam: np.ndarray) -> np.ndarray:
    """Rows ``(B, n)`` that are not +-symmetric or hold eigenvalues closer
    than the top of the cluster ladder."""
    scale = np.maximum(np.abs(lam).max(axis=1), 1.0)
    noisy = pair_mismatch(lam).max(axis=1) > NOISY_RTOL * scale
    d = np.abs(lam[:, :, None] - lam[:, None, :])
    d[:, np.arange(lam.shape[1]), np.arange(lam.shape[1])] = np.inf
    close = d.min(axis=(1, 2)) < 10.0 ** -CLUSTER_LADDER[0] * scale
    return noisy | close


def compute_rapidities(A) -> RapiditySet:
    M = A.matrix if isinstance(A, StructureMatrix) else np.asarray(A)
    if not np.allclose(M, -M.T, atol=0):
        raise ValueError("structure matrix is not antisymmetric")
    lam = np.linalg.eigvals(M)
    if _needs_merge(lam[None])[0]:
        lam = stable_eigvals(M, lam)
    betas = pair_eigenvalues(lam)
    pf = pfaffian(M)
    try:
        sign = _pf_sign(betas, pf, _tolerance(betas))
    except ValueError:
        lam = fallback_eigvals(M)
        betas = pair_eigenvalues(lam)
        sign = _pf_sign(betas, pf, _tolerance(betas))
    return RapiditySet(betas, lam, sign)


# ----------------------------------------------------------------------
# many-body spectrum
# ----------------------------------------------------------------------
def _tolerance(betas: np.ndarray) -> float:
    return ZERO_RTOL * max(float(np.abs(betas).max(initial=0.0)), 1e-3)


def _required_product(r: RapiditySet, parity: int) -> int:
    """Required ``prod p_j``, or 0 if unconstrained."""
    return int(r.pf_sign * parity)


def sector_spectrum(r: RapiditySet, parity: int, offset: complex) -> SectorResult:
    """Full enumeration of the parity-allowed many-body eigenvalues."""
    n = r.betas.size
    if n > MAX_ENUM:
        raise ValueError(f"full enumeration limited to {MAX_ENUM} modes, got {n}")
    req = _required_product(r, parity)
    signs = 1 - 2 * np.array(list(itertools.product((0, 1), repeat=n)), dtype=int).reshape(-1, n)
    if req == 0:
        req = 1  # some beta vanishes: either parity yields this multiset
    signs = signs[np.prod(signs, axis=1) == req]
    E = offset + signs @ r.betas
    tol = _tolerance(r.betas)
    zero = np.abs(E) < tol
    rates = -E.imag[~zero]
    positive = rates[rates > tol]
    rate = float(positive.min()) if positive.size else 0.0
    return SectorResult(int(zero.sum()), rate, full_spectrum=E)


def sector_gap(r: RapiditySet, parity: int, offset: complex) -> SectorResult:
    """Zero-mode count and smallest positive rate without enumerating 2^N patterns."""
    req = _required_product(r, parity)
    z, m = _gap_core(r.betas[None], np.array([req]), np.array([-offset.imag]))
    return SectorResult(int(z[0]), float(m[0]))


def _count_zero(betas: np.ndarray, real: np.ndarray, req: int, tol: float) -> int:
    """Patterns with decaying modes at p=-1 and sum_j p_j Re beta_j = 0."""
    dec_re = betas.real[~real].sum()
    n_dec = int((~real).sum())
    rv = betas.real[real]
    if rv.size > 24:
        raise ValueError(f"too many non-decaying modes ({rv.size}) for zero-mode enumeration")
    if rv.size == 0:
        ok = abs(dec_re) < tol and (req == 0 or (-1) ** n_dec == req)
        return int(ok)
    signs = 1 - 2 * np.array(list(itertools.product((0, 1), repeat=rv.size)), dtype=int)
    hit = np.abs(signs @ rv - dec_re) < tol
    if req != 0:
        hit &= np.prod(signs, axis=1) * (-1) ** n_dec == req
    else:
        hit &= np.prod(signs, axis=1) * (-1) ** n_dec == 1
    return int(hit.sum())


def _gap_core(betas: np.ndarray, req: np.ndarray, base_rate: np.ndarray):
    """Vectorized greedy evaluation over a stack of canonical rapidity sets.

    ``base_rate`` is ``-Im(offset)`` (= gamma N).  Returns zero-mode counts
    and the smallest positive relaxation rate per row.
    """
    Bn, n = betas.shape
    scale = np.maximum(np.abs(betas).max(axis=1, initial=0.0), 1e-3)
    tol = ZERO_RTOL * scale
    m = np.clip(-betas.imag, 0.0, None)
    decaying = m > tol[:, None]
    real = ~decaying
    has_real = real.any(axis=1)
    r0 = base_rate - m.sum(axis=1)
    r0 = np.where(np.abs(r0) <= tol, 0.0, r0)
    n_dec = decaying.sum(axis=1)
    # parity of the all-minus pattern on decaying modes; real modes can fix it
    base_ok = has_real | (req == 0) | ((-1.0) ** n_dec == req)
    ms = np.sort(np.where(decaying, m, np.inf), axis=1)
    m1 = ms[:, 0] if n else np.full(Bn, np.inf)
    m2 = ms[:, 1] if n > 1 else np.full(Bn, np.inf)
    single_ok = has_real | (req == 0) | ((-1.0) ** (n_dec - 1) == req)
    stationary = r0 <= tol
    lvl0 = np.where(base_ok, r0, r0 + 2 * m1)
    lvl1 = np.where(single_ok, 2 * m1, 2 * (m1 + m2))
    rate = np.where(stationary, lvl1, lvl0)
    rate = np.where(np.isfinite(rate), rate, 0.0)
    zeros = np.zeros(Bn, dtype=int)
    for i in np.nonzero(stationary)[0]:
        zeros[i] = _count_zero(betas[i], real[i], int(req[i]), tol[i])
    return zeros, rate


# ----------------------------------------------------------------------
# batched sector evaluation
# ----------------------------------------------------------------------
def rapidities_batch(A: np.ndarray):
    """Canonical rapidities ``(B, N)`` and pf signs ``(B,)`` for a matrix stack."""
    B, n2, _ = A.shape
    n = n2 // 2
    lam = np.linalg.eigvals(A)
    scale = np.maximum(np.abs(lam).max(axis=1), 1e-3)
    for i in np.nonzero(_needs_merge(lam))[0]:
        lam[i] = stable_eigvals(A[i], lam[i])
    tol = (ZERO_RTOL * scale)[:, None]
    canon = (lam.imag < -tol) | ((np.abs(lam.imag) <= tol) & (lam.real > tol))
    zero = np.abs(lam) <= tol
    ok = (canon.sum(axis=1) * 2 + zero.sum(axis=1) == n2) & (zero.sum(axis=1) % 2 == 0)
    betas = np.zeros((B, n), dtype=complex)
    for i in range(B):
        if ok[i]:
            b = np.concatenate([lam[i][canon[i]], np.zeros(zero[i].sum() // 2)])
            betas[i] = b
        else:
            betas[i] = pair_eigenvalues(lam[i])
    pf = pfaffian(A)
    tol1 = ZERO_RTOL * scale
    signs = np.zeros(B, dtype=int)
    for i in range(B):
        try:
            signs[i] = _pf_sign(betas[i], pf[i], tol1[i])
        except ValueError:
            # a symmetric but split zero cluster: only visible through Pf ~ 0
            betas[i] = pair_eigenvalues(fallback_eigvals(A[i]))
            signs[i] = _pf_sign(betas[i], pf[i], ZERO_RTOL * max(np.abs(betas[i]).max(), 1e-3))
    return betas, signs


def evaluate_link_bits(link_bits: np.ndarray, p: CouplingParams, geom: LatticeGeometry, chunk: int = 2048):
    """Zero-mode counts and gap contributions for a stack of link configurations."""
    lb = np.atleast_2d(np.asarray(link_bits, dtype=np.uint8))
    zeros = np.empty(lb.shape[0], dtype=int)
    rates = np.empty(lb.shape[0])
    for s in range(0, lb.shape[0], chunk):
        part = lb[s : s + chunk]
        A = structure_matrices(part, p, geom)
        betas, pf_signs = rapidities_batch(A)
        req = pf_signs * allowed_parity_bits(part, geom)
        z, r = _gap_core(betas, req, np.full(part.shape[0], p.gamma * geom.N))
        zeros[s : s + chunk] = z
        rates[s : s + chunk] = r
    return zeros, rates


def evaluate_sectors(sector_bits: np.ndarray, p: CouplingParams, geom: LatticeGeometry, chunk: int = 2048):
    """Batched ``sector_gap`` over SectorId bit rows ``(B, 3N+1)``."""
    return evaluate_link_bits(gauge_bits_from_sectors(sector_bits, geom), p, geom, chunk)


def solve_sector(s: SectorId, p: CouplingParams, geom: LatticeGeometry, full: bool = False) -> SectorResult:
    """Convenience wrapper: rapidities, parity and the per-sector result."""
    from .lattice_gauge import gauge_from_sector

    g = gauge_from_sector(s, geom)
    A = assemble_structure_matrix(g, p, geom)
    r = compute_rapidities(A)
    par = allowed_parity(g, geom)
    res = sector_spectrum(r, par, A.offset) if full else sector_gap(r, par, A.offset)
    res.sector = s
    return res
