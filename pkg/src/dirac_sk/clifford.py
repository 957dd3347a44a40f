"""Gamma-matrix representations and many-site operators for small lattices.

The level-k set is built from k Pauli factors,

    G^{2j-1} = Z x ... x Z x X x 1 x ... x 1     (j-1 leading Z's)
    G^{2j}   = Z x ... x Z x Y x 1 x ... x 1
    G^{2k+1} = Z x ... x Z = (-i)^k G^1 G^2 ... G^{2k}

and the many-site operators act on (C^4)^{x N} with site ``i`` as the i-th
tensor factor from the left, using the flat site index of ``LatticeGeometry``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import scipy.sparse as sp

from .lattice_gauge import DIRECTIONS, LatticeGeometry

MAX_LEVEL = 4
MAX_SITES = 6

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class GammaSet:
    level: int
    matrices: tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return 2**self.level

    def __len__(self) -> int:
        return len(self.matrices)

    def __getitem__(self, mu: int) -> np.ndarray:
        """1-based access, ``gs[mu] = Gamma^mu``."""
        if not 1 <= mu <= len(self.matrices):
            raise IndexError(f"gamma index {mu} outside 1..{len(self.matrices)}")
        return self.matrices[mu - 1]


@dataclass(frozen=True)
class SiteOperator:
    n_sites: int
    matrix: sp.csr_matrix
    label: str
    hermitian: bool = True

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def _kron_all(factors) -> np.ndarray:
    return functools.reduce(np.kron, factors)


def build_gamma_set(k: int) -> GammaSet:
    if not isinstance(k, (int, np.integer)) or k < 1 or k > MAX_LEVEL:
        raise ValueError(f"level k must be an integer in 1..{MAX_LEVEL}, got {k!r}")
    mats = []
    for j in range(k):
        for p in (_X, _Y):
            mats.append(_kron_all([_Z] * j + [p] + [_I2] * (k - j - 1)))
    mats.append(_kron_all([_Z] * k))
    for m in mats:
        m.setflags(write=False)
    return GammaSet(int(k), tuple(mats))


def gamma_pair(gs: GammaSet, mu: int, nu: int) -> np.ndarray:
    """``Gamma^{mu nu} = i Gamma^mu Gamma^nu`` (so ``Gamma^{nu mu} = -Gamma^{mu nu}``)."""
    if mu == nu:
        raise ValueError("gamma_pair needs mu != nu")
    return 1j * gs[mu] @ gs[nu]


def anticommutator_defect(gs: GammaSet) -> float:
    """max |{G^a, G^b} - 2 delta_ab| over all pairs."""
    n = len(gs)
    eye = np.eye(gs.dim)
    worst = 0.0
    for a in range(1, n + 1):
        for b in range(a, n + 1):
            ac = gs[a] @ gs[b] + gs[b] @ gs[a]
            worst = max(worst, float(np.abs(ac - 2 * (a == b) * eye).max()))
    return worst


# ----------------------------------------------------------------------
# many-site operators
# ----------------------------------------------------------------------
def site_operator(n_sites: int, site: int, m) -> sp.csr_matrix:
    d = m.shape[0]
    left = sp.identity(d**site, dtype=complex, format="csr")
    right = sp.identity(d ** (n_sites - site - 1), dtype=complex, format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(m)), right, format="csr")


def _product(ops, dim) -> sp.csr_matrix:
    out = sp.identity(dim, dtype=complex, format="csr")
    for o in ops:
        out = out @ o
    return out.tocsr()


@dataclass
class ModelOperators:
    geom: LatticeGeometry
    J: tuple[float, float, float, float]
    H: SiteOperator
    jumps: list[SiteOperator]
    fluxes: list[SiteOperator]
    Wx: SiteOperator
    Wy: SiteOperator
    Q: SiteOperator
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.H.dim

    def projector_labels(self) -> Iterator[tuple[int, int, tuple[int, ...]]]:
        """``(eta_x, eta_y, {eta_r})`` with the plaquette at (Nx, Ny) omitted."""
        n = len(self.fluxes) - 1
        for ex, ey in itertools.product((1, -1), repeat=2):
            for er in itertools.product((1, -1), repeat=n):
                yield ex, ey, er

    def projector(self, eta_x: int, eta_y: int, eta_r) -> SiteOperator:
        eye = sp.identity(self.dim, dtype=complex, format="csr")
        ops = [0.5 * (eye + eta_x * self.Wx.matrix), 0.5 * (eye + eta_y * self.Wy.matrix)]
        ops += [0.5 * (eye + e * f.matrix) for e, f in zip(eta_r, self.fluxes[:-1])]
        P = _product(ops, self.dim)
        P.eliminate_zeros()
        return SiteOperator(self.geom.N, P, f"Pi[{eta_x},{eta_y},{tuple(eta_r)}]")

    def projectors(self) -> Iterator[SiteOperator]:
        for ex, ey, er in self.projector_labels():
            yield self.projector(ex, ey, er)


def build_model_operators(Nx: int, Ny: int, J=(1.0, 1.0, 1.0, 1.0)) -> ModelOperators:
    geom = LatticeGeometry(Nx, Ny)
    N = geom.N
    if N > MAX_SITES:
        raise ValueError(f"operator construction limited to N <= {MAX_SITES} sites, got {N}")
    J = tuple(float(j) for j in J)
    if len(J) != 4:
        raise ValueError("need four couplings")
    gs = build_gamma_set(2)
    dim = 4**N

    @functools.lru_cache(maxsize=None)
    def g(site: int, mu: int) -> sp.csr_matrix:
        return site_operator(N, site, gs[mu])

    @functools.lru_cache(maxsize=None)
    def gp(site: int, mu: int, nu: int) -> sp.csr_matrix:
        return site_operator(N, site, gamma_pair(gs, mu, nu))

    def at(x, y):
        return geom.index((x - 1) % Nx + 1, (y - 1) % Ny + 1)

    H = sp.csr_matrix((dim, dim), dtype=complex)
    for R in geom.a_sites:
        x, y = geom.coords(R)
        for d, (dx, dy) in DIRECTIONS.items():
            H = H + J[d - 1] * (g(R, d) @ g(at(x + dx, y + dy), d))

    jumps = [SiteOperator(N, g(r, 5), f"Gamma5_{geom.site_label(r)}") for r in range(N)]

    fluxes = []
    for r in range(N):
        x, y = geom.coords(r)
        corners = [at(x, y), at(x + 1, y), at(x + 1, y + 1), at(x, y + 1)]
        pairs = [(2, 1), (1, 4), (4, 3), (3, 2)] if (x + y) % 2 == 0 else [(4, 3), (3, 2), (2, 1), (1, 4)]
        ops = [gp(c, *p) for c, p in zip(corners, pairs)]
        fluxes.append(SiteOperator(N, -_product(ops, dim), f"Phi_{geom.site_label(r)}"))

    wx = [gp(at(x, 1), *((1, 3) if x % 2 else (3, 1))) for x in range(1, Nx + 1)]
    wy = [gp(at(1, y), *((2, 4) if y % 2 else (4, 2))) for y in range(1, Ny + 1)]
    Wx = SiteOperator(N, -_product(wx, dim), "Wx")
    Wy = SiteOperator(N, -_product(wy, dim), "Wy")
    Q = SiteOperator(N, _product([j.matrix for j in jumps], dim), "Q")
    return ModelOperators(geom, J, SiteOperator(N, H.tocsr(), "H"), jumps, fluxes, Wx, Wy, Q)


def commutator_norm(a, b) -> float:
    """max-abs entry of [a, b] for sparse or dense operands."""
    c = a @ b - b @ a
    c = c.toarray() if sp.issparse(c) else np.asarray(c)
    return float(np.abs(c).max(initial=0.0))
