"""Square-lattice bilayer geometry, Z2 link fields, fluxes and gauge fixing.

Conventions
-----------
Sites are ``(x, y)`` with ``1 <= x <= Nx`` and ``1 <= y <= Ny``; the flat site
index is ``(y - 1) * Nx + (x - 1)``.  A site is on sublattice A iff ``x + y`` is
even, so ``(1, 1)`` is an A site.  Every link hangs off an A site ``R`` and points
along ``delta in {1, 2, 3, 4}`` = ``+x, +y, -x, -y`` to a B neighbour.

Link variables are stored as one flat vector of length ``5N``::

    [ u^d_R (bottom, 2N) | ~u^d_R (top, 2N) | u^5_r (interlayer, N) ]

with the layer blocks ordered ``4 * a + (delta - 1)`` where ``a`` is the A-site
index.  Internally a link is a GF(2) bit (0 for +1, 1 for -1), so every flux
is a parity of link bits and gauge fixing is linear algebra over GF(2).

The 3N+1 sector coordinates are gauge-invariant: the bottom-layer fluxes
with ``Phi+_(1,1)`` dropped (it is fixed by the layer product), all
``Psi+-`` and ``Omega+-``, and the two bottom Wilson phases.  A coordinate
bit is 1 iff the quantity differs from its value in the uniform all-+1 link
field, so the zero vector is that uniform field.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass, field

import numpy as np

DIRECTIONS = {1: (1, 0), 2: (0, 1), 3: (-1, 0), 4: (0, -1)}

# Order of the named flux blocks in the full 4N+4 vector.
FLUX_BLOCKS = (
    "phi_plus",
    "phi_minus",
    "phi_plus_t",
    "phi_minus_t",
    "psi_plus",
    "psi_minus",
    "omega_plus",
    "omega_minus",
)


class ConstraintError(ValueError):
    """Flux data that no gauge field can produce."""


def gf2_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse of a square 0/1 matrix over GF(2)."""
    n = m.shape[0]
    aug = np.concatenate([m.astype(np.uint8) & 1, np.eye(n, dtype=np.uint8)], axis=1)
    for col in range(n):
        piv = np.nonzero(aug[col:, col])[0]
        if piv.size == 0:
            raise np.linalg.LinAlgError("matrix is singular over GF(2)")
        p = col + piv[0]
        if p != col:
            aug[[col, p]] = aug[[p, col]]
        rows = np.nonzero(aug[:, col])[0]
        rows = rows[rows != col]
        aug[rows] ^= aug[col]
    return aug[:, n:]


def gf2_rank(m: np.ndarray) -> int:
    a = m.astype(np.uint8) & 1
    rank = 0
    for col in range(a.shape[1]):
        piv = np.nonzero(a[rank:, col])[0]
        if piv.size == 0:
            continue
        p = rank + piv[0]
        a[[rank, p]] = a[[p, rank]]
        rows = np.nonzero(a[:, col])[0]
        rows = rows[rows != rank]
        a[rows] ^= a[rank]
        rank += 1
        if rank == a.shape[0]:
            break
    return rank


@dataclass(frozen=True)
class LatticeGeometry:
    """Periodic ``Nx x Ny`` square lattice; both sides even."""

    Nx: int
    Ny: int

    def __post_init__(self):
        if self.Nx < 2 or self.Ny < 2 or self.Nx % 2 or self.Ny % 2:
            raise ValueError(f"Nx and Ny must be even and >= 2, got {self.Nx}x{self.Ny}")

    @property
    def N(self) -> int:
        return self.Nx * self.Ny

    @property
    def Nc(self) -> int:
        return self.N // 2

    @property
    def n_links(self) -> int:
        return 5 * self.N

    @property
    def n_sector_bits(self) -> int:
        return 3 * self.N + 1

    def index(self, x: int, y: int) -> int:
        x = (x - 1) % self.Nx + 1
        y = (y - 1) % self.Ny + 1
        return (y - 1) * self.Nx + (x - 1)

    def coords(self, i: int) -> tuple[int, int]:
        return i % self.Nx + 1, i // self.Nx + 1

    def shift(self, i: int, dx: int, dy: int) -> int:
        x, y = self.coords(i)
        return self.index(x + dx, y + dy)

    @functools.cached_property
    def a_sites(self) -> np.ndarray:
        """Flat indices of the A sublattice, in site order."""
        return np.array([i for i in range(self.N) if sum(self.coords(i)) % 2 == 0])

    @functools.cached_property
    def a_position(self) -> dict[int, int]:
        return {int(s): a for a, s in enumerate(self.a_sites)}

    @functools.cached_property
    def neighbors(self) -> np.ndarray:
        """``(Nc, 4)`` flat index of ``R + delta`` for each A site."""
        out = np.empty((self.Nc, 4), dtype=int)
        for a, R in enumerate(self.a_sites):
            for d, (dx, dy) in DIRECTIONS.items():
                out[a, d - 1] = self.shift(int(R), dx, dy)
        return out

    def link(self, layer: int, a: int, delta: int) -> int:
        """Flat link index of ``u^delta`` at A-site number ``a`` (layer 0/1)."""
        return layer * 2 * self.N + 4 * a + (delta - 1)

    def interlayer(self, r: int) -> int:
        return 4 * self.N + r

    def a_of(self, x: int, y: int) -> int:
        i = self.index(x, y)
        if i not in self.a_position:
            raise ValueError(f"site ({x},{y}) is not on the A sublattice")
        return self.a_position[i]

    # ------------------------------------------------------------------
    # GF(2) flux map
    # ------------------------------------------------------------------
    @functools.cached_property
    def flux_matrix(self) -> np.ndarray:
        """``(4N+4, 5N)`` 0/1 matrix: flux bits = F @ link bits (mod 2).

        Rows follow ``FLUX_BLOCKS`` (Nc rows each) then Wx, Wy, ~Wx, ~Wy.
        The Wilson-phase sign offsets are in ``flux_offset``.
        """
        Nc, N = self.Nc, self.N
        F = np.zeros((8 * Nc + 4, 5 * N), dtype=np.uint8)

        def add(row, *cols):
            for c in cols:
                F[row, c] ^= 1

        for a, R in enumerate(self.a_sites):
            R = int(R)
            p2 = self.a_position[self.shift(R, 1, 1)]  # R + a2
            p1 = self.a_position[self.shift(R, 1, -1)]  # R + a1
            for layer in (0, 1):
                L = lambda aa, d: self.link(layer, aa, d)  # noqa: E731
                add((0 + 2 * layer) * Nc + a, L(a, 1), L(p2, 4), L(p2, 3), L(a, 2))
                add((1 + 2 * layer) * Nc + a, L(a, 4), L(p1, 3), L(p1, 2), L(a, 1))
            u5 = self.interlayer
            # vertical plaquettes over the link R -> R + delta
            for blk, d in ((4, 1), (5, 3), (6, 2), (7, 4)):
                nb = int(self.neighbors[a, d - 1])
                add(blk * Nc + a, self.link(0, a, d), self.link(1, a, d), u5(R), u5(nb))
        row = 8 * Nc
        for layer in (0, 1):
            for a, R in enumerate(self.a_sites):
                x, y = self.coords(int(R))
                if y == 1:
                    add(row + 2 * layer, self.link(layer, a, 1), self.link(layer, a, 3))
                if x == 1:
                    add(row + 2 * layer + 1, self.link(layer, a, 2), self.link(layer, a, 4))
        return F

    @functools.cached_property
    def flux_offset(self) -> np.ndarray:
        """Constant bits added to ``F @ links``: the (-1)^(Nx/2) Wilson signs."""
        off = np.zeros(8 * self.Nc + 4, dtype=np.uint8)
        sx, sy = (self.Nx // 2) % 2, (self.Ny // 2) % 2
        off[8 * self.Nc :] = [sx, sy, sx, sy]
        return off

    @functools.cached_property
    def coordinate_rows(self) -> np.ndarray:
        """Rows of ``flux_matrix`` that form the 3N+1 sector coordinates."""
        Nc = self.Nc
        rows = list(range(1, Nc))  # Phi+ except (1,1)
        rows += list(range(Nc, 2 * Nc))  # Phi-
        rows += list(range(4 * Nc, 8 * Nc))  # Psi+, Psi-, Omega+, Omega-
        rows += [8 * Nc, 8 * Nc + 1]  # Wx, Wy
        return np.array(rows)

    @functools.cached_property
    def free_links(self) -> np.ndarray:
        """Link indices left free by the canonical gauge (3N+1 of them).

        Fixed to +1: per layer a spanning tree made of every x-link inside a row
        (the wrap-around link excluded) plus the y-links of column 1 (wrap
        excluded), and the interlayer link at (1,1).
        """
        fixed = set()
        for layer in (0, 1):
            for y in range(1, self.Ny + 1):
                for x in range(1, self.Nx):
                    fixed.add(self._link_between(layer, (x, y), (x + 1, y), axis=0))
            for y in range(1, self.Ny):
                fixed.add(self._link_between(layer, (1, y), (1, y + 1), axis=1))
        fixed.add(self.interlayer(self.index(1, 1)))
        free = np.array([i for i in range(5 * self.N) if i not in fixed])
        assert free.size == 3 * self.N + 1
        return free

    def _link_between(self, layer, s, t, axis):
        """Link joining neighbouring sites s -> t, t = s + x (axis 0) or s + y."""
        si, ti = self.index(*s), self.index(*t)
        if si in self.a_position:
            return self.link(layer, self.a_position[si], 1 if axis == 0 else 2)
        return self.link(layer, self.a_position[ti], 3 if axis == 0 else 4)

    @functools.cached_property
    def gauge_solver(self) -> np.ndarray:
        """``(5N, 3N+1)`` GF(2) map from sector bits to canonical link bits."""
        C = self.flux_matrix[self.coordinate_rows][:, self.free_links]
        inv = gf2_inverse(C)
        out = np.zeros((5 * self.N, 3 * self.N + 1), dtype=np.uint8)
        out[self.free_links] = inv
        return out

    @functools.cached_property
    def full_from_sector(self) -> np.ndarray:
        """``(4N+4, 3N+1)`` map from sector bits to all flux bits."""
        return (self.flux_matrix.astype(np.int64) @ self.gauge_solver) % 2

    def site_label(self, i: int) -> str:
        x, y = self.coords(i)
        return f"{{{x},{y}}}"


# ----------------------------------------------------------------------
# value types
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class GaugeField:
    """The 5N link variables, each +1 or -1."""

    bottom: np.ndarray  # (Nc, 4): u^delta_R
    top: np.ndarray  # (Nc, 4): ~u^delta_R
    interlayer: np.ndarray  # (N,): u^5_r

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.bottom.ravel(), self.top.ravel(), self.interlayer]).astype(np.int8)

    def to_bits(self) -> np.ndarray:
        return (self.to_vector() < 0).astype(np.uint8)

    @classmethod
    def from_vector(cls, v, geom: LatticeGeometry) -> "GaugeField":
        v = np.asarray(v)
        if v.shape != (5 * geom.N,):
            raise ValueError(f"expected {5 * geom.N} link values, got shape {v.shape}")
        if not np.all(np.abs(v) == 1):
            raise ValueError("link values must be +1 or -1")
        v = v.astype(np.int8)
        n2 = 2 * geom.N
        return cls(v[:n2].reshape(geom.Nc, 4), v[n2 : 2 * n2].reshape(geom.Nc, 4), v[2 * n2 :])

    @classmethod
    def from_bits(cls, bits, geom: LatticeGeometry) -> "GaugeField":
        return cls.from_vector(1 - 2 * np.asarray(bits, dtype=np.int8), geom)

    @classmethod
    def uniform(cls, geom: LatticeGeometry) -> "GaugeField":
        return cls.from_vector(np.ones(5 * geom.N, dtype=np.int8), geom)

    @classmethod
    def random(cls, geom: LatticeGeometry, rng: np.random.Generator) -> "GaugeField":
        return cls.from_bits(rng.integers(0, 2, 5 * geom.N), geom)


@dataclass(frozen=True)
class FluxData:
    """All 4N+4 gauge-invariant Z2 quantities (values +1/-1)."""

    phi_plus: np.ndarray
    phi_minus: np.ndarray
    phi_plus_t: np.ndarray
    phi_minus_t: np.ndarray
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    omega_plus: np.ndarray
    omega_minus: np.ndarray
    wilson: np.ndarray  # (Wx, Wy, ~Wx, ~Wy)

    def to_vector(self) -> np.ndarray:
        parts = [getattr(self, k) for k in FLUX_BLOCKS] + [self.wilson]
        return np.concatenate(parts).astype(np.int8)

    @classmethod
    def from_vector(cls, v) -> "FluxData":
        v = np.asarray(v, dtype=np.int8)
        if (v.size - 4) % 8 or v.ndim != 1:
            raise ValueError(f"flux vector has invalid length {v.size}")
        Nc = (v.size - 4) // 8
        blocks = {k: v[i * Nc : (i + 1) * Nc].copy() for i, k in enumerate(FLUX_BLOCKS)}
        return cls(**blocks, wilson=v[8 * Nc :].copy())

    def __eq__(self, other):
        return isinstance(other, FluxData) and np.array_equal(self.to_vector(), other.to_vector())

    def __hash__(self):
        return hash(self.to_vector().tobytes())

    @classmethod
    def fiducial(cls, geom: LatticeGeometry) -> "FluxData":
        """Every gauge-invariant quantity equal to -1."""
        return cls.from_vector(-np.ones(4 * geom.N + 4, dtype=np.int8))


@dataclass(frozen=True, eq=False)
class SectorId:
    """3N+1 gauge-invariant coordinate bits (see module docstring)."""

    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=np.uint8) & 1)

    def __len__(self):
        return int(self.bits.size)

    def __eq__(self, other):
        return isinstance(other, SectorId) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def to_int(self) -> int:
        return int("".join(map(str, self.bits[::-1])) or "0", 2)

    @classmethod
    def from_int(cls, value: int, length: int) -> "SectorId":
        if value < 0 or value >> length:
            raise ValueError(f"{value} does not fit in {length} bits")
        return cls(np.array([(value >> i) & 1 for i in range(length)], dtype=np.uint8))

    def hex(self) -> str:
        width = (len(self) + 3) // 4
        return format(self.to_int(), f"0{width}x")

    @classmethod
    def from_hex(cls, s: str, length: int) -> "SectorId":
        return cls.from_int(int(s, 16), length)

    def __repr__(self):
        return f"SectorId(0x{self.hex()}, n={len(self)})"


# ----------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------
def flux_bits(link_bits: np.ndarray, geom: LatticeGeometry) -> np.ndarray:
    """Batched flux bits for link bits of shape ``(..., 5N)``."""
    lb = np.asarray(link_bits, dtype=np.int64)
    return ((lb @ geom.flux_matrix.T.astype(np.int64)) + geom.flux_offset) % 2


def compute_fluxes(g: GaugeField, geom: LatticeGeometry) -> FluxData:
    bits = flux_bits(g.to_bits(), geom)
    return FluxData.from_vector(1 - 2 * bits.astype(np.int8))


def constraint_violations(f: FluxData, geom: LatticeGeometry) -> list[str]:
    """Human-readable list of violated constraints (empty if valid)."""
    if f.phi_plus.size != geom.Nc:
        raise ValueError(f"flux data has {f.phi_plus.size} A sites, geometry has {geom.Nc}")
    bad = []
    pos = geom.a_position
    for a, R in enumerate(geom.a_sites):
        R = int(R)
        p2 = pos[geom.shift(R, 1, 1)]
        p1 = pos[geom.shift(R, 1, -1)]
        up = f.phi_plus[a] * f.phi_plus_t[a] * f.psi_plus[a] * f.omega_plus[a]
        up *= f.omega_minus[p2] * f.psi_minus[p2]
        dn = f.phi_minus[a] * f.phi_minus_t[a] * f.omega_minus[a] * f.psi_minus[p1]
        dn *= f.omega_plus[p1] * f.psi_plus[a]
        if up != 1:
            bad.append(f"cube over Phi+_{geom.site_label(R)}")
        if dn != 1:
            bad.append(f"cube over Phi-_{geom.site_label(R)}")
    if np.prod(f.phi_plus) * np.prod(f.phi_minus) != 1:
        bad.append("layer product of Phi+- (bottom)")
    if np.prod(f.phi_plus_t) * np.prod(f.phi_minus_t) != 1:
        bad.append("layer product of Phi+- (top)")
    wx, wy, wxt, wyt = f.wilson
    row1 = [a for a, R in enumerate(geom.a_sites) if geom.coords(int(R))[1] == 1]
    col1 = [a for a, R in enumerate(geom.a_sites) if geom.coords(int(R))[0] == 1]
    if np.prod(f.psi_plus[row1] * f.psi_minus[row1]) != wx * wxt:
        bad.append("Wilson constraint: prod Psi+Psi- along row 1 = Wx ~Wx")
    if np.prod(f.omega_plus[col1] * f.omega_minus[col1]) != wy * wyt:
        bad.append("Wilson constraint: prod Omega+Omega- along column 1 = Wy ~Wy")
    return bad


def sector_from_fluxes(f: FluxData, geom: LatticeGeometry) -> SectorId:
    v = f.to_vector()
    if v.size != 4 * geom.N + 4:
        raise ValueError(f"flux vector length {v.size} does not match geometry {geom.Nx}x{geom.Ny}")
    base = flux_bits(np.zeros(5 * geom.N, dtype=np.uint8), geom)
    bits = (v < 0).astype(np.uint8) ^ base.astype(np.uint8)
    return SectorId(bits[geom.coordinate_rows])


def fluxes_from_sector(s: SectorId, geom: LatticeGeometry) -> FluxData:
    if len(s) != geom.n_sector_bits:
        raise ValueError(f"SectorId has {len(s)} bits, expected {geom.n_sector_bits}")
    return compute_fluxes(gauge_from_sector(s, geom), geom)


def gauge_bits_from_sectors(sector_bits: np.ndarray, geom: LatticeGeometry) -> np.ndarray:
    """Batched canonical link bits ``(..., 5N)`` for sector bits ``(..., 3N+1)``."""
    sb = np.asarray(sector_bits, dtype=np.int64)
    if sb.shape[-1] != geom.n_sector_bits:
        raise ValueError(f"sector bits have length {sb.shape[-1]}, expected {geom.n_sector_bits}")
    return ((sb @ geom.gauge_solver.T.astype(np.int64)) % 2).astype(np.uint8)


def gauge_from_sector(s: SectorId, geom: LatticeGeometry) -> GaugeField:
    return GaugeField.from_bits(gauge_bits_from_sectors(s.bits, geom), geom)


def fix_gauge(f: FluxData, geom: LatticeGeometry) -> GaugeField:
    """Canonical gauge field reproducing ``f``; raises on inconsistent data."""
    bad = constraint_violations(f, geom)
    if bad:
        raise ConstraintError("inconsistent flux data: " + "; ".join(bad))
    g = gauge_from_sector(sector_from_fluxes(f, geom), geom)
    # the constraints above span the full dependency set, so this cannot fail
    assert compute_fluxes(g, geom) == f
    return g


def defect_count(f: FluxData, reference: FluxData, geom: LatticeGeometry) -> int:
    """Number of sector coordinates in which ``f`` differs from ``reference``."""
    if f.to_vector().size != reference.to_vector().size:
        raise ValueError("flux data belong to different geometries")
    a = sector_from_fluxes(f, geom).bits
    b = sector_from_fluxes(reference, geom).bits
    return int(np.count_nonzero(a != b))


def ness_flux_conditions(f: FluxData) -> bool:
    return bool(
        np.array_equal(f.phi_plus, f.phi_plus_t)
        and np.array_equal(f.phi_minus, f.phi_minus_t)
        and np.all(f.psi_plus == -1)
        and np.all(f.psi_minus == -1)
        and np.all(f.omega_plus == -1)
        and np.all(f.omega_minus == -1)
    )


def ness_sector_mask(geom: LatticeGeometry) -> np.ndarray:
    """Boolean mask of the Psi/Omega sector coordinates.

    A sector satisfies the NESS flux conditions iff all masked bits are 1
    (Psi = Omega = -1; the uniform field has them at +1).  Top-layer equality
    then follows from the cube constraint.
    """
    Nc = geom.Nc
    mask = np.zeros(geom.n_sector_bits, dtype=bool)
    mask[(2 * Nc - 1) : (6 * Nc - 1)] = True
    return mask


# ----------------------------------------------------------------------
# defect lists relative to the all-(-1) fiducial
# ----------------------------------------------------------------------
_NAMES = {
    "phi_plus": "Phi+",
    "phi_minus": "Phi-",
    "phi_plus_t": "Phi~+",
    "phi_minus_t": "Phi~-",
    "psi_plus": "Psi+",
    "psi_minus": "Psi-",
    "omega_plus": "Omega+",
    "omega_minus": "Omega-",
}
_INDEPENDENT = ("phi_plus", "phi_minus", "psi_plus", "psi_minus", "omega_plus", "omega_minus")
_WILSON = ("Wx", "Wy", "Wx~", "Wy~")
_NAME_RE = re.compile(r"^(Phi~?[+-]|Psi[+-]|Omega[+-])_\{\s*(\d+)\s*,\s*(\d+)\s*\}$")


def defect_names(f: FluxData, geom: LatticeGeometry, include_dependent: bool = False) -> list[str]:
    """+1 entries of ``f`` in a fixed order, named as ``Phi+_{x,y}``, ``Wx`` ...

    By default only the bottom-layer plaquettes, Psi, Omega and (Wx, Wy) are
    listed; these determine everything else.  With ``include_dependent`` the
    top-layer quantities follow, marked with ``~``.
    """
    keys = list(_INDEPENDENT)
    if include_dependent:
        keys = ["phi_plus", "phi_minus", "phi_plus_t", "phi_minus_t"] + keys[2:]
    out = []
    for k in keys:
        vals = getattr(f, k)
        for a, R in enumerate(geom.a_sites):
            if vals[a] == 1:
                out.append(f"{_NAMES[k]}_{geom.site_label(int(R))}")
    n_w = 4 if include_dependent else 2
    out += [_WILSON[i] for i in range(n_w) if f.wilson[i] == 1]
    return out


def fluxes_from_defects(names, geom: LatticeGeometry) -> FluxData:
    """Inverse of :func:`defect_names`; dependent entries are checked, not trusted."""
    vals = {k: -np.ones(geom.Nc, dtype=np.int8) for k in _NAMES}
    wil = -np.ones(4, dtype=np.int8)
    given_dependent = {}
    for raw in names:
        name = raw.strip()
        if name in _WILSON:
            i = _WILSON.index(name)
            if i < 2:
                wil[i] = 1
            else:
                given_dependent[name] = True
            continue
        m = _NAME_RE.match(name)
        if not m:
            raise ValueError(f"unrecognised defect name {raw!r}")
        key = {v: k for k, v in _NAMES.items()}[m.group(1)]
        a = geom.a_of(int(m.group(2)), int(m.group(3)))
        if key in ("phi_plus_t", "phi_minus_t"):
            given_dependent[(key, a)] = True
            continue
        vals[key][a] = 1
    if (np.count_nonzero(vals["phi_plus"] == 1) + np.count_nonzero(vals["phi_minus"] == 1)) % 2:
        raise ConstraintError("odd number of bottom-layer plaquette defects violates the layer product")
    # bottom data + Psi/Omega + (Wx, Wy) fix the top layer: solve via a sector id
    partial = FluxData(**vals, wilson=wil)
    f = fluxes_from_sector(sector_from_fluxes(partial, geom), geom)
    if given_dependent:
        expect = set(defect_names(f, geom, include_dependent=True)) - set(defect_names(f, geom))
        got = {n.strip() for n in names} - set(defect_names(f, geom))
        if expect != got:
            raise ConstraintError(f"top-layer entries {sorted(got)} inconsistent with derived {sorted(expect)}")
    return f
