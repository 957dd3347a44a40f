"""Perturbative limits next to the exact 2x2 sector solver.

    python scripts/perturbation_report.py
"""

import numpy as np

from dirac_sk import gap_search as gs
from dirac_sk import perturbation as pt
from dirac_sk.lattice_gauge import GaugeField, LatticeGeometry


def main():
    geom = LatticeGeometry(2, 2)
    for N in (4, 8):
        M = pt.uniform_master_matrix(N)
        ev = M.eigenvalues()
        print(f"uniform M, N={N}: |M - closed form| = {np.abs(ev - pt.lambda_spectrum(N)).max():.2e}, "
              f"largest nonzero eigenvalue {ev[ev < -1e-9].max():g}")
    for J in ((1.0, 1.0, 1.0, 1.0), (3.0, 4.0, 1.0, 2.0)):
        M = pt.sector_master_matrix(GaugeField.uniform(geom).to_bits(), J, geom)
        print(f"uniform-sector M at 2x2, J={J}: small-gamma slope {pt.small_gamma_slope(M):g}")

    print("min nonzero s (2x2):", pt.min_nonzero_s(geom), "| single-site family:", pt.min_nonzero_s(geom, "single"))
    g44 = LatticeGeometry(4, 4)
    q = pt.QConfig.single_defect(g44, 0, 2, 1)
    print("single-site defect s at 4x4:", pt.s_eigenvalue(q, g44), "bad bonds:", pt.bad_bonds(q, g44))
    print("table columns == gamma-algebra patterns:",
          {tuple(c) for c in pt.DELTA_TILDE.signs.T} == {tuple(r) for r in pt.derived_sign_patterns()})

    s_min = pt.min_nonzero_s(geom)
    gammas = np.geomspace(5.0, 20.0, 4)
    curve = gs.exhaustive_sweep(geom, (1.0, 1.0, 1.0, 1.0), gammas)
    print("gamma   exact g   slow root   ratio")
    for g, ex in zip(gammas, curve.gaps):
        slow, _ = pt.large_gamma_rates(s_min, g)
        print(f"{g:6.2f}  {ex:.6f}  {-slow.real:.6f}  {ex / -slow.real:.4f}")


if __name__ == "__main__":
    main()
