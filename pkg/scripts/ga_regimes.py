"""Pooled GA gap curve and regime boundaries on a larger lattice.

    python scripts/ga_regimes.py --size 4x4 --gamma 0.2:0.7:0.05 --out results/ga_4x4
"""

import argparse
import logging
import time
from pathlib import Path

from dirac_sk import gap_search as gs
from dirac_sk.cli import parse_couplings, parse_gamma, parse_size, write_defects
from dirac_sk.lattice_gauge import LatticeGeometry
from dirac_sk.quadratic_spectrum import CouplingParams


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--size", default="4x4")
    ap.add_argument("--J", default="1,1,1,1")
    ap.add_argument("--gamma", default="0.2:0.7:0.05")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--generations", type=int, default=200)
    ap.add_argument("--population", type=int, default=100)
    ap.add_argument("--out", default="results/ga")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    geom = LatticeGeometry(*parse_size(args.size))
    J = parse_couplings(args.J)
    gammas = parse_gamma(args.gamma)
    cfg = gs.GAConfig(population_size=args.population, runs=args.runs, generations=args.generations, rng_seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    records = []
    for g in gammas:
        t = time.time()
        recs = gs.genetic_algorithm(geom, CouplingParams(J, g), cfg)
        records += recs
        logging.info("gamma=%.4g  best=%.12g  (%.0f s)", g, min(r.best_gap for r in recs), time.time() - t)
        gs.save_runs(records, out / "runs.json")

    curve = gs.pooled_ga_curve(records, geom, J, gammas)
    curve.to_csv(out / "gap_curve.csv")
    write_defects(curve, geom, out / "defects.txt")
    for p in curve.points:
        print(f"{p.gamma:8.4f}  {p.gap:.12g}  {p.sector.hex()}  deg={p.degeneracy}")
    print("boundaries:", ", ".join(f"{b:.4f}" for b in curve.boundaries) or "(none)")


if __name__ == "__main__":
    main()
