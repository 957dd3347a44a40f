"""Searching the gauge sectors for the Liouvillian gap g(gamma).

The fitness of a sector is its smallest positive relaxation rate; g(gamma) is
the minimum over all 2^(3N+1) sectors.  The genome of every heuristic is the
SectorId bit vector, so pure-gauge copies never compete.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .lattice_gauge import FluxData, LatticeGeometry, SectorId, sector_from_fluxes
from .quadratic_spectrum import CouplingParams, evaluate_sectors

DEG_RTOL = 1e-8  # sectors within this relative distance of g count as degenerate
MAX_EXHAUSTIVE_BITS = 16
MAX_NV_SECTORS = 10**8


# ----------------------------------------------------------------------
# records
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class GAConfig:
    population_size: int = 100
    runs: int = 10
    generations: int = 200
    mutation_rate: float | None = None  # None -> 2 / (3N+1)
    crossover_rate: float = 0.7
    elitism: int = 2
    tournament_size: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.runs < 1 or self.generations < 1:
            raise ValueError("runs and generations must be positive")
        for name in ("mutation_rate", "crossover_rate"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0 <= self.elitism < self.population_size:
            raise ValueError("elitism must be in [0, population_size)")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")

    def mutation_for(self, n_bits: int) -> float:
        return 2.0 / n_bits if self.mutation_rate is None else self.mutation_rate


@dataclass
class RunRecord:
    trace: list[float]
    best_sector: SectorId
    best_gap: float
    seed: int
    gamma: float = float("nan")
    method: str = "ga"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "gamma": self.gamma,
            "seed": self.seed,
            "best_gap": self.best_gap,
            "best_sector": self.best_sector.hex(),
            "n_bits": len(self.best_sector),
            "trace": list(self.trace),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            trace=[float(t) for t in d["trace"]],
            best_sector=SectorId.from_hex(d["best_sector"], int(d["n_bits"])),
            best_gap=float(d["best_gap"]),
            seed=int(d["seed"]),
            gamma=float(d["gamma"]),
            method=d.get("method", "ga"),
        )


@dataclass
class GapPoint:
    gamma: float
    gap: float
    sector: SectorId
    degeneracy: int = 1


@dataclass
class GapCurve:
    points: list[GapPoint]
    boundaries: list[float] = field(default_factory=list)

    def __post_init__(self):
        g = [p.gamma for p in self.points]
        if any(b <= a for a, b in zip(g, g[1:])):
            raise ValueError("gamma values must be strictly increasing")

    @property
    def gammas(self) -> np.ndarray:
        return np.array([p.gamma for p in self.points])

    @property
    def gaps(self) -> np.ndarray:
        return np.array([p.gap for p in self.points])

    @property
    def degeneracies(self) -> np.ndarray:
        return np.array([p.degeneracy for p in self.points])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["gamma", "gap", "argmin_sector_hex", "degeneracy"])
            for p in self.points:
                w.writerow([f"{p.gamma:.17g}", f"{p.gap:.17g}", p.sector.hex(), p.degeneracy])

    @classmethod
    def from_csv(cls, path, n_bits: int) -> "GapCurve":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        pts = [
            GapPoint(float(r["gamma"]), float(r["gap"]), SectorId.from_hex(r["argmin_sector_hex"], n_bits), int(r["degeneracy"]))
            for r in rows
        ]
        return cls(pts, regime_boundaries(pts))


def regime_boundaries(points) -> list[float]:
    """Midpoints between neighbouring grid values whose argmin sectors differ."""
    return [0.5 * (a.gamma + b.gamma) for a, b in zip(points, points[1:]) if a.sector != b.sector]


def save_runs(records, path) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in records], indent=1) + "\n")


def load_runs(path) -> list[RunRecord]:
    return [RunRecord.from_dict(d) for d in json.loads(Path(path).read_text())]


def default_gamma_grid() -> np.ndarray:
    lin = np.round(np.arange(0.01, 1.01 + 1e-9, 0.05), 10)
    tail = np.geomspace(1.5, 20.0, 12)
    return np.concatenate([lin, tail])


# ----------------------------------------------------------------------
# evaluation helpers
# ----------------------------------------------------------------------
def _all_sector_bits(n: int) -> np.ndarray:
    return ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def gap_of(sector_bits: np.ndarray, geom: LatticeGeometry, p: CouplingParams) -> np.ndarray:
    """Fitness (smallest positive rate) of each sector row."""
    return evaluate_sectors(np.atleast_2d(sector_bits), p, geom)[1]


def _min_point(bits: np.ndarray, rates: np.ndarray, gamma: float) -> GapPoint:
    g = float(rates.min())
    hit = np.abs(rates - g) <= DEG_RTOL * max(g, 1e-300)
    # canonical argmin: the smallest integer code among the minimizers
    cands = bits[hit]
    codes = [SectorId(b).to_int() for b in cands]
    best = cands[int(np.argmin(codes))]
    return GapPoint(float(gamma), g, SectorId(best), int(hit.sum()))


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def curve_over_pool(bits: np.ndarray, geom: LatticeGeometry, J, gammas, workers: int = 1) -> GapCurve:
    bits = np.unique(np.atleast_2d(np.asarray(bits, dtype=np.uint8)), axis=0)
    if bits.size == 0:
        raise ValueError("empty sector pool")
    gammas = np.asarray(gammas, dtype=float)

    def one(gm):
        return _min_point(bits, gap_of(bits, geom, CouplingParams(J, gm)), gm)

    pts = _map(one, gammas, workers)
    return GapCurve(pts, regime_boundaries(pts))


# ----------------------------------------------------------------------
# searches
# ----------------------------------------------------------------------
def exhaustive_sweep(geom: LatticeGeometry, J, gammas, workers: int = 1) -> GapCurve:
    if geom.n_sector_bits > MAX_EXHAUSTIVE_BITS:
        raise ValueError(f"exhaustive sweep refuses {geom.n_sector_bits} sector bits (limit {MAX_EXHAUSTIVE_BITS})")
    return curve_over_pool(_all_sector_bits(geom.n_sector_bits), geom, J, gammas, workers)


def fiducial_sector(geom: LatticeGeometry) -> SectorId:
    return sector_from_fluxes(FluxData.fiducial(geom), geom)


def hamming_ball(center: np.ndarray, radius: int) -> np.ndarray:
    """All bit vectors within Hamming distance ``radius`` of ``center``."""
    n = center.size
    count = sum(math.comb(n, k) for k in range(radius + 1))
    if count > MAX_NV_SECTORS:
        raise ValueError(f"{count} sectors within N_v={radius} exceed the guard {MAX_NV_SECTORS}")
    out = np.repeat(center[None].astype(np.uint8), count, axis=0)
    row = 1
    for k in range(1, radius + 1):
        for idx in combinations(range(n), k):
            out[row, list(idx)] ^= 1
            row += 1
    return out


def nv_limited_search(geom: LatticeGeometry, J, n_v: int, gammas, reference: SectorId | None = None, workers: int = 1) -> GapCurve:
    if n_v < 0:
        raise ValueError("N_v must be >= 0")
    ref = fiducial_sector(geom) if reference is None else reference
    return curve_over_pool(hamming_ball(ref.bits, min(n_v, geom.n_sector_bits)), geom, J, gammas, workers)


class _Fitness:
    """Memoized batch fitness for one (geometry, couplings)."""

    def __init__(self, geom: LatticeGeometry, p: CouplingParams):
        self.geom, self.p = geom, p
        self.cache: dict[bytes, float] = {}

    def __call__(self, pop: np.ndarray) -> np.ndarray:
        keys = [row.tobytes() for row in pop]
        todo = {k: i for i, k in enumerate(keys) if k not in self.cache}
        if todo:
            idx = list(todo.values())
            vals = gap_of(pop[idx], self.geom, self.p)
            for k, v in zip(todo, vals):
                self.cache[k] = float(v)
        return np.array([self.cache[k] for k in keys])


def _run_seeds(seed: int, runs: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1)[0]) for c in ss.spawn(runs)]


def genetic_algorithm(geom: LatticeGeometry, p: CouplingParams, cfg: GAConfig = GAConfig()) -> list[RunRecord]:
    nb = geom.n_sector_bits
    fit = _Fitness(geom, p)
    pm = cfg.mutation_for(nb)
    records = []
    for seed in _run_seeds(cfg.rng_seed, cfg.runs):
        rng = np.random.default_rng(seed)
        pop = rng.integers(0, 2, size=(cfg.population_size, nb), dtype=np.uint8)
        f = fit(pop)
        trace = []
        for _ in range(cfg.generations):
            order = np.argsort(f, kind="stable")
            trace.append(float(f[order[0]]))
            elite = pop[order[: cfg.elitism]]
            n_child = cfg.population_size - cfg.elitism
            # tournaments: the fitter of tournament_size random picks wins
            picks = rng.integers(0, cfg.population_size, size=(2 * n_child, cfg.tournament_size))
            winners = picks[np.arange(2 * n_child), np.argmin(f[picks], axis=1)]
            pa, pb = pop[winners[:n_child]], pop[winners[n_child:]]
            cross = rng.random(n_child) < cfg.crossover_rate
            mask = rng.random((n_child, nb)) < 0.5
            child = np.where(cross[:, None] & mask, pb, pa)
            child ^= (rng.random((n_child, nb)) < pm).astype(np.uint8)
            pop = np.concatenate([elite, child])
            f = fit(pop)
        i = int(np.argmin(f))
        trace.append(float(min(f[i], trace[-1])))
        best_bits = pop[i]
        records.append(RunRecord(trace, SectorId(best_bits), float(f[i]), seed, float(p.gamma), "ga"))
    return records


@dataclass(frozen=True)
class AnnealSchedule:
    t_start: float = 0.05
    t_end: float = 1e-4
    steps: int = 4000
    seed: int = 0

    def temperature(self, k: int) -> float:
        if self.t_start <= 0:
            return 0.0
        if self.steps <= 1:
            return self.t_start
        return self.t_start * (self.t_end / self.t_start) ** (k / (self.steps - 1))


def simulated_annealing(geom: LatticeGeometry, p: CouplingParams, schedule: AnnealSchedule = AnnealSchedule(), start: SectorId | None = None) -> RunRecord:
    """Metropolis single-bit flips with geometric cooling; T=0 is greedy descent."""
    nb = geom.n_sector_bits
    rng = np.random.default_rng(schedule.seed)
    fit = _Fitness(geom, p)
    cur = rng.integers(0, 2, nb, dtype=np.uint8) if start is None else start.bits.copy()
    fc = float(fit(cur[None])[0])
    best, fb = cur.copy(), fc
    trace = []
    for k in range(schedule.steps):
        T = schedule.temperature(k)
        prop = cur.copy()
        prop[rng.integers(nb)] ^= 1
        fp = float(fit(prop[None])[0])
        u = rng.random()
        if fp <= fc or (T > 0 and u < math.exp(-(fp - fc) / T)):
            cur, fc = prop, fp
        if fc < fb:
            best, fb = cur.copy(), fc
        trace.append(fb)
    return RunRecord(trace, SectorId(best), fb, schedule.seed, float(p.gamma), "sa")


def pooled_ga_curve(records, geom: LatticeGeometry, J, gammas, workers: int = 1) -> GapCurve:
    """Evaluate every pooled best individual at every gamma and keep the minimum."""
    records = list(records)
    if not records:
        raise ValueError("empty pool of run records")
    bits = np.stack([r.best_sector.bits for r in records])
    return curve_over_pool(bits, geom, J, gammas, workers)


# ----------------------------------------------------------------------
# asymptotics
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class AsymptoticFit:
    small_gamma_slope: float
    large_gamma_exponent: float
    large_gamma_coefficient: float


def fit_asymptotics(curve: GapCurve, small_max: float = 0.1, large_min: float = 5.0) -> AsymptoticFit:
    """Slope through the origin for gamma <= small_max, log-log fit for gamma >= large_min."""
    gm, g = curve.gammas, curve.gaps
    lo = (gm > 0) & (gm <= small_max + 1e-12)
    hi = gm >= large_min - 1e-12
    if lo.sum() < 2 or hi.sum() < 2:
        raise ValueError(f"need >= 2 points in both fit windows (have {lo.sum()} small, {hi.sum()} large)")
    slope = float(np.dot(gm[lo], g[lo]) / np.dot(gm[lo], gm[lo]))
    expo, icpt = np.polyfit(np.log(gm[hi]), np.log(g[hi]), 1)
    return AsymptoticFit(slope, float(expo), float(np.exp(icpt)))
