"""Command-line experiments: gap sweeps, heuristic searches, perturbative
checks, exact-diagonalization cross-checks and defect reports.

    dirac-sk sweep --size 2x2 --J 1,1,1,1 --gamma 0.01:1.01:0.05 --out runs/
    dirac-sk ga --size 4x4 --gamma 0.3:0.5:0.02 --seed 3 --out runs/
    dirac-sk perturb --min-s --size 2x2
    dirac-sk ed-check --model sk-ladder --cells 2
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import gap_search as gs
from . import liouville_ed as ed
from . import perturbation as pt
from .lattice_gauge import (
    FluxData,
    LatticeGeometry,
    SectorId,
    defect_names,
    fluxes_from_defects,
    fluxes_from_sector,
    sector_from_fluxes,
)
from .quadratic_spectrum import CouplingParams

log = logging.getLogger("dirac_sk")

METHODS = ("exhaustive", "nv", "ga", "sa", "perturb", "ed-check", "report")
COMMAND_METHOD = {"sweep": "exhaustive", "nv": "nv", "ga": "ga", "sa": "sa", "perturb": "perturb", "ed-check": "ed-check", "report": "report"}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "bilayer"
    Nx: int = 2
    Ny: int = 2
    J: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    gammas: tuple[float, ...] = ()
    method: str = "exhaustive"
    seed: int = 0
    threads: int = 1
    out: str = "."
    n_v: int = 2
    population: int = 100
    runs: int = 10
    generations: int = 200
    sa_steps: int = 4000
    cells: int = 2
    extra: dict = field(default_factory=dict)

    @property
    def geom(self) -> LatticeGeometry:
        return LatticeGeometry(self.Nx, self.Ny)

    def validate(self) -> "ExperimentConfig":
        if self.model not in ("bilayer", "sk-ladder"):
            raise ConfigError(f"model: expected 'bilayer' or 'sk-ladder', got {self.model!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown method {self.method!r}")
        if self.Nx < 2 or self.Ny < 2 or self.Nx % 2 or self.Ny % 2:
            raise ConfigError(f"size: Nx and Ny must be even and >= 2, got {self.Nx}x{self.Ny}")
        if len(self.J) != 4:
            raise ConfigError("J: need four couplings")
        if any(g < 0 for g in self.gammas):
            raise ConfigError("gamma: values must be nonnegative")
        if self.method in ("exhaustive", "nv", "ga", "sa") and not self.gammas:
            raise ConfigError("gamma: the method needs at least one gamma value")
        if self.method == "exhaustive" and self.geom.n_sector_bits > gs.MAX_EXHAUSTIVE_BITS:
            raise ConfigError(f"size: exhaustive sweep limited to {gs.MAX_EXHAUSTIVE_BITS} sector bits (2x2)")
        if self.threads < 1:
            raise ConfigError("threads: must be >= 1")
        if self.cells < 1:
            raise ConfigError("cells: must be >= 1")
        return self


# ----------------------------------------------------------------------
# parsing helpers
# ----------------------------------------------------------------------
def parse_size(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"size: expected WxH, got {text!r}") from None
    return nx, ny


def parse_couplings(text: str) -> tuple[float, float, float, float]:
    try:
        J = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"J: expected four comma-separated numbers, got {text!r}") from None
    if len(J) != 4:
        raise ConfigError(f"J: expected four values, got {len(J)}")
    return J


def parse_gamma(text: str | None, log_text: str | None = None) -> tuple[float, ...]:
    """``start:stop:step`` (stop inclusive) or a comma list; ``log_text`` is
    ``start:stop:count`` on a geometric grid."""
    vals: list[float] = []
    try:
        if text:
            if ":" in text:
                a, b, s = (float(v) for v in text.split(":"))
                if s <= 0:
                    raise ConfigError("gamma: step must be positive")
                n = int(np.floor((b - a) / s + 1e-9)) + 1
                vals += list(np.round(a + s * np.arange(n), 12))
            else:
                vals += [float(v) for v in text.split(",")]
        if log_text:
            a, b, n = log_text.split(":")
            vals += list(np.geomspace(float(a), float(b), int(n)))
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"gamma: cannot parse {text or log_text!r}") from None
    return tuple(sorted(set(float(v) for v in vals)))


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


_CONVERT = {
    "size": lambda v: dict(zip(("Nx", "Ny"), parse_size(v))),
    "J": lambda v: {"J": parse_couplings(v)},
    "gamma": lambda v: {"gammas": parse_gamma(v)},
    "gamma_log": lambda v: {"gammas": parse_gamma(None, v)},
}


def _apply(cfg: ExperimentConfig, values: dict[str, str]) -> ExperimentConfig:
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    upd: dict = {}
    extra = dict(cfg.extra)
    for k, v in values.items():
        if k in _CONVERT:
            new = _CONVERT[k](v)
            if "gammas" in new and "gammas" in upd:
                new["gammas"] = tuple(sorted(set(upd["gammas"]) | set(new["gammas"])))
            upd.update(new)
        elif k in known and k not in ("J", "gammas", "extra"):
            cur = getattr(cfg, k)
            try:
                upd[k] = type(cur)(v)
            except ValueError:
                raise ConfigError(f"{k}: cannot parse {v!r}") from None
        else:
            extra[k] = v
    return replace(cfg, **upd, extra=extra)


# ----------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------
def report_defects(f: FluxData, geom: LatticeGeometry) -> str:
    """+1 gauge-invariant data relative to the all-(-1) NESS, comma separated."""
    return ", ".join(defect_names(f, geom))


_DEFECT_TOKEN = re.compile(r"(?:Phi~?[+-]|Psi[+-]|Omega[+-])_\{\s*\d+\s*,\s*\d+\s*\}|W[xy]~?")


def parse_defect_report(text: str, geom: LatticeGeometry) -> FluxData:
    """Inverse of :func:`report_defects` (names may contain commas)."""
    text = text.strip()
    if text == "(none)":
        text = ""
    names = _DEFECT_TOKEN.findall(text)
    rest = _DEFECT_TOKEN.sub("", text).replace(",", "").strip()
    if rest:
        raise ConfigError(f"defects: cannot parse {rest!r}")
    return fluxes_from_defects(names, geom)


def write_defects(curve: gs.GapCurve, geom: LatticeGeometry, path) -> None:
    lines = []
    for p in curve.points:
        f = fluxes_from_sector(p.sector, geom)
        lines.append(f"gamma={p.gamma:.17g} gap={p.gap:.17g} sector={p.sector.hex()} degeneracy={p.degeneracy}")
        lines.append(f"  defects: {report_defects(f, geom) or '(none)'}")
    Path(path).write_text("\n".join(lines) + "\n")


def _emit_curve(curve: gs.GapCurve, cfg: ExperimentConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    curve.to_csv(out / "gap_curve.csv")
    write_defects(curve, cfg.geom, out / "defects.txt")
    print(f"{'gamma':>12} {'gap':>22} {'deg':>5}  sector")
    for p in curve.points:
        print(f"{p.gamma:12.6g} {p.gap:22.15g} {p.degeneracy:5d}  {p.sector.hex()}")
    if curve.boundaries:
        print("regime boundaries:", ", ".join(f"{b:.6g}" for b in curve.boundaries))
    print(f"wrote {out / 'gap_curve.csv'} and {out / 'defects.txt'}")


# ----------------------------------------------------------------------
# dispatch
# ----------------------------------------------------------------------
def run(cfg: ExperimentConfig) -> int:
    cfg.validate()
    geom = cfg.geom
    if cfg.method == "exhaustive":
        _emit_curve(gs.exhaustive_sweep(geom, cfg.J, cfg.gammas, cfg.threads), cfg)
    elif cfg.method == "nv":
        _emit_curve(gs.nv_limited_search(geom, cfg.J, cfg.n_v, cfg.gammas, workers=cfg.threads), cfg)
    elif cfg.method == "ga":
        ga = gs.GAConfig(population_size=cfg.population, runs=cfg.runs, generations=cfg.generations, rng_seed=cfg.seed)
        records = []
        for g in cfg.gammas:
            log.info("GA at gamma=%g", g)
            records += gs.genetic_algorithm(geom, CouplingParams(cfg.J, g), ga)
        _save_and_pool(records, cfg)
    elif cfg.method == "sa":
        records = []
        for k, g in enumerate(cfg.gammas):
            sched = gs.AnnealSchedule(steps=cfg.sa_steps, seed=cfg.seed + k)
            records.append(gs.simulated_annealing(geom, CouplingParams(cfg.J, g), sched))
        _save_and_pool(records, cfg)
    elif cfg.method == "perturb":
        return _perturb(cfg)
    elif cfg.method == "ed-check":
        return _ed_check(cfg)
    elif cfg.method == "report":
        return _report(cfg)
    return 0


def _save_and_pool(records, cfg: ExperimentConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    gs.save_runs(records, out / "runs.json")
    _emit_curve(gs.pooled_ga_curve(records, cfg.geom, cfg.J, cfg.gammas, cfg.threads), cfg)
    print(f"wrote {out / 'runs.json'}")


def _perturb(cfg: ExperimentConfig) -> int:
    geom = cfg.geom
    did = False
    if cfg.extra.get("min_s"):
        print(pt.min_nonzero_s(geom))
        did = True
    if "s" in cfg.extra:
        s = float(cfg.extra["s"])
        for g in cfg.gammas or (1.0,):
            slow, fast = pt.large_gamma_rates(s, g)
            print(f"s={s:g} gamma={g:g}: slow={slow:.12g} fast={fast:.12g}")
        did = True
    if cfg.extra.get("master"):
        if geom.N > pt.MAX_M_SITES:
            raise ConfigError(f"size: master matrix limited to N <= {pt.MAX_M_SITES}")
        M = pt.sector_master_matrix(np.zeros(geom.n_links, dtype=np.uint8), cfg.J, geom)
        ev = M.eigenvalues()
        ref = pt.lambda_spectrum(geom.N)
        print(f"uniform-sector M: slope={pt.small_gamma_slope(M):.12g} max|M - closed form|={np.abs(ev - ref).max():.3e}")
        did = True
    if not did:
        raise ConfigError("perturb: pass --min-s, --s VALUE or --master")
    return 0


def _ed_check(cfg: ExperimentConfig) -> int:
    ok = True
    gammas = cfg.gammas or (0.0, 0.5, 1.0)
    if cfg.model == "sk-ladder":
        Jx, Jy = cfg.J[0], cfg.J[1]
        for g in gammas:
            rep = ed.sk_ed_check(Jx, Jy, g, cfg.cells)
            gen = ed.sk_generator(Jx, Jy, g, cfg.cells)
            mom = ed.moment_crosscheck(gen, ed.sk_sector_spectrum(Jx, Jy, g, cfg.cells))
            print(f"{rep.label}: multiset dev {rep.max_deviation:.3e} ({'ok' if rep.passed else 'FAIL'}), "
                  f"moment rel err {mom.rel_errors.max():.3e} ({'ok' if mom.passed else 'FAIL'})")
            ok &= rep.passed and mom.passed
    else:
        for g in gammas:
            p = CouplingParams(cfg.J, g)
            gen = ed.bilayer_generator(cfg.Nx, cfg.Ny, p)
            mom = ed.moment_crosscheck(gen, ed.bilayer_sector_spectrum(cfg.geom, p))
            print(f"bilayer {cfg.Nx}x{cfg.Ny} J={cfg.J} gamma={g:g}: moment rel err {mom.rel_errors.max():.3e} ({'ok' if mom.passed else 'FAIL'})")
            ok &= mom.passed
    return 0 if ok else 1


def _report(cfg: ExperimentConfig) -> int:
    geom = cfg.geom
    if "sector" in cfg.extra:
        f = fluxes_from_sector(SectorId.from_hex(cfg.extra["sector"], geom.n_sector_bits), geom)
    elif "defects" in cfg.extra:
        f = parse_defect_report(cfg.extra["defects"], geom)
    elif "curve" in cfg.extra:
        curve = gs.GapCurve.from_csv(cfg.extra["curve"], geom.n_sector_bits)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        write_defects(curve, geom, out / "defects.txt")
        print((out / "defects.txt").read_text(), end="")
        return 0
    else:
        raise ConfigError("report: pass --sector HEX, --defects LIST or --curve CSV")
    print(report_defects(f, geom) or "(none)")
    print(f"sector={sector_from_fluxes(f, geom).hex()}")
    return 0


# ----------------------------------------------------------------------
# argparse front end
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--model", choices=("bilayer", "sk-ladder"))
    common.add_argument("--size", help="lattice WxH, e.g. 2x2")
    common.add_argument("--J", help="couplings J1,J2,J3,J4")
    common.add_argument("--gamma", help="start:stop:step (inclusive) or a comma list")
    common.add_argument("--gamma-log", help="start:stop:count on a geometric grid")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="dirac-sk", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="exhaustive 2x2 sector sweep")
    p = sub.add_parser("nv", parents=[common], help="sectors within N_v flips of the fiducial NESS")
    p.add_argument("--nv", dest="n_v", type=int)
    p = sub.add_parser("ga", parents=[common], help="genetic algorithm over sector bit strings")
    p.add_argument("--population", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--generations", type=int)
    p = sub.add_parser("sa", parents=[common], help="simulated annealing over sector bit strings")
    p.add_argument("--steps", dest="sa_steps", type=int)
    p = sub.add_parser("perturb", parents=[common], help="perturbative small/large gamma checks")
    p.add_argument("--min-s", action="store_true")
    p.add_argument("--s", help="S-matrix eigenvalue for the large-gamma roots")
    p.add_argument("--master", action="store_true", help="uniform-sector master matrix")
    p = sub.add_parser("ed-check", parents=[common], help="generator vs sector spectrum")
    p.add_argument("--cells", type=int)
    p = sub.add_parser("report", parents=[common], help="defect report of a sector")
    p.add_argument("--sector", help="SectorId hex")
    p.add_argument("--defects", help="comma-separated defect names")
    p.add_argument("--curve", help="gap_curve.csv to annotate")
    return ap


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig(method=COMMAND_METHOD[ns.command])
    if ns.command == "ed-check":
        cfg = replace(cfg, gammas=())
    if ns.config:
        cfg = _apply(cfg, read_config_file(ns.config))
    flags = {k: v for k, v in vars(ns).items() if v not in (None, False) and k not in ("config", "command", "verbose")}
    flags = {k: (str(v) if not isinstance(v, str) else v) for k, v in flags.items()}
    if "gamma" in flags and "gamma_log" in flags:
        g = parse_gamma(flags.pop("gamma"), flags.pop("gamma_log"))
        cfg = replace(cfg, gammas=g)
    cfg = _apply(cfg, flags)
    return cfg


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(config_from_args(ns))
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
