import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirac_sk import gap_search as gs
from dirac_sk.lattice_gauge import LatticeGeometry, SectorId, fluxes_from_sector
from dirac_sk.quadratic_spectrum import CouplingParams

from conftest import J_GENERIC, J_UNIFORM, all_sector_results


@pytest.fixture(scope="module")
def geom():
    return LatticeGeometry(2, 2)


def test_ga_config_validation():
    for bad in (dict(population_size=1), dict(runs=0), dict(mutation_rate=1.5), dict(elitism=100), dict(tournament_size=0)):
        with pytest.raises(ValueError):
            gs.GAConfig(**bad)
    assert gs.GAConfig().mutation_for(13) == pytest.approx(2 / 13)
    assert gs.GAConfig(mutation_rate=0.1).mutation_for(13) == 0.1


def test_exhaustive_matches_cached_scan(geom):
    bits, _, r = all_sector_results(J_GENERIC, 0.5)
    curve = gs.exhaustive_sweep(geom, J_GENERIC, [0.5])
    pt = curve.points[0]
    assert pt.gap == r.min()
    assert pt.degeneracy == int(np.sum(np.abs(r - r.min()) <= gs.DEG_RTOL * r.min()))
    # the emitted argmin sector re-evaluates to the emitted gap
    assert gs.gap_of(pt.sector.bits, geom, CouplingParams(J_GENERIC, 0.5))[0] == pytest.approx(pt.gap, rel=1e-12)


def test_exhaustive_guard():
    with pytest.raises(ValueError):
        gs.exhaustive_sweep(LatticeGeometry(4, 4), J_UNIFORM, [0.3])


def test_curve_csv_round_trip(tmp_path, geom):
    curve = gs.exhaustive_sweep(geom, J_GENERIC, [0.2, 0.9, 3.0])
    path = tmp_path / "c.csv"
    curve.to_csv(path)
    back = gs.GapCurve.from_csv(path, geom.n_sector_bits)
    assert np.array_equal(back.gammas, curve.gammas)
    assert np.array_equal(back.gaps, curve.gaps)
    assert [p.sector for p in back.points] == [p.sector for p in curve.points]
    assert back.boundaries == curve.boundaries


def test_curve_requires_increasing_gamma():
    s = SectorId.from_int(0, 13)
    with pytest.raises(ValueError):
        gs.GapCurve([gs.GapPoint(1.0, 0.1, s), gs.GapPoint(0.5, 0.1, s)])


def test_regime_boundaries_midpoints():
    a, b = SectorId.from_int(1, 13), SectorId.from_int(2, 13)
    pts = [gs.GapPoint(0.1, 1, a), gs.GapPoint(0.3, 1, a), gs.GapPoint(0.5, 1, b)]
    assert gs.regime_boundaries(pts) == [pytest.approx(0.4)]


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 2**13 - 1), st.integers(0, 3))
def test_hamming_ball(code, radius):
    c = SectorId.from_int(code, 13).bits
    ball = gs.hamming_ball(c, radius)
    assert len({row.tobytes() for row in ball}) == ball.shape[0]
    assert np.all(np.sum(ball != c, axis=1) <= radius)
    assert ball.shape[0] == sum(__import__("math").comb(13, k) for k in range(radius + 1))


def test_nv_search_full_radius_equals_exhaustive(geom):
    ex = gs.exhaustive_sweep(geom, J_GENERIC, [0.4])
    nv = gs.nv_limited_search(geom, J_GENERIC, 13, [0.4])
    assert nv.points[0].gap == ex.points[0].gap
    assert nv.points[0].sector == ex.points[0].sector
    with pytest.raises(ValueError):
        gs.nv_limited_search(geom, J_GENERIC, -1, [0.4])


def test_nv_zero_is_fiducial(geom):
    nv = gs.nv_limited_search(geom, J_UNIFORM, 0, [0.3])
    assert nv.points[0].sector == gs.fiducial_sector(geom)
    f = fluxes_from_sector(gs.fiducial_sector(geom), geom)
    assert np.all(f.to_vector() == -1)


def test_ga_is_deterministic_and_monotone(geom):
    p = CouplingParams(J_GENERIC, 0.6)
    cfg = gs.GAConfig(population_size=20, runs=2, generations=15, rng_seed=7)
    a = gs.genetic_algorithm(geom, p, cfg)
    b = gs.genetic_algorithm(geom, p, cfg)
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]
    for r in a:
        assert all(y <= x for x, y in zip(r.trace, r.trace[1:]))
        assert r.best_gap == pytest.approx(gs.gap_of(r.best_sector.bits, geom, p)[0])


def test_run_records_json_round_trip(tmp_path, geom):
    p = CouplingParams(J_GENERIC, 0.6)
    recs = gs.genetic_algorithm(geom, p, gs.GAConfig(population_size=10, runs=2, generations=3))
    gs.save_runs(recs, tmp_path / "runs.json")
    back = gs.load_runs(tmp_path / "runs.json")
    assert [r.to_dict() for r in back] == [r.to_dict() for r in recs]
    json.loads((tmp_path / "runs.json").read_text())


def test_pooled_curve_bounds_exhaustive(geom):
    p = CouplingParams(J_GENERIC, 0.6)
    recs = gs.genetic_algorithm(geom, p, gs.GAConfig(population_size=20, runs=2, generations=10))
    gm = [0.3, 0.6, 2.0]
    pooled = gs.pooled_ga_curve(recs, geom, J_GENERIC, gm)
    ex = gs.exhaustive_sweep(geom, J_GENERIC, gm)
    assert np.all(pooled.gaps >= ex.gaps - 1e-15)
    with pytest.raises(ValueError):
        gs.pooled_ga_curve([], geom, J_GENERIC, gm)


def test_simulated_annealing(geom):
    p = CouplingParams(J_GENERIC, 0.6)
    sched = gs.AnnealSchedule(steps=200, seed=3)
    r = gs.simulated_annealing(geom, p, sched)
    assert r.best_gap == pytest.approx(gs.gap_of(r.best_sector.bits, geom, p)[0])
    assert gs.simulated_annealing(geom, p, sched).to_dict() == r.to_dict()
    assert sched.temperature(0) == pytest.approx(sched.t_start)
    assert sched.temperature(sched.steps - 1) == pytest.approx(sched.t_end)
    # zero temperature is a greedy descent: never accepts an uphill move
    greedy = gs.simulated_annealing(geom, p, gs.AnnealSchedule(t_start=0.0, steps=100, seed=1))
    assert all(y <= x for x, y in zip(greedy.trace, greedy.trace[1:]))


def test_fit_asymptotics_on_synthetic_curve():
    s = SectorId.from_int(0, 13)
    gm = np.concatenate([np.linspace(0.01, 0.1, 5), np.geomspace(5, 20, 5)])
    g = np.where(gm < 1, 0.8 * gm, 3.0 / gm)
    fit = gs.fit_asymptotics(gs.GapCurve([gs.GapPoint(a, b, s) for a, b in zip(gm, g)]))
    assert fit.small_gamma_slope == pytest.approx(0.8)
    assert fit.large_gamma_exponent == pytest.approx(-1.0)
    assert fit.large_gamma_coefficient == pytest.approx(3.0)
    with pytest.raises(ValueError):
        gs.fit_asymptotics(gs.GapCurve([gs.GapPoint(1.0, 1.0, s)]))


def test_default_grid_sorted():
    g = gs.default_gamma_grid()
    assert np.all(np.diff(g) > 0) and g[0] > 0 and g[-1] == pytest.approx(20.0)
