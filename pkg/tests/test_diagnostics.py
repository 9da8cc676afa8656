import math
from types import SimpleNamespace

import numpy as np
import pytest

from chemoflow.config import parse_config
from chemoflow.diagnostics import (
    ACCUMULATOR_KEYS,
    CSV_COLUMNS,
    SpaceTimeAccumulator,
    accumulate,
    chemo_energy,
    chemo_energy_transform,
    diagnostics_row,
    energy_report,
    entropy_density,
    monitor_bounds,
    spacetime_integrands,
)
from chemoflow.grid import Grid
from chemoflow.model import ModelParams, classify_regime
from chemoflow.stepper import run


def state(grid, n, c, u=None, t=0.0):
    return SimpleNamespace(t=t, n=n, c=c, u=u or grid.zero_faces())


def test_csv_columns_order():
    assert CSV_COLUMNS[:6] == ("t", "mass", "linf_c", "min_n", "min_c", "div_u_max")
    assert CSV_COLUMNS[-1] == "st_gradm1" and len(CSV_COLUMNS) == 24
    assert len(ACCUMULATOR_KEYS) == 10


def test_entropy_density_zero_convention():
    np.testing.assert_array_equal(entropy_density(np.array([0.0, 1.0])), [0.0, 0.0])


def test_uniform_state_all_zero():
    g = Grid.uniform(2, 8)
    r = energy_report(state(g, np.ones(g.shape), np.ones(g.shape)), ModelParams(), g)
    assert (r.entropy, r.chemo, r.kinetic, r.y) == (0.0, 0.0, 0.0, 0.0)
    assert (r.d_n, r.d_hess, r.d_grad4, r.d_gradu) == (0.0, 0.0, 0.0, 0.0)


def test_entropy_of_e():
    g = Grid(2, (4, 4), (2.0, 1.0))
    r = energy_report(state(g, np.full(g.shape, math.e), np.ones(g.shape)), ModelParams(), g)
    assert r.entropy == pytest.approx(math.e * 2.0)


def test_homogeneous_zero_dissipation():
    g = Grid.uniform(2, 8)
    r = energy_report(state(g, np.full(g.shape, 3.0), np.full(g.shape, 0.4)), ModelParams(mu=1.0), g)
    assert (r.d_n, r.d_grad4, r.d_gradu) == (0.0, 0.0, 0.0)
    assert abs(r.d_hess) < 1e-20  # round-off of the one-sided wall stencil
    assert r.reaction_entropy == pytest.approx((0.5 * 9.0 + 0.1 * 9.0) * math.log(3.0))


def test_kinetic_weighting():
    g = Grid.uniform(2, 4)
    u = (np.ones(g.face_shape(0)), np.zeros(g.face_shape(1)))
    r1 = energy_report(state(g, np.ones(g.shape), np.ones(g.shape), u), ModelParams(), g, 1.0)
    r3 = energy_report(state(g, np.ones(g.shape), np.ones(g.shape), u), ModelParams(), g, 3.0)
    assert r3.kinetic == pytest.approx(3 * r1.kinetic)


def _smooth(n):
    g = Grid.uniform(2, n)
    x, y = g.cell_centers()
    c = 1.5 + 0.5 * np.cos(np.pi * x) * np.cos(np.pi * y)
    return g, c


def test_chemo_two_routes_agree_second_order():
    p = ModelParams()
    diffs = []
    for n in (16, 32, 64):
        g, c = _smooth(n)
        diffs.append(abs(chemo_energy(c, g, p) - chemo_energy_transform(c, g, p)))
    assert diffs[0] / diffs[1] > 3.5 and diffs[1] / diffs[2] > 3.5


def test_chemo_quadrature_oracle():
    # f(s) = s, chi = 1: 1/2 int |grad c|^2 / c for c = 2 + cos(pi x)
    from scipy.integrate import quad

    exact = 0.5 * quad(lambda x: (np.pi * np.sin(np.pi * x)) ** 2 / (2 + np.cos(np.pi * x)), 0, 1)[0]
    g = Grid.uniform(2, 64)
    x, _ = g.cell_centers()
    assert chemo_energy(2 + np.cos(np.pi * x), g, ModelParams()) == pytest.approx(exact, rel=1e-3)


def test_functionals_converge_with_refinement():
    p = ModelParams()
    vals = []
    for n in (32, 64, 128):
        g = Grid.uniform(2, n)
        x, y = g.cell_centers()
        c = 1.5 + 0.5 * np.cos(np.pi * x) * np.cos(np.pi * y) + 0.2 * x * y
        r = energy_report(state(g, c, c), p, g)
        vals.append(np.array([r.entropy, r.chemo, r.d_n, r.d_hess, r.d_grad4]))
    ratio = np.abs(vals[0] - vals[1]) / np.abs(vals[1] - vals[2])
    assert np.all(ratio > 1.8)


def test_exclude_boundary_reduces_hessian():
    g, c = _smooth(16)
    p = ModelParams()
    full = energy_report(state(g, c, c), p, g)
    inner = energy_report(state(g, c, c), p, g, exclude_boundary=True)
    assert 0 < inner.d_hess < full.d_hess


def test_integrands_match_direct_quadrature():
    g = Grid.uniform(2, 16)
    x, y = g.cell_centers()
    p = ModelParams(m=1.0, eps=0.1)
    regime = classify_regime(1.0, 0.0, 2.0)
    n = 1 + x * y
    vals = spacetime_integrands(state(g, n, np.ones(g.shape)), p, g, regime)
    assert vals["st_np1"] == pytest.approx(np.sum((n + 0.1) ** (5 / 3)) * g.cell_volume, rel=1e-12)
    assert vals["st_nalpha"] == pytest.approx(np.sum(n**2) * g.cell_volume, rel=1e-12)
    assert vals["st_epsn2"] == pytest.approx(0.1 * np.sum(n**2) * g.cell_volume, rel=1e-12)
    assert vals["st_gradm1"] is None and vals["st_gradn_p3"] is not None
    assert vals["st_u103"] == 0.0 and vals["st_nuq"] == 0.0


def test_integrands_m_above_two():
    g = Grid.uniform(2, 8)
    x, _ = g.cell_centers()
    p = ModelParams(m=3.0)
    vals = spacetime_integrands(state(g, 1 + x, np.ones(g.shape)), p, g, classify_regime(3.0, 0.0, 2.0))
    assert vals["st_gradn_p3"] is None and vals["st_gradm1"] > 0


def test_accumulate_zero_dt_and_linear_growth():
    g = Grid.uniform(2, 8)
    x, _ = g.cell_centers()
    p = ModelParams()
    regime = classify_regime(1.0, 0.0, 2.0)
    s = state(g, 1 + x, 1 + x)
    acc = SpaceTimeAccumulator.for_params(p)
    assert accumulate(acc, s, s, p, g, regime, 0.0).totals == SpaceTimeAccumulator.for_params(p).totals
    one = accumulate(acc.copy(), s, s, p, g, regime, 0.1).totals
    for _ in range(3):
        accumulate(acc, s, s, p, g, regime, 0.1)
    for k in ACCUMULATOR_KEYS:
        if one[k] is None:
            assert acc.totals[k] is None
        else:
            assert acc.totals[k] == pytest.approx(3 * one[k])


def test_accumulate_inadmissible():
    g = Grid.uniform(2, 4)
    s = state(g, np.ones(g.shape), np.ones(g.shape))
    with pytest.raises(ValueError):
        accumulate(SpaceTimeAccumulator(), s, s, ModelParams(), g, classify_regime(0.5, 0.0, 2.0), 0.1)


def test_diagnostics_row_columns():
    g = Grid.uniform(2, 4)
    s = state(g, np.ones(g.shape), np.ones(g.shape))
    row = diagnostics_row(s, energy_report(s, ModelParams(), g), SpaceTimeAccumulator.for_params(ModelParams()), g)
    assert tuple(row) == CSV_COLUMNS


# ---------------------------------------------------------------------------
# bound monitoring

def _row(t, mass, **kw):
    base = {k: 0.0 for k in CSV_COLUMNS}
    base.update(t=t, mass=mass, linf_c=1.0, min_c=0.5, min_n=0.1, y=0.0)
    base.update(kw)
    return base


def test_monitor_detects_mass_growth():
    rows = [_row(0.0, 1.0), _row(1.0, 1.1)]
    rep = monitor_bounds(rows, ModelParams(kappa=0.0), volume=1.0)
    assert rep.violated == ["mass_bound"]
    assert monitor_bounds(rows, ModelParams(kappa=0.1), volume=1.0).all_held


def test_monitor_detects_max_principle_and_positivity():
    rows = [_row(0.0, 1.0), _row(0.1, 1.0, linf_c=1.0 + 1e-9), _row(0.2, 1.0, min_n=-1e-300)]
    rep = monitor_bounds(rows, ModelParams(), volume=1.0)
    assert set(rep.violated) == {"max_principle", "positivity"}


def test_monitor_detects_decreasing_accumulator_and_sink_budget():
    rows = [_row(0.0, 1.0, st_np1=1.0), _row(0.1, 1.0, st_np1=0.5, st_nalpha=5.0)]
    rep = monitor_bounds(rows, ModelParams(mu=1.0), volume=1.0)
    assert set(rep.violated) == {"spacetime_monotone", "sink_budget"}


def test_monitor_entropy_floor_and_energy_sup():
    rows = [_row(0.0, 1.0, entropy=-0.3, y=2.0), _row(0.1, 1.0, y=3.0)]
    rep = monitor_bounds(rows, ModelParams(), volume=1.0)
    assert rep["energy_bounded"].sup == 3.0
    assert rep["entropy_floor"].held
    rows[0]["entropy"] = -0.4
    assert not monitor_bounds(rows, ModelParams(), volume=1.0)["entropy_floor"].held


def test_monitor_empty():
    assert monitor_bounds([], ModelParams(), volume=1.0).bounds == ()


def test_decaying_run_all_monotone_bounds_held():
    res = run(parse_config("[grid]\nn_cells = 16\n[params]\nmu = 1\n[control]\nt_end = 0.1\n"))
    assert res.bounds.all_held
    mass = [r["mass"] for r in res.rows]
    assert all(b <= a for a, b in zip(mass, mass[1:]))


def test_kappa_zero_mass_equals_initial_minus_sinks():
    res = run(parse_config("[grid]\nn_cells = 16\n[params]\nmu = 1\n[control]\nt_end = 0.1\n"))
    m0 = res.rows[0]["mass"]
    for r in res.rows:
        # mass lost equals the accumulated sinks up to first-order staging error
        assert m0 - r["mass"] == pytest.approx(r["st_nalpha"] + r["st_epsn2"], rel=0.05, abs=1e-12)
    assert res.bounds["sink_budget"].held
