"""Acceptance criteria 1-14, one PASS/FAIL line each (printed in the
terminal summary and by ``python3 tests/test_acceptance.py``)."""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from chemoflow.config import load_config, parse_config
from chemoflow.errors import InfeasibleError
from chemoflow.fluid import helmholtz_solve, pressure_project, yosida_apply
from chemoflow.grid import Grid, face_inner, integrate
from chemoflow.model import (
    ModelParams,
    RegimeTag,
    classify_regime,
    interpolation_exponents_valid,
    psi,
    select_interpolation_exponents,
)
from chemoflow.operators import divergence, gradient, laplacian
from chemoflow.stepper import StepControl, advance, initial_data, run
from chemoflow.sweep import epsilon_sweep

from conftest import random_faces
from oracles import (
    dense_divergence,
    dense_gradient,
    dense_laplacian,
    dense_projection,
    dense_velocity_laplacian,
    flatten_faces,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
RESULTS = {}


def record(number, ok, detail):
    RESULTS[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, RESULTS[number]


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


def config(name, **control):
    cfg = load_config(CONFIGS / name)
    return cfg.replace("control", **control) if control else cfg


# ---------------------------------------------------------------------------
# shared runs

@pytest.fixture(scope="module")
def mass_run():
    # 32^2, m=1, mu=1, alpha=2, kappa=0.5, eps=0.1, T=0.5
    cfg = config("mass_identity.cfg")
    p = cfg.params
    assert (cfg.grid.n_cells, p.m, p.mu, p.alpha, p.kappa, p.eps, cfg.control.t_end) == ((32,), 1, 1, 2, 0.5, 0.1, 0.5)
    res, secs = timed(run, cfg)
    return cfg, res, secs


@pytest.fixture(scope="module")
def sweep():
    cfg = config("default.cfg")
    p = cfg.params
    assert (cfg.grid.n_cells, p.m, p.mu, p.kappa, cfg.control.t_end) == ((32,), 1, 0, 0, 0.5)
    assert cfg.sweep.eps_list == (0.1, 0.05, 0.025, 0.0125)
    rep, secs = timed(epsilon_sweep, cfg, workers=0)
    return rep, secs


@pytest.fixture(scope="module")
def route_runs():
    out = {}
    for name in ("default.cfg", "case2.cfg"):
        cfg = config(name)
        out[name] = (cfg,) + timed(run, cfg)
    return out


@pytest.fixture(scope="module")
def consumption_steps():
    """Strong consumption (f(s)=s, peaked n), stepped by hand to see every step."""
    cfg = config("consumption.cfg")
    params, control = cfg.build_params(), StepControl.from_config(cfg)
    state = initial_data(cfg)
    states = [state]
    while state.t < control.t_end - 1e-12:
        state, _ = advance(state, params, control)
        states.append(state)
    return states


# ---------------------------------------------------------------------------
# criteria

def test_c01_mass_identity(mass_run):
    _, res, secs = mass_run
    worst = max(abs(r.mass_residual) / r.mass_before for r in res.records)
    record(1, worst <= 1e-11 and secs < 30, f"max |mass residual|/mass = {worst:.2e} over {res.steps} steps, {secs:.1f} s")


def test_c02_mass_bound(mass_run):
    cfg, res, _ = mass_run
    kappa = cfg.params.kappa
    mass0 = res.rows[0]["mass"]
    margins = [math.exp(kappa * r["t"]) * mass0 * (1 + 1e-8) - r["mass"] for r in res.rows]
    record(2, min(margins) >= 0, f"min margin e^(kappa t) mass0 - mass = {min(margins):.3e}")


def test_c03_sink_budget(mass_run):
    cfg, res, _ = mass_run
    p, last = cfg.params, res.rows[-1]
    mass0 = res.rows[0]["mass"]
    sinks = p.mu * last["st_nalpha"] + last["st_epsn2"]
    budget = math.exp(p.kappa * last["t"]) * mass0 + mass0
    record(3, sinks <= budget, f"sinks {sinks:.4f} <= budget {budget:.4f}")


def test_c04_maximum_principle(mass_run, route_runs, consumption_steps):
    c_max = [float(s.c.max()) for s in consumption_steps]
    c_min = min(float(s.c.min()) for s in consumption_steps)
    scale = max(1.0, c_max[0])
    worst_rise = max(b - a for a, b in zip(c_max, c_max[1:]))
    ok = worst_rise <= 1e-12 * scale and c_min >= 0
    for res in [mass_run[1]] + [v[1] for v in route_runs.values()]:
        linf = [r["linf_c"] for r in res.rows]
        worst_rise = max(worst_rise, max(b - a for a, b in zip(linf, linf[1:])))
        ok = ok and max(b - a for a, b in zip(linf, linf[1:])) <= 1e-12 * max(1.0, linf[0])
        ok = ok and min(r["min_c"] for r in res.rows) >= 0
    record(4, ok, f"largest rise of max c {worst_rise:.1e}, min c {c_min:.2e} (strong consumption, {len(consumption_steps) - 1} steps)")


def test_c05_positivity(mass_run, route_runs, consumption_steps):
    mins = [float(s.n.min()) for s in consumption_steps]
    for res in [mass_run[1]] + [v[1] for v in route_runs.values()]:
        mins += [r["min_n"] for r in res.rows]
    record(5, min(mins) >= 0.0, f"min n = {min(mins):.3e} over all runs")


def test_c06_incompressibility():
    worst = {}
    for dim in (2, 3):
        cfg = parse_config(
            f"[grid]\ndim = {dim}\nn_cells = 16\n[params]\n"
            "n0 = 1 + 0.5*cos(pi*x)*cos(pi*y)\n"
            f"g = {', '.join(['sin(pi*y)', '-sin(pi*x)', '0'][:dim])}\n"
            "[control]\nt_end = 0.05\n"
        )
        res = run(cfg)
        worst[dim] = max(r.div_u for r in res.records)
    ok = max(worst.values()) <= 1e-8
    record(6, ok, f"max |div u| 16^2: {worst[2]:.1e}, 16^3: {worst[3]:.1e}")


def _forced_residual(dt):
    cfg = parse_config(
        "[grid]\nn_cells = 32\n[params]\nn0 = 1\ng = t*sin(pi*y), -t*sin(pi*x)\n"
        f"[control]\nt_end = 0.2\ncfl = 1\ndt_max = {dt}\noutput_interval = 0.2\n"
    )
    res = run(cfg)
    assert all(abs(r.dt - dt) < 1e-12 for r in res.records), "dt_max must bind"
    return max(abs(r.energy_residual) for r in res.records)


def test_c07_fluid_energy_first_order():
    start = time.perf_counter()
    dts = (0.02, 0.01, 0.005, 0.0025)
    res = [_forced_residual(dt) for dt in dts]
    ratios = [a / b for a, b in zip(res, res[1:])]
    secs = time.perf_counter() - start
    ok = min(ratios) >= 1.8 and secs < 60
    record(7, ok, f"residual ratios per dt halving {', '.join(f'{r:.2f}' for r in ratios)}, {secs:.1f} s")


def test_c08_energy_boundedness(sweep):
    rep, secs = sweep
    spread = rep.ratios["sup_y"]
    record(8, spread < 3 and secs < 600, f"sup_t y spread {spread:.3f} over eps {rep.eps_list}, sweep {secs:.1f} s")


def test_c09_spacetime_uniformity(sweep):
    rep, _ = sweep
    keys = ("st_np1", "st_flux_p2", "st_gradc4", "st_u103", "st_nuq")
    spreads = {k: rep.ratios[k] for k in keys}
    worst = max(spreads, key=spreads.get)
    record(9, all(v < 3 for v in spreads.values()), f"largest spread {worst} = {spreads[worst]:.3f}")


def test_c10_cauchy_trend(sweep):
    rep, _ = sweep
    detail = "; ".join(f"{k}: " + ", ".join(f"{d:.2e}" for d in rep.distances[k]) for k in ("n", "c", "u"))
    record(10, rep.cauchy_all, detail)


def test_c11_operator_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    err, sbp = 0.0, 0.0
    for grid in (Grid.uniform(2, 8), Grid(2, (5, 7), (1.0, 1.5)), Grid(2, (3, 4), (0.5, 1.0))):
        f = rng.standard_normal(grid.shape)
        F = random_faces(grid, rng, walls_zero=True)
        for bc in ("neumann0", "dirichlet0"):
            err = max(err, np.max(np.abs(flatten_faces(gradient(f, grid, bc)) - dense_gradient(grid, bc) @ f.ravel())))
            err = max(err, np.max(np.abs(laplacian(f, grid, bc).ravel() - dense_laplacian(grid, bc) @ f.ravel())))
        err = max(err, np.max(np.abs(divergence(F, grid).ravel() - dense_divergence(grid) @ flatten_faces(F))))
        err = max(err, np.max(np.abs(flatten_faces(pressure_project(F, grid)[0]) - flatten_faces(dense_projection(F, grid)))))
        eps = 0.05
        helm = []
        for d in range(grid.dim):
            sl = [slice(None)] * grid.dim
            sl[d] = slice(1, -1)
            inner = F[d][tuple(sl)]
            A = np.eye(inner.size) - eps * dense_velocity_laplacian(grid, d)
            w = np.zeros(grid.face_shape(d))
            w[tuple(sl)] = np.linalg.solve(A, inner.ravel()).reshape(inner.shape)
            helm.append(w)
        np.testing.assert_allclose(flatten_faces(helmholtz_solve(F, grid, eps)), flatten_faces(helm), atol=1e-8)
        yos = flatten_faces(yosida_apply(F, grid, eps)) - flatten_faces(dense_projection(tuple(helm), grid))
        err = max(err, np.max(np.abs(yos)))
        lhs = face_inner(gradient(f, grid), F, grid)
        sbp = max(sbp, abs(lhs + integrate(f * divergence(F, grid), grid)) / max(1.0, abs(lhs)))
    secs = time.perf_counter() - start
    record(11, err <= 1e-8 and sbp <= 1e-13, f"max dense mismatch {err:.1e}, summation by parts {sbp:.1e}, {secs:.2f} s")


def test_c12_psi_closed_form():
    p = ModelParams()
    s = np.geomspace(0.01, 100, 100)
    s[0] = 0.0100001  # open interval at 0.01
    err = max(abs(psi(v, p) - 2 * (math.sqrt(v) - 1)) for v in s)
    record(12, err <= 1e-8, f"max |psi(s) - 2(sqrt(s) - 1)| = {err:.1e} on 100 points")


def test_c13_exponent_arithmetic():
    ok = True
    r = classify_regime(1, 0, 2)
    ok &= r.tag is RegimeTag.CASE1 and np.allclose((r.p1, r.p2, r.p3), (5 / 3, 5 / 4, 5 / 4), rtol=1e-15)
    r = classify_regime(0.5, 1, 2)
    ok &= r.tag is RegimeTag.CASE2 and np.allclose((r.p1, r.p2, r.p3), (2, 1.6, 8 / 7), rtol=1e-15)
    ok &= classify_regime(2 / 3, 0, 2).tag is RegimeTag.INADMISSIBLE
    ok &= classify_regime(0.5, 0, 2).tag is RegimeTag.INADMISSIBLE
    r2, q2 = select_interpolation_exponents(2.0)
    r53, q53 = select_interpolation_exponents(5 / 3)
    ok &= abs(r2 - 8 / 5) < 1e-12 and abs(r53 - 27 / 20) < 1e-12
    ok &= interpolation_exponents_valid(2.0, r2, q2) and interpolation_exponents_valid(5 / 3, r53, q53)
    try:
        select_interpolation_exponents(4 / 3)
        ok = False
    except InfeasibleError:
        pass
    record(13, bool(ok), f"r(2)={r2:.4g} q(2)={q2:.4g}, r(5/3)={r53:.4g} q(5/3)={q53:.4g}, p1=4/3 infeasible, m=2/3 mu=0 inadmissible")


def test_c14_both_routes(route_runs):
    parts, ok = [], True
    for name, expected in (("default.cfg", RegimeTag.CASE1), ("case2.cfg", RegimeTag.CASE2)):
        cfg, res, secs = route_runs[name]
        p = cfg.params
        tag = classify_regime(p.m, p.mu, p.alpha).tag
        held = res.bounds.all_held and abs(res.final.t - cfg.control.t_end) < 1e-12
        ok &= tag is expected and held and secs < 120
        parts.append(f"{tag.value} {'all bounds held' if held else 'violated: ' + ','.join(res.bounds.violated)} in {secs:.1f} s")
    record(14, ok, "; ".join(parts))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
