"""Time stepping for the coupled cell / oxygen / fluid system.

Each step is a first-order splitting: the fluid update, then the oxygen
update (upwind advection, implicit diffusion, exponential consumption), then
the cell update (donor-cell advection and taxis, implicit diffusion with
lagged coefficients, Patankar-type reaction).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import Config, initial_velocity_sources
from .diagnostics import (
    SpaceTimeAccumulator,
    diagnostics_row,
    energy_report,
    monitor_bounds,
    spacetime_integrands,
)
from .errors import DomainError, InvalidInitialDataError, StabilityError
from .expressions import spatial_function
from .fluid import (
    PressureSolve,
    energy_identity_residual,
    fluid_step,
    forcing_ratio,
    hydrostatic_pressure,
    max_divergence,
    pressure_project,
)
from .grid import Grid, axis_slice, faces_to_cells, integrate
from .io import state_fields, write_snapshot
from .model import ModelParams, classify_regime, d_eps
from .operators import (
    advect_scalar,
    chemotactic_velocity,
    chemotaxis_flux,
    diffusion_matrix,
    divergence,
    laplacian_matrix,
)

# explicit transport substeps keep dt * (outflow rate) below this
TRANSPORT_LIMIT = 0.5


@dataclass
class SimState:
    t: float
    n: np.ndarray
    c: np.ndarray
    u: tuple
    P: np.ndarray
    grid: Grid = field(repr=False, compare=False, default=None)


@dataclass(frozen=True)
class StepControl:
    dt_max: float = 0.01
    cfl_number: float = 0.5
    t_end: float = 0.1
    output_interval: float = 0.01
    dt_min: float = 1e-8
    div_tol: float = 1e-8
    pressure_tol: float = 1e-12
    pressure_max_iter: int = 5000
    c_floor: float = 1e-12
    n_floor: float = 1e-12

    def __post_init__(self):
        if not (self.dt_max > 0 and self.t_end >= 0 and self.output_interval > 0 and self.dt_min > 0):
            raise ValueError("dt_max, output_interval and dt_min must be positive, t_end >= 0")
        if not 0 < self.cfl_number <= 1:
            raise ValueError("cfl_number must lie in (0, 1]")

    @classmethod
    def from_config(cls, cfg: Config) -> "StepControl":
        c = cfg.control
        return cls(
            dt_max=c.dt_max,
            cfl_number=c.cfl,
            t_end=c.t_end,
            output_interval=c.output_interval,
            dt_min=c.dt_min,
            div_tol=c.div_tol,
            pressure_tol=c.pressure_tol,
            pressure_max_iter=c.pressure_max_iter,
            c_floor=c.c_floor,
            n_floor=c.n_floor,
        )


@dataclass(frozen=True)
class StepRecord:
    t: float
    dt: float
    mass_before: float
    mass_after: float
    mass_residual: float
    energy_residual: float
    forcing_ratio: Optional[float]
    substeps_c: int
    substeps_n: int
    div_u: float


# ---------------------------------------------------------------------------
# initial data

def _refined_mass(expr: str, grid: Grid, factor: int = 4) -> float:
    fine = Grid(grid.dim, tuple(k * factor for k in grid.n_cells), grid.extent)
    values = np.asarray(spatial_function(expr)(*fine.cell_centers()), dtype=float) * np.ones(fine.shape)
    return integrate(values, fine)


def initial_data(config: Config, grid: Optional[Grid] = None, solver: Optional[PressureSolve] = None) -> SimState:
    """Sample the configured initial fields.

    ``n0`` is rescaled to the requested mass (a refined quadrature of the
    expression when the mass is ``auto``), negative ``c0`` values are clamped
    to zero and ``u0`` is projected onto discretely divergence-free fields.
    The pressure starts in balance with the gradient part of the force.
    """
    grid = grid or config.build_grid()
    p = config.params
    centers = grid.cell_centers()
    n = np.asarray(spatial_function(p.n0)(*centers), dtype=float) * np.ones(grid.shape)
    if not np.all(n > 0):
        raise InvalidInitialDataError(f"n0 must be positive everywhere (min {n.min():.3g})")
    target = p.n0_mass if p.n0_mass is not None else _refined_mass(p.n0, grid)
    n = n * (target / integrate(n, grid))

    c = np.asarray(spatial_function(p.c0)(*centers), dtype=float) * np.ones(grid.shape)
    if np.any(c < 0):
        warnings.warn(f"c0 has negative values (min {c.min():.3g}); clamped to 0", stacklevel=2)
        c = np.maximum(c, 0.0)

    nd = grid.dim
    u_star = []
    for d, src in enumerate(initial_velocity_sources(p, nd)):
        ud = np.asarray(spatial_function(src)(*grid.face_centers(d)), dtype=float) * np.ones(grid.face_shape(d))
        ud[axis_slice(nd, d, slice(0, 1))] = 0.0
        ud[axis_slice(nd, d, slice(-1, None))] = 0.0
        u_star.append(ud)
    solver = solver or PressureSolve(config.control.pressure_tol, config.control.pressure_max_iter)
    u, _ = pressure_project(tuple(u_star), grid, solver)
    params = config.build_params()
    P = hydrostatic_pressure(n, params, grid, 0.0, solver)
    return SimState(0.0, n, c, u, P, grid)


# ---------------------------------------------------------------------------
# time step selection

def cfl_dt(state: SimState, params: ModelParams, control: StepControl) -> float:
    grid = state.grid
    if state.n.size == 0:
        raise DomainError("cannot choose a time step for an empty state")
    limits = []
    for d, h in enumerate(grid.spacing):
        speed = float(np.max(np.abs(state.u[d])))
        if speed > 0:
            limits.append(h / speed)
    for d, w in enumerate(chemotactic_velocity(state.c, grid, params)):
        speed = float(np.max(np.abs(w)))
        if speed > 0:
            limits.append(grid.spacing[d] / speed)
    n_max = float(np.max(state.n))
    rate = abs(params.kappa) + params.mu * params.alpha * n_max ** (params.alpha - 1) + 2 * params.eps * n_max
    if rate > 0:
        limits.append(1.0 / rate)
    dt = control.cfl_number * min(limits) if limits else math.inf
    return min(control.dt_max, dt)


# ---------------------------------------------------------------------------
# oxygen stage

@lru_cache(maxsize=8)
def _neumann_helmholtz(grid: Grid, dt: float):
    L = laplacian_matrix(grid)
    return spla.factorized((sp.identity(grid.size) - dt * L).tocsc())


def _inflow_rate(u, grid: Grid) -> np.ndarray:
    """Per-cell sum over faces of the inflow speed divided by h."""
    nd = grid.dim
    rate = np.zeros(grid.shape)
    for d in range(nd):
        v = u[d] / grid.spacing[d]
        rate += np.maximum(v[axis_slice(nd, d, slice(None, -1))], 0.0)
        rate += np.maximum(-v[axis_slice(nd, d, slice(1, None))], 0.0)
    return rate


def _upwind_advective(c: np.ndarray, u, grid: Grid, dt: float) -> np.ndarray:
    """One explicit upwind step of c_t + u . grad c = 0.

    Each cell takes a convex combination of itself and its upwind
    neighbours, so no new extrema appear when dt * inflow rate <= 1.
    """
    nd = grid.dim
    out = c.copy()
    for d in range(nd):
        v = u[d][axis_slice(nd, d, slice(1, -1))] * (dt / grid.spacing[d])
        lo = c[axis_slice(nd, d, slice(None, -1))]
        hi = c[axis_slice(nd, d, slice(1, None))]
        out[axis_slice(nd, d, slice(1, None))] += np.maximum(v, 0.0) * (lo - hi)
        out[axis_slice(nd, d, slice(None, -1))] += np.maximum(-v, 0.0) * (hi - lo)
    return out


def _substeps(rate: float, dt: float) -> int:
    return max(1, int(math.ceil(dt * rate / TRANSPORT_LIMIT - 1e-12)))


def oxygen_update(c, n, u, params: ModelParams, grid: Grid, dt: float, c_floor: float = 1e-12):
    """Advance c by one step with velocity ``u`` and cell density ``n``.

    Returns ``(c_new, substeps)``.
    """
    k = _substeps(float(np.max(_inflow_rate(u, grid))), dt)
    c_adv = c
    for _ in range(k):
        c_adv = _upwind_advective(c_adv, u, grid, dt / k)
    c_diff = _neumann_helmholtz(grid, float(dt))(c_adv.ravel()).reshape(grid.shape)
    c_diff = np.maximum(c_diff, 0.0)
    uptake = np.log1p(params.eps * n) / params.eps
    fc = np.asarray(params.f(c_diff), dtype=float) * np.ones(grid.shape)
    out = np.empty_like(c_diff)
    big = c_diff > c_floor
    out[big] = c_diff[big] * np.exp(-fc[big] / c_diff[big] * uptake[big] * dt)
    out[~big] = np.maximum(0.0, c_diff[~big] - dt * fc[~big] * uptake[~big])
    return out, k


# ---------------------------------------------------------------------------
# cell stage

def _outflow_rate(u, w, grid: Grid) -> np.ndarray:
    """Per-cell sum of outgoing |u| + |w| over the faces divided by h."""
    nd = grid.dim
    rate = np.zeros(grid.shape)
    for d in range(nd):
        for v in (u[d], w[d]):
            v = v / grid.spacing[d]
            rate += np.maximum(v[axis_slice(nd, d, slice(1, None))], 0.0)
            rate += np.maximum(-v[axis_slice(nd, d, slice(None, -1))], 0.0)
    return rate


def _interior_face_coefficients(n, grid: Grid, params: ModelParams):
    nd = grid.dim
    return [
        d_eps(0.5 * (n[axis_slice(nd, d, slice(None, -1))] + n[axis_slice(nd, d, slice(1, None))]), params)
        for d in range(nd)
    ]


def cell_update(n, c, u, params: ModelParams, grid: Grid, dt: float):
    """Advance n by one step; returns ``(n_new, budget, substeps)``.

    ``budget`` is the integral of the reaction source realized by the
    Patankar stage, so that ``mass(n_new) - mass(n) = dt * budget`` up to
    round-off.
    """
    w = chemotactic_velocity(c, grid, params)
    k = _substeps(float(np.max(_outflow_rate(u, w, grid))), dt)
    tau = dt / k
    n_star = n
    for _ in range(k):
        n_star = n_star - tau * (advect_scalar(n_star, u, grid) + divergence(chemotaxis_flux(n_star, c, grid, params), grid))
    A = diffusion_matrix(_interior_face_coefficients(n, grid, params), grid)
    n_diff = spla.spsolve((sp.identity(grid.size) - dt * A).tocsc(), n_star.ravel()).reshape(grid.shape)

    kp, km = max(params.kappa, 0.0), max(-params.kappa, 0.0)
    sink = km + params.mu * n_diff ** (params.alpha - 1) + params.eps * n_diff
    n_new = n_diff * (1 + dt * kp) / (1 + dt * sink)
    budget = integrate(kp * n_diff - sink * n_new, grid)
    return n_new, budget, k


# ---------------------------------------------------------------------------
# full step

def _check_invariants(prev: SimState, new: SimState, control: StepControl):
    def fail(name, detail):
        raise StabilityError(f"invariant {name} violated at t={new.t:.6g}: {detail}", invariant=name, time=new.t)

    fields = [new.n, new.c, new.P, *new.u]
    if not all(np.all(np.isfinite(f)) for f in fields):
        fail("finite", "non-finite values")
    if np.min(new.n) < 0:
        fail("positivity", f"min n = {np.min(new.n):.3e}")
    if np.min(new.c) < 0:
        fail("max_principle", f"min c = {np.min(new.c):.3e}")
    c_prev = float(np.max(prev.c))
    if np.max(new.c) > c_prev + 1e-12 * max(c_prev, 1.0):
        fail("max_principle", f"max c grew from {c_prev!r} to {float(np.max(new.c))!r}")
    div = max_divergence(new.u, new.grid)
    if div > control.div_tol:
        fail("incompressibility", f"max |div u| = {div:.3e}")


def advance(
    state: SimState,
    params: ModelParams,
    control: StepControl,
    dt: Optional[float] = None,
    solver: Optional[PressureSolve] = None,
):
    """One full step; returns ``(new_state, StepRecord)``."""
    grid = state.grid
    if dt is None:
        dt = cfl_dt(state, params, control)
    if not dt >= control.dt_min:
        raise StabilityError(
            f"time step {dt:.3e} fell below dt_min = {control.dt_min:.3e} at t={state.t:.6g}",
            invariant="cfl",
            time=state.t,
        )
    solver = solver or PressureSolve(control.pressure_tol, control.pressure_max_iter)
    fl = fluid_step(state, params, grid, dt, solver)
    c_new, kc = oxygen_update(state.c, state.n, fl.u, params, grid, dt, control.c_floor)
    n_new, budget, kn = cell_update(state.n, c_new, fl.u, params, grid, dt)
    new = SimState(state.t + dt, n_new, c_new, fl.u, fl.P, grid)
    _check_invariants(state, new, control)
    m0, m1 = integrate(state.n, grid), integrate(n_new, grid)
    record = StepRecord(
        t=new.t,
        dt=dt,
        mass_before=m0,
        mass_after=m1,
        mass_residual=(m1 - m0) - dt * budget,
        energy_residual=energy_identity_residual(state.u, fl.u, fl.force, dt, grid),
        forcing_ratio=forcing_ratio(state.n, fl.g, fl.u, fl.force, grid),
        substeps_c=kc,
        substeps_n=kn,
        div_u=max_divergence(fl.u, grid),
    )
    return new, record


def step(state: SimState, params: ModelParams, control: StepControl, dt: Optional[float] = None, solver=None) -> SimState:
    return advance(state, params, control, dt, solver)[0]


# ---------------------------------------------------------------------------
# runs

@dataclass
class TrajectorySample:
    t: float
    n: np.ndarray
    c: np.ndarray
    u: tuple  # velocity components averaged to cell centers


@dataclass
class RunResult:
    rows: List[dict]
    records: List[StepRecord]
    bounds: object
    final: SimState
    trajectory: List[TrajectorySample] = field(default_factory=list)
    snapshots: List[Path] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.records)


def _sample(state: SimState) -> TrajectorySample:
    return TrajectorySample(state.t, state.n.copy(), state.c.copy(), faces_to_cells(state.u, state.grid))


def run(
    config: Config,
    *,
    out_dir=None,
    store_trajectory: bool = False,
    params: Optional[ModelParams] = None,
) -> RunResult:
    """Integrate from t = 0 to ``t_end``, emitting a diagnostics row at every
    output time (steps are shortened to land on them exactly)."""
    grid = config.build_grid()
    params = params or config.build_params()
    control = StepControl.from_config(config)
    regime = classify_regime(params.m, params.mu, params.alpha)
    solver = PressureSolve(control.pressure_tol, control.pressure_max_iter)
    ctl = config.control

    def report(s):
        return energy_report(
            s,
            params,
            grid,
            ctl.K_diag,
            n_floor=ctl.n_floor,
            c_floor=ctl.c_floor,
            exclude_boundary=ctl.hessian_exclude_boundary,
        )

    state = initial_data(config, grid, solver)
    acc = SpaceTimeAccumulator.for_params(params)
    rows = [diagnostics_row(state, report(state), acc, grid)]
    records: List[StepRecord] = []
    trajectory = [_sample(state)] if store_trajectory else []
    snapshots: List[Path] = []
    snap_every = config.output.snapshot_every
    out_dir = Path(out_dir) if out_dir is not None else None

    def snapshot(index, s):
        if out_dir is not None and snap_every > 0 and index % snap_every == 0:
            path = out_dir / f"{config.output.snapshot_prefix}_{index:05d}.cnsf"
            snapshots.append(write_snapshot(path, grid.n_cells, state_fields(s)))

    snapshot(0, state)
    integrands = spacetime_integrands(state, params, grid, regime)
    t_end, interval = control.t_end, control.output_interval
    k_out = 1
    while state.t < t_end:
        target = min(k_out * interval, t_end)
        dt = cfl_dt(state, params, control)
        landing = state.t + dt >= target - 1e-12 * max(1.0, target)
        if landing:
            dt = target - state.t
        new, rec = advance(state, params, control, dt, solver)
        if landing:
            new.t = target
        after = spacetime_integrands(new, params, grid, regime)
        acc.add(dt, integrands, after)
        integrands = after
        records.append(rec)
        state = new
        if landing:
            rows.append(diagnostics_row(state, report(state), acc, grid))
            if store_trajectory:
                trajectory.append(_sample(state))
            snapshot(k_out, state)
            k_out += 1
    bounds = monitor_bounds(rows, params, volume=grid.volume, div_tol=control.div_tol, step_records=records)
    return RunResult(rows, records, bounds, state, trajectory, snapshots)
