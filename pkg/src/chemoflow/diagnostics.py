"""Energy functional, dissipation terms, space-time integrals and bound
monitors for a simulation run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .fluid import max_divergence, velocity_dirichlet_energy
from .grid import Grid, face_inner, faces_to_cells, integrate
from .model import ModelParams, Regime, d_eps, psi_values, select_interpolation_exponents
from .operators import cell_gradient, gradient, hessian_frobenius_sq

CSV_COLUMNS = (
    "t",
    "mass",
    "linf_c",
    "min_n",
    "min_c",
    "div_u_max",
    "entropy",
    "chemo",
    "kinetic",
    "y",
    "d_n",
    "d_hess",
    "d_grad4",
    "d_gradu",
    "st_np1",
    "st_flux_p2",
    "st_gradn_p3",
    "st_gradm2",
    "st_gradc4",
    "st_u103",
    "st_nalpha",
    "st_epsn2",
    "st_nuq",
    "st_gradm1",
)

ACCUMULATOR_KEYS = tuple(c for c in CSV_COLUMNS if c.startswith("st_"))


@dataclass(frozen=True)
class EnergyReport:
    t: float
    entropy: float
    chemo: float
    kinetic: float
    y: float
    d_n: float
    d_hess: float
    d_grad4: float
    d_gradu: float
    reaction_entropy: float


def entropy_density(n: np.ndarray) -> np.ndarray:
    """n log n with 0 log 0 = 0."""
    out = np.zeros_like(n, dtype=float)
    pos = n > 0
    out[pos] = n[pos] * np.log(n[pos])
    return out


def chemo_energy(c: np.ndarray, grid: Grid, params: ModelParams, floor: float = 1e-12) -> float:
    """1/2 int |grad Psi(c)|^2 via the chain rule |grad c|^2 / h(c) on faces.

    Faces with zero gradient contribute nothing, even where h vanishes.
    """
    nd = grid.dim
    total = 0.0
    for d, g in enumerate(gradient(c, grid)):
        inner = tuple(slice(1, -1) if k == d else slice(None) for k in range(nd))
        c_face = 0.5 * (np.take(c, range(0, c.shape[d] - 1), axis=d) + np.take(c, range(1, c.shape[d]), axis=d))
        g2 = g[inner] ** 2
        active = g2 > 0
        h = np.asarray(params.h(np.maximum(c_face, floor)), dtype=float) * np.ones(g2.shape)
        with np.errstate(divide="ignore"):
            total += np.sum(g2[active] / h[active])
    return 0.5 * float(total) * grid.cell_volume


def chemo_energy_transform(c: np.ndarray, grid: Grid, params: ModelParams, floor: float = 1e-12) -> float:
    """1/2 int |grad Psi(c)|^2 by differencing the transformed field Psi(c)."""
    psi_c = psi_values(np.maximum(c, floor), params)
    return 0.5 * face_inner(gradient(psi_c, grid), gradient(psi_c, grid), grid)


def _boundary_mask(grid: Grid) -> np.ndarray:
    mask = np.ones(grid.shape, dtype=bool)
    for d in range(grid.dim):
        idx = [slice(None)] * grid.dim
        idx[d] = 0
        mask[tuple(idx)] = False
        idx[d] = -1
        mask[tuple(idx)] = False
    return mask


def energy_report(
    state,
    params: ModelParams,
    grid: Grid,
    K_diag: float = 1.0,
    *,
    n_floor: float = 1e-12,
    c_floor: float = 1e-12,
    exclude_boundary: bool = False,
) -> EnergyReport:
    n, c, u = state.n, state.c, state.u
    vol = grid.cell_volume
    entropy = integrate(entropy_density(n), grid)
    chemo = chemo_energy(c, grid, params, c_floor)
    kinetic = K_diag * face_inner(u, u, grid)

    nd = grid.dim
    d_n = 0.0
    for d, g in enumerate(gradient(n, grid)):
        inner = tuple(slice(1, -1) if k == d else slice(None) for k in range(nd))
        n_face = 0.5 * (np.take(n, range(0, n.shape[d] - 1), axis=d) + np.take(n, range(1, n.shape[d]), axis=d))
        d_n += np.sum(d_eps(n_face, params) / np.maximum(n_face, n_floor) * g[inner] ** 2)
    d_n *= vol

    c_safe = np.maximum(c, c_floor)
    hess = hessian_frobenius_sq(c, grid) / c_safe
    grad_sq = sum(gc**2 for gc in cell_gradient(c, grid))
    grad4 = grad_sq**2 / c_safe**3
    if exclude_boundary:
        mask = _boundary_mask(grid)
        hess, grad4 = hess * mask, grad4 * mask
    d_hess = float(np.sum(hess) * vol)
    d_grad4 = float(np.sum(grad4) * vol)
    d_gradu = max(velocity_dirichlet_energy(u, grid), 0.0) + 0.0

    logn = np.zeros_like(n)
    pos = n > 0
    logn[pos] = np.log(n[pos])
    reaction_entropy = integrate((0.5 * params.mu * n**params.alpha + params.eps * n**2) * logn, grid)
    return EnergyReport(
        t=float(state.t),
        entropy=entropy,
        chemo=chemo,
        kinetic=kinetic,
        y=entropy + chemo + kinetic,
        d_n=float(d_n),
        d_hess=d_hess,
        d_grad4=d_grad4,
        d_gradu=float(d_gradu),
        reaction_entropy=reaction_entropy,
    )


# ---------------------------------------------------------------------------
# space-time integrals

def _face_dirichlet(field: np.ndarray, grid: Grid) -> float:
    return face_inner(gradient(field, grid), gradient(field, grid), grid)


def spacetime_integrands(state, params: ModelParams, grid: Grid, regime: Regime) -> Dict[str, Optional[float]]:
    """Instantaneous spatial integrals whose time integrals are accumulated.

    Terms that do not apply to the regime (p3 needs m <= 2, the (n+eps)^(m-1)
    gradient needs m > 2) are None.
    """
    n, c, u = state.n, state.c, state.u
    eps, m = params.eps, params.m
    grad_n = cell_gradient(n, grid)
    abs_grad_n = np.sqrt(sum(g**2 for g in grad_n))
    u_cells = faces_to_cells(u, grid)
    speed = np.sqrt(sum(v**2 for v in u_cells))
    _, q = select_interpolation_exponents(regime.p1)
    vals = {
        "st_np1": integrate((n + eps) ** regime.p1, grid),
        "st_flux_p2": integrate((d_eps(n, params) * abs_grad_n) ** regime.p2, grid),
        "st_gradn_p3": integrate(abs_grad_n**regime.p3, grid) if m <= 2 else None,
        "st_gradm2": _face_dirichlet((n + eps) ** (m / 2), grid),
        "st_gradc4": integrate(sum(g**2 for g in cell_gradient(c, grid)) ** 2, grid),
        "st_u103": integrate(speed ** (10.0 / 3.0), grid),
        "st_nalpha": integrate(n**params.alpha, grid),
        "st_epsn2": eps * integrate(n**2, grid),
        "st_nuq": integrate((n * speed) ** q, grid),
        "st_gradm1": _face_dirichlet((n + eps) ** (m - 1), grid) if m > 2 else None,
    }
    return vals


@dataclass
class SpaceTimeAccumulator:
    """Trapezoidal running time integrals of the space-time functionals."""

    totals: Dict[str, Optional[float]] = field(default_factory=lambda: {k: 0.0 for k in ACCUMULATOR_KEYS})
    t: float = 0.0

    def add(self, dt: float, before: Mapping[str, Optional[float]], after: Mapping[str, Optional[float]]):
        for k in ACCUMULATOR_KEYS:
            if before.get(k) is None or after.get(k) is None:
                self.totals[k] = None
            elif self.totals[k] is not None:
                self.totals[k] += 0.5 * dt * (before[k] + after[k])
        self.t += dt
        return self

    @classmethod
    def for_params(cls, params: ModelParams) -> "SpaceTimeAccumulator":
        """Start at zero, with the terms the regime excludes set to None."""
        acc = cls()
        acc.totals["st_gradn_p3" if params.m > 2 else "st_gradm1"] = None
        return acc

    def copy(self) -> "SpaceTimeAccumulator":
        return SpaceTimeAccumulator(dict(self.totals), self.t)


def accumulate(acc: SpaceTimeAccumulator, state_prev, state_new, params: ModelParams, grid: Grid, regime: Regime, dt: float):
    """Add the trapezoidal contribution of one step to ``acc``."""
    if not regime.admissible:
        raise ValueError("space-time accumulation needs an admissible regime")
    if dt == 0:
        return acc
    before = spacetime_integrands(state_prev, params, grid, regime)
    after = spacetime_integrands(state_new, params, grid, regime)
    return acc.add(dt, before, after)


def diagnostics_row(state, report: EnergyReport, acc: SpaceTimeAccumulator, grid: Grid) -> Dict[str, Optional[float]]:
    row = {
        "t": float(state.t),
        "mass": integrate(state.n, grid),
        "linf_c": float(np.max(state.c)),
        "min_n": float(np.min(state.n)),
        "min_c": float(np.min(state.c)),
        "div_u_max": max_divergence(state.u, grid),
        "entropy": report.entropy,
        "chemo": report.chemo,
        "kinetic": report.kinetic,
        "y": report.y,
        "d_n": report.d_n,
        "d_hess": report.d_hess,
        "d_grad4": report.d_grad4,
        "d_gradu": report.d_gradu,
    }
    row.update(acc.totals)
    return row


# ---------------------------------------------------------------------------
# bound monitoring

@dataclass(frozen=True)
class Bound:
    name: str
    held: bool
    margin: tuple
    sup: Optional[float] = None
    detail: str = ""


@dataclass(frozen=True)
class BoundReport:
    bounds: tuple

    @property
    def all_held(self) -> bool:
        return all(b.held for b in self.bounds)

    @property
    def violated(self) -> List[str]:
        return [b.name for b in self.bounds if not b.held]

    def __getitem__(self, name) -> Bound:
        for b in self.bounds:
            if b.name == name:
                return b
        raise KeyError(name)

    def names(self):
        return [b.name for b in self.bounds]


def _bound(name, margins, detail="", sup=None, held=None):
    margins = tuple(float(x) for x in margins)
    if held is None:
        held = all(m >= 0 for m in margins)
    return Bound(name, bool(held), margins, sup, detail)


def monitor_bounds(
    rows: Sequence[Mapping[str, Optional[float]]],
    params: ModelParams,
    *,
    volume: float,
    div_tol: float = 1e-8,
    step_records: Sequence = (),
    mass_rtol: float = 1e-8,
    max_principle_tol: float = 1e-12,
    mass_identity_rtol: float = 1e-11,
) -> BoundReport:
    """Check the proven bounds against a completed run.

    Inequality bounds report the margin trajectory (>= 0 means held).
    Boundedness claims with unknown constants (the energy ``y``, the
    space-time integrals) report their supremum and are held while finite.
    """
    if not rows:
        return BoundReport(())
    kappa, mu = params.kappa, params.mu
    t = np.array([r["t"] for r in rows])
    mass = np.array([r["mass"] for r in rows])
    mass0 = mass[0]
    growth = np.exp(kappa * t) * mass0
    bounds = []

    bounds.append(_bound("mass_bound", growth * (1 + mass_rtol) - mass, "mass <= e^(kappa t) mass0"))

    sinks = np.array([mu * r["st_nalpha"] + r["st_epsn2"] for r in rows])
    bounds.append(_bound("sink_budget", growth + mass0 - sinks, "mu int n^alpha + eps int n^2 <= (e^(kappa t) + 1) mass0"))

    linf = np.array([r["linf_c"] for r in rows])
    min_c = np.array([r["min_c"] for r in rows])
    scale = max(1.0, float(linf[0]))
    steps = np.concatenate(([0.0], linf[:-1] - linf[1:])) + max_principle_tol * scale
    c0 = linf[0] * (1 + max_principle_tol) - linf
    bounds.append(
        _bound(
            "max_principle",
            np.minimum(np.minimum(steps, c0), min_c),
            "max c nonincreasing and <= max c0, min c >= 0",
        )
    )

    min_n = np.array([r["min_n"] for r in rows])
    bounds.append(_bound("positivity", min_n, "n >= 0 exactly"))

    entropy = np.array([r["entropy"] for r in rows])
    bounds.append(_bound("entropy_floor", entropy + volume / math.e, "int n log n >= -|Omega|/e"))

    diss = np.array([[r[k] for k in ("d_n", "d_hess", "d_grad4", "d_gradu")] for r in rows])
    bounds.append(_bound("dissipation_nonnegative", diss.min(axis=1), "coercive dissipation terms >= 0"))

    div = np.array([r["div_u_max"] for r in rows])
    bounds.append(_bound("incompressibility", div_tol - div, "max |div u| <= tolerance"))

    y = np.array([r["y"] for r in rows])
    finite_y = bool(np.all(np.isfinite(y)))
    bounds.append(_bound("energy_bounded", y, "sup_t y finite", sup=float(np.max(y)), held=finite_y))

    mono = []
    for k in ACCUMULATOR_KEYS:
        series = [r[k] for r in rows]
        if any(v is None for v in series):
            continue
        arr = np.array(series)
        if not np.all(np.isfinite(arr)):
            mono.append(-np.inf)
            continue
        mono.append(float(np.min(np.diff(arr))) if arr.size > 1 else 0.0)
        mono.append(float(arr.min()))
    bounds.append(_bound("spacetime_monotone", mono or [0.0], "accumulators nonnegative and nondecreasing"))

    if step_records:
        resid = np.array([rec.mass_residual for rec in step_records])
        mass_ref = np.array([max(rec.mass_before, rec.mass_after) for rec in step_records])
        bounds.append(
            _bound(
                "mass_identity",
                mass_identity_rtol * mass_ref - np.abs(resid),
                "|dmass - dt (kappa n - mu n^alpha - eps n^2)| <= 1e-11 mass per step",
            )
        )
        energy = np.array([abs(rec.energy_residual) for rec in step_records])
        bounds.append(
            _bound(
                "fluid_energy_residual",
                energy,
                "sup of the per-step fluid energy identity residual (first order in dt)",
                sup=float(energy.max()),
                held=bool(np.all(np.isfinite(energy))),
            )
        )
        ratios = np.array([rec.forcing_ratio for rec in step_records if rec.forcing_ratio is not None])
        if ratios.size:
            bounds.append(
                _bound(
                    "forcing_constant",
                    ratios,
                    "sup of int force.u / ((|n|_6/5 + |g|_6/5) |grad u|), the measured forcing constant",
                    sup=float(ratios.max()),
                    held=bool(np.all(np.isfinite(ratios))),
                )
            )
    return BoundReport(tuple(bounds))
