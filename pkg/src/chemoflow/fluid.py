"""Incompressible Navier-Stokes stage: Yosida-smoothed convection, implicit
viscosity, buoyancy/forcing and Chorin pressure projection with no-slip walls.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CompatibilityError, IterationError, StabilityError
from .grid import Faces, Grid, axis_slice, face_inner, faces_to_cells, lp_norm
from .model import ModelParams
from .operators import (
    convection,
    divergence,
    gradient,
    laplacian_matrix,
    velocity_dirichlet_energy,
    velocity_laplacian_matrix,
)


@dataclass
class PressureSolve:
    """Jacobi-preconditioned conjugate gradients for the Neumann Poisson problem.

    The zero-mean gauge is imposed by projecting the right-hand side and the
    solution onto mean-zero fields.
    """

    tolerance: float = 1e-12
    max_iterations: int = 5000
    last_residual: float = 0.0
    last_iterations: int = 0

    def __post_init__(self):
        if not 0 < self.tolerance <= 1e-4:
            raise ValueError("pressure tolerance must lie in (0, 1e-4]")

    def solve(self, rhs: np.ndarray, grid: Grid) -> np.ndarray:
        """Zero-mean solution phi of lap(phi) = rhs."""
        A, M = _poisson_system(grid)
        b = -rhs.ravel()
        b = b - b.mean()
        norm_b = np.linalg.norm(b)
        if norm_b == 0.0:
            self.last_residual, self.last_iterations = 0.0, 0
            return np.zeros(grid.shape)
        count = [0]

        def _tick(_):
            count[0] += 1

        x, info = spla.cg(A, b, rtol=self.tolerance, atol=0.0, maxiter=self.max_iterations, M=M, callback=_tick)
        x -= x.mean()
        residual = np.linalg.norm(b - A @ x) / norm_b
        self.last_residual, self.last_iterations = float(residual), count[0]
        if info != 0 or residual > 10 * self.tolerance:
            raise IterationError(
                f"pressure solve stopped at relative residual {residual:.3e} after {count[0]} iterations",
                residual=residual,
                iterations=count[0],
            )
        return x.reshape(grid.shape)


@lru_cache(maxsize=16)
def _poisson_system(grid: Grid):
    A = (-laplacian_matrix(grid)).tocsr()
    M = sp.diags(1.0 / A.diagonal())
    return A, M


@lru_cache(maxsize=64)
def _helmholtz_factor(grid: Grid, axis: int, coef: float):
    L = velocity_laplacian_matrix(grid, axis)
    return spla.factorized((sp.identity(L.shape[0]) - coef * L).tocsc())


def helmholtz_solve(u: Sequence[np.ndarray], grid: Grid, coef: float) -> Faces:
    """Solve (I - coef * lap) w = u componentwise with w = 0 on the walls."""
    nd = grid.dim
    out = []
    for d in range(nd):
        w = np.zeros(grid.face_shape(d))
        inner = axis_slice(nd, d, slice(1, -1))
        rhs = u[d][inner]
        if coef == 0.0:
            w[inner] = rhs
        else:
            w[inner] = _helmholtz_factor(grid, d, float(coef))(rhs.ravel()).reshape(rhs.shape)
        out.append(w)
    return tuple(out)


def wall_normal_flux(u: Sequence[np.ndarray], grid: Grid) -> float:
    """Largest |u . nu| over the wall faces."""
    nd = grid.dim
    worst = 0.0
    for d in range(nd):
        for sl in (slice(0, 1), slice(-1, None)):
            worst = max(worst, float(np.max(np.abs(u[d][axis_slice(nd, d, sl)]))))
    return worst


def max_divergence(u: Sequence[np.ndarray], grid: Grid) -> float:
    return float(np.max(np.abs(divergence(u, grid))))


def pressure_project(
    u_star: Sequence[np.ndarray],
    grid: Grid,
    solver: Optional[PressureSolve] = None,
    dt: float = 1.0,
) -> tuple:
    """Chorin projection: returns the divergence-free part of ``u_star`` and
    the zero-mean pressure ``P`` with ``u = u_star - dt * grad P``."""
    solver = solver or PressureSolve()
    scale = max(1.0, max(float(np.max(np.abs(c))) for c in u_star))
    if wall_normal_flux(u_star, grid) > 1e-12 * scale:
        raise CompatibilityError("velocity penetrates the walls; projection needs u . nu = 0")
    phi = solver.solve(divergence(u_star, grid), grid)
    grad = gradient(phi, grid)
    u = tuple(a - g for a, g in zip(u_star, grad))
    return u, phi / dt


def yosida_apply(
    u: Sequence[np.ndarray], grid: Grid, eps: float, solver: Optional[PressureSolve] = None
) -> Faces:
    """Discrete Stokes resolvent (1 + eps A)^-1: Helmholtz solve, then projection."""
    w = helmholtz_solve(u, grid, eps) if eps > 0 else tuple(np.array(c, dtype=float) for c in u)
    return pressure_project(w, grid, solver)[0]


@lru_cache(maxsize=16)
def _cached_potential_gradient(grid: Grid, phi_fn) -> Faces:
    phi = np.asarray(phi_fn(*grid.cell_centers()), dtype=float) * np.ones(grid.shape)
    return gradient(phi, grid)


def potential_gradient(params: ModelParams, grid: Grid) -> Faces:
    if params.Phi is None:
        return grid.zero_faces()
    return _cached_potential_gradient(grid, params.Phi)


def sample_forcing(params: ModelParams, grid: Grid, t: float) -> Faces:
    """External force g(t) at face centers, zero on wall-normal faces."""
    if params.g is None:
        return grid.zero_faces()
    nd = grid.dim
    out = []
    for d in range(nd):
        gd = np.asarray(params.g[d](t, *grid.face_centers(d)), dtype=float) * np.ones(grid.face_shape(d))
        gd[axis_slice(nd, d, slice(0, 1))] = 0.0
        gd[axis_slice(nd, d, slice(-1, None))] = 0.0
        out.append(gd)
    return tuple(out)


def buoyancy(n: np.ndarray, grad_phi: Sequence[np.ndarray], grid: Grid) -> Faces:
    """n * grad(Phi) on the faces with n arithmetic-averaged."""
    nd = grid.dim
    out = []
    for d in range(nd):
        b = np.zeros(grid.face_shape(d))
        inner = axis_slice(nd, d, slice(1, -1))
        n_face = 0.5 * (n[axis_slice(nd, d, slice(None, -1))] + n[axis_slice(nd, d, slice(1, None))])
        b[inner] = n_face * grad_phi[d][inner]
        out.append(b)
    return tuple(out)


class FluidUpdate(NamedTuple):
    u: Faces
    P: np.ndarray
    force: Faces
    g: Faces
    advecting: Faces


def fluid_step(
    state,
    params: ModelParams,
    grid: Grid,
    dt: float,
    solver: Optional[PressureSolve] = None,
) -> FluidUpdate:
    """One incremental pressure-correction step for the velocity.

    Convection is explicit with the Yosida-smoothed advecting velocity, the
    force ``n grad(Phi) + g`` is explicit with ``g`` at the step midpoint,
    the previous pressure gradient enters the momentum right-hand side,
    viscosity is implicit, and the projection supplies the pressure
    increment. ``P`` follows the ``+ grad P`` sign of the momentum equation,
    so a pure gradient force is balanced by the pressure without stirring
    the fluid. States without a ``P`` attribute start from zero pressure.
    """
    if not dt > 0:
        raise StabilityError("fluid_step needs dt > 0", invariant="cfl", time=state.t)
    solver = solver or PressureSolve()
    u = state.u
    P_old = getattr(state, "P", None)
    if P_old is None:
        P_old = np.zeros(grid.shape)
    w = yosida_apply(u, grid, params.eps, solver)
    speed = max(float(np.max(np.abs(w[d]))) / grid.spacing[d] for d in range(grid.dim))
    if dt * speed > 1.0:
        raise StabilityError(
            f"advective CFL violated: dt * max|Y u| / h = {dt * speed:.3g} > 1",
            invariant="cfl",
            time=state.t,
        )
    g = sample_forcing(params, grid, state.t + 0.5 * dt)
    force = tuple(a + b for a, b in zip(buoyancy(state.n, potential_gradient(params, grid), grid), g))
    conv = convection(w, u, grid)
    grad_p = gradient(P_old, grid)
    rhs = tuple(a + dt * (f - c - gp) for a, f, c, gp in zip(u, force, conv, grad_p))
    u_tilde = helmholtz_solve(rhs, grid, dt)
    u_new, increment = pressure_project(u_tilde, grid, solver, dt)
    P = P_old + increment
    return FluidUpdate(u_new, P - P.mean(), force, g, w)


def hydrostatic_pressure(n, params: ModelParams, grid: Grid, t: float = 0.0, solver=None) -> np.ndarray:
    """Zero-mean pressure whose gradient is the gradient part of the force."""
    g = sample_forcing(params, grid, t)
    force = tuple(a + b for a, b in zip(buoyancy(n, potential_gradient(params, grid), grid), g))
    return pressure_project(force, grid, solver)[1]


def kinetic_energy(u: Sequence[np.ndarray], grid: Grid) -> float:
    """||u||_2^2 over the faces."""
    return face_inner(u, u, grid)


def energy_identity_residual(u_old, u_new, force, dt: float, grid: Grid) -> float:
    """Discrete residual of 1/2 d/dt ||u||^2 + ||grad u||^2 = int force . u."""
    return (
        (kinetic_energy(u_new, grid) - kinetic_energy(u_old, grid)) / (2 * dt)
        + velocity_dirichlet_energy(u_new, grid)
        - face_inner(force, u_new, grid)
    )


def forcing_ratio(n, g, u_new, force, grid: Grid) -> Optional[float]:
    """Measured constant in int force.u <= C (|n|_{6/5} + |g|_{6/5}) |grad u|_2.

    Returns None when the right-hand side vanishes.
    """
    grad_u = np.sqrt(max(velocity_dirichlet_energy(u_new, grid), 0.0))
    g_mag = np.sqrt(sum(c**2 for c in faces_to_cells(g, grid)))
    denom = (lp_norm(n, grid, 1.2) + lp_norm(g_mag, grid, 1.2)) * grad_u
    if denom <= 1e-300:
        return None
    return face_inner(force, u_new, grid) / denom
