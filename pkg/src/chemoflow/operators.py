"""Finite-volume operators on the staggered grid.

Gradients map cell fields to face arrays, divergences map face arrays back to
cells. Fluxes follow the sign convention of the conserved quantity: a
positive flux on an axis-``d`` face moves mass toward increasing ``d``.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import PositivityError
from .grid import Faces, Grid, axis_slice
from .model import ModelParams, d_eps

NEUMANN0 = "neumann0"
DIRICHLET0 = "dirichlet0"


def _lo(nd, d):
    return axis_slice(nd, d, slice(None, -1))


def _hi(nd, d):
    return axis_slice(nd, d, slice(1, None))


def _inner(nd, d):
    return axis_slice(nd, d, slice(1, -1))


def _check_bc(bc):
    if bc not in (NEUMANN0, DIRICHLET0):
        raise ValueError(f"unknown boundary condition {bc!r}")


# ---------------------------------------------------------------------------
# matrix-free operators

def gradient(field: np.ndarray, grid: Grid, bc: str = NEUMANN0) -> Faces:
    """Face-normal derivatives; wall faces are 0 (neumann0) or one-sided to a zero wall value."""
    _check_bc(bc)
    nd = grid.dim
    out = []
    for d in range(nd):
        h = grid.spacing[d]
        g = np.zeros(grid.face_shape(d))
        g[_inner(nd, d)] = np.diff(field, axis=d) / h
        if bc == DIRICHLET0:
            first = field[axis_slice(nd, d, slice(0, 1))]
            last = field[axis_slice(nd, d, slice(-1, None))]
            g[axis_slice(nd, d, slice(0, 1))] = first / (0.5 * h)
            g[axis_slice(nd, d, slice(-1, None))] = -last / (0.5 * h)
        out.append(g)
    return tuple(out)


def divergence(flux: Sequence[np.ndarray], grid: Grid) -> np.ndarray:
    out = np.zeros(grid.shape)
    for d in range(grid.dim):
        out += np.diff(flux[d], axis=d) / grid.spacing[d]
    return out


def laplacian(field: np.ndarray, grid: Grid, bc: str = NEUMANN0) -> np.ndarray:
    return divergence(gradient(field, grid, bc), grid)


def cell_gradient(field: np.ndarray, grid: Grid) -> tuple:
    """Cell-centered gradient: mean of the two adjacent face derivatives (zero-flux walls)."""
    g = gradient(field, grid, NEUMANN0)
    nd = grid.dim
    return tuple(0.5 * (g[d][_lo(nd, d)] + g[d][_hi(nd, d)]) for d in range(nd))


def _second_difference(field, h, axis):
    n = field.shape[axis]
    nd = field.ndim
    if n < 3:
        return np.zeros_like(field)
    out = np.empty_like(field)
    take = lambda i: field[axis_slice(nd, axis, slice(i, i + 1 if i != -1 else None))]  # noqa: E731
    out[_inner(nd, axis)] = (
        field[axis_slice(nd, axis, slice(2, None))]
        - 2 * field[_inner(nd, axis)]
        + field[axis_slice(nd, axis, slice(None, -2))]
    ) / h**2
    if n >= 4:
        out[axis_slice(nd, axis, slice(0, 1))] = (2 * take(0) - 5 * take(1) + 4 * take(2) - take(3)) / h**2
        out[axis_slice(nd, axis, slice(-1, None))] = (
            2 * take(-1) - 5 * take(n - 2) + 4 * take(n - 3) - take(n - 4)
        ) / h**2
    else:
        out[axis_slice(nd, axis, slice(0, 1))] = out[axis_slice(nd, axis, slice(1, 2))]
        out[axis_slice(nd, axis, slice(-1, None))] = out[axis_slice(nd, axis, slice(-2, -1))]
    return out


def hessian_frobenius_sq(field: np.ndarray, grid: Grid) -> np.ndarray:
    """Per-cell sum of squared second derivatives.

    Pure second derivatives use the compact three-point stencil inside and a
    one-sided four-point closure on the wall cells; mixed derivatives are the
    corner stencil (central difference of central differences). Wall cells are
    lower accuracy; axes with fewer than three cells contribute zero.
    """
    nd = grid.dim
    h = grid.spacing
    total = np.zeros(grid.shape)
    for i in range(nd):
        total += _second_difference(field, h[i], i) ** 2
    for i in range(nd):
        if field.shape[i] < 3:
            continue
        di = np.gradient(field, h[i], axis=i, edge_order=2)
        for j in range(i + 1, nd):
            if field.shape[j] < 3:
                continue
            dij = np.gradient(di, h[j], axis=j, edge_order=2)
            total += 2 * dij**2
    return total


def advect_scalar(field: np.ndarray, u: Sequence[np.ndarray], grid: Grid) -> np.ndarray:
    """Conservative donor-cell divergence of ``u * field``; wall faces carry no flux."""
    nd = grid.dim
    flux = []
    for d in range(nd):
        F = np.zeros(grid.face_shape(d))
        v = u[d][_inner(nd, d)]
        left = field[_lo(nd, d)]
        right = field[_hi(nd, d)]
        F[_inner(nd, d)] = np.maximum(v, 0.0) * left + np.minimum(v, 0.0) * right
        flux.append(F)
    return divergence(flux, grid)


def diffusion_flux(n: np.ndarray, grid: Grid, params: ModelParams) -> Faces:
    if np.any(n < 0):
        raise PositivityError("diffusion_flux needs n >= 0")
    nd = grid.dim
    out = []
    for d in range(nd):
        F = np.zeros(grid.face_shape(d))
        left, right = n[_lo(nd, d)], n[_hi(nd, d)]
        F[_inner(nd, d)] = d_eps(0.5 * (left + right), params) * (right - left) / grid.spacing[d]
        out.append(F)
    return tuple(out)


def chemotactic_velocity(c: np.ndarray, grid: Grid, params: ModelParams) -> Faces:
    """Face velocity chi(c_face) * dc/dx of the taxis drift, zero on walls."""
    nd = grid.dim
    out = []
    for d in range(nd):
        w = np.zeros(grid.face_shape(d))
        left, right = c[_lo(nd, d)], c[_hi(nd, d)]
        w[_inner(nd, d)] = params.chi(0.5 * (left + right)) * (right - left) / grid.spacing[d]
        out.append(w)
    return tuple(out)


def mollified_density(n_face, eps: float):
    """The saturating factor n / (1 + eps n) <= min(n, 1/eps)."""
    return n_face / (1.0 + eps * n_face)


def chemotaxis_flux(
    n: np.ndarray, c: np.ndarray, grid: Grid, params: ModelParams, u_unused=None
) -> Faces:
    """Taxis mass flux with the density upwinded from the cell mass leaves."""
    if np.any(n < 0) or np.any(c < 0):
        raise PositivityError("chemotaxis_flux needs n >= 0 and c >= 0")
    nd = grid.dim
    w = chemotactic_velocity(c, grid, params)
    out = []
    for d in range(nd):
        F = np.zeros(grid.face_shape(d))
        wd = w[d][_inner(nd, d)]
        donor = np.where(wd >= 0, n[_lo(nd, d)], n[_hi(nd, d)])
        F[_inner(nd, d)] = mollified_density(donor, params.eps) * wd
        out.append(F)
    return tuple(out)


# ---------------------------------------------------------------------------
# sparse assembly (C-order flattening, last axis fastest)

def _kron_axis(mat1d, grid_shape, axis):
    """Embed a 1D operator acting along ``axis`` of a tensor grid."""
    out = sp.identity(1, format="csr")
    for d, n in enumerate(grid_shape):
        out = sp.kron(out, mat1d if d == axis else sp.identity(n), format="csr")
    return out


def _grad1d(n, h):
    """Interior-face difference operator, shape (n-1, n)."""
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr") / h


def _lap1d(n, h, bc):
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    if bc == NEUMANN0:
        main[0] = main[-1] = -1.0
    else:
        main[0] = main[-1] = -3.0
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


@lru_cache(maxsize=32)
def laplacian_matrix(grid: Grid, bc: str = NEUMANN0) -> sp.csr_matrix:
    _check_bc(bc)
    L = sp.csr_matrix((grid.size, grid.size))
    for d in range(grid.dim):
        L = L + _kron_axis(_lap1d(grid.n_cells[d], grid.spacing[d], bc), grid.shape, d)
    return L.tocsr()


@lru_cache(maxsize=32)
def face_gradient_matrices(grid: Grid) -> tuple:
    """Per-axis maps from cells to interior faces, shapes (n_faces_d, n_cells)."""
    return tuple(
        _kron_axis(_grad1d(grid.n_cells[d], grid.spacing[d]), grid.shape, d) for d in range(grid.dim)
    )


def diffusion_matrix(coeffs: Sequence[np.ndarray], grid: Grid) -> sp.csr_matrix:
    """Matrix of ``n -> div(k grad n)`` with zero-flux walls.

    ``coeffs[d]`` holds the coefficient on the interior faces of axis ``d``.
    """
    A = sp.csr_matrix((grid.size, grid.size))
    for d, G in enumerate(face_gradient_matrices(grid)):
        k = np.asarray(coeffs[d]).ravel()
        A = A - G.T @ sp.diags(k) @ G
    return A.tocsr()


def _node_lap1d(n_inner, h):
    """Second difference on face nodes with zero wall nodes."""
    off = np.ones(n_inner - 1)
    return sp.diags([off, -2.0 * np.ones(n_inner), off], [-1, 0, 1], format="csr") / h**2


@lru_cache(maxsize=32)
def velocity_laplacian_matrix(grid: Grid, axis: int) -> sp.csr_matrix:
    """No-slip Laplacian for the interior faces of velocity component ``axis``.

    Along ``axis`` the unknowns are face nodes with zero wall nodes; across it
    the wall sits half a cell away (ghost reflection).
    """
    shape = list(grid.shape)
    shape[axis] -= 1
    L = None
    for d in range(grid.dim):
        if d == axis:
            m = _node_lap1d(shape[d], grid.spacing[d])
        else:
            m = _lap1d(shape[d], grid.spacing[d], DIRICHLET0)
        term = _kron_axis(m, shape, d)
        L = term if L is None else L + term
    return L.tocsr()


def velocity_laplacian(u: Sequence[np.ndarray], grid: Grid) -> Faces:
    nd = grid.dim
    out = []
    for d in range(nd):
        res = np.zeros(grid.face_shape(d))
        inner = u[d][_inner(nd, d)]
        res[_inner(nd, d)] = (velocity_laplacian_matrix(grid, d) @ inner.ravel()).reshape(inner.shape)
        out.append(res)
    return tuple(out)


def velocity_dirichlet_energy(u: Sequence[np.ndarray], grid: Grid) -> float:
    """Discrete ||grad u||_2^2 = -<u, L u> for the no-slip Laplacian."""
    lap = velocity_laplacian(u, grid)
    return -float(sum(np.sum(a * b) for a, b in zip(u, lap)) * grid.cell_volume)


def convection(w: Sequence[np.ndarray], u: Sequence[np.ndarray], grid: Grid) -> Faces:
    """Centered conservative (w . grad) u on the MAC grid.

    Each velocity component is treated on its own staggered control volumes
    with advecting fluxes averaged from ``w``. When ``w`` is discretely
    divergence free the operator is skew-symmetric, so it neither creates nor
    destroys kinetic energy.
    """
    nd = grid.dim
    h = grid.spacing
    out = []
    for d in range(nd):
        ud = u[d]
        res = np.zeros(grid.face_shape(d))
        inner_d = _inner(nd, d)
        # control-volume faces at cell centers along d
        U = 0.5 * (w[d][_lo(nd, d)] + w[d][_hi(nd, d)])
        ub = 0.5 * (ud[_lo(nd, d)] + ud[_hi(nd, d)])
        F = U * ub
        res[inner_d] += np.diff(F, axis=d) / h[d]
        ui = ud[inner_d]
        for e in range(nd):
            if e == d:
                continue
            # control-volume faces on cell edges, walls carry zero normal velocity
            U = 0.5 * (w[e][_lo(nd, d)] + w[e][_hi(nd, d)])
            ub = np.zeros(U.shape)
            ub[_inner(nd, e)] = 0.5 * (ui[_lo(nd, e)] + ui[_hi(nd, e)])
            res[inner_d] += np.diff(U * ub, axis=e) / h[e]
        out.append(res)
    return tuple(out)
