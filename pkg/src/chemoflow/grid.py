"""Uniform staggered (MAC) box grids in two or three dimensions.

Scalars live at cell centers as arrays of shape ``grid.shape``; the velocity
component ``d`` lives on the faces normal to axis ``d`` and has one extra entry
along that axis. Index 0 and ``n_d`` along axis ``d`` are the wall faces.
Vector and flux fields are plain tuples of such face arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, InvalidParameterError

Faces = Tuple[np.ndarray, ...]


@dataclass(frozen=True)
class Grid:
    dim: int
    n_cells: Tuple[int, ...]
    extent: Tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise InvalidParameterError(f"dim must be 2 or 3, got {self.dim}")
        n = tuple(int(k) for k in self.n_cells)
        ext = tuple(float(e) for e in self.extent)
        if len(n) != self.dim or len(ext) != self.dim:
            raise InvalidParameterError("n_cells and extent need one entry per axis")
        if any(k < 2 for k in n):
            raise InvalidParameterError("each axis needs at least 2 cells")
        if any(not (e > 0 and math.isfinite(e)) for e in ext):
            raise InvalidParameterError("extent must be positive and finite")
        object.__setattr__(self, "n_cells", n)
        object.__setattr__(self, "extent", ext)

    @classmethod
    def uniform(cls, dim: int, n: int, length: float = 1.0) -> "Grid":
        return cls(dim, (n,) * dim, (length,) * dim)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.n_cells

    @cached_property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(e / k for e, k in zip(self.extent, self.n_cells))

    @property
    def h(self) -> Tuple[float, ...]:
        return self.spacing

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    @property
    def size(self) -> int:
        return int(np.prod(self.n_cells))

    def face_shape(self, axis: int) -> Tuple[int, ...]:
        shape = list(self.n_cells)
        shape[axis] += 1
        return tuple(shape)

    def _axis_coords(self, axis: int, staggered: bool) -> np.ndarray:
        h = self.spacing[axis]
        if staggered:
            return np.arange(self.n_cells[axis] + 1) * h
        return (np.arange(self.n_cells[axis]) + 0.5) * h

    def cell_centers(self) -> Tuple[np.ndarray, ...]:
        axes = [self._axis_coords(d, False) for d in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def face_centers(self, axis: int) -> Tuple[np.ndarray, ...]:
        axes = [self._axis_coords(d, d == axis) for d in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def zero_faces(self) -> Faces:
        return tuple(np.zeros(self.face_shape(d)) for d in range(self.dim))


def axis_slice(ndim: int, axis: int, sl: slice) -> tuple:
    """Index tuple selecting ``sl`` along ``axis`` and everything elsewhere."""
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def integrate(field: np.ndarray, grid: Grid) -> float:
    return float(np.sum(field) * grid.cell_volume)


def lp_norm(field: np.ndarray, grid: Grid, p: float) -> float:
    if p < 1:
        raise DomainError(f"lp_norm needs p >= 1, got {p}")
    a = np.abs(np.asarray(field, dtype=float))
    if math.isinf(p):
        return float(a.max())
    return float(np.sum(a**p) * grid.cell_volume) ** (1.0 / p)


def face_inner(a: Faces, b: Faces, grid: Grid) -> float:
    """Volume-weighted inner product of two face fields."""
    return float(sum(np.sum(x * y) for x, y in zip(a, b)) * grid.cell_volume)


def interpolate_to_faces(
    field: np.ndarray,
    grid: Grid,
    scheme: str = "arithmetic",
    velocity: Optional[Sequence[np.ndarray]] = None,
) -> Faces:
    """Face values of a cell field.

    ``arithmetic`` averages the two neighbours; ``upwind`` takes the donor
    cell picked by the sign of the face-normal velocity, falling back to the
    average where the velocity vanishes. Wall faces copy the adjacent cell.
    """
    if scheme not in ("arithmetic", "upwind"):
        raise ValueError(f"unknown interpolation scheme {scheme!r}")
    if scheme == "upwind" and velocity is None:
        raise ValueError("upwind interpolation needs a velocity field")
    nd = grid.dim
    out = []
    for d in range(nd):
        left = field[axis_slice(nd, d, slice(None, -1))]
        right = field[axis_slice(nd, d, slice(1, None))]
        face = np.empty(grid.face_shape(d))
        inner = axis_slice(nd, d, slice(1, -1))
        mean = 0.5 * (left + right)
        if scheme == "arithmetic":
            face[inner] = mean
        else:
            v = velocity[d][inner]
            face[inner] = np.where(v > 0, left, np.where(v < 0, right, mean))
        face[axis_slice(nd, d, slice(0, 1))] = field[axis_slice(nd, d, slice(0, 1))]
        face[axis_slice(nd, d, slice(-1, None))] = field[axis_slice(nd, d, slice(-1, None))]
        out.append(face)
    return tuple(out)


def faces_to_cells(faces: Faces, grid: Grid) -> Tuple[np.ndarray, ...]:
    """Average each face component onto the cell centers."""
    nd = grid.dim
    return tuple(
        0.5 * (faces[d][axis_slice(nd, d, slice(None, -1))] + faces[d][axis_slice(nd, d, slice(1, None))])
        for d in range(nd)
    )
