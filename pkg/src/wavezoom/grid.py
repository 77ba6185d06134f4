"""Cartesian grids for the full domain and the zone of interest.

Node ``(i, j)`` sits at ``(x_min + i*dx, y_min + j*dy)`` and is numbered
row-major as ``j*n_x + i``, so a nodal vector reshapes to ``[n_y, n_x]``.
Space-time fields are stored as ``[n_t, n_y, n_x]`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class DomainError(ValueError):
    """Raised when a sub-grid or point set leaves its parent domain."""


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    n_x: int
    n_y: int

    def __post_init__(self):
        if not (self.n_x >= 2 and self.n_y >= 2):
            raise ValueError(f"need at least 2 nodes per axis, got n_x={self.n_x}, n_y={self.n_y}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate extents [{self.x_min}, {self.x_max}] x [{self.y_min}, {self.y_max}]"
            )

    @classmethod
    def centered(cls, center, half_extents, n_x, n_y):
        cx, cy = center
        lx, ly = half_extents
        return cls(cx - lx, cx + lx, cy - ly, cy + ly, n_x, n_y)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.n_y - 1)

    @property
    def n_nodes(self) -> int:
        return self.n_x * self.n_y

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_y, self.n_x)

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains(self, other: "GridSpec", tol: float = 1e-12) -> bool:
        """Closure containment of ``other``'s rectangle in this one."""
        return (
            other.x_min >= self.x_min - tol
            and other.x_max <= self.x_max + tol
            and other.y_min >= self.y_min - tol
            and other.y_max <= self.y_max + tol
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(**{k: d[k] for k in ("x_min", "x_max", "y_min", "y_max", "n_x", "n_y")})


@dataclass(frozen=True)
class TimeGrid:
    n_t: int
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_t < 3:
            raise ValueError(f"n_t must be >= 3 for a two-step scheme, got {self.n_t}")

    @property
    def t_final(self) -> float:
        return (self.n_t - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_t) * self.dt


class Grid:
    """Nodes and bilinear quadrilateral elements of a :class:`GridSpec`."""

    def __init__(self, spec: GridSpec):
        self.spec = spec

    @cached_property
    def x(self) -> np.ndarray:
        s = self.spec
        return s.x_min + np.arange(s.n_x) * s.dx

    @cached_property
    def y(self) -> np.ndarray:
        s = self.spec
        return s.y_min + np.arange(s.n_y) * s.dy

    @cached_property
    def coords(self) -> np.ndarray:
        """``[n_nodes, 2]`` node coordinates in row-major numbering."""
        X, Y = np.meshgrid(self.x, self.y)
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def elements(self) -> np.ndarray:
        """``[n_elem, 4]`` node ids per quad, counterclockwise from lower-left."""
        nx, ny = self.spec.n_x, self.spec.n_y
        i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1))
        ll = (j * nx + i).ravel()
        return np.column_stack([ll, ll + 1, ll + 1 + nx, ll + nx])

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        nx, ny = self.spec.n_x, self.spec.n_y
        m = np.zeros((ny, nx), dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m.ravel()

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    def nearest_node(self, x: float, y: float) -> tuple[int, int]:
        s = self.spec
        i = int(np.clip(np.rint((x - s.x_min) / s.dx), 0, s.n_x - 1))
        j = int(np.clip(np.rint((y - s.y_min) / s.dy), 0, s.n_y - 1))
        return i, j


def build_grid(spec: GridSpec) -> Grid:
    return Grid(spec)


def boundary_index(sub: GridSpec) -> np.ndarray:
    """Ordered ``(i, j)`` pairs tracing the boundary counterclockwise.

    The cycle starts at the lower-left corner and walks bottom, right, top,
    left, so consecutive entries are grid neighbours and the last entry is
    adjacent to the first. Returns an ``[n_b, 2]`` integer array with
    ``n_b = 2*n_x + 2*n_y - 4``.
    """
    nx, ny = sub.n_x, sub.n_y
    bottom = [(i, 0) for i in range(nx)]
    right = [(nx - 1, j) for j in range(1, ny)]
    top = [(i, ny - 1) for i in range(nx - 2, -1, -1)]
    left = [(0, j) for j in range(ny - 2, 0, -1)]
    return np.array(bottom + right + top + left, dtype=np.int64)


def boundary_node_ids(sub: GridSpec) -> np.ndarray:
    """Row-major node numbers of :func:`boundary_index`."""
    ij = boundary_index(sub)
    return ij[:, 1] * sub.n_x + ij[:, 0]


def interpolation_matrix(spec: GridSpec, points: np.ndarray, snap_tol: float = 1e-9) -> sp.csr_matrix:
    """Sparse ``[n_points, n_nodes]`` bilinear interpolation operator.

    Points within ``snap_tol`` (relative to the cell size) of a grid line are
    snapped onto it, so points coinciding with nodes pick up exactly that
    nodal value.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    tx = (points[:, 0] - spec.x_min) / spec.dx
    ty = (points[:, 1] - spec.y_min) / spec.dy
    tx = np.where(np.abs(tx - np.rint(tx)) < snap_tol, np.rint(tx), tx)
    ty = np.where(np.abs(ty - np.rint(ty)) < snap_tol, np.rint(ty), ty)
    if (tx < 0).any() or (tx > spec.n_x - 1).any() or (ty < 0).any() or (ty > spec.n_y - 1).any():
        raise DomainError("interpolation points fall outside the grid")

    i0 = np.minimum(np.floor(tx).astype(np.int64), spec.n_x - 2)
    j0 = np.minimum(np.floor(ty).astype(np.int64), spec.n_y - 2)
    fx = tx - i0
    fy = ty - j0
    nx = spec.n_x
    cols = np.column_stack([j0 * nx + i0, j0 * nx + i0 + 1, (j0 + 1) * nx + i0 + 1, (j0 + 1) * nx + i0])
    w = np.column_stack([(1 - fx) * (1 - fy), fx * (1 - fy), fx * fy, (1 - fx) * fy])
    rows = np.repeat(np.arange(len(points)), 4)
    keep = w.ravel() != 0.0
    return sp.csr_matrix(
        (w.ravel()[keep], (rows[keep], cols.ravel()[keep])), shape=(len(points), spec.n_nodes)
    )


def _apply_nodal(field: np.ndarray, spec: GridSpec, op: sp.csr_matrix) -> np.ndarray:
    field = np.asarray(field, dtype=np.float64)
    if field.shape[-2:] != spec.shape:
        raise ValueError(f"field trailing shape {field.shape[-2:]} does not match grid {spec.shape}")
    lead = field.shape[:-2]
    flat = field.reshape(-1, spec.n_nodes)
    return (op @ flat.T).T.reshape(*lead, op.shape[0])


def sample_on_subboundary(field: np.ndarray, spec: GridSpec, sub: GridSpec) -> np.ndarray:
    """Boundary trace of ``field`` (on ``spec``) along the boundary of ``sub``.

    ``field`` has shape ``[..., n_y, n_x]``; the result is ``[..., n_b]`` in
    :func:`boundary_index` order.
    """
    if not spec.contains(sub):
        raise DomainError(f"sub-grid {sub} is not contained in {spec}")
    sub_grid = Grid(sub)
    pts = sub_grid.coords[boundary_node_ids(sub)]
    return _apply_nodal(field, spec, interpolation_matrix(spec, pts))


def restrict_to_subgrid(field: np.ndarray, spec: GridSpec, sub: GridSpec) -> np.ndarray:
    """Interpolate ``field`` onto every node of ``sub``; returns ``[..., n'_y, n'_x]``."""
    if not spec.contains(sub):
        raise DomainError(f"sub-grid {sub} is not contained in {spec}")
    out = _apply_nodal(field, spec, interpolation_matrix(spec, Grid(sub).coords))
    return out.reshape(*out.shape[:-1], sub.n_y, sub.n_x)


def gather_boundary(field: np.ndarray, sub: GridSpec) -> np.ndarray:
    """Boundary trace of a field that already lives on ``sub``."""
    field = np.asarray(field)
    flat = field.reshape(*field.shape[:-2], sub.n_nodes)
    return flat[..., boundary_node_ids(sub)]
