"""Bilinear finite elements and the implicit two-step scheme for the wave equation.

Each step solves

    (M + c^2 dt^2 K) u^n = M (2 u^{n-1} - u^{n-2} + c^2 dt^2 f^n)

with Dirichlet values imposed by elimination and lifting. The system matrix
does not change in time and is factored once per operator set.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, GridSpec, TimeGrid, boundary_node_ids


class SolverError(RuntimeError):
    """Numerical failure inside the wave solver."""


class SourceError(ValueError):
    """Point source placed where the model cannot accept it."""


_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_REF_NODES = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=np.float64)


def element_matrices(dx: float, dy: float) -> tuple[np.ndarray, np.ndarray]:
    """Mass and stiffness of one ``dx`` by ``dy`` bilinear quad (2x2 Gauss)."""
    me = np.zeros((4, 4))
    ke = np.zeros((4, 4))
    jac = dx * dy / 4.0
    for xi in _GAUSS:
        for eta in _GAUSS:
            n = 0.25 * (1 + _REF_NODES[:, 0] * xi) * (1 + _REF_NODES[:, 1] * eta)
            dn_dx = 0.25 * _REF_NODES[:, 0] * (1 + _REF_NODES[:, 1] * eta) * (2.0 / dx)
            dn_dy = 0.25 * _REF_NODES[:, 1] * (1 + _REF_NODES[:, 0] * xi) * (2.0 / dy)
            me += np.outer(n, n) * jac
            ke += (np.outer(dn_dx, dn_dx) + np.outer(dn_dy, dn_dy)) * jac
    return me, ke


def assemble_mass_stiffness(spec: GridSpec) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    grid = Grid(spec)
    me, ke = element_matrices(spec.dx, spec.dy)
    el = grid.elements
    rows = np.repeat(el, 4, axis=1).ravel()
    cols = np.tile(el, (1, 4)).ravel()
    n_el = len(el)
    M = sp.csr_matrix((np.tile(me.ravel(), n_el), (rows, cols)), shape=(spec.n_nodes,) * 2)
    K = sp.csr_matrix((np.tile(ke.ravel(), n_el), (rows, cols)), shape=(spec.n_nodes,) * 2)
    return M, K


@dataclass
class WaveOperators:
    """Assembled operators with the Dirichlet block eliminated and factored."""

    spec: GridSpec
    M: sp.csr_matrix
    K: sp.csr_matrix
    c: float
    dt: float
    dirichlet: np.ndarray

    def __post_init__(self):
        self.S = (self.M + (self.c * self.dt) ** 2 * self.K).tocsr()
        mask = np.ones(self.spec.n_nodes, dtype=bool)
        mask[self.dirichlet] = False
        self.free = np.flatnonzero(mask)
        self.S_ff = self.S[self.free][:, self.free].tocsc()
        self.S_fd = self.S[self.free][:, self.dirichlet].tocsr()
        try:
            self._lu = spla.splu(self.S_ff)
        except RuntimeError as exc:  # pragma: no cover - S is SPD for dt, c > 0
            raise SolverError(f"system matrix factorization failed: {exc}") from exc

    @property
    def c2dt2(self) -> float:
        return (self.c * self.dt) ** 2

    def rhs(self, u1: np.ndarray, u2: np.ndarray, f_n: np.ndarray) -> np.ndarray:
        return self.M @ (2.0 * u1 - u2 + self.c2dt2 * f_n)

    def step(self, u1, u2, f_n, bc) -> np.ndarray:
        """Advance one step; ``bc`` holds the values on ``self.dirichlet``."""
        rhs = self.rhs(u1, u2, f_n)
        bc = np.asarray(bc, dtype=np.float64)
        u = np.empty(self.spec.n_nodes)
        u[self.dirichlet] = bc
        u[self.free] = self._lu.solve(rhs[self.free] - self.S_fd @ bc)
        if not np.isfinite(u).all():
            raise SolverError("non-finite state produced by time step")
        return u

    def residual(self, u, u1, u2, f_n) -> float:
        """Relative residual of the free-node equations for state ``u``."""
        rhs = self.rhs(u1, u2, f_n)[self.free] - self.S_fd @ u[self.dirichlet]
        r = self.S_ff @ u[self.free] - rhs
        denom = np.linalg.norm(rhs)
        return float(np.linalg.norm(r) / denom) if denom > 0 else float(np.linalg.norm(r))

    def march(self, n_t: int, load=None, bc=None, u0=None, u_m1=None) -> np.ndarray:
        """Run ``n_t`` states (the first being ``u0``); returns ``[n_t, n_nodes]``.

        ``load`` and ``bc`` are ``[n_t, n_nodes]`` and ``[n_t, n_dirichlet]``
        arrays, or ``None`` for zero. Missing initial states are zero.
        """
        n = self.spec.n_nodes
        zero = np.zeros(n)
        out = np.empty((n_t, n))
        out[0] = zero if u0 is None else u0
        prev2 = zero if u_m1 is None else u_m1
        if bc is not None:
            bc = np.asarray(bc, dtype=np.float64)
            if bc.shape != (n_t, len(self.dirichlet)):
                raise ValueError(f"bc shape {bc.shape} != {(n_t, len(self.dirichlet))}")
        for k in range(1, n_t):
            f_k = zero if load is None else load[k]
            g_k = np.zeros(len(self.dirichlet)) if bc is None else bc[k]
            out[k] = self.step(out[k - 1], prev2, f_k, g_k)
            prev2 = out[k - 1]
        return out

    def step_residuals(self, states: np.ndarray, load=None, u_m1=None) -> np.ndarray:
        """Per-step relative residuals of a stored trajectory ``[n_t, n_nodes]``."""
        n_t = len(states)
        zero = np.zeros(self.spec.n_nodes)
        res = np.zeros(n_t)
        for k in range(1, n_t):
            u2 = states[k - 2] if k >= 2 else (zero if u_m1 is None else u_m1)
            f_k = zero if load is None else load[k]
            res[k] = self.residual(states[k], states[k - 1], u2, f_k)
        return res


def assemble(spec: GridSpec, c: float, dt: float, dirichlet: np.ndarray | None = None) -> WaveOperators:
    """Operators for ``spec``; Dirichlet nodes default to the whole boundary."""
    if c <= 0:
        raise ValueError(f"wave speed must be positive, got {c}")
    M, K = assemble_mass_stiffness(spec)
    if dirichlet is None:
        dirichlet = boundary_node_ids(spec)
    return WaveOperators(spec, M, K, float(c), float(dt), np.asarray(dirichlet, dtype=np.int64))


@dataclass(frozen=True)
class SourceTerm:
    x_s: float
    y_s: float
    omega: float

    def node(self, spec: GridSpec) -> int:
        grid = Grid(spec)
        i, j = grid.nearest_node(self.x_s, self.y_s)
        if i in (0, spec.n_x - 1) or j in (0, spec.n_y - 1):
            raise SourceError(f"source ({self.x_s}, {self.y_s}) maps to boundary node ({i}, {j})")
        return j * spec.n_x + i

    def nodal_load(self, spec: GridSpec, time: TimeGrid) -> np.ndarray:
        """``[n_t, n_nodes]`` nodal source values, ``sin(omega t)`` at one node."""
        f = np.zeros((time.n_t, spec.n_nodes))
        f[:, self.node(spec)] = np.sin(self.omega * time.times)
        return f


class WaveSolver:
    """Full-domain solver with homogeneous Dirichlet walls.

    Caches the factored operators so many parameter vectors can be solved
    against one grid.
    """

    def __init__(self, spec: GridSpec, time: TimeGrid, c: float):
        self.spec = spec
        self.time = time
        self.c = c

    @cached_property
    def ops(self) -> WaveOperators:
        return assemble(self.spec, self.c, self.time.dt)

    def solve(self, omega: float, x_s: float, y_s: float) -> np.ndarray:
        load = SourceTerm(x_s, y_s, omega).nodal_load(self.spec, self.time)
        u = self.ops.march(self.time.n_t, load=load)
        return u.reshape(self.time.n_t, self.spec.n_y, self.spec.n_x)

    def residuals(self, field: np.ndarray, omega: float, x_s: float, y_s: float) -> np.ndarray:
        load = SourceTerm(x_s, y_s, omega).nodal_load(self.spec, self.time)
        return self.ops.step_residuals(field.reshape(self.time.n_t, -1), load=load)


class SubmodelSolver:
    """Source-free solver on the zone of interest driven by boundary traces."""

    def __init__(self, sub: GridSpec, time: TimeGrid, c: float):
        self.sub = sub
        self.time = time
        self.c = c

    @cached_property
    def ops(self) -> WaveOperators:
        return assemble(self.sub, self.c, self.time.dt, boundary_node_ids(self.sub))

    def solve(self, trace: np.ndarray) -> np.ndarray:
        trace = np.asarray(trace, dtype=np.float64)
        n_b = len(self.ops.dirichlet)
        if trace.shape != (self.time.n_t, n_b):
            raise ValueError(f"trace shape {trace.shape} != {(self.time.n_t, n_b)}")
        u0 = np.zeros(self.sub.n_nodes)
        u0[self.ops.dirichlet] = trace[0]
        # start at rest: u^{-1} = u^0
        u = self.ops.march(self.time.n_t, bc=trace, u0=u0, u_m1=u0)
        return u.reshape(self.time.n_t, self.sub.n_y, self.sub.n_x)

    def residuals(self, field: np.ndarray) -> np.ndarray:
        states = np.asarray(field, dtype=np.float64).reshape(self.time.n_t, -1)
        return self.ops.step_residuals(states, u_m1=states[0])


def solve_full(p, spec: GridSpec, time: TimeGrid, c: float) -> np.ndarray:
    """Full-domain field ``[n_t, n_y, n_x]`` for ``p = (omega, x_s, y_s)``."""
    return WaveSolver(spec, time, c).solve(*p)


def solve_submodel(trace: np.ndarray, sub: GridSpec, time: TimeGrid, c: float) -> np.ndarray:
    """Zone-of-interest field driven by a ``[n_t, n_b]`` Dirichlet trace."""
    return SubmodelSolver(sub, time, c).solve(trace)
