"""Scheme residuals and linear-system assembly.

The discrete operator family, for viscosity weight eps_h = sigma * h^r and
moment weight gamma_h = gamma * h^p:

    central residual   -(eps + eps_h) Lap_h U + b . grad_h U + c U
                       + gamma_h (Lap_{2h} - Lap_h) U - f

with grad_h the central gradient.  gamma = 0, r = 1 is the Lax-Friedrichs
method; gamma = sigma = 0 is the unstabilized central scheme; the upwind
baseline replaces the central gradient by sign-switched one-sided
differences and carries no artificial viscosity.  Nonlinear problems use
H(grad_h U, U, x) in place of the convection and reaction terms.

Everything is evaluated on padded arrays: one ghost layer around the real
nodes, filled from the auxiliary closure (first closure: zero second
difference at the boundary; second closure: matching second differences
one node in).  Boundary rows of a residual are U - g.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .grid import Grid, GridFunction
from .operators import (
    DIRICHLET_ROWS,
    SparseOperator,
    StencilKind,
    assemble,
    moment_matrix,
)
from .problems import HJProblem, LinearProblem

__all__ = [
    "BC",
    "Family",
    "SchemeConfig",
    "SchemeError",
    "assemble_linear_system",
    "ghost_fill",
    "residual",
    "scheme_from_name",
    "stabilizer_matrix",
]


class SchemeError(ValueError):
    """Inconsistent scheme configuration or scheme/problem mismatch."""


class BC(Enum):
    BC1 = "bc1"
    BC2 = "bc2"


class Family(Enum):
    MOMENT_CENTRAL = "moment"
    LAX_FRIEDRICHS = "lax-friedrichs"
    UPWIND = "upwind"
    PURE_CENTRAL = "central"


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme family plus stabilizer weights.

    eps_h = sigma * h^r and gamma_h = gamma * h^p with h the largest
    spacing.  lf_beta overrides the Lax-Friedrichs viscosity per dimension
    (coefficient beta_i on h_i * d2_i); when absent, sigma is used, and when
    sigma is zero the betas default to half the Hamiltonian slope bounds
    (or half the local |b_i| for linear problems).
    """

    family: Family
    sigma: float = 0.0
    r: float = 2.0
    gamma: float = 0.0
    p: float = 0.0
    bc: BC = BC.BC1
    lf_beta: Optional[tuple] = None

    def __post_init__(self):
        if self.sigma < 0 or self.gamma < 0:
            raise SchemeError("stabilizer weights must be nonnegative")
        if not 0.0 <= self.p <= 1.0:
            raise SchemeError("moment power p must lie in [0, 1]")
        if self.family is Family.LAX_FRIEDRICHS and (self.gamma != 0 or self.r != 1):
            raise SchemeError("Lax-Friedrichs requires gamma = 0 and r = 1")
        if self.family is Family.PURE_CENTRAL and (self.gamma != 0 or self.sigma != 0):
            raise SchemeError("the pure central scheme carries no stabilizer")
        if self.family is Family.UPWIND and (self.gamma != 0 or self.sigma != 0):
            raise SchemeError("the upwind scheme carries no artificial stabilizer")

    def eps_h(self, h: float) -> float:
        return self.sigma * h**self.r

    def gamma_h(self, h: float) -> float:
        return self.gamma * h**self.p

    @property
    def name(self) -> str:
        if self.family is Family.MOMENT_CENTRAL:
            return f"moment-{self.bc.value}"
        return self.family.value


_NAMES = {
    "moment-bc1": dict(family=Family.MOMENT_CENTRAL, bc=BC.BC1, r=2.0, gamma=1.0),
    "moment-bc2": dict(family=Family.MOMENT_CENTRAL, bc=BC.BC2, r=2.0, gamma=1.0),
    "lax-friedrichs": dict(family=Family.LAX_FRIEDRICHS, r=1.0),
    "upwind": dict(family=Family.UPWIND),
    "central": dict(family=Family.PURE_CENTRAL),
}


def scheme_from_name(name: str, **overrides) -> SchemeConfig:
    """Build a SchemeConfig from its command-line name."""
    try:
        base = dict(_NAMES[str(name)])
    except KeyError:
        raise SchemeError(
            f"unknown scheme {name!r}; known: {', '.join(_NAMES)}"
        ) from None
    if "bc" in overrides and isinstance(overrides["bc"], str):
        overrides["bc"] = BC(overrides["bc"].lower())
    if "lf_beta" in overrides and overrides["lf_beta"] is not None:
        overrides["lf_beta"] = tuple(float(v) for v in overrides["lf_beta"])
    base.update(overrides)
    return SchemeConfig(**base)


# ---------------------------------------------------------------------------
# ghost closures on padded arrays

def _fill_padded_ghosts(P: np.ndarray, grid: Grid, bc: BC) -> np.ndarray:
    if bc is BC.BC2 and min(grid.nodes_per_dim) < 4:
        raise SchemeError("the second closure needs at least 4 nodes per dimension")
    if grid.dim == 1:
        if bc is BC.BC1:
            P[0] = 2 * P[1] - P[2]
            P[-1] = 2 * P[-2] - P[-3]
        else:
            P[0] = 3 * P[1] - 3 * P[2] + P[3]
            P[-1] = 3 * P[-2] - 3 * P[-3] + P[-4]
        return P
    if bc is BC.BC1:
        P[0, 1:-1] = 2 * P[1, 1:-1] - P[2, 1:-1]
        P[-1, 1:-1] = 2 * P[-2, 1:-1] - P[-3, 1:-1]
        P[1:-1, 0] = 2 * P[1:-1, 1] - P[1:-1, 2]
        P[1:-1, -1] = 2 * P[1:-1, -2] - P[1:-1, -3]
    else:
        P[0, 1:-1] = 3 * P[1, 1:-1] - 3 * P[2, 1:-1] + P[3, 1:-1]
        P[-1, 1:-1] = 3 * P[-2, 1:-1] - 3 * P[-3, 1:-1] + P[-4, 1:-1]
        P[1:-1, 0] = 3 * P[1:-1, 1] - 3 * P[1:-1, 2] + P[1:-1, 3]
        P[1:-1, -1] = 3 * P[1:-1, -2] - 3 * P[1:-1, -3] + P[1:-1, -4]
    return P


def ghost_fill(u: GridFunction, bc) -> GridFunction:
    """Populate the ghost layer from the auxiliary closure; idempotent."""
    bc = BC(bc) if not isinstance(bc, BC) else bc
    P = u.to_padded()
    _fill_padded_ghosts(P, u.grid, bc)
    return GridFunction.from_padded(u.grid, P)


# ---------------------------------------------------------------------------
# vectorized interior stencils on padded arrays

def _center(P, dim):
    return P[2:-2] if dim == 1 else P[2:-2, 2:-2]


def _shift(P, dim, axis, step):
    # slice of the interior block displaced by `step` along `axis`
    lo, hi = 2 + step, -2 + step
    sl = slice(lo, hi if hi != 0 else None)
    if dim == 1:
        return P[sl]
    return P[sl, 2:-2] if axis == 0 else P[2:-2, sl]


def _second_diff(P, grid, axis):
    h = grid.spacings[axis]
    C = _center(P, grid.dim)
    return (_shift(P, grid.dim, axis, 1) - 2 * C + _shift(P, grid.dim, axis, -1)) / h**2


def _staggered_minus_plain(P, grid):
    """(Lap_{2h} - Lap_h) U on the interior block; reads the ghost layer."""
    out = 0.0
    C = _center(P, grid.dim)
    for axis in range(grid.dim):
        h = grid.spacings[axis]
        s2 = (
            _shift(P, grid.dim, axis, 2) - 2 * C + _shift(P, grid.dim, axis, -2)
        ) / (4 * h**2)
        out = out + (s2 - _second_diff(P, grid, axis))
    return out


def _central_gradient(P, grid):
    out = []
    for axis in range(grid.dim):
        h = grid.spacings[axis]
        out.append(
            (_shift(P, grid.dim, axis, 1) - _shift(P, grid.dim, axis, -1)) / (2 * h)
        )
    return tuple(out)


def _one_sided(P, grid, axis, forward: bool):
    h = grid.spacings[axis]
    C = _center(P, grid.dim)
    if forward:
        return (_shift(P, grid.dim, axis, 1) - C) / h
    return (C - _shift(P, grid.dim, axis, -1)) / h


# ---------------------------------------------------------------------------
# the discrete operator

def _needs_ghosts(cfg: SchemeConfig, grid: Grid) -> bool:
    return cfg.family is Family.MOMENT_CENTRAL and cfg.gamma_h(grid.h_max) != 0.0


def _viscosity_coefficients(problem, cfg: SchemeConfig, grid: Grid, eps_total):
    """Per-axis coefficient of -d2_i; scalar or interior-shaped array.

    ``eps_total`` overrides eps + eps_h when given (continuation stages).
    """
    eps = problem.epsilon
    if cfg.family in (Family.MOMENT_CENTRAL, Family.PURE_CENTRAL):
        base = eps + cfg.eps_h(grid.h_max) if eps_total is None else eps_total
        return [base] * grid.dim
    if cfg.family is Family.UPWIND:
        return [eps] * grid.dim
    # Lax-Friedrichs
    if cfg.lf_beta is not None:
        if len(cfg.lf_beta) != grid.dim:
            raise SchemeError("lf_beta length does not match the grid dimension")
        return [eps + b * grid.spacings[i] for i, b in enumerate(cfg.lf_beta)]
    if eps_total is not None:
        return [eps_total] * grid.dim
    if cfg.sigma > 0:
        return [eps + cfg.eps_h(grid.h_max)] * grid.dim
    if isinstance(problem, HJProblem):
        return [
            eps + 0.5 * problem.slope_bounds[i] * grid.spacings[i]
            for i in range(grid.dim)
        ]
    bvals = problem.b(*grid.meshes(interior=True))
    return [
        eps + 0.5 * np.abs(np.asarray(bvals[i], dtype=float)) * grid.spacings[i]
        for i in range(grid.dim)
    ]


def _apply_operator(problem, cfg: SchemeConfig, u: GridFunction, eps_total=None):
    """Scheme operator applied to u; interior-shaped array, no data term.

    For linear problems this is L-hat[U]; for nonlinear ones H-hat[U]
    (whose Hamiltonian already carries the data).
    """
    grid = u.grid
    P = u.to_padded()
    gam_h = cfg.gamma_h(grid.h_max)
    if _needs_ghosts(cfg, grid):
        _fill_padded_ghosts(P, grid, cfg.bc)

    coefs = _viscosity_coefficients(problem, cfg, grid, eps_total)
    out = 0.0
    for axis in range(grid.dim):
        out = out - coefs[axis] * _second_diff(P, grid, axis)
    if gam_h != 0.0:
        out = out + gam_h * _staggered_minus_plain(P, grid)

    X = grid.meshes(interior=True)
    C = _center(P, grid.dim)
    if isinstance(problem, HJProblem):
        if cfg.family is Family.UPWIND:
            raise SchemeError("the upwind baseline is defined for linear problems only")
        out = out + problem.hamiltonian(_central_gradient(P, grid), C, X)
    else:
        bvals = problem.b(*X)
        if len(bvals) != grid.dim:
            raise SchemeError("convection field dimension does not match the grid")
        if cfg.family is Family.UPWIND:
            for axis in range(grid.dim):
                bi = np.asarray(bvals[axis], dtype=float)
                minus = _one_sided(P, grid, axis, forward=False)
                plus = _one_sided(P, grid, axis, forward=True)
                # ties at b_i = 0 take the backward difference
                out = out + bi * np.where(bi >= 0, minus, plus)
        else:
            grads = _central_gradient(P, grid)
            for axis in range(grid.dim):
                out = out + np.asarray(bvals[axis], dtype=float) * grads[axis]
        out = out + problem.c(*X) * C
    return out


def _forcing(problem: LinearProblem, grid: Grid) -> np.ndarray:
    if problem.f is None:
        return np.zeros(grid.interior_shape)
    vals = np.asarray(problem.f(*grid.meshes(interior=True)), dtype=float)
    return np.broadcast_to(vals, grid.interior_shape)


def residual(problem, cfg: SchemeConfig, u: GridFunction) -> GridFunction:
    """Scheme residual: operator minus data inside, U - g on the boundary."""
    grid = u.grid
    op = _apply_operator(problem, cfg, u)
    if isinstance(problem, LinearProblem):
        op = op - _forcing(problem, grid)
    bnd = u.node_block() - np.asarray(
        problem.g(*grid.meshes()), dtype=float
    )
    block = bnd  # boundary rows keep U - g, interior rows get the operator
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    block[inner] = op
    return GridFunction(grid, np.ravel(block, order="F"))


def _boundary_only(problem, grid: Grid) -> GridFunction:
    """Grid function holding g on the boundary and zero inside."""
    gvals = np.asarray(problem.g(*grid.meshes()), dtype=float)
    gvals = np.array(np.broadcast_to(gvals, grid.shape))
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    gvals[inner] = 0.0
    return GridFunction(grid, np.ravel(gvals, order="F"))


def stabilizer_matrix(cfg: SchemeConfig, grid: Grid, eps_total: float) -> sp.csr_matrix:
    """Interior matrix of the linear stabilizer part: viscosity plus moment.

    Isotropic viscosity only (eps_total on every axis); used by the
    nonlinear solver, where the Hamiltonian supplies everything else.
    """
    A = eps_total * assemble(StencilKind.laplacian(), grid, DIRICHLET_ROWS).matrix
    gam_h = cfg.gamma_h(grid.h_max)
    if gam_h != 0.0:
        A = A + gam_h * moment_matrix(grid, 0.0, cfg.bc.value).matrix
    return sp.csr_matrix(A)


def assemble_linear_system(problem: LinearProblem, cfg: SchemeConfig, grid: Grid):
    """Interior sparse system (A, rhs) with boundary data and ghosts folded in.

    Solving A x = rhs and reinserting the boundary values produces a grid
    function whose residual vanishes to solver tolerance.
    """
    if not isinstance(problem, LinearProblem):
        raise SchemeError("system assembly is defined for linear problems")
    X = grid.meshes(interior=True)
    coefs = _viscosity_coefficients(problem, cfg, grid, None)

    def diag(arr):
        flat = np.ravel(np.broadcast_to(arr, grid.interior_shape), order="F")
        return sp.diags(flat)

    A = None
    for axis in range(grid.dim):
        Ti = assemble(StencilKind.second(axis + 1), grid, DIRICHLET_ROWS).matrix
        part = (
            coefs[axis] * Ti
            if np.isscalar(coefs[axis])
            else diag(coefs[axis]) @ Ti
        )
        A = part if A is None else A + part

    bvals = problem.b(*X)
    if len(bvals) != grid.dim:
        raise SchemeError("convection field dimension does not match the grid")
    for axis in range(grid.dim):
        bi = np.asarray(bvals[axis], dtype=float)
        if cfg.family is Family.UPWIND:
            back = assemble(StencilKind.backward(axis + 1), grid, DIRICHLET_ROWS).matrix
            fwd = assemble(StencilKind.forward(axis + 1), grid, DIRICHLET_ROWS).matrix
            bplus = np.where(bi >= 0, bi, 0.0)
            bminus = np.where(bi < 0, bi, 0.0)
            A = A + diag(bplus) @ back + diag(bminus) @ fwd
        else:
            Di = assemble(StencilKind.central(axis + 1), grid, DIRICHLET_ROWS).matrix
            A = A + diag(bi) @ Di

    A = A + diag(np.asarray(problem.c(*X), dtype=float))

    gam_h = cfg.gamma_h(grid.h_max)
    if gam_h != 0.0:
        A = A + gam_h * moment_matrix(grid, 0.0, cfg.bc.value).matrix

    # boundary and ghost data fold: subtract the operator acting on the
    # boundary-only extension (its ghost values close over interior zeros)
    u0 = _boundary_only(problem, grid)
    known = _apply_operator(problem, cfg, u0)
    rhs = np.ravel(_forcing(problem, grid) - known, order="F")
    return SparseOperator(A, (cfg.name, "interior-system")), rhs
