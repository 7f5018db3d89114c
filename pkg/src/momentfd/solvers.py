"""Linear, fixed-point, and Newton-continuation solvers.

Linear problems go through a sparse LU factorization of the assembled
interior system.  The fixed-point sweep iterates the damped map

    U  <-  U - rho * (scheme residual)

on the interior, re-imposing boundary data each pass; its contraction
constants (and hence admissible rho) come from the spectral bounds in
``contraction_constants``.  Nonlinear problems use damped Newton on the
scheme residual, warm-started through a ladder of decreasing artificial
viscosity: stage k solves with viscosity C * h^{q_k} and hands its
solution to stage k+1.  The ladder's last power is the configured target,
so the final stage solves the actual scheme.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, GridFunction
from .operators import (
    DIRICHLET_ROWS,
    SparseOperator,
    StencilKind,
    assemble,
    moment_matrix,
)
from .problems import HJProblem, LinearProblem
from .schemes import (
    Family,
    SchemeConfig,
    SchemeError,
    _apply_operator,
    _center,
    _central_gradient,
    _viscosity_coefficients,
    assemble_linear_system,
    residual,
)

__all__ = [
    "ContinuationLadder",
    "DivergenceError",
    "FixedPointConfig",
    "SingularSystemError",
    "SolveReport",
    "SolverError",
    "UnsupportedAnalysisError",
    "contraction_constants",
    "default_ladder",
    "fixed_point_map",
    "fixed_point_solve",
    "newton_continuation_solve",
    "solve_direct",
]

_DENSE_LIMIT = 2500  # dense eigen/rank work below this interior size


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    """Structurally or numerically singular linear system."""


class DivergenceError(SolverError):
    """Fixed-point iteration drifting away from a solution."""


class UnsupportedAnalysisError(SolverError):
    """The requested bound needs assumptions the inputs do not meet."""


@dataclass(frozen=True)
class FixedPointConfig:
    rho: float
    tol: float = 1e-10
    max_iter: int = 10**6

    def __post_init__(self):
        if self.rho <= 0:
            raise SolverError("rho must be positive")
        if self.tol <= 0 or self.max_iter < 1:
            raise SolverError("tol must be positive, max_iter at least 1")


@dataclass(frozen=True)
class ContinuationLadder:
    """Viscosity schedule eps_k = C * h^{q_k}; powers strictly increasing."""

    C: float
    powers: tuple

    def __post_init__(self):
        object.__setattr__(self, "powers", tuple(float(q) for q in self.powers))
        if self.C <= 0:
            raise SolverError("ladder constant C must be positive")
        if len(self.powers) < 1:
            raise SolverError("ladder needs at least one power")
        if any(b <= a for a, b in zip(self.powers, self.powers[1:])):
            raise SolverError("ladder powers must be strictly increasing")


def default_ladder(cfg: SchemeConfig) -> ContinuationLadder:
    """Powers {0, 1, target}, constant from the scheme's sigma."""
    C = cfg.sigma if cfg.sigma > 0 else 1.0
    powers = sorted({q for q in (0.0, 1.0, float(cfg.r)) if q <= cfg.r})
    return ContinuationLadder(C, tuple(powers))


@dataclass(frozen=True)
class SolveReport:
    solution: GridFunction
    iterations_per_stage: tuple
    final_residual: float
    converged: bool
    wall_time: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.converged and not np.isfinite(self.final_residual):
            raise SolverError("a converged report needs a finite residual")


# ---------------------------------------------------------------------------
# direct linear solve

def _as_csc(system):
    A = system.matrix if isinstance(system, SparseOperator) else system
    return sp.csc_matrix(A)


def _singularity_diagnostic(A) -> str:
    n = A.shape[0]
    if n <= _DENSE_LIMIT:
        dense = A.toarray()
        rank = int(np.linalg.matrix_rank(dense))
        cond = float(np.linalg.cond(dense)) if rank == n else np.inf
        return f"rank {rank} of {n}, condition estimate {cond:.3e}"
    try:
        est = spla.onenormest(A) * spla.onenormest(spla.inv(A))
        return f"size {n}, condition estimate {est:.3e}"
    except Exception:
        return f"size {n}, condition estimate unavailable"


def solve_direct(system, rhs) -> np.ndarray:
    """Sparse LU solve with a residual acceptance check."""
    A = _as_csc(system)
    b = np.asarray(rhs, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise SolverError(f"system shape {A.shape} does not match rhs {b.shape}")
    try:
        x = spla.splu(A).solve(b)
    except RuntimeError as exc:  # exactly singular factorization
        raise SingularSystemError(
            f"sparse factorization failed ({exc}); {_singularity_diagnostic(A)}"
        ) from None
    resid = np.max(np.abs(A @ x - b)) if b.size else 0.0
    # normwise backward error: an ill-conditioned system with a huge but
    # correct solution (the unstabilized central scheme) must still pass
    scale = 1.0 + np.max(np.abs(b), initial=0.0)
    if b.size:
        scale += float(np.max(np.abs(A).sum(axis=1))) * np.max(np.abs(x))
    if not np.all(np.isfinite(x)) or resid > 1e-10 * scale:
        raise SingularSystemError(
            f"direct solve residual {resid:.3e} exceeds tolerance; "
            + _singularity_diagnostic(A)
        )
    return x


# ---------------------------------------------------------------------------
# damped fixed-point sweep

def _interior_residual(problem, cfg, u: GridFunction) -> np.ndarray:
    r = residual(problem, cfg, u)
    inner = tuple(slice(1, -1) for _ in range(u.grid.dim))
    return r.node_block()[inner]


def _with_boundary(problem, grid: Grid) -> np.ndarray:
    """Node block holding g on the boundary, zero inside."""
    gvals = np.asarray(problem.g(*grid.meshes()), dtype=float)
    block = np.array(np.broadcast_to(gvals, grid.shape))
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    block[inner] = 0.0
    return block


def fixed_point_map(problem, cfg: SchemeConfig, rho: float, u: GridFunction) -> GridFunction:
    """One application of the damped residual map, boundary re-imposed."""
    grid = u.grid
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    block = _with_boundary(problem, grid)
    block[inner] = u.node_block()[inner] - rho * _interior_residual(problem, cfg, u)
    return GridFunction(grid, np.ravel(block, order="F"))


def fixed_point_solve(
    problem: LinearProblem,
    cfg: SchemeConfig,
    fp: FixedPointConfig,
    u0: GridFunction,
) -> SolveReport:
    """Iterate the damped map until the residual max-norm drops below tol."""
    if not isinstance(problem, LinearProblem):
        raise SolverError("the fixed-point sweep handles linear problems only")
    start = time.perf_counter()
    grid = u0.grid
    diagnostics = {"rho": fp.rho, "guaranteed": _b_is_constant(problem, grid)}

    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    u = _insert_interior(
        _with_boundary(problem, grid),
        grid,
        np.ravel(u0.node_block()[inner], order="F"),
    )
    res = float(np.max(np.abs(_interior_residual(problem, cfg, u))))
    growth_streak = 0
    it = 0
    while res > fp.tol and it < fp.max_iter:
        u = fixed_point_map(problem, cfg, fp.rho, u)
        new_res = float(np.max(np.abs(_interior_residual(problem, cfg, u))))
        growth_streak = growth_streak + 1 if new_res > res else 0
        if growth_streak >= 20:
            raise DivergenceError(
                f"residual grew for {growth_streak} consecutive sweeps "
                f"(now {new_res:.3e}); try a smaller rho than {fp.rho}"
            )
        res = new_res
        it += 1
    return SolveReport(
        solution=u,
        iterations_per_stage=(it,),
        final_residual=res,
        converged=res <= fp.tol,
        wall_time=time.perf_counter() - start,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Newton with viscosity continuation

def _secant_init(problem, grid: Grid) -> np.ndarray:
    """Initial node block: chord of the boundary data (1D), zero inside (2D)."""
    block = _with_boundary(problem, grid)
    if grid.dim == 1:
        (a,), (b,) = grid.domain.lower, grid.domain.upper
        ga = float(np.asarray(problem.g(np.array([a]))).reshape(-1)[0])
        gb = float(np.asarray(problem.g(np.array([b]))).reshape(-1)[0])
        x = grid.axis_coords(0)
        block = ga + (gb - ga) * (x - a) / (b - a)
    return block


def _stage_matrix(problem, cfg: SchemeConfig, grid: Grid, eps_total) -> sp.csr_matrix:
    """Linear part of the stage operator: viscosity plus moment term."""
    coefs = (
        [eps_total] * grid.dim
        if eps_total is not None
        else _viscosity_coefficients(problem, cfg, grid, None)
    )
    A = None
    for axis in range(grid.dim):
        Ti = assemble(StencilKind.second(axis + 1), grid, DIRICHLET_ROWS).matrix
        part = coefs[axis] * Ti
        A = part if A is None else A + part
    gam_h = cfg.gamma_h(grid.h_max)
    if gam_h != 0.0:
        A = A + gam_h * moment_matrix(grid, 0.0, cfg.bc.value).matrix
    return sp.csr_matrix(A)


def _central_blocks(grid: Grid):
    return [
        assemble(StencilKind.central(axis + 1), grid, DIRICHLET_ROWS).matrix
        for axis in range(grid.dim)
    ]


def _insert_interior(template: np.ndarray, grid: Grid, x: np.ndarray) -> GridFunction:
    block = template.copy()
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    block[inner] = x.reshape(grid.interior_shape, order="F")
    return GridFunction(grid, np.ravel(block, order="F"))


def _fd_jacobian(res_fn, x: np.ndarray, r0: np.ndarray) -> np.ndarray:
    J = np.empty((x.size, x.size))
    for j in range(x.size):
        step = 1e-7 * (1.0 + abs(x[j]))
        xp = x.copy()
        xp[j] += step
        J[:, j] = (res_fn(xp) - r0) / step
    return J


def _newton_stage(problem, cfg, grid, eps_total, x0, tol, max_iter):
    """Damped Newton on the interior residual at fixed stage viscosity."""
    template = _with_boundary(problem, grid)
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    Alin = _stage_matrix(problem, cfg, grid, eps_total)
    centrals = _central_blocks(grid)
    X = grid.meshes(interior=True)

    def res_vec(x):
        u = _insert_interior(template, grid, x)
        return np.ravel(
            _apply_operator(problem, cfg, u, eps_total=eps_total), order="F"
        )

    def gradient_state(x):
        u = _insert_interior(template, grid, x)
        P = u.to_padded()
        return _central_gradient(P, grid), _center(P, grid.dim)

    x = x0.copy()
    r = res_vec(x)
    rnorm = float(np.linalg.norm(r))
    it = 0
    while np.max(np.abs(r)) > tol and it < max_iter:
        if problem.hamiltonian_grad is not None:
            grads, vals = gradient_state(x)
            dq, dv = problem.hamiltonian_grad(grads, vals, X)
            J = Alin + sp.diags(np.ravel(np.broadcast_to(dv, grid.interior_shape), order="F"))
            for axis in range(grid.dim):
                dqa = np.ravel(np.broadcast_to(dq[axis], grid.interior_shape), order="F")
                J = J + sp.diags(dqa) @ centrals[axis]
            try:
                delta = spla.splu(sp.csc_matrix(J)).solve(-r)
            except RuntimeError:
                delta = spla.lsqr(sp.csc_matrix(J), -r)[0]
        else:
            J = _fd_jacobian(res_vec, x, r)
            delta = np.linalg.lstsq(J, -r, rcond=None)[0]
        if not np.all(np.isfinite(delta)):
            break

        t = 1.0
        accepted = False
        for _ in range(31):
            trial = x + t * delta
            tr = res_vec(trial)
            if np.linalg.norm(tr) <= (1.0 - 1e-4 * t) * rnorm:
                x, r, rnorm = trial, tr, float(np.linalg.norm(tr))
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break  # stagnated; caller reports non-convergence
        it += 1
    return x, float(np.max(np.abs(r))) if r.size else 0.0, it


def newton_continuation_solve(
    problem: HJProblem,
    cfg: SchemeConfig,
    ladder: Optional[ContinuationLadder],
    tol: float = 1e-10,
    *,
    grid: Grid,
    max_iter_per_stage: int = 100,
) -> SolveReport:
    """Damped Newton through the viscosity ladder; last stage is the scheme."""
    if not isinstance(problem, HJProblem):
        raise SolverError("continuation targets Hamilton-Jacobi problems")
    if cfg.family is Family.UPWIND:
        raise SchemeError("the upwind baseline is defined for linear problems only")
    if ladder is None:
        ladder = default_ladder(cfg)
    if ladder.powers[-1] != float(cfg.r):
        raise SolverError(
            f"ladder must end at the scheme's viscosity power {cfg.r}, "
            f"got {ladder.powers[-1]}"
        )

    start = time.perf_counter()
    h = grid.h_max
    x = np.ravel(_secant_init(problem, grid)[
        tuple(slice(1, -1) for _ in range(grid.dim))
    ], order="F")

    iters = []
    res = np.inf
    converged = False
    failed_stage = None
    for k, q in enumerate(ladder.powers):
        final = k == len(ladder.powers) - 1
        # the final stage runs the configured scheme exactly; earlier stages
        # override the viscosity with the ladder value
        eps_total = None if final else problem.epsilon + ladder.C * h**q
        x_new, res, it = _newton_stage(
            problem, cfg, grid, eps_total, x, tol, max_iter_per_stage
        )
        iters.append(it)
        stage_ok = res <= tol
        if stage_ok or final:
            x = x_new
        if final:
            converged = stage_ok
        elif not stage_ok:
            failed_stage = k  # keep going; a poor warm start only hurts, not ends

    template = _with_boundary(problem, grid)
    solution = _insert_interior(template, grid, x)
    diagnostics = {"ladder": ladder.powers, "C": ladder.C}
    if failed_stage is not None:
        diagnostics["stalled_stage"] = failed_stage
    return SolveReport(
        solution=solution,
        iterations_per_stage=tuple(iters),
        final_residual=res,
        converged=converged,
        wall_time=time.perf_counter() - start,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# contraction constants

def _b_is_constant(problem: LinearProblem, grid: Grid) -> bool:
    if not isinstance(problem, LinearProblem):
        return False
    bvals = problem.b(*grid.meshes(interior=True))
    for comp in bvals:
        arr = np.asarray(np.broadcast_to(comp, grid.interior_shape), dtype=float)
        if np.max(arr) - np.min(arr) > 1e-12 * (1.0 + np.max(np.abs(arr))):
            return False
    return True


def _tridiag_min_eig(n: int, h: float) -> float:
    # smallest eigenvalue of tridiag(-1, 2, -1)/h^2 on n interior nodes
    return (2.0 - 2.0 * np.cos(np.pi / (n + 1))) / h**2


def _sym_extremes(A: sp.spmatrix):
    n = A.shape[0]
    if n <= _DENSE_LIMIT:
        w = np.linalg.eigvalsh(np.asarray((A + A.T).todense()) / 2.0)
        return float(w[0]), float(w[-1]), False
    S = (A + A.T) / 2.0
    lo = float(spla.eigsh(S, k=1, which="SA", return_eigenvectors=False)[0])
    hi = float(spla.eigsh(S, k=1, which="LA", return_eigenvectors=False)[0])
    return lo, hi, True


def contraction_constants(problem: LinearProblem, cfg: SchemeConfig, grid: Grid) -> dict:
    """Spectral constants behind the damped-map contraction bound.

    Returns lambda0 (smallest Dirichlet eigenvalue of the plain
    five/three-point negative Laplacian), lambda_star (smallest eigenvalue
    of the squared second difference at the finest spacing, over 4), c0,
    kappa (largest squared singular value of the skew part of the scheme
    matrix), beta, R2, plus the bisected symmetric-part radius R1 and the
    suggested rho.
    """
    if not _b_is_constant(problem, grid):
        raise UnsupportedAnalysisError(
            "contraction constants assume a constant convection field"
        )
    n = grid.n_interior
    estimated = n > _DENSE_LIMIT

    L = assemble(StencilKind.laplacian(), grid, DIRICHLET_ROWS).matrix
    if estimated:
        lambda0 = sum(
            _tridiag_min_eig(grid.interior_shape[i], grid.spacings[i])
            for i in range(grid.dim)
        )
    else:
        lambda0 = float(np.linalg.eigvalsh(L.toarray())[0])

    axis = int(np.argmin(grid.spacings))
    lambda_star = 0.25 * _tridiag_min_eig(
        grid.interior_shape[axis], grid.spacings[axis]
    ) ** 2

    X = grid.meshes(interior=True)
    c0 = float(np.min(np.broadcast_to(np.asarray(problem.c(*X), dtype=float), grid.interior_shape)))

    eps_eff = problem.epsilon + cfg.eps_h(grid.h_max)
    beta = eps_eff * lambda0 + c0 + grid.h_min ** (2.0 + cfg.p) * cfg.gamma * lambda_star

    A, _ = assemble_linear_system(problem, cfg, grid)
    M = A.matrix
    Ga = sp.csr_matrix((M - M.T) / 2.0)
    Ga.eliminate_zeros()
    if Ga.nnz == 0:
        smax = 0.0
    elif estimated:
        smax = float(spla.svds(Ga, k=1, return_singular_vectors=False)[0])
    else:
        smax = float(np.linalg.svd(Ga.toarray(), compute_uv=False)[0])
    kappa = smax**2

    R2 = 2.0 * beta / (4.0 * kappa - beta**2) if 4.0 * kappa > beta**2 else np.inf

    # R1: largest rho keeping I/2 - rho * sym(A) positive semidefinite
    _, gs_max, _ = _sym_extremes(M)
    if gs_max <= 0:
        R1 = np.inf
    else:
        lo, hi = 0.0, 1.0
        while 0.5 - hi * gs_max >= 0 and hi < 1e16:
            hi *= 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if 0.5 - mid * gs_max >= 0:
                lo = mid
            else:
                hi = mid
        R1 = lo

    out = {
        "lambda0": lambda0,
        "lambda_star": lambda_star,
        "c0": c0,
        "kappa": kappa,
        "beta": beta,
        "R2": R2,
        "R1": R1,
        "estimated": estimated,
    }
    out["rho"] = 0.5 * min(R1, R2) if np.isfinite(min(R1, R2)) else min(R1, R2)
    return out
