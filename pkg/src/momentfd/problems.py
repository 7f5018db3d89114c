"""Problem definitions and the built-in example registry.

Coefficient and data callables are vectorized: they take one coordinate
array per dimension (``b(x)`` in 1D, ``b(x, y)`` in 2D) and broadcast.
Vector fields return one array per dimension.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grid import DRectangle

__all__ = [
    "ExampleId",
    "HJProblem",
    "LinearProblem",
    "ProblemError",
    "SmoothField",
    "example_description",
    "example_domain",
    "example_names",
    "get_example",
    "manufactured_forcing",
]


class ProblemError(ValueError):
    """Unknown example or ill-formed problem data."""


@dataclass(frozen=True)
class SmoothField:
    """Scalar field with hand-coded first and pure second partials."""

    value: Callable
    grad: tuple
    hess_diag: tuple

    @property
    def dim(self) -> int:
        return len(self.grad)


@dataclass(frozen=True)
class LinearProblem:
    """-eps*Lap(u) + b.grad(u) + c*u = f, Dirichlet data g."""

    epsilon: float
    b: Callable
    c: Callable
    f: Optional[Callable]
    g: Callable
    exact: Optional[Callable] = None
    exact_field: Optional[SmoothField] = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ProblemError("diffusion coefficient must be nonnegative")


@dataclass(frozen=True)
class HJProblem:
    """H(grad(u), u, x) = 0 with Dirichlet data g.

    ``hamiltonian(q, v, x)`` takes a tuple of gradient arrays, the value
    array, and a tuple of coordinate arrays.  ``hamiltonian_grad`` returns
    ``((dH/dq_1, ...), dH/dv)`` with the kink convention sign(0) = 0; when
    absent, solvers fall back to a finite-difference Jacobian.
    """

    hamiltonian: Callable
    g: Callable
    slope_bounds: tuple
    exact: Optional[Callable] = None
    epsilon: float = 0.0
    hamiltonian_grad: Optional[Callable] = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ProblemError("viscous perturbation must be nonnegative")
        if any(not np.isfinite(s) or s < 0 for s in self.slope_bounds):
            raise ProblemError("slope bounds must be finite and nonnegative")

    @property
    def dim(self) -> int:
        return len(self.slope_bounds)


@dataclass(frozen=True)
class ExampleId:
    key: str
    epsilon: Optional[float] = None


def manufactured_forcing(problem: LinearProblem, exact: SmoothField) -> Callable:
    """Forcing that makes ``exact`` solve the problem's linear operator.

    Pointwise f = -eps * sum_i u_xixi + b . grad(u) + c * u.
    """
    if not isinstance(exact, SmoothField):
        raise ProblemError("manufactured forcing needs a SmoothField with derivatives")
    eps, b, c = problem.epsilon, problem.b, problem.c

    def f(*coords):
        lap = sum(h(*coords) for h in exact.hess_diag)
        conv = sum(
            bi * gi(*coords) for bi, gi in zip(b(*coords), exact.grad)
        )
        return -eps * lap + conv + c(*coords) * exact.value(*coords)

    return f


# ---------------------------------------------------------------------------
# manufactured solutions

def _poly_cos_field() -> SmoothField:
    """u(x) = (x^2 + 1) cos(pi x) e^x, shared by the first two 1D examples."""
    pi = np.pi

    def val(x):
        return (x**2 + 1) * np.cos(pi * x) * np.exp(x)

    def d1(x):
        return np.exp(x) * (
            (x**2 + 2 * x + 1) * np.cos(pi * x) - pi * (x**2 + 1) * np.sin(pi * x)
        )

    def d2(x):
        return np.exp(x) * (
            (x**2 + 4 * x + 3 - pi**2 * (x**2 + 1)) * np.cos(pi * x)
            - pi * (2 * x**2 + 4 * x + 2) * np.sin(pi * x)
        )

    return SmoothField(val, (d1,), (d2,))


def _exp_xy_field() -> SmoothField:
    def val(x, y):
        return np.exp(x * y)

    return SmoothField(
        val,
        (lambda x, y: y * np.exp(x * y), lambda x, y: x * np.exp(x * y)),
        (lambda x, y: y**2 * np.exp(x * y), lambda x, y: x**2 * np.exp(x * y)),
    )


# ---------------------------------------------------------------------------
# registry builders

def _build_1d_ex1(eps: float) -> LinearProblem:
    u = _poly_cos_field()

    def b(x):
        return (16 * np.sqrt(x) + np.sin(np.pi * x) + 2,)

    def c(x):
        return np.zeros_like(x)

    prob = LinearProblem(eps, b, c, None, u.value, exact=u.value, exact_field=u)
    return dataclasses.replace(prob, f=manufactured_forcing(prob, u))


def _build_1d_ex2(eps: float) -> LinearProblem:
    u = _poly_cos_field()

    def b(x):
        return (16 * x - 8 + np.sin(np.pi * x),)

    def c(x):
        # the floor keeps c strictly positive so a comparison principle applies
        return np.maximum(x - 0.5, 0.0) + 1.0e-5

    prob = LinearProblem(eps, b, c, None, u.value, exact=u.value, exact_field=u)
    return dataclasses.replace(prob, f=manufactured_forcing(prob, u))


def _build_1d_ex3(eps: float) -> LinearProblem:
    def b(x):
        return (np.ones_like(x),)

    def c(x):
        return np.zeros_like(x)

    def f(x):
        return np.zeros_like(x)

    def g(x):
        return np.where(x > 0.5, 1.0, 0.0)

    if eps == 0.0:
        # vanishing-viscosity limit: zero inside, the jump lives at x = 1
        def exact(x):
            return np.zeros_like(x)
    else:
        def exact(x):
            return np.exp((x - 1) / eps) * (1 - np.exp(-x / eps)) / (1 - np.exp(-1 / eps))

    return LinearProblem(eps, b, c, f, g, exact=exact)


def _build_1d_ex4(eps: float) -> HJProblem:
    def H(q, v, x):
        return np.abs(q[0]) - 1.0

    def dH(q, v, x):
        return (np.sign(q[0]),), np.zeros_like(v)

    def g(x):
        return 1.0 - np.abs(x)

    return HJProblem(H, g, (1.0,), exact=g, epsilon=eps, hamiltonian_grad=dH)


def _build_2d_ex1(eps: float) -> LinearProblem:
    u = _exp_xy_field()

    def b(x, y):
        return (np.ones_like(x), np.ones_like(x))

    def c(x, y):
        return np.zeros_like(x)

    prob = LinearProblem(eps, b, c, None, u.value, exact=u.value, exact_field=u)
    return dataclasses.replace(prob, f=manufactured_forcing(prob, u))


def _build_2d_ex2(eps: float) -> HJProblem:
    u = _exp_xy_field()

    def fdata(x, y):
        return np.exp(x * y) * (np.sqrt(x**2 + y**2) + 1.0)

    def H(q, v, xy):
        return np.sqrt(q[0] ** 2 + q[1] ** 2) + v - fdata(*xy)

    def dH(q, v, xy):
        mag = np.sqrt(q[0] ** 2 + q[1] ** 2)
        safe = np.where(mag > 0, mag, 1.0)
        dq0 = np.where(mag > 0, q[0] / safe, 0.0)
        dq1 = np.where(mag > 0, q[1] / safe, 0.0)
        return (dq0, dq1), np.ones_like(v)

    return HJProblem(H, u.value, (1.0, 1.0), exact=u.value, epsilon=eps, hamiltonian_grad=dH)


def _build_2d_ex3(eps: float) -> HJProblem:
    def fdata(x):
        return np.where(x <= 0.2, -1.0, 3.0)

    def H(q, v, xy):
        return np.abs(q[0]) + 2 * q[0] - fdata(xy[0])

    def dH(q, v, xy):
        return (np.sign(q[0]) + 2.0, np.zeros_like(q[1])), np.zeros_like(v)

    def g(x, y):
        return np.abs(x - 0.2)

    return HJProblem(H, g, (3.0, 0.0), exact=g, epsilon=eps, hamiltonian_grad=dH)


_UNIT_1D = DRectangle((0.0,), (1.0,))
_UNIT_2D = DRectangle((0.0, 0.0), (1.0, 1.0))

_REGISTRY = {
    "1d-ex1": (_build_1d_ex1, 1.0e-11, _UNIT_1D, "1D linear, sharp layer, b = 16*sqrt(x)+sin(pi x)+2"),
    "1d-ex2": (_build_1d_ex2, 1.0e-1, _UNIT_1D, "1D linear, sign-changing b = 16x-8+sin(pi x)"),
    "1d-ex3": (_build_1d_ex3, 0.0, _UNIT_1D, "1D degenerate limit: b = 1, f = 0, jump data at x = 1"),
    "1d-ex4": (_build_1d_ex4, 0.0, DRectangle((-1.0,), (1.0,)), "1D eikonal |u_x| = 1 on (-1, 1)"),
    "2d-ex1": (_build_2d_ex1, 0.0, _UNIT_2D, "2D linear advection b = (1, 1), u = exp(xy)"),
    "2d-ex2": (_build_2d_ex2, 0.0, _UNIT_2D, "2D eikonal-with-reaction |grad u| + u = f"),
    "2d-ex3": (_build_2d_ex3, 0.0, _UNIT_2D, "2D kinked |u_x| + 2 u_x = f, u = |x - 0.2|"),
}


def example_names() -> list:
    return list(_REGISTRY)


def example_description(name: str) -> str:
    return _REGISTRY[name][3]


def example_domain(name: str) -> DRectangle:
    """Domain the named example is posed on."""
    key = name.key if isinstance(name, ExampleId) else str(name)
    if key not in _REGISTRY:
        raise ProblemError(f"unknown example {key!r}; known: {', '.join(_REGISTRY)}")
    return _REGISTRY[key][2]


def get_example(id, epsilon: Optional[float] = None):
    """Look up a registered example, optionally overriding its epsilon."""
    if isinstance(id, ExampleId):
        key, eps = id.key, id.epsilon if epsilon is None else epsilon
    else:
        key, eps = str(id), epsilon
    if key not in _REGISTRY:
        raise ProblemError(
            f"unknown example {key!r}; known: {', '.join(_REGISTRY)}"
        )
    builder, default_eps, _, _ = _REGISTRY[key]
    return builder(default_eps if eps is None else float(eps))
