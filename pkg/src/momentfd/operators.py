"""Difference operators: pointwise stencils and sparse assembly.

Two independent routes are exposed on purpose.  ``apply_stencil`` evaluates
a stencil at one node from stored values (ghosts included); ``assemble``
builds the interior matrix with boundary unknowns eliminated; and
``moment_matrix`` builds the moment stabilizer from its closed product
form.  Tests hold the routes against each other.

Sign convention: assembled second-difference matrices (Second, Laplacian,
StaggeredSecond) carry the positive-definite orientation -d2, while
``apply_stencil`` always returns the plain +d2 value.  Gradient and moment
assemblies are unnegated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .grid import Grid, GridFunction, MultiIndex, _flat_index, all_indices

__all__ = [
    "DIRICHLET_ROWS",
    "NEUMANN_ROWS",
    "OperatorError",
    "SparseOperator",
    "StencilDomainError",
    "StencilKind",
    "apply_stencil",
    "assemble",
    "moment_matrix",
]

DIRICHLET_ROWS = "dirichlet-rows"
NEUMANN_ROWS = "neumann-rows"


class OperatorError(ValueError):
    """Incompatible stencil/boundary-treatment configuration."""


class StencilDomainError(KeyError):
    """A stencil arm reached outside the stored values."""


@dataclass(frozen=True)
class StencilKind:
    """Tagged stencil selector; axis is 1-based where it applies."""

    name: str
    axis: Optional[int] = None
    p: Optional[float] = None

    _DIRECTIONAL = ("forward", "backward", "central", "second", "staggered-second")

    def __post_init__(self):
        if self.name in self._DIRECTIONAL:
            if self.axis is None or self.axis < 1:
                raise OperatorError(f"{self.name} stencil needs a 1-based axis tag")
        elif self.name == "moment":
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise OperatorError("moment stencil needs p in [0, 1]")
        elif self.name != "laplacian":
            raise OperatorError(f"unknown stencil kind {self.name!r}")

    @staticmethod
    def forward(i: int) -> "StencilKind":
        return StencilKind("forward", axis=i)

    @staticmethod
    def backward(i: int) -> "StencilKind":
        return StencilKind("backward", axis=i)

    @staticmethod
    def central(i: int) -> "StencilKind":
        return StencilKind("central", axis=i)

    @staticmethod
    def second(i: int) -> "StencilKind":
        return StencilKind("second", axis=i)

    @staticmethod
    def staggered_second(i: int) -> "StencilKind":
        return StencilKind("staggered-second", axis=i)

    @staticmethod
    def laplacian() -> "StencilKind":
        return StencilKind("laplacian")

    @staticmethod
    def moment(p: float) -> "StencilKind":
        return StencilKind("moment", p=float(p))

    def label(self) -> str:
        bits = [self.name]
        if self.axis is not None:
            bits.append(f"x{self.axis}")
        if self.p is not None:
            bits.append(f"p={self.p:g}")
        return " ".join(bits)


class SparseOperator:
    """Immutable sparse matrix over a fixed node ordering, with provenance."""

    def __init__(self, matrix: sp.spmatrix, provenance: tuple):
        m = sp.csr_matrix(matrix)
        m.sum_duplicates()
        m.eliminate_zeros()
        self.matrix = m
        self.provenance = provenance

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def entries(self) -> list:
        """Consolidated (row, col, value) triplets sorted by (row, col)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [
            (int(coo.row[k]), int(coo.col[k]), float(coo.data[k])) for k in order
        ]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def dump(self, path) -> None:
        """Coordinate-format text dump: `row col value`, 17 significant digits."""
        with open(path, "w") as fh:
            for r, c, v in self.entries():
                fh.write(f"{r} {c} {v:.17g}\n")

    def __matmul__(self, other):
        return self.matrix @ other


def _check_axis(kind: StencilKind, dim: int) -> int:
    if kind.axis is not None and kind.axis > dim:
        raise OperatorError(f"axis {kind.axis} out of range for dimension {dim}")
    return 0 if kind.axis is None else kind.axis - 1


def _neighbor(idx: MultiIndex, axis: int, step: int) -> tuple:
    out = list(idx)
    out[axis] += step
    return tuple(out)


def _value(u: GridFunction, idx: MultiIndex) -> float:
    try:
        return u.get(idx)
    except Exception as exc:
        raise StencilDomainError(f"stencil arm reached missing index {tuple(idx)}") from exc


def apply_stencil(kind: StencilKind, u: GridFunction, idx: MultiIndex) -> float:
    """Evaluate one stencil at one node.

    Ghost values must already be stored in ``u`` when the staggered or
    moment stencils are applied next to the boundary.
    """
    g = u.grid
    ax = _check_axis(kind, g.dim)
    idx = tuple(int(k) for k in idx)

    if kind.name == "forward":
        h = g.spacings[ax]
        return (_value(u, _neighbor(idx, ax, 1)) - _value(u, idx)) / h
    if kind.name == "backward":
        h = g.spacings[ax]
        return (_value(u, idx) - _value(u, _neighbor(idx, ax, -1))) / h
    if kind.name == "central":
        h = g.spacings[ax]
        return (
            _value(u, _neighbor(idx, ax, 1)) - _value(u, _neighbor(idx, ax, -1))
        ) / (2 * h)
    if kind.name == "second":
        h = g.spacings[ax]
        return (
            _value(u, _neighbor(idx, ax, 1))
            - 2 * _value(u, idx)
            + _value(u, _neighbor(idx, ax, -1))
        ) / h**2
    if kind.name == "staggered-second":
        h = g.spacings[ax]
        return (
            _value(u, _neighbor(idx, ax, 2))
            - 2 * _value(u, idx)
            + _value(u, _neighbor(idx, ax, -2))
        ) / (2 * h) ** 2
    if kind.name == "laplacian":
        return sum(
            apply_stencil(StencilKind.second(i + 1), u, idx) for i in range(g.dim)
        )
    if kind.name == "moment":
        total = 0.0
        for i in range(g.dim):
            h = g.spacings[i]
            total += (
                _value(u, _neighbor(idx, i, 2))
                - 4 * _value(u, _neighbor(idx, i, 1))
                + 6 * _value(u, idx)
                - 4 * _value(u, _neighbor(idx, i, -1))
                + _value(u, _neighbor(idx, i, -2))
            ) / (4 * h ** (2 - kind.p))
        return total
    raise OperatorError(f"unknown stencil kind {kind.name!r}")


# ---------------------------------------------------------------------------
# per-axis interior blocks (Dirichlet columns eliminated)

def _block_second(n: int, h: float) -> sp.csr_matrix:
    """-d2 on n interior nodes: tridiag(-1, 2, -1)/h^2."""
    return sp.diags(
        [-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr"
    ) / h**2


def _block_second_neumann(n: int, h: float) -> sp.csr_matrix:
    """-d2 with the one-sided first-difference closure at both ends.

    Row 1 becomes (1, -1)/h^2: substituting the closure U_b = U_1 into the
    boundary-adjacent row, equivalently the matrix called D2_{i,1}.
    """
    N = _block_second(n, h).tolil()
    N[0, 0] = 1.0 / h**2
    N[n - 1, n - 1] = 1.0 / h**2
    return N.tocsr()


def _block_central(n: int, h: float) -> sp.csr_matrix:
    """Central first difference on interior nodes; exactly skew-symmetric."""
    return sp.diags(
        [-np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="csr"
    ) / (2 * h)


def _block_forward(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], format="csr") / h


def _block_backward(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n)], [-1, 0], format="csr") / h


def _block_fourth_bc1(n: int, h: float, p: float) -> sp.csr_matrix:
    """One axis of the moment operator with the d2 = 0 boundary closure.

    Built coefficient by coefficient from the 5-point stencil
    (1, -4, 6, -4, 1)/(4 h^{2-p}) with ghost G = 2 U_b - U_1 substituted
    and boundary columns dropped.
    """
    c = 1.0 / (4 * h ** (2 - p))
    A = sp.lil_matrix((n, n))
    for k in range(n):
        for off, w in ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)):
            j = k + off
            if 0 <= j < n:
                A[k, j] += w * c
            elif j == -2:
                # ghost: G = 2 U_b - U_first, only the interior part stays
                A[k, 0] += -w * c
            elif j == n + 1:
                A[k, n - 1] += -w * c
            # j == -1 or j == n hit the boundary node: known value, dropped
    return A.tocsr()


def _block_fourth_bc2(n: int, h: float, p: float) -> sp.csr_matrix:
    """Same as _block_fourth_bc1 but with the ghost G = 3 U_b - 3 U_1 + U_2."""
    if n < 2:
        raise OperatorError("second closure needs at least 2 interior nodes per axis")
    c = 1.0 / (4 * h ** (2 - p))
    A = sp.lil_matrix((n, n))
    for k in range(n):
        for off, w in ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)):
            j = k + off
            if 0 <= j < n:
                A[k, j] += w * c
            elif j == -2:
                A[k, 0] += -3.0 * w * c
                A[k, 1] += w * c
            elif j == n + 1:
                A[k, n - 1] += -3.0 * w * c
                A[k, n - 2] += w * c
    return A.tocsr()


def _expand(grid: Grid, axis: int, block: sp.spmatrix) -> sp.csr_matrix:
    """Kronecker-lift a per-axis interior block to the full interior ordering."""
    if grid.dim == 1:
        return sp.csr_matrix(block)
    n1, n2 = grid.interior_shape
    if axis == 0:
        return sp.kron(sp.identity(n2), block, format="csr")
    return sp.kron(block, sp.identity(n1), format="csr")


def assemble(kind: StencilKind, grid: Grid, boundary_treatment: Optional[str]) -> SparseOperator:
    """Assemble a stencil as a sparse matrix.

    DirichletRows eliminates boundary unknowns (the caller folds boundary
    data into the right-hand side); where a stencil needs ghosts, the
    first-closure ghost elimination is substituted.  NeumannRows is valid
    only for Second(i) and yields the one-sided-closure matrix.  ``None``
    assembles over all real nodes with rows only where the stencil fits.
    """
    ax = _check_axis(kind, grid.dim)
    prov = (kind.label(), boundary_treatment or "none")

    if boundary_treatment == NEUMANN_ROWS:
        if kind.name != "second":
            raise OperatorError("NeumannRows treatment is only defined for Second(i)")
        n = grid.interior_shape[ax]
        return SparseOperator(
            _expand(grid, ax, _block_second_neumann(n, grid.spacings[ax])), prov
        )

    if boundary_treatment == DIRICHLET_ROWS:
        if kind.name == "laplacian":
            total = None
            for i in range(grid.dim):
                part = _expand(
                    grid, i, _block_second(grid.interior_shape[i], grid.spacings[i])
                )
                total = part if total is None else total + part
            return SparseOperator(total, prov)
        if kind.name == "moment":
            total = None
            for i in range(grid.dim):
                part = _expand(
                    grid,
                    i,
                    _block_fourth_bc1(grid.interior_shape[i], grid.spacings[i], kind.p),
                )
                total = part if total is None else total + part
            return SparseOperator(total, prov)
        n, h = grid.interior_shape[ax], grid.spacings[ax]
        if kind.name == "second":
            return SparseOperator(_expand(grid, ax, _block_second(n, h)), prov)
        if kind.name == "central":
            return SparseOperator(_expand(grid, ax, _block_central(n, h)), prov)
        if kind.name == "forward":
            return SparseOperator(_expand(grid, ax, _block_forward(n, h)), prov)
        if kind.name == "backward":
            return SparseOperator(_expand(grid, ax, _block_backward(n, h)), prov)
        if kind.name == "staggered-second":
            # -d2_{2h} with the first-closure ghost substituted
            c = 1.0 / (4 * h**2)
            A = sp.lil_matrix((n, n))
            for k in range(n):
                for off, w in ((-2, -1.0), (0, 2.0), (2, -1.0)):
                    j = k + off
                    if 0 <= j < n:
                        A[k, j] += w * c
                    elif j == -2:
                        A[k, 0] += -w * c
                    elif j == n + 1:
                        A[k, n - 1] += -w * c
            return SparseOperator(_expand(grid, ax, A.tocsr()), prov)
        raise OperatorError(f"unknown stencil kind {kind.name!r}")

    if boundary_treatment is None:
        return _assemble_unrestricted(kind, grid, prov)
    raise OperatorError(f"unknown boundary treatment {boundary_treatment!r}")


def _assemble_unrestricted(kind: StencilKind, grid: Grid, prov: tuple) -> SparseOperator:
    """Full-grid matrix; rows are zero where the stencil does not fit."""
    n = grid.n_nodes
    A = sp.lil_matrix((n, n))
    offsets = _stencil_offsets(kind, grid)
    for idx in all_indices(grid):
        row = _flat_index(grid, idx)
        terms = []
        ok = True
        for (axs, step), w in offsets:
            j = list(idx)
            if step != 0:
                j[axs] += step
            if not all(1 <= j[i] <= grid.nodes_per_dim[i] for i in range(grid.dim)):
                ok = False
                break
            terms.append((_flat_index(grid, tuple(j)), w))
        if ok:
            for col, w in terms:
                A[row, col] += w
    return SparseOperator(A.tocsr(), prov)


def _stencil_offsets(kind: StencilKind, grid: Grid) -> list:
    """[( (axis, step), weight ), ...] for the raw (un-negated) stencil."""
    ax = _check_axis(kind, grid.dim)
    h = grid.spacings[ax] if kind.axis is not None else None
    if kind.name == "forward":
        return [((ax, 1), 1.0 / h), ((ax, 0), -1.0 / h)]
    if kind.name == "backward":
        return [((ax, 0), 1.0 / h), ((ax, -1), -1.0 / h)]
    if kind.name == "central":
        return [((ax, 1), 0.5 / h), ((ax, -1), -0.5 / h)]
    if kind.name == "second":
        # assembled orientation is -d2
        return [((ax, 1), -1.0 / h**2), ((ax, 0), 2.0 / h**2), ((ax, -1), -1.0 / h**2)]
    if kind.name == "staggered-second":
        c = 1.0 / (4 * h**2)
        return [((ax, 2), -c), ((ax, 0), 2 * c), ((ax, -2), -c)]
    if kind.name == "laplacian":
        out = []
        for i in range(grid.dim):
            hi = grid.spacings[i]
            out += [
                ((i, 1), -1.0 / hi**2),
                ((i, 0), 2.0 / hi**2),
                ((i, -1), -1.0 / hi**2),
            ]
        return out
    if kind.name == "moment":
        out = []
        for i in range(grid.dim):
            c = 1.0 / (4 * grid.spacings[i] ** (2 - kind.p))
            out += [
                ((i, 2), c),
                ((i, 1), -4 * c),
                ((i, 0), 6 * c),
                ((i, -1), -4 * c),
                ((i, -2), c),
            ]
        return out
    raise OperatorError(f"unknown stencil kind {kind.name!r}")


def moment_matrix(grid: Grid, p: float, bc: str) -> SparseOperator:
    """Moment stabilizer from its product form.

    Per axis, (1/4) h_i^{p+2} times the product of -d2 matrices: with the
    first closure both factors are the Dirichlet matrix (symmetric positive
    definite); with the second closure the left factor carries the
    one-sided closure and the axis block alone is singular.
    """
    if not 0.0 <= float(p) <= 1.0:
        raise OperatorError("moment power p must lie in [0, 1]")
    bc = str(bc).lower()
    if bc not in ("bc1", "bc2"):
        raise OperatorError(f"unknown auxiliary closure {bc!r}")
    if bc == "bc2" and min(grid.interior_shape) < 2:
        raise OperatorError("second closure needs at least 2 interior nodes per axis")
    total = None
    for i in range(grid.dim):
        n, h = grid.interior_shape[i], grid.spacings[i]
        T = _block_second(n, h)
        left = T if bc == "bc1" else _block_second_neumann(n, h)
        block = 0.25 * h ** (p + 2) * (left @ T)
        part = _expand(grid, i, block)
        total = part if total is None else total + part
    return SparseOperator(total, (f"moment p={float(p):g}", f"{bc}-product"))
