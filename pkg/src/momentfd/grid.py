"""Uniform tensor-product grids on d-rectangles (d = 1 or 2).

Nodes are addressed by 1-based multi-indices alpha with coordinates
``a_i + (alpha_i - 1) * h_i``.  Grid functions are stored flat in
lexicographic order with the first index fastest; ghost values (one layer
outside each face, needed by the staggered second difference) are appended
after the real nodes, ordered by (dimension, side, in-face position).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "DRectangle",
    "Grid",
    "GridError",
    "GridFunction",
    "MultiIndex",
    "NodeClass",
    "NodeKind",
    "build_grid",
    "classify_node",
    "enumerate_ghosts",
]

MultiIndex = tuple  # d integers, 1-based; 0 or J_i+1 marks a ghost layer


class GridError(ValueError):
    """Invalid grid construction or node addressing."""


@dataclass(frozen=True)
class DRectangle:
    """Axis-aligned product domain (a_1,b_1) x ... x (a_d,b_d)."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(a) for a in self.lower)
        hi = tuple(float(b) for b in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if not 1 <= len(lo) <= 2 or len(lo) != len(hi):
            raise GridError(f"only d in {{1, 2}} supported, got lower={lo}, upper={hi}")
        if any(b <= a for a, b in zip(lo, hi)):
            raise GridError(f"need upper > lower per dimension, got {lo} / {hi}")

    @property
    def dim(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class Grid:
    """Uniform grid; spacings h_i = (b_i - a_i)/(J_i - 1)."""

    domain: DRectangle
    nodes_per_dim: tuple
    spacings: tuple
    h_max: float
    h_min: float

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def shape(self) -> tuple:
        return self.nodes_per_dim

    @property
    def n_nodes(self) -> int:
        n = 1
        for j in self.nodes_per_dim:
            n *= j
        return n

    @property
    def n_interior(self) -> int:
        n = 1
        for j in self.nodes_per_dim:
            n *= j - 2
        return n

    @property
    def interior_shape(self) -> tuple:
        return tuple(j - 2 for j in self.nodes_per_dim)

    @property
    def n_ghosts(self) -> int:
        # 2 * sum_i prod_{j != i} J_j  (one full face layer per side)
        total = 0
        for i in range(self.dim):
            face = 1
            for j, J in enumerate(self.nodes_per_dim):
                if j != i:
                    face *= J
            total += 2 * face
        return total

    def coordinate(self, idx: MultiIndex) -> tuple:
        """Coordinates of a node or ghost; always a_i + (alpha_i - 1) h_i."""
        return tuple(
            a + (k - 1) * h
            for a, k, h in zip(self.domain.lower, idx, self.spacings)
        )

    def index_of(self, point: Sequence) -> MultiIndex:
        """Inverse of coordinate() for points on (or one layer off) the grid."""
        idx = tuple(
            int(round((x - a) / h)) + 1
            for x, a, h in zip(point, self.domain.lower, self.spacings)
        )
        for k, J in zip(idx, self.nodes_per_dim):
            if not 0 <= k <= J + 1:
                raise GridError(f"point {tuple(point)} is not on the extended grid")
        return idx

    def axis_coords(self, i: int, interior: bool = False) -> np.ndarray:
        """1D coordinate array along dimension i (0-based axis argument)."""
        a = self.domain.lower[i]
        h = self.spacings[i]
        J = self.nodes_per_dim[i]
        ks = np.arange(2, J) if interior else np.arange(1, J + 1)
        return a + (ks - 1) * h

    def meshes(self, interior: bool = False) -> tuple:
        """Coordinate arrays shaped like the (interior) node block."""
        axes = [self.axis_coords(i, interior) for i in range(self.dim)]
        if self.dim == 1:
            return (axes[0],)
        return tuple(np.meshgrid(*axes, indexing="ij"))


def build_grid(domain: DRectangle, nodes_per_dim) -> Grid:
    """Construct a uniform grid with J_i nodes per dimension (J_i >= 3)."""
    J = tuple(int(j) for j in nodes_per_dim)
    if len(J) != domain.dim:
        raise GridError(f"nodes_per_dim {J} does not match domain dimension {domain.dim}")
    if any(j < 3 for j in J):
        raise GridError(f"need at least 3 nodes per dimension, got {J}")
    spacings = tuple(
        (b - a) / (j - 1) for a, b, j in zip(domain.lower, domain.upper, J)
    )
    return Grid(
        domain=domain,
        nodes_per_dim=J,
        spacings=spacings,
        h_max=max(spacings),
        h_min=min(spacings),
    )


class NodeKind(Enum):
    DEEP_INTERIOR = "deep-interior"
    NEAR_BOUNDARY_INTERIOR = "near-boundary-interior"
    BOUNDARY = "boundary"
    GHOST = "ghost"


@dataclass(frozen=True)
class NodeClass:
    """Classification of a multi-index; s_flags only meaningful for BOUNDARY.

    s_flags[i] is set when the node passes the membership test for the face
    set normal to dimension i: it lies on the boundary and one of its +-e_i
    neighbors is an interior node.  Rectangle corners carry no flag.
    """

    kind: NodeKind
    s_flags: tuple = ()


def classify_node(grid: Grid, idx: MultiIndex) -> NodeClass:
    """Classify a node as deep interior, near-boundary interior, boundary, or ghost."""
    idx = tuple(int(k) for k in idx)
    if len(idx) != grid.dim:
        raise GridError(f"index {idx} does not match grid dimension {grid.dim}")
    for k, J in zip(idx, grid.nodes_per_dim):
        if not 0 <= k <= J + 1:
            raise GridError(f"index {idx} is more than one step outside the grid")
    J = grid.nodes_per_dim
    if any(k < 1 or k > Ji for k, Ji in zip(idx, J)):
        return NodeClass(NodeKind.GHOST)
    on_face = [k == 1 or k == Ji for k, Ji in zip(idx, J)]
    if any(on_face):
        flags = []
        for i in range(grid.dim):
            others_interior = all(
                1 < idx[j] < J[j] for j in range(grid.dim) if j != i
            )
            flags.append(on_face[i] and others_interior)
        return NodeClass(NodeKind.BOUNDARY, tuple(flags))
    # interior: deep iff no +-e_i neighbor touches the boundary
    deep = all(3 <= k <= Ji - 2 for k, Ji in zip(idx, J))
    return NodeClass(NodeKind.DEEP_INTERIOR if deep else NodeKind.NEAR_BOUNDARY_INTERIOR)


def enumerate_ghosts(grid: Grid) -> list:
    """Ghost multi-indices in storage order: (dimension, side, in-face lexicographic)."""
    out = []
    J = grid.nodes_per_dim
    if grid.dim == 1:
        return [(0,), (J[0] + 1,)]
    for i in range(2):
        for side_val in (0, J[i] + 1):
            other = 1 - i
            for k in range(1, J[other] + 1):
                g = [0, 0]
                g[i] = side_val
                g[other] = k
                out.append(tuple(g))
    return out


def _flat_index(grid: Grid, idx: MultiIndex) -> int:
    # lexicographic, first index fastest
    flat = 0
    stride = 1
    for k, J in zip(idx, grid.nodes_per_dim):
        flat += (k - 1) * stride
        stride *= J
    return flat


def _ghost_offset(grid: Grid, idx: MultiIndex) -> int:
    """Position of a face ghost within the appended ghost segment."""
    J = grid.nodes_per_dim
    if grid.dim == 1:
        return 0 if idx[0] == 0 else 1
    off = 0
    for i in range(2):
        other = 1 - i
        for side_val in (0, J[i] + 1):
            if idx[i] == side_val and 1 <= idx[other] <= J[other]:
                return off + idx[other] - 1
            off += J[other]
    raise GridError(f"index {idx} is not an enumerated face ghost")


class GridFunction:
    """Real-valued grid function; optionally carries a ghost segment."""

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        n, ng = grid.n_nodes, grid.n_ghosts
        if values.shape not in ((n,), (n + ng,)):
            raise GridError(
                f"values length {values.shape} matches neither {n} nodes "
                f"nor {n}+{ng} with ghosts"
            )
        self.grid = grid
        self.values = values

    @property
    def has_ghosts(self) -> bool:
        return self.values.size == self.grid.n_nodes + self.grid.n_ghosts

    @classmethod
    def zeros(cls, grid: Grid, with_ghosts: bool = False) -> "GridFunction":
        n = grid.n_nodes + (grid.n_ghosts if with_ghosts else 0)
        return cls(grid, np.zeros(n))

    @classmethod
    def sample(cls, grid: Grid, fn: Callable) -> "GridFunction":
        """Evaluate a vectorized callable fn(x[, y]) on all real nodes."""
        vals = np.asarray(fn(*grid.meshes()), dtype=float)
        vals = np.broadcast_to(vals, grid.shape)
        return cls(grid, np.ravel(vals, order="F").copy())

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def get(self, idx: MultiIndex) -> float:
        cls = classify_node(self.grid, idx)
        if cls.kind is NodeKind.GHOST:
            if not self.has_ghosts:
                raise GridError(f"value at ghost {tuple(idx)} requested but no ghosts stored")
            return float(self.values[self.grid.n_nodes + _ghost_offset(self.grid, idx)])
        return float(self.values[_flat_index(self.grid, idx)])

    def set(self, idx: MultiIndex, value: float) -> None:
        cls = classify_node(self.grid, idx)
        if cls.kind is NodeKind.GHOST:
            if not self.has_ghosts:
                raise GridError(f"cannot set ghost {tuple(idx)}: no ghost segment")
            self.values[self.grid.n_nodes + _ghost_offset(self.grid, idx)] = value
        else:
            self.values[_flat_index(self.grid, idx)] = value

    def node_block(self) -> np.ndarray:
        """Real-node values as a (J_1[, J_2]) array (first index = dimension 1)."""
        return self.values[: self.grid.n_nodes].reshape(self.grid.shape, order="F")

    def interior_block(self) -> np.ndarray:
        block = self.node_block()
        sl = tuple(slice(1, -1) for _ in range(self.grid.dim))
        return block[sl]

    def interior_vector(self) -> np.ndarray:
        """Interior values flattened in interior lexicographic order."""
        return np.ravel(self.interior_block(), order="F")

    def to_padded(self) -> np.ndarray:
        """(J_1+2[, J_2+2]) array: real nodes inside, ghost ring outside.

        Missing ghosts (and the never-read 2D corners) are NaN so that an
        accidental read poisons the result instead of passing silently.
        """
        g = self.grid
        P = np.full(tuple(J + 2 for J in g.nodes_per_dim), np.nan)
        inner = tuple(slice(1, -1) for _ in range(g.dim))
        P[inner] = self.node_block()
        if self.has_ghosts:
            gh = self.values[g.n_nodes:]
            J = g.nodes_per_dim
            if g.dim == 1:
                P[0], P[-1] = gh[0], gh[1]
            else:
                J1, J2 = J
                P[0, 1:-1] = gh[0:J2]
                P[-1, 1:-1] = gh[J2:2 * J2]
                P[1:-1, 0] = gh[2 * J2:2 * J2 + J1]
                P[1:-1, -1] = gh[2 * J2 + J1:]
        return P

    @classmethod
    def from_padded(cls, grid: Grid, P: np.ndarray) -> "GridFunction":
        """Inverse of to_padded(); always produces a ghost-bearing function."""
        inner = tuple(slice(1, -1) for _ in range(grid.dim))
        vals = np.empty(grid.n_nodes + grid.n_ghosts)
        vals[: grid.n_nodes] = np.ravel(P[inner], order="F")
        if grid.dim == 1:
            vals[grid.n_nodes:] = (P[0], P[-1])
        else:
            J1, J2 = grid.nodes_per_dim
            gh = np.concatenate([P[0, 1:-1], P[-1, 1:-1], P[1:-1, 0], P[1:-1, -1]])
            vals[grid.n_nodes:] = gh
        return cls(grid, vals)

    def drop_ghosts(self) -> "GridFunction":
        return GridFunction(self.grid, self.values[: self.grid.n_nodes].copy())


def interior_indices(grid: Grid) -> Iterator:
    """Interior multi-indices in storage order (first index fastest)."""
    J = grid.nodes_per_dim
    if grid.dim == 1:
        for k in range(2, J[0]):
            yield (k,)
    else:
        for k2 in range(2, J[1]):
            for k1 in range(2, J[0]):
                yield (k1, k2)


def all_indices(grid: Grid) -> Iterator:
    """All real-node multi-indices in storage order."""
    J = grid.nodes_per_dim
    if grid.dim == 1:
        for k in range(1, J[0] + 1):
            yield (k,)
    else:
        for k2 in range(1, J[1] + 1):
            for k1 in range(1, J[0] + 1):
                yield (k1, k2)
