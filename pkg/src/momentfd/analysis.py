"""Error norms, observed orders, matrix diagnostics, root-regime classifier.

Error norms run over interior nodes only; the weighted l2 norm carries the
factor prod_i h_i^(1/2) so it behaves like a discrete L2 norm under
refinement.  The regime classifier studies the cubic

    eta(x) = b x^3 + (2h - 4a - 3b) x^2 + (4a + 3b + 2h) x - b

with a = sigma h^2 + eps and b = gamma h^p, whose roots are the
characteristic roots of the stabilized constant-convection recurrence.
eta(1) = 4h identically, so all roots approach the unit circle as the mesh
is refined; what distinguishes the regimes is the sign pattern of the
other two roots (or their leaving the real axis).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, GridFunction
from .operators import SparseOperator

__all__ = [
    "ErrorRecord",
    "RegimeKind",
    "RootRegime",
    "characteristic_regime",
    "error_records",
    "error_records_csv",
    "eta_coefficients",
    "linf_error",
    "matrix_diagnostics",
    "observed_orders",
    "weighted_l2_error",
]

_DENSE_LIMIT = 2500


def _interior_difference(u: GridFunction, exact, grid: Grid) -> np.ndarray:
    vals = u.interior_block()
    target = np.broadcast_to(
        np.asarray(exact(*grid.meshes(interior=True)), dtype=float),
        grid.interior_shape,
    )
    return vals - target


def weighted_l2_error(u: GridFunction, exact, grid: Grid) -> float:
    """(prod h_i^(1/2)) * Euclidean norm of the interior error."""
    diff = _interior_difference(u, exact, grid)
    weight = float(np.prod([np.sqrt(h) for h in grid.spacings]))
    return weight * float(np.linalg.norm(diff.ravel()))


def linf_error(u: GridFunction, exact, grid: Grid) -> float:
    diff = _interior_difference(u, exact, grid)
    return float(np.max(np.abs(diff)))


def observed_orders(records) -> list:
    """log(e_prev/e)/log(h_prev/h) per transition; None where undefined."""
    out: list = [None]
    pairs = list(records)
    for (h0, e0), (h1, e1) in zip(pairs, pairs[1:]):
        if h1 >= h0:
            raise ValueError("mesh sizes must decrease strictly")
        if e0 <= 0 or e1 <= 0:
            out.append(None)
        else:
            out.append(float(np.log(e0 / e1) / np.log(h0 / h1)))
    return out


@dataclass(frozen=True)
class ErrorRecord:
    h: float
    l2_weighted: float
    linf: float
    order_l2: Optional[float] = None
    order_linf: Optional[float] = None


def error_records(hs, l2s, linfs) -> list:
    """Bundle parallel sweep results, attaching observed orders."""
    if not len(hs) == len(l2s) == len(linfs):
        raise ValueError("sweep columns must have equal length")
    o2 = observed_orders(list(zip(hs, l2s)))
    oi = observed_orders(list(zip(hs, linfs)))
    return [
        ErrorRecord(float(h), float(a), float(b), p, q)
        for h, a, b, p, q in zip(hs, l2s, linfs, o2, oi)
    ]


def error_records_csv(records, precise: bool = False) -> str:
    """Serialize a sweep to `h,l2,l2_order,linf,linf_order` CSV text."""
    enum = "%.17g" if precise else "%.2e"
    fnum = "%.17g" if precise else "%.2f"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["h", "l2", "l2_order", "linf", "linf_order"])
    for rec in records:
        writer.writerow(
            [
                enum % rec.h,
                enum % rec.l2_weighted,
                "" if rec.order_l2 is None else fnum % rec.order_l2,
                enum % rec.linf,
                "" if rec.order_linf is None else fnum % rec.order_linf,
            ]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# matrix diagnostics

def matrix_diagnostics(A) -> dict:
    """Structure flags and spectral extremes of an assembled operator.

    Dense checks up to 2500 rows; beyond that the extremes come from
    iterative solvers and the result carries estimated=True.  min_eig and
    max_eig are eigenvalues for symmetric input, singular values otherwise.
    """
    M = A.matrix if isinstance(A, SparseOperator) else sp.csr_matrix(A)
    n = M.shape[0]
    if M.shape[0] != M.shape[1]:
        raise ValueError("diagnostics expect a square matrix")
    scale = float(np.max(np.abs(M.data))) if M.nnz else 0.0
    tol = 1e-12 * max(1.0, scale)

    if n <= _DENSE_LIMIT:
        D = M.toarray()
        sym = bool(np.all(np.abs(D - D.T) <= tol))
        antisym = bool(np.all(np.abs(D + D.T) <= tol))
        if sym:
            eigs = np.linalg.eigvalsh(D)
            min_eig, max_eig = float(eigs[0]), float(eigs[-1])
        else:
            svals = np.linalg.svd(D, compute_uv=False)
            min_eig, max_eig = float(svals[-1]), float(svals[0])
        rank = int(np.linalg.matrix_rank(D))
        diag = np.diag(D)
        off = D - np.diag(diag)
        z_pattern = bool(np.all(diag > 0) and np.all(off <= tol))
        m_matrix = False
        if z_pattern and rank == n:
            inv = np.linalg.inv(D)
            m_matrix = bool(np.all(inv >= -tol))
        return {
            "symmetric": sym,
            "antisymmetric": antisym,
            "m_matrix": m_matrix,
            "min_eig": min_eig,
            "max_eig": max_eig,
            "rank_deficiency": n - rank,
            "estimated": False,
        }

    diff = (M - M.T).tocsr()
    diff.eliminate_zeros()
    sym = diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= tol
    sumM = (M + M.T).tocsr()
    sumM.eliminate_zeros()
    antisym = sumM.nnz == 0 or float(np.max(np.abs(sumM.data))) <= tol
    if sym:
        min_eig = float(spla.eigsh(M, k=1, which="SA", return_eigenvectors=False)[0])
        max_eig = float(spla.eigsh(M, k=1, which="LA", return_eigenvectors=False)[0])
        smallest = abs(min_eig)
    else:
        max_eig = float(spla.svds(M, k=1, which="LM", return_singular_vectors=False)[0])
        min_eig = float(
            spla.svds(M, k=1, which="SM", return_singular_vectors=False, maxiter=5000)[0]
        )
        smallest = min_eig
    diag = M.diagonal()
    off_max = float(
        np.max((M - sp.diags(diag)).tocsr().data, initial=-np.inf)
    )
    z_pattern = bool(np.all(diag > 0) and off_max <= tol)
    return {
        "symmetric": sym,
        "antisymmetric": antisym,
        "m_matrix": bool(z_pattern and smallest > tol),
        "min_eig": min_eig,
        "max_eig": max_eig,
        "rank_deficiency": 1 if smallest <= tol else 0,
        "estimated": True,
    }


# ---------------------------------------------------------------------------
# characteristic-root regimes

class RegimeKind(Enum):
    TWO_NEGATIVE = "two-negative"
    COMPLEX_PAIR = "complex-pair"
    TWO_POSITIVE = "two-positive"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class RootRegime:
    """Roots of eta and their classification.

    ``regime`` is decided by the cubic discriminant (exact); ``by_ratio``
    is the asymptotic ratio heuristic with thresholds at -4 and 0.  The two
    agree away from the threshold neighborhoods.
    """

    ratio: float
    roots: tuple
    regime: RegimeKind
    by_ratio: RegimeKind


def eta_coefficients(sigma: float, eps: float, gamma: float, p: float, h: float):
    """Descending coefficients of eta; their sum is 4h identically."""
    a = sigma * h**2 + eps
    b = gamma * h**p
    return np.array([b, 2 * h - 4 * a - 3 * b, 4 * a + 3 * b + 2 * h, -b])


def _ratio_regime(ratio: float, degenerate: bool) -> RegimeKind:
    if degenerate:
        return RegimeKind.DEGENERATE
    if ratio <= -4.0:
        return RegimeKind.TWO_NEGATIVE
    if ratio < 0.0:
        return RegimeKind.COMPLEX_PAIR
    return RegimeKind.TWO_POSITIVE


def characteristic_regime(
    sigma: float, eps: float, gamma: float, p: float, h: float
) -> RootRegime:
    """Classify the recurrence roots of the 1D stabilized scheme (b = 1)."""
    if h <= 0:
        raise ValueError("h must be positive")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    c3, c2, c1, c0 = eta_coefficients(sigma, eps, gamma, p, h)
    a = sigma * h**2 + eps
    b = gamma * h**p

    if b == 0.0:
        num = 4 * a - 2 * h
        ratio = np.inf if num > 0 else (-np.inf if num < 0 else np.nan)
        quad_roots = np.roots([c2, c1, c0]) if c2 != 0 else np.roots([c1, c0])
        roots = tuple(complex(r) for r in quad_roots) + (complex(np.nan, np.nan),) * (
            3 - len(quad_roots)
        )
        return RootRegime(ratio, roots, RegimeKind.DEGENERATE, RegimeKind.DEGENERATE)

    ratio = float((4 * a - 2 * h) / b)
    roots = np.roots([c3, c2, c1, c0])
    disc = float(
        18 * c3 * c2 * c1 * c0
        - 4 * c2**3 * c0
        + c2**2 * c1**2
        - 4 * c3 * c1**3
        - 27 * c3**2 * c0**2
    )
    if disc < 0:
        regime = RegimeKind.COMPLEX_PAIR
        # order: real root first, then the conjugate pair
        roots = tuple(sorted((complex(r) for r in roots), key=lambda z: abs(z.imag)))
    else:
        real = np.real(roots)
        # root product is +1, so the real spectrum has 0 or 2 negative roots
        negatives = int(np.sum(real < 0))
        regime = (
            RegimeKind.TWO_NEGATIVE if negatives >= 2 else RegimeKind.TWO_POSITIVE
        )
        roots = tuple(complex(r) for r in np.sort_complex(roots))
    return RootRegime(ratio, roots, regime, _ratio_regime(ratio, False))
