import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momentfd.grid import DRectangle, GridFunction, build_grid, interior_indices
from momentfd.operators import (
    DIRICHLET_ROWS,
    NEUMANN_ROWS,
    OperatorError,
    StencilDomainError,
    StencilKind,
    apply_stencil,
    assemble,
    moment_matrix,
)


def grid1(J=7, a=0.0, b=1.0):
    return build_grid(DRectangle((a,), (b,)), (J,))


def grid2(J1=5, J2=5):
    return build_grid(DRectangle((0.0, 0.0), (1.0, 1.0)), (J1, J2))


def dense_second(n, h):
    T = np.zeros((n, n))
    for k in range(n):
        T[k, k] = 2.0
        if k > 0:
            T[k, k - 1] = -1.0
        if k < n - 1:
            T[k, k + 1] = -1.0
    return T / h**2


def fill_ghosts_1d(u, bc):
    """Manual closure fill so operator tests do not depend on the scheme module."""
    g = u.grid
    J = g.nodes_per_dim[0]
    vals = np.concatenate([u.values[:J], [0.0, 0.0]])
    w = GridFunction(g, vals)
    if bc == "bc1":
        w.set((0,), 2 * w.get((1,)) - w.get((2,)))
        w.set((J + 1,), 2 * w.get((J,)) - w.get((J - 1,)))
    else:
        w.set((0,), 3 * w.get((1,)) - 3 * w.get((2,)) + w.get((3,)))
        w.set((J + 1,), 3 * w.get((J,)) - 3 * w.get((J - 1,)) + w.get((J - 2,)))
    return w


class TestApplyStencil:
    def test_central_exact_on_quadratic(self):
        g = grid1(3)  # h = 0.5, middle node at x = 0.5
        u = GridFunction.sample(g, lambda x: x**2)
        assert apply_stencil(StencilKind.central(1), u, (2,)) == pytest.approx(1.0)

    def test_moment_kills_linear(self):
        g = grid1(7)
        u = GridFunction.sample(g, lambda x: 3 * x - 2)
        assert apply_stencil(StencilKind.moment(0.0), u, (4,)) == pytest.approx(0.0, abs=1e-13)

    def test_moment_on_quartic(self):
        g = grid1(5)  # h = 0.25
        u = GridFunction.sample(g, lambda x: x**4)
        got = apply_stencil(StencilKind.moment(0.0), u, (3,))
        # oracle: raw 5-point evaluation of (1,-4,6,-4,1)/(4h^2) on the samples
        h = g.spacings[0]
        xs = np.array([g.coordinate((k,))[0] for k in range(1, 6)])
        s = xs**4
        oracle = (s[0] - 4 * s[1] + 6 * s[2] - 4 * s[3] + s[4]) / (4 * h**2)
        assert got == pytest.approx(oracle, rel=1e-14)
        assert got == pytest.approx(6 * h**2, rel=1e-12)

    def test_second_and_staggered(self):
        g = grid1(9)
        u = GridFunction.sample(g, lambda x: x**2)
        assert apply_stencil(StencilKind.second(1), u, (4,)) == pytest.approx(2.0)
        assert apply_stencil(StencilKind.staggered_second(1), u, (4,)) == pytest.approx(2.0)

    def test_laplacian_2d(self):
        g = grid2(5, 5)
        u = GridFunction.sample(g, lambda x, y: x**2 + y**2)
        assert apply_stencil(StencilKind.laplacian(), u, (3, 3)) == pytest.approx(4.0)

    def test_missing_neighbor_raises_with_index(self):
        g = grid1(7)
        u = GridFunction.sample(g, lambda x: x)
        with pytest.raises(StencilDomainError, match=r"\(0,\)"):
            apply_stencil(StencilKind.moment(0.0), u, (2,))

    def test_axis_validation(self):
        with pytest.raises(OperatorError):
            StencilKind("central")
        with pytest.raises(OperatorError):
            StencilKind.moment(1.5)
        g = grid1(5)
        u = GridFunction.zeros(g)
        with pytest.raises(OperatorError):
            apply_stencil(StencilKind.central(2), u, (3,))


class TestAssemble:
    def test_second_dirichlet_tridiagonal(self):
        g = grid1(5)
        A = assemble(StencilKind.second(1), g, DIRICHLET_ROWS)
        h = g.spacings[0]
        assert np.allclose(A.toarray(), dense_second(3, h))

    def test_central_antisymmetric(self):
        g = grid1(6)
        A = assemble(StencilKind.central(1), g, DIRICHLET_ROWS).toarray()
        assert np.array_equal(A, -A.T)
        h = g.spacings[0]
        assert A[0, 1] == pytest.approx(1 / (2 * h))

    def test_second_neumann_closure_rows(self):
        g = grid1(6)
        h = g.spacings[0]
        N = assemble(StencilKind.second(1), g, NEUMANN_ROWS).toarray()
        assert N[0, 0] == pytest.approx(1 / h**2)
        assert N[0, 1] == pytest.approx(-1 / h**2)
        assert N[-1, -1] == pytest.approx(1 / h**2)
        # interior rows untouched
        assert N[1, 1] == pytest.approx(2 / h**2)

    def test_neumann_restricted_to_second(self):
        g = grid1(6)
        with pytest.raises(OperatorError):
            assemble(StencilKind.central(1), g, NEUMANN_ROWS)

    def test_laplacian_2d_is_kron_sum(self):
        g = grid2(5, 6)
        L = assemble(StencilKind.laplacian(), g, DIRICHLET_ROWS).toarray()
        n1, n2 = g.interior_shape
        T1 = dense_second(n1, g.spacings[0])
        T2 = dense_second(n2, g.spacings[1])
        expect = np.kron(np.eye(n2), T1) + np.kron(T2, np.eye(n1))
        assert np.allclose(L, expect, atol=1e-14)

    def test_unrestricted_rows_fit_only(self):
        g = grid1(5)
        A = assemble(StencilKind.central(1), g, None).toarray()
        assert A.shape == (5, 5)
        assert np.all(A[0] == 0) and np.all(A[-1] == 0)
        h = g.spacings[0]
        assert A[2, 3] == pytest.approx(1 / (2 * h))

    def test_m_matrix_property_dense(self):
        # -d2 Dirichlet: positive diagonal, nonpositive off-diagonal, inverse >= 0
        for J in (5, 7, 9):
            g = grid1(J)
            A = assemble(StencilKind.second(1), g, DIRICHLET_ROWS).toarray()
            assert np.all(np.diag(A) > 0)
            off = A - np.diag(np.diag(A))
            assert np.all(off <= 0)
            assert np.all(np.linalg.inv(A) >= -1e-13)


class TestMomentMatrix:
    @pytest.mark.parametrize("p", [0.0, 0.5, 1.0])
    def test_bc1_product_identity_1d(self, p):
        g = grid1(6)
        h = g.spacings[0]
        T = dense_second(4, h)
        oracle = 0.25 * h ** (p + 2) * (T @ T)
        via_product = moment_matrix(g, p, "bc1").toarray()
        via_stencil = assemble(StencilKind.moment(p), g, DIRICHLET_ROWS).toarray()
        assert np.allclose(via_product, oracle, rtol=1e-13, atol=1e-13)
        assert np.allclose(via_stencil, oracle, rtol=1e-13, atol=1e-13)

    def test_bc1_product_identity_2d(self):
        g = grid2(5, 6)
        got = moment_matrix(g, 0.0, "bc1").toarray()
        n1, n2 = g.interior_shape
        h1, h2 = g.spacings
        T1, T2 = dense_second(n1, h1), dense_second(n2, h2)
        expect = 0.25 * (
            h1**2 * np.kron(np.eye(n2), T1 @ T1) + h2**2 * np.kron(T2 @ T2, np.eye(n1))
        )
        assert np.allclose(got, expect, atol=1e-12)
        stencil_route = assemble(StencilKind.moment(0.0), g, DIRICHLET_ROWS).toarray()
        assert np.allclose(stencil_route, expect, atol=1e-12)

    def test_bc2_product_identity_1d(self):
        g = grid1(7)
        h = g.spacings[0]
        n = 5
        T = dense_second(n, h)
        N = T.copy()
        N[0, 0] = N[-1, -1] = 1 / h**2
        oracle = 0.25 * h**2 * (N @ T)
        assert np.allclose(moment_matrix(g, 0.0, "bc2").toarray(), oracle, atol=1e-13)

    def test_bc1_spd(self):
        g = grid1(8)
        M = moment_matrix(g, 0.0, "bc1").toarray()
        assert np.allclose(M, M.T, atol=1e-14)
        assert np.linalg.eigvalsh(M).min() > 0

    def test_bc2_singular_alone(self):
        g = grid1(8)
        M = moment_matrix(g, 0.0, "bc2").toarray()
        assert not np.allclose(M, M.T, atol=1e-14)
        n = M.shape[0]
        assert np.linalg.matrix_rank(M) < n

    def test_annihilates_linears_bc1(self):
        g = grid1(9)
        u = fill_ghosts_1d(GridFunction.sample(g, lambda x: 2.5 * x - 0.75), "bc1")
        for idx in interior_indices(g):
            assert apply_stencil(StencilKind.moment(0.0), u, idx) == pytest.approx(0.0, abs=1e-12)

    def test_annihilates_quadratics_bc2(self):
        g = grid1(9)
        u = fill_ghosts_1d(GridFunction.sample(g, lambda x: x**2 - 0.3 * x + 1), "bc2")
        for idx in interior_indices(g):
            assert apply_stencil(StencilKind.moment(1.0), u, idx) == pytest.approx(0.0, abs=1e-11)

    def test_bc2_needs_two_interior(self):
        with pytest.raises(OperatorError):
            moment_matrix(grid1(3), 0.0, "bc2")


class TestMatrixFreeAgreement:
    @given(
        seed=st.integers(0, 10_000),
        J=st.integers(5, 10),
        kind_ix=st.integers(0, 3),
    )
    @settings(max_examples=40, deadline=None)
    def test_pointwise_matches_assembled_1d(self, seed, J, kind_ix):
        rng = np.random.default_rng(seed)
        g = grid1(J)
        kinds = [
            (StencilKind.second(1), -1.0),
            (StencilKind.central(1), 1.0),
            (StencilKind.forward(1), 1.0),
            (StencilKind.backward(1), 1.0),
        ]
        kind, sign = kinds[kind_ix]
        A = assemble(kind, g, DIRICHLET_ROWS)
        # zero boundary so the eliminated columns contribute nothing
        u = GridFunction.zeros(g)
        inner = rng.standard_normal(J - 2)
        u.values[1:-1] = inner
        got = A @ inner
        ref = np.array([apply_stencil(kind, u, idx) for idx in interior_indices(g)])
        assert np.allclose(got, sign * ref, rtol=1e-13, atol=1e-13)

    @given(seed=st.integers(0, 10_000), p=st.sampled_from([0.0, 1.0]))
    @settings(max_examples=20, deadline=None)
    def test_moment_matches_assembled(self, seed, p):
        rng = np.random.default_rng(seed)
        g = grid1(9)
        u = GridFunction.zeros(g)
        u.values[1:-1] = rng.standard_normal(7)
        uf = fill_ghosts_1d(u, "bc1")
        A = assemble(StencilKind.moment(p), g, DIRICHLET_ROWS)
        got = A @ u.values[1:-1]
        ref = np.array(
            [apply_stencil(StencilKind.moment(p), uf, idx) for idx in interior_indices(g)]
        )
        assert np.allclose(got, ref, rtol=1e-12, atol=1e-13)


class TestSparseOperator:
    def test_entries_sorted_unique(self):
        g = grid1(6)
        A = assemble(StencilKind.second(1), g, DIRICHLET_ROWS)
        ent = A.entries()
        assert ent == sorted(ent, key=lambda t: (t[0], t[1]))
        assert len({(r, c) for r, c, _ in ent}) == len(ent)

    def test_dump_round_trips(self, tmp_path):
        g = grid1(7)
        A = assemble(StencilKind.central(1), g, DIRICHLET_ROWS)
        path = tmp_path / "op.txt"
        A.dump(path)
        seen = {}
        for line in path.read_text().splitlines():
            r, c, v = line.split()
            seen[(int(r), int(c))] = float(v)
        assert seen == {(r, c): v for r, c, v in A.entries()}

    def test_provenance(self):
        g = grid1(5)
        A = assemble(StencilKind.second(1), g, NEUMANN_ROWS)
        assert A.provenance == ("second x1", "neumann-rows")
