"""Scheme residuals, ghost closures, and system assembly."""

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from momentfd.grid import DRectangle, GridFunction, build_grid
from momentfd.problems import (
    HJProblem,
    LinearProblem,
    SmoothField,
    get_example,
    manufactured_forcing,
)
from momentfd.schemes import (
    BC,
    Family,
    SchemeConfig,
    SchemeError,
    _apply_operator,
    assemble_linear_system,
    ghost_fill,
    residual,
    scheme_from_name,
)


def grid1(J, lo=0.0, hi=1.0):
    return build_grid(DRectangle((lo,), (hi,)), (J,))


def grid2(J1, J2):
    return build_grid(DRectangle((0.0, 0.0), (1.0, 1.0)), (J1, J2))


def affine_problem(dim, coeffs, eps=0.02, c0=0.5):
    """Linear problem whose exact solution is an affine function."""
    a0, grads = coeffs[0], coeffs[1:]
    if dim == 1:
        field = SmoothField(
            value=lambda x: a0 + grads[0] * x,
            grad=(lambda x: grads[0] + 0 * x,),
            hess_diag=(lambda x: 0 * x,),
        )
        prob = LinearProblem(
            epsilon=eps,
            b=lambda x: (2.0 + 0 * x,),
            c=lambda x: c0 + 0 * x,
            f=None,
            g=field.value,
            exact=field.value,
        )
    else:
        field = SmoothField(
            value=lambda x, y: a0 + grads[0] * x + grads[1] * y,
            grad=(
                lambda x, y: grads[0] + 0 * x,
                lambda x, y: grads[1] + 0 * x,
            ),
            hess_diag=(lambda x, y: 0 * x, lambda x, y: 0 * x),
        )
        prob = LinearProblem(
            epsilon=eps,
            b=lambda x, y: (2.0 + 0 * x, -1.0 + 0 * y),
            c=lambda x, y: c0 + 0 * x,
            f=None,
            g=field.value,
            exact=field.value,
        )
    import dataclasses

    return dataclasses.replace(prob, f=manufactured_forcing(prob, field)), field


class TestGhostFill:
    def test_bc1_reflects_through_boundary(self):
        g = grid1(3)
        u = GridFunction(g, np.array([1.0, 2.0, 4.0]))
        filled = ghost_fill(u, "bc1")
        assert filled.get((0,)) == pytest.approx(2 * 1.0 - 2.0)
        assert filled.get((4,)) == pytest.approx(2 * 4.0 - 2.0)

    def test_bc2_continues_a_parabola(self):
        # u = x^2 satisfies the matched-second-difference closure exactly
        g = grid1(5)
        u = GridFunction.sample(g, lambda x: x**2)
        filled = ghost_fill(u, BC.BC2)
        h = g.spacings[0]
        assert filled.get((0,)) == pytest.approx((-h) ** 2)
        assert filled.get((6,)) == pytest.approx((1 + h) ** 2)

    def test_bc2_needs_four_nodes(self):
        g = grid1(3)
        u = GridFunction.zeros(g)
        with pytest.raises(SchemeError):
            ghost_fill(u, "bc2")

    def test_idempotent(self):
        g = grid2(5, 6)
        rng = np.random.default_rng(3)
        u = GridFunction(g, rng.standard_normal(g.n_nodes))
        once = ghost_fill(u, "bc1")
        twice = ghost_fill(once, "bc1")
        np.testing.assert_allclose(once.values, twice.values)

    def test_2d_face_values(self):
        g = grid2(4, 4)
        u = GridFunction.sample(g, lambda x, y: x + 2 * y)
        filled = ghost_fill(u, "bc1")
        h = g.spacings[0]
        # linear data extends linearly through every face
        assert filled.get((0, 2)) == pytest.approx(-h + 2 * h)
        assert filled.get((5, 3)) == pytest.approx((1 + h) + 2 * 2 * h)


class TestConfig:
    def test_name_round_trip(self):
        for name in ("moment-bc1", "moment-bc2", "lax-friedrichs", "upwind", "central"):
            assert scheme_from_name(name).name == name

    def test_unknown_name(self):
        with pytest.raises(SchemeError, match="unknown scheme"):
            scheme_from_name("petrov-galerkin")

    def test_weights(self):
        cfg = scheme_from_name("moment-bc1", sigma=9.0, gamma=1.0, p=1.0)
        assert cfg.eps_h(0.1) == pytest.approx(9.0 * 0.01)
        assert cfg.gamma_h(0.1) == pytest.approx(0.1)

    def test_invariants(self):
        with pytest.raises(SchemeError):
            SchemeConfig(Family.LAX_FRIEDRICHS, sigma=1.0, r=2.0)
        with pytest.raises(SchemeError):
            SchemeConfig(Family.LAX_FRIEDRICHS, sigma=1.0, r=1.0, gamma=1.0)
        with pytest.raises(SchemeError):
            SchemeConfig(Family.PURE_CENTRAL, sigma=1.0)
        with pytest.raises(SchemeError):
            SchemeConfig(Family.UPWIND, gamma=1.0)
        with pytest.raises(SchemeError):
            SchemeConfig(Family.UPWIND, sigma=1.0)
        with pytest.raises(SchemeError):
            SchemeConfig(Family.MOMENT_CENTRAL, p=1.5)
        with pytest.raises(SchemeError):
            SchemeConfig(Family.MOMENT_CENTRAL, gamma=-1.0)


class TestResidual:
    @settings(max_examples=25, deadline=None)
    @given(
        a0=st.floats(-2, 2),
        a1=st.floats(-3, 3),
        p=st.sampled_from([0.0, 0.5, 1.0]),
    )
    def test_affine_exactness_1d(self, a0, a1, p):
        prob, field = affine_problem(1, (a0, a1))
        g = grid1(9)
        cfg = scheme_from_name("moment-bc1", sigma=1.0, p=p)
        u = GridFunction.sample(g, field.value)
        r = residual(prob, cfg, u)
        assert np.max(np.abs(r.values)) < 1e-12 * (1 + abs(a0) + abs(a1))

    def test_quadratic_exactness_bc2(self):
        # with sigma = 0 every term of the scheme is exact on x^2:
        # the plain second difference, the central gradient, and the
        # second-closure moment term
        field = SmoothField(
            value=lambda x: x**2,
            grad=(lambda x: 2 * x,),
            hess_diag=(lambda x: 2.0 + 0 * x,),
        )
        prob = LinearProblem(
            epsilon=0.01,
            b=lambda x: (1.0 + 0 * x,),
            c=lambda x: 1.0 + 0 * x,
            f=None,
            g=field.value,
        )
        import dataclasses

        prob = dataclasses.replace(prob, f=manufactured_forcing(prob, field))
        g = grid1(9)
        cfg = SchemeConfig(Family.MOMENT_CENTRAL, sigma=0.0, gamma=1.0, p=0.0, bc=BC.BC2)
        r = residual(prob, cfg, GridFunction.sample(g, field.value))
        assert np.max(np.abs(r.values)) < 1e-12

    def test_affine_exactness_2d(self):
        prob, field = affine_problem(2, (1.0, 2.0, -0.5))
        g = grid2(6, 7)
        for name in ("moment-bc1", "moment-bc2"):
            cfg = scheme_from_name(name, sigma=1.0)
            r = residual(prob, cfg, GridFunction.sample(g, field.value))
            assert np.max(np.abs(r.values)) < 1e-12, name

    def test_boundary_rows_are_data_mismatch(self):
        prob = get_example("1d-ex1")
        g = grid1(7)
        u = GridFunction.zeros(g)
        r = residual(prob, scheme_from_name("upwind"), u)
        gb = prob.g(np.array([0.0, 1.0]))
        assert r.get((1,)) == pytest.approx(-gb[0])
        assert r.get((7,)) == pytest.approx(-gb[1])

    def test_upwind_rejects_hamiltonians(self):
        prob = get_example("1d-ex4")
        g = grid1(7, lo=-1.0)
        with pytest.raises(SchemeError):
            residual(prob, scheme_from_name("upwind"), GridFunction.zeros(g))

    def test_hj_boundary_and_interior_rows(self):
        prob = get_example("1d-ex4")
        g = grid1(5, lo=-1.0)
        u = GridFunction.sample(g, lambda x: 0.0 * x)
        r = residual(prob, scheme_from_name("central"), u)
        # boundary rows: 0 - g; interior rows: |0| - 1
        assert r.get((1,)) == pytest.approx(-prob.g(np.array([-1.0]))[0])
        assert r.get((3,)) == pytest.approx(-1.0)

    def test_eps_total_override(self):
        prob = get_example("1d-ex1")
        g = grid1(9)
        rng = np.random.default_rng(7)
        u = GridFunction(g, rng.standard_normal(g.n_nodes))
        cfg = scheme_from_name("moment-bc1", sigma=9.0)
        base = _apply_operator(prob, cfg, u, eps_total=prob.epsilon + 9.0 * g.h_max**2)
        plain = _apply_operator(prob, cfg, u)
        np.testing.assert_allclose(base, plain, rtol=1e-13)


class TestLaxFriedrichsUpwind:
    def test_nodewise_beta_reproduces_upwind(self):
        # beta_i = |b_i| / 2 turns the central-plus-viscosity form into the
        # sign-switched one-sided difference identically, node by node
        prob = get_example("1d-ex2", epsilon=0.0)
        g = grid1(13)
        rng = np.random.default_rng(11)
        u = GridFunction(g, rng.standard_normal(g.n_nodes))
        r_up = residual(prob, scheme_from_name("upwind"), u)
        r_lf = residual(prob, scheme_from_name("lax-friedrichs"), u)
        np.testing.assert_allclose(r_lf.values, r_up.values, atol=1e-13)

    def test_matrices_agree_too(self):
        prob = get_example("1d-ex2", epsilon=0.0)
        g = grid1(13)
        A_up, rhs_up = assemble_linear_system(prob, scheme_from_name("upwind"), g)
        A_lf, rhs_lf = assemble_linear_system(prob, scheme_from_name("lax-friedrichs"), g)
        np.testing.assert_allclose(A_up.toarray(), A_lf.toarray(), atol=1e-13)
        np.testing.assert_allclose(rhs_up, rhs_lf, atol=1e-13)

    def test_constant_beta_override(self):
        prob = get_example("1d-ex1")
        g = grid1(9)
        cfg = scheme_from_name("lax-friedrichs", lf_beta=(3.0,))
        A, _ = assemble_linear_system(prob, cfg, g)
        h = g.spacings[0]
        dense = A.toarray()
        # diagonal carries eps + beta h times 2 / h^2
        assert dense[2, 2] == pytest.approx(2 * (prob.epsilon + 3.0 * h) / h**2)


class TestSystemAssembly:
    CASES = [
        ("1d-ex1", (9,), "moment-bc1", dict(sigma=9.0, p=0.0)),
        ("1d-ex1", (9,), "moment-bc1", dict(sigma=9.0, p=1.0)),
        ("1d-ex2", (9,), "moment-bc2", dict(sigma=9.0)),
        ("1d-ex1", (9,), "lax-friedrichs", dict(sigma=1.0)),
        ("1d-ex2", (9,), "lax-friedrichs", dict()),
        ("1d-ex1", (9,), "upwind", dict()),
        ("1d-ex1", (9,), "central", dict()),
        ("2d-ex1", (6, 7), "moment-bc1", dict(sigma=1.0, gamma=4.0, p=1.0)),
        ("2d-ex1", (6, 7), "moment-bc2", dict(sigma=1.0, gamma=4.0)),
        ("2d-ex1", (6, 7), "upwind", dict()),
        ("2d-ex1", (6, 7), "lax-friedrichs", dict()),
    ]

    @pytest.mark.parametrize("example,nodes,scheme,kw", CASES)
    def test_matrix_matches_residual(self, example, nodes, scheme, kw):
        # A x - rhs must equal the interior residual of the grid function
        # that carries x inside and g on the boundary
        prob = get_example(example)
        dim = len(nodes)
        g = build_grid(DRectangle((0.0,) * dim, (1.0,) * dim), nodes)
        cfg = scheme_from_name(scheme, **kw)
        A, rhs = assemble_linear_system(prob, cfg, g)
        rng = np.random.default_rng(42)
        x = rng.standard_normal(g.n_interior)

        u = GridFunction.sample(g, prob.g)
        block = u.node_block().copy()
        inner = tuple(slice(1, -1) for _ in range(dim))
        block[inner] = x.reshape(g.interior_shape, order="F")
        u = GridFunction(g, np.ravel(block, order="F"))

        r = residual(prob, cfg, u)
        r_int = np.ravel(r.node_block()[inner], order="F")
        np.testing.assert_allclose(A.matrix @ x - rhs, r_int, atol=1e-10)

    def test_solution_has_zero_residual(self):
        prob = get_example("1d-ex1")
        g = grid1(13)
        cfg = scheme_from_name("moment-bc1", sigma=9.0)
        A, rhs = assemble_linear_system(prob, cfg, g)
        x = spla.spsolve(A.matrix.tocsc(), rhs)
        u = GridFunction.sample(g, prob.g)
        block = u.node_block().copy()
        block[1:-1] = x
        r = residual(prob, cfg, GridFunction(g, block))
        assert np.max(np.abs(r.values)) < 1e-10

    def test_affine_solve_is_exact(self):
        prob, field = affine_problem(2, (0.3, 1.5, -2.0))
        g = grid2(7, 6)
        for name, kw in [
            ("moment-bc1", dict(sigma=1.0, p=1.0)),
            ("moment-bc2", dict(sigma=2.0)),
            ("upwind", {}),
            ("lax-friedrichs", {}),
        ]:
            cfg = scheme_from_name(name, **kw)
            A, rhs = assemble_linear_system(prob, cfg, g)
            x = spla.spsolve(A.matrix.tocsc(), rhs)
            exact = np.ravel(
                field.value(*g.meshes(interior=True)), order="F"
            )
            np.testing.assert_allclose(x, exact, atol=1e-11, err_msg=name)

    def test_monotone_sign_pattern(self):
        # upwind and Lax-Friedrichs matrices: positive diagonal,
        # nonpositive off-diagonal
        prob = get_example("1d-ex2")
        g = grid1(11)
        for name in ("upwind", "lax-friedrichs"):
            A, _ = assemble_linear_system(prob, scheme_from_name(name), g)
            dense = A.toarray()
            assert np.all(np.diag(dense) > 0), name
            off = dense - np.diag(np.diag(dense))
            assert np.all(off <= 1e-14), name

    def test_rejects_hj_problems(self):
        prob = get_example("1d-ex4")
        g = grid1(7, lo=-1.0)
        with pytest.raises(SchemeError):
            assemble_linear_system(prob, scheme_from_name("central"), g)
