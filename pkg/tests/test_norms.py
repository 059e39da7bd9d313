import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from comrom.fem import (
    FeFunction,
    FeSpace2D,
    SpaceMismatchError,
    dual_norm,
    h1_inner,
    h1_norm,
    h1_project,
)
from comrom.meshing import rect_mesh


@pytest.fixture(scope="module")
def space():
    return FeSpace2D(rect_mesh(4, 4, 0, 1, 0, 1))


def test_constant_one_on_unit_area_has_norm_one(space):
    v = np.ones(space.n_dofs)
    assert h1_norm(space, v) == pytest.approx(1.0, rel=1e-13)


def test_linear_field_x_on_unit_square(space):
    v = space.mesh.nodes[:, 0].copy()
    # integral of x^2 + |grad x|^2 over the unit square = 1/3 + 1
    assert h1_norm(space, v) ** 2 == pytest.approx(4.0 / 3.0, rel=1e-13)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_cauchy_schwarz(seed):
    space = FeSpace2D(rect_mesh(2, 2, 0, 1, 0, 1))
    rng = np.random.default_rng(seed)
    v = rng.normal(size=space.n_dofs)
    w = rng.normal(size=space.n_dofs)
    lhs = abs(h1_inner(space, v, w))
    rhs = h1_norm(space, v) * h1_norm(space, w)
    assert lhs <= rhs * (1 + 1e-12)


def test_inner_product_space_mismatch_rejected(space):
    other = FeSpace2D(rect_mesh(4, 4, 0, 1, 0, 1))
    v = FeFunction(space, np.ones(space.n_dofs))
    w = FeFunction(other, np.ones(other.n_dofs))
    with pytest.raises(SpaceMismatchError):
        h1_inner(space, v, w)


def test_projection_of_member_is_identity(space, rng):
    basis = rng.normal(size=(space.n_dofs, 4))
    coef = np.array([0.3, -1.2, 2.0, 0.7])
    v = basis @ coef
    out = h1_project(space, v, basis)
    np.testing.assert_allclose(out, coef, atol=1e-12)


def test_projection_empty_basis_is_zero(space, rng):
    out = h1_project(space, rng.normal(size=space.n_dofs), np.zeros((space.n_dofs, 0)))
    assert out.shape == (0,)


def test_projection_galerkin_orthogonality(space, rng):
    basis = rng.normal(size=(space.n_dofs, 3))
    v = rng.normal(size=space.n_dofs)
    coef = h1_project(space, v, basis)
    resid = v - basis @ coef
    scale = h1_norm(space, v)
    for j in range(3):
        assert abs(h1_inner(space, resid, basis[:, j])) < 1e-10 * scale * h1_norm(
            space, basis[:, j]
        )


def test_projection_matches_sqrt_gram_least_squares(space, rng):
    G = space.h1_gram().toarray()
    G12 = la.sqrtm(G).real
    basis = rng.normal(size=(space.n_dofs, 3))
    v = rng.normal(size=space.n_dofs)
    oracle, *_ = np.linalg.lstsq(G12 @ basis, G12 @ v, rcond=None)
    np.testing.assert_allclose(h1_project(space, v, basis), oracle, atol=1e-9)


def test_projection_rank_deficient_basis_raises(space):
    col = np.ones((space.n_dofs, 1))
    basis = np.hstack([col, 2 * col])
    with pytest.raises(np.linalg.LinAlgError):
        h1_project(space, np.ones(space.n_dofs), basis)


def test_dual_norm_riesz_identity(space, rng):
    w = rng.normal(size=space.n_dofs)
    functional = space.h1_gram() @ w
    assert dual_norm(space, functional) == pytest.approx(h1_norm(space, w), rel=1e-11)


def test_dual_norm_zero_functional(space):
    assert dual_norm(space, np.zeros(space.n_dofs)) == 0.0


def test_dual_norm_matches_dense_oracle_with_constraints(space, rng):
    f = rng.normal(size=space.n_dofs)
    constrained = np.array([0, 5, 17])
    got = dual_norm(space, f, constrained_dofs=constrained)
    mask = np.ones(space.n_dofs, dtype=bool)
    mask[constrained] = False
    G = space.h1_gram().toarray()[np.ix_(mask, mask)]
    z = np.linalg.solve(G, f[mask])
    assert got == pytest.approx(float(np.sqrt(f[mask] @ z)), rel=1e-10)


def test_dual_norm_all_constrained_raises(space):
    with pytest.raises(ValueError, match="no free DoFs"):
        dual_norm(space, np.ones(space.n_dofs), np.arange(space.n_dofs))
