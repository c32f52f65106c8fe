import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import rollgeom as rg
from rollgeom.state import (RankDeficientError, RollingState, TangentTriple, coords_to_triple,
                            isometry_residual, kernel_projections, polar_factor,
                            random_partial_isometry, triple_to_coords, vertical_basis_matrix,
                            vertical_coords, vertical_residual)

DIMS = [(2, 2), (2, 3), (3, 2), (3, 3), (1, 3), (4, 2)]


@pytest.mark.parametrize("n,nh", DIMS)
def test_dimension_formulas(n, nh):
    N = min(n, nh)
    # ambient nh x n matrices minus the N(N+1)/2 orthonormality constraints
    assert rg.vertical_dim(n, nh) == n * nh - N * (N + 1) // 2
    assert rg.dim_Q(n, nh) == n + nh + rg.vertical_dim(n, nh)
    assert rg.dim_Q(n, nh) == rg.dim_Q(nh, n)


def test_known_dimensions():
    assert rg.dim_Q(2, 2) == 5
    assert rg.dim_Q(3, 2) == 8
    assert rg.dim_Q(2, 3) == 8
    assert rg.dim_Q(3, 3) == 9
    assert rg.vertical_dim(2, 3) == 3


@pytest.mark.parametrize("n,nh", DIMS)
def test_vertical_basis_orthonormal_and_vertical(n, nh, rng):
    A = random_partial_isometry(rng, n, nh)
    basis = vertical_basis_matrix(A)
    assert len(basis) == rg.vertical_dim(n, nh)
    G = np.array([[np.sum(a * b) for b in basis] for a in basis])
    assert np.allclose(G, np.eye(len(basis)), atol=1e-12)
    for B in basis:
        assert vertical_residual(A, B) < 1e-12


@pytest.mark.parametrize("n,nh", DIMS)
def test_vertical_space_is_tangent_to_fiber(n, nh, rng):
    # curves A exp(tS) / exp(tS^) A stay in the fiber; their velocities are vertical
    A = random_partial_isometry(rng, n, nh)
    B = vertical_basis_matrix(A)
    coeffs = rng.normal(size=len(B))
    V = sum(c * b for c, b in zip(coeffs, B)) if B else np.zeros((nh, n))
    eps = 1e-6
    Ap = polar_factor(A + eps * V)
    assert isometry_residual(Ap) < 1e-12
    assert np.allclose((Ap - A) / eps, V, atol=1e-5)
    assert np.allclose(vertical_coords(A, V), coeffs, atol=1e-12)


@pytest.mark.parametrize("n,nh", DIMS)
def test_random_partial_isometry(n, nh, rng):
    for _ in range(5):
        A = random_partial_isometry(rng, n, nh)
        assert A.shape == (nh, n)
        assert isometry_residual(A) < 1e-12
        if n == nh:
            assert np.linalg.det(A) > 0


def test_polar_factor_and_rank():
    A = np.array([[2.0, 0.1], [0.0, 0.5], [0.3, 0.0]])
    P = polar_factor(A)
    assert isometry_residual(P) < 1e-12
    # nearest partial isometry: P^T A is symmetric positive definite
    S = P.T @ A
    assert np.allclose(S, S.T) and np.all(np.linalg.eigvalsh(S) > 0)
    with pytest.raises(RankDeficientError):
        polar_factor(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_make_state_rejects_bad_input():
    M, E = rg.sphere(2), rg.euclidean(2)
    with pytest.raises(ValueError):
        rg.make_state(M, E, [0, 0], [0, 0], np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        rg.make_state(M, E, [0, 0], [0, 0], np.eye(3, 2))
    with pytest.raises(ValueError):
        RollingState(M, E, [0, 0], [0, 0], 1.1 * np.eye(2))
    with pytest.raises(rg.DomainError):
        rg.make_state(M, E, [50.0, 0], [0, 0], np.eye(2))
    q = rg.make_state(M, E, [0.1, 0.2], [0, 0], [[1.0, 0.1], [-0.1, 1.0]])
    assert isometry_residual(q.A) < 1e-12


def test_state_json_roundtrip_and_dual(rng):
    M, Mh = rg.sphere(2), rg.sphere(3)
    q = rg.random_state(M, Mh, rng)
    r = RollingState.from_json(M, Mh, q.to_json())
    assert r.distance(q) == 0.0
    d = rg.transpose_dual(q)
    assert d.M is Mh and d.M_hat is M and np.array_equal(d.A, q.A.T)
    assert rg.transpose_dual(d).distance(q) == 0.0
    with pytest.raises(ValueError):
        RollingState.from_json(Mh, M, q.to_json())


def test_kernel_projections(rng):
    q = rg.random_state(rg.sphere(3), rg.sphere(2), rng)
    Pk, Pc = kernel_projections(q)
    assert np.allclose(Pk + Pc, np.eye(3))
    assert np.allclose(q.A @ Pk, 0, atol=1e-12)
    assert np.isclose(np.trace(Pk), 1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_coords_triple_roundtrip(seed):
    rng = np.random.default_rng(seed)
    M, Mh = rg.sphere(2), rg.hyperbolic(3)
    q = rg.random_state(M, Mh, rng, shrink=0.3)
    B = sum(c * b for c, b in zip(rng.normal(size=3), rg.vertical_basis(q)))
    t = TangentTriple(rng.normal(size=2), rng.normal(size=3), B)
    back = coords_to_triple(q, *triple_to_coords(q, t))
    assert (back - t).max_abs() < 1e-10
    assert np.allclose(t.vec(q)[5:], vertical_coords(q, B))
