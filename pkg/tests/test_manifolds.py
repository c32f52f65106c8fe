import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import rollgeom as rg
from rollgeom.domain import Domain, DomainError
from rollgeom.manifolds import (Isometry, PathSpec, _stereo_inv, antidevelop, develop,
                                frame_transport, geodesic_path, isometry_frame_matrix,
                                parallel_transport)

CLOSED = [
    rg.sphere(3, 1.0), rg.sphere(2, 2.0), rg.hyperbolic(3, 1.0),
    rg.warped(2, "exponential", [1.0, 0.5]), rg.warped(2, "linear", [1.0, 0.3]),
    rg.product(rg.sphere(2), rg.euclidean(1)), rg.product(rg.hyperbolic(2), rg.sphere(2)),
]


@pytest.mark.parametrize("M", CLOSED, ids=str)
def test_closed_form_matches_finite_differences(M, rng):
    fd = M.as_fd()
    for _ in range(2):
        x = M.domain.sample(rng, 0.2)
        F1, W1 = M.frame_omega(x)
        F2, W2 = fd.frame_omega(x)
        assert np.allclose(F1, F2, atol=1e-12)
        assert np.abs(W1 - W2).max() < 1e-6
        assert np.abs(M.curvature_frame(x) - fd.curvature_frame(x)).max() < 1e-6
        assert np.abs(M.nabla_curvature(x) - fd.nabla_curvature(x)).max() < 1e-5
        assert np.abs(M.nabla2_curvature(x) - fd.nabla2_curvature(x)).max() < 5e-4


@pytest.mark.parametrize("M,K", [(rg.sphere(2, 1.0), 1.0), (rg.sphere(3, 2.0), 0.25),
                                 (rg.hyperbolic(3, 1.0), -1.0), (rg.hyperbolic(2, 2.0), -0.25),
                                 (rg.euclidean(3), 0.0)], ids=str)
def test_constant_sectional_curvature(M, K, rng):
    for _ in range(5):
        x = M.domain.sample(rng, 0.3)
        X, Y = rng.normal(size=(2, M.dim))
        assert rg.sectional(M, x, X, Y) == pytest.approx(K, abs=1e-10)
        assert np.abs(M.nabla_curvature(x)).max() < 1e-10


def test_warped_sectional_curvatures(rng):
    # f = exp(c r): K(d/dr, Y) = -f''/f, K(Y1, Y2) = -(f'/f)^2
    c = 0.7
    M = rg.warped(2, "exponential", [1.0, c])
    x = np.array([1.2, 0.3, -0.4])
    e = np.eye(3)
    assert rg.sectional(M, x, e[0], e[1]) == pytest.approx(-c * c, abs=1e-10)
    assert rg.sectional(M, x, e[1], e[2]) == pytest.approx(-c * c, abs=1e-10)
    # f = a r + b: radial planes flat, fiber planes -(a/f)^2
    a, b = 0.8, 0.2
    L = rg.warped(2, "linear", [a, b])
    f = a * x[0] + b
    assert rg.sectional(L, x, e[0], e[2]) == pytest.approx(0.0, abs=1e-10)
    assert rg.sectional(L, x, e[1], e[2]) == pytest.approx(-(a / f) ** 2, abs=1e-10)


def test_curvature_symmetries_perturbed():
    M = rg.perturbed(3, 0.2, seed=2)
    Rm = M.curvature_frame(np.array([0.2, 0.1, -0.3]))
    assert np.abs(Rm + Rm.transpose(1, 0, 2, 3)).max() < 1e-12
    assert np.abs(Rm + Rm.transpose(0, 1, 3, 2)).max() < 1e-12
    assert np.abs(Rm - Rm.transpose(2, 3, 0, 1)).max() < 1e-6
    bianchi = Rm + Rm.transpose(1, 3, 2, 0) + Rm.transpose(3, 0, 2, 1)
    assert np.abs(bianchi).max() < 1e-6


def _derivation(S, T):
    out = np.einsum("la,ijak->ijlk", S, T) - np.einsum("ijla,ak->ijlk", T, S)
    return out - np.einsum("ai,ajlk->ijlk", S, T) - np.einsum("aj,ialk->ijlk", S, T)


def test_second_derivative_ricci_identity():
    # antisymmetrized second covariant derivative is the curvature acting on R
    M = rg.perturbed(3, 0.2, seed=1)
    x = np.array([0.1, -0.2, 0.15])
    R, D2 = M.curvature_frame(x), M.nabla2_curvature(x)
    for p in range(3):
        for m in range(3):
            lhs = D2[..., p, m] - D2[..., m, p]
            assert np.abs(lhs + _derivation(R[p, m], R)).max() < 2e-5


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3))
def test_frame_is_orthonormal(xs):
    for M in (rg.sphere(3), rg.hyperbolic(3), rg.perturbed(3, 0.2, seed=0)):
        x = 0.5 * np.asarray(xs) if M.kind == "hyperbolic" else np.asarray(xs)
        F, W = M.frame_omega(x)
        assert np.allclose(F.T @ M.metric(x) @ F, np.eye(3), atol=1e-10)
        assert np.abs(W + W.transpose(0, 2, 1)).max() < 1e-8


def test_sphere_geodesic_great_circle_length():
    # angle between embedded endpoints equals arc length / r for t < pi r
    for r in (1.0, 2.0):
        M = rg.sphere(2, r)
        x0, v = np.array([0.3, -0.2]), np.array([0.6, 0.8])
        res = geodesic_path(M, x0, v, 1.3 * r, 1e-3)
        p0, p1 = _stereo_inv(x0, r), _stereo_inv(res.points[-1], r)
        ang = math.acos(np.clip(p0 @ p1 / (r * r), -1, 1))
        assert ang * r == pytest.approx(1.3 * r, abs=1e-9)
        assert np.allclose(np.linalg.norm(res.velocities, axis=1), 1.0, atol=1e-10)


def test_hyperbolic_geodesic_distance():
    r = 1.0
    M = rg.hyperbolic(2, r)
    x0, v, T = np.array([0.1, 0.2]), np.array([1.0, 0.0]), 1.1
    y = rg.geodesic_flow(M, x0, v, T)[0]
    num = 2 * r * r * np.sum((x0 - y) ** 2)
    den = (r * r - x0 @ x0) * (r * r - y @ y)
    assert r * math.acosh(1 + num / den) == pytest.approx(T, abs=1e-9)


def test_transport_around_latitude_circle():
    # rotation angle of parallel transport = enclosed cap area 2 pi (1 - cos theta)
    M = rg.sphere(2, 1.0)
    theta = 2 * math.pi / 3
    rho = math.sin(theta) / (1 - math.cos(theta))
    path = PathSpec.from_function(
        lambda t: (rho * np.array([math.cos(t), math.sin(t)]),
                   rho * np.array([-math.sin(t), math.cos(t)])), 2 * math.pi, 2)
    v1 = parallel_transport(M, path, [1.0, 0.0], step=1e-3)
    area = 2 * math.pi * (1 - math.cos(theta))
    assert np.linalg.norm(v1) == pytest.approx(1.0, abs=1e-10)
    assert v1[0] == pytest.approx(math.cos(area), abs=1e-8)


def test_transport_is_orthogonal():
    M = rg.perturbed(3, 0.2, seed=3)
    path = PathSpec.from_function(lambda t: (np.array([0.3 * math.sin(t), 0.2 * t, -0.1]),
                                             np.array([0.3 * math.cos(t), 0.2, 0.0])), 2.0, 3)
    P = frame_transport(M, path, step=1e-2).transports[-1]
    assert np.allclose(P.T @ P, np.eye(3), atol=1e-8)


def test_develop_antidevelop_roundtrip():
    M = rg.sphere(2, 1.0)
    c = PathSpec.from_function(lambda t: (0.5 * np.array([math.sin(t), 1 - math.cos(t)]),
                                          0.5 * np.array([math.cos(t), math.sin(t)])), 2.0, 2)
    y0 = np.array([0.2, -0.1])
    gamma = antidevelop(M, y0, c, step=1e-3)
    ts, dev = develop(M, gamma, step=1e-3)
    ref = np.array([c(t)[0] for t in ts])
    assert np.abs(dev - ref).max() < 1e-6


def test_development_of_geodesic_is_ray():
    M = rg.hyperbolic(2, 1.0)
    x0, v = np.array([0.1, 0.0]), np.array([0.6, -0.8])
    g = geodesic_path(M, x0, v, 1.0, 1e-3)
    path = PathSpec.from_samples(g.times, g.points,
                                 [M.frame(p) @ u for p, u in zip(g.points, g.velocities)])
    ts, dev = develop(M, path, 1e-3)
    assert np.abs(dev - np.outer(ts, v)).max() < 1e-8


@pytest.mark.parametrize("M,iso", [
    (rg.sphere(2, 1.0), Isometry.sphere_rotation(
        np.array([[0.6, 0, -0.8], [0, 1, 0], [0.8, 0, 0.6]]))),
    (rg.sphere(2, 2.0), Isometry.sphere_rotation(
        np.array([[0, -1.0, 0], [1.0, 0, 0], [0, 0, 1.0]]), 2.0)),
    (rg.hyperbolic(2, 1.0), Isometry.ball_rotation(np.array([[0.0, -1.0], [1.0, 0.0]]))),
    (rg.euclidean(2), Isometry.rigid(np.array([[0.0, -1.0], [1.0, 0.0]]), [1.0, 2.0])),
], ids=["sphere", "sphere_r2", "ball", "plane"])
def test_isometries_preserve_metric(M, iso, rng):
    for _ in range(3):
        x = M.domain.sample(rng, 0.05)
        J = iso.jacobian(x)
        assert np.allclose(J.T @ M.metric(iso.apply(x)) @ J, M.metric(x), atol=1e-10)
        O = isometry_frame_matrix(M, iso, x)
        assert np.allclose(O.T @ O, np.eye(M.dim), atol=1e-10)
        assert np.allclose(iso.inverse().apply(iso.apply(x)), x, atol=1e-12)


def test_domain_errors():
    M = rg.sphere(2, 1.0)
    with pytest.raises(DomainError):
        M.check_point([20.0, 0.0])
    with pytest.raises(ValueError):
        rg.hyperbolic(2, 1.0, Domain.ball([0.0, 0.0], 1.5))
    with pytest.raises(DomainError):
        geodesic_path(rg.hyperbolic(2, 1.0), [0.0, 0.0], [1.0, 0.0], 10.0)
    with pytest.raises(ValueError):
        rg.sectional(M, [0.0, 0.0], [1.0, 0.0], [2.0, 0.0])


def test_json_roundtrip():
    from rollgeom.manifolds import from_json
    for M in CLOSED + [rg.perturbed(3, 0.2, seed=4)]:
        N = from_json(M.to_json())
        x = M.domain.sample(np.random.default_rng(0), 0.2)
        assert N.dim == M.dim and np.allclose(N.metric(x), M.metric(x))
