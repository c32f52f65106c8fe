import math

import numpy as np
import pytest
from scipy.linalg import logm

import rollgeom as rg
from rollgeom.controllability import (HolonomyAlgebra, loop_generator, ns_fiber_tangent_dim,
                                      rol_scan)
from rollgeom.manifolds import Isometry, PathSpec, frame_transport
from rollgeom.state import RollingState, random_partial_isometry


def so_basis(n, k=None, offset=0):
    """Standard basis of so(k) acting on coordinates offset..offset+k-1 of R^n."""
    k = n if k is None else k
    out = []
    for i in range(k):
        for j in range(i + 1, k):
            E = np.zeros((n, n))
            E[offset + i, offset + j], E[offset + j, offset + i] = -1 / math.sqrt(2), 1 / math.sqrt(2)
            out.append(E)
    return out


@pytest.mark.parametrize("M,dim", [
    (rg.euclidean(3), 0), (rg.sphere(2), 1), (rg.sphere(3), 3), (rg.hyperbolic(3), 3),
    (rg.product(rg.sphere(2), rg.euclidean(1)), 1), (rg.product(rg.sphere(2), rg.sphere(2)), 2),
    (rg.perturbed(3, 0.2, seed=0), 3),
], ids=str)
def test_holonomy_dimensions(M, dim):
    alg = rg.holonomy_algebra(M, M.domain.center(), n_samples=40, seed=1)
    assert alg.dim == dim
    assert alg.closure_defect() < 1e-8
    for B in alg.basis:
        assert np.allclose(B, -B.T)


def test_product_holonomy_is_block_diagonal():
    M = rg.product(rg.sphere(2), rg.hyperbolic(2), rg.euclidean(1))
    alg = rg.holonomy_algebra(M, M.domain.center(), n_samples=30, seed=0)
    assert alg.dim == 2
    for B in alg.basis:
        assert np.abs(B[:2, 2:]).max() < 1e-10 and np.abs(B[2:4, 4]).max() < 1e-10
        assert np.abs(B[4]).max() < 1e-10


def test_holonomy_sampling_is_prefix_stable():
    M = rg.perturbed(3, 0.2, seed=5)
    x = M.domain.center()
    small = rg.holonomy_algebra(M, x, 10, seed=3)
    large = rg.holonomy_algebra(M, x, 20, seed=3)
    assert small.dim <= large.dim
    for B in small.basis:
        assert large.residual(B) < 1e-8


@pytest.mark.parametrize("M", [rg.sphere(3), rg.product(rg.sphere(2), rg.sphere(2)),
                               rg.product(rg.sphere(2), rg.euclidean(1))], ids=str)
def test_small_loop_generators_lie_in_algebra(M, rng):
    x = M.domain.sample(rng, 0.05)
    alg = rg.holonomy_algebra(M, x, n_samples=30, seed=0)
    for _ in range(2):
        d1, d2 = rng.normal(size=(2, M.dim))
        L = loop_generator(M, x, d1, d2, eps=1e-2)
        if np.linalg.norm(L) > 1e-6:
            assert alg.residual(L) < 3e-2 * np.linalg.norm(L)
    # the curvature operator itself is recovered to first order in eps
    Rm = M.curvature_frame(x)
    L = loop_generator(M, x, np.eye(M.dim)[0], np.eye(M.dim)[1], eps=1e-2)
    assert np.abs(np.abs(L) - np.abs(Rm[0, 1])).max() < 5e-2 * max(1.0, np.abs(Rm[0, 1]).max())


def test_large_loop_holonomy_lies_in_algebra():
    # a non-planar loop in S2 x R: its transport lies in the one-dimensional holonomy group
    M = rg.product(rg.sphere(2), rg.euclidean(1))
    x = np.zeros(3)
    path = PathSpec.from_function(
        lambda t: (np.array([0.8 * math.sin(t), 0.5 * (1 - math.cos(t)), 0.3 * math.sin(2 * t)]),
                   np.array([0.8 * math.cos(t), 0.5 * math.sin(t), 0.6 * math.cos(2 * t)])),
        2 * math.pi, 3)
    P = frame_transport(M, path, step=1e-3).transports[-1]
    L = np.real(logm(P))
    alg = rg.holonomy_algebra(M, x, 30, seed=0)
    assert np.linalg.norm(L) > 0.1
    assert alg.residual(L) < 1e-8


def _span_rank(A, hs, hhs):
    vecs = [(Kh @ A).ravel() for Kh in hhs] + [(A @ K).ravel() for K in hs]
    return int(np.linalg.matrix_rank(np.array(vecs), tol=1e-9)) if vecs else 0


@pytest.mark.parametrize("n,nh,hk,hhk", [(2, 3, 0, 0), (2, 3, 2, 3), (2, 3, 2, 0), (2, 3, 0, 2),
                                         (3, 2, 3, 2), (3, 2, 2, 0), (2, 2, 2, 2), (3, 3, 2, 2)])
def test_fiber_span_matches_matrix_oracle(n, nh, hk, hhk, rng):
    M, Mh = rg.euclidean(n), rg.euclidean(nh)
    h = HolonomyAlgebra(np.zeros(n), so_basis(n, hk), [], 0)
    hh = HolonomyAlgebra(np.zeros(nh), so_basis(nh, hhk), [], 0)
    for _ in range(3):
        A = random_partial_isometry(rng, n, nh)
        q = RollingState(M, Mh, np.zeros(n), np.zeros(nh), A)
        assert ns_fiber_tangent_dim(q, h, hh) == _span_rank(A, h.basis, hh.basis)


def test_ns_verdicts():
    flat = rg.ns_controllable(rg.euclidean(2), rg.euclidean(3), n_samples=30)
    assert flat.verdict is False and flat.fiber_dim == 0
    curved = rg.ns_controllable(rg.sphere(2), rg.sphere(3), n_samples=30)
    assert curved.verdict is True and curved.fiber_dim == rg.vertical_dim(2, 3) == 3
    assert curved.probe_all_full
    equal = rg.ns_controllable(rg.sphere(2), rg.sphere(2), n_samples=30)
    assert equal.verdict is True and equal.fiber_dim == 1
    half = rg.ns_controllable(rg.sphere(2), rg.euclidean(3), n_samples=30)
    assert half.verdict is False and half.fiber_dim == 1


def test_ns_verdict_needs_simple_connectedness():
    T = rg.custom_metric(lambda x: np.eye(2), 2, simply_connected=False, label="flat torus")
    v = rg.ns_controllable(T, rg.sphere(2), n_samples=10)
    assert v.verdict is None and "probe" in v.note


@pytest.fixture(scope="module")
def larc_cases():
    out = {}
    rng = np.random.default_rng(8)
    for key, M, Mh in (("S2/E2", rg.sphere(2), rg.euclidean(2)),
                       ("S2/S2", rg.sphere(2), rg.sphere(2)),
                       ("E2/S3", rg.euclidean(2), rg.sphere(3)),
                       ("P3/S2", rg.perturbed(3, 0.2, seed=0), rg.sphere(2))):
        q = rg.random_state(M, Mh, rng, shrink=0.3)
        out[key] = (q, rg.larc(M, Mh, q, depth=4, seed=1))
    return out


def test_larc_verdicts(larc_cases):
    r = larc_cases["S2/E2"][1]
    assert r.rank_per_depth == [2, 3, 5, 5] and r.verdict == "full_rank" and r.early_stop
    assert larc_cases["S2/S2"][1].rank_per_depth == [2, 2, 2, 2]
    r = larc_cases["E2/S3"][1]
    assert r.verdict == "rank_deficient" and r.rank < 8
    r = larc_cases["P3/S2"][1]
    assert r.rank == 8 == r.dim_Q and r.verdict == "full_rank"
    for _, rep in larc_cases.values():
        assert rep.audit["checked"] >= 1 and rep.audit["failed"] == 0
        assert len(rep.rank_per_depth) == 4


def test_larc_basis_is_tangent(larc_cases):
    q, r = larc_cases["S2/E2"]
    assert len(r.basis) == r.rank
    for t in r.basis:
        assert rg.state.vertical_residual(q.A, t.B) < 1e-10


def test_larc_invariant_under_isometries(larc_cases):
    q, r = larc_cases["S2/E2"]
    c, s = math.cos(0.9), math.sin(0.9)
    F = Isometry.sphere_rotation(np.array([[1, 0, 0], [0, c, -s], [0, s, c]]))
    Fh = Isometry.rigid(np.array([[c, -s], [s, c]]), [1.0, 2.0])
    q2 = rg.act_isometry(q, F, Fh)
    r2 = rg.larc(q.M, q.M_hat, q2, depth=4, seed=1)
    assert r2.rank_per_depth == r.rank_per_depth


def test_larc_of_transposed_problem(rng):
    M, Mh = rg.sphere(2, 1.0), rg.sphere(2, 2.0)
    q = rg.random_state(M, Mh, rng, shrink=0.3)
    a = rg.larc(M, Mh, q, depth=3)
    b = rg.larc(Mh, M, rg.transpose_dual(q), depth=3)
    assert a.rank_per_depth == b.rank_per_depth == [2, 3, 5]


def test_larc_rejects_bad_depth(larc_cases):
    q, _ = larc_cases["S2/E2"]
    with pytest.raises(ValueError):
        rg.larc(q.M, q.M_hat, q, depth=5)


def test_rol_scan_and_involutivity():
    S, E = rg.sphere(2), rg.euclidean(2)
    assert rg.involutivity_check(S, rg.sphere(2), n_states=20)
    assert not rg.involutivity_check(S, E, n_states=20)
    st = rol_scan(S, rg.sphere(2, 2.0), n_states=10, seed=3)
    assert st["min"] == pytest.approx(0.75 * math.sqrt(2), abs=1e-10)
    # S2 inside S3 with equal curvature: Rol vanishes, but not for the transposed problem
    assert rg.involutivity_check(S, rg.sphere(3), n_states=20, dual=False)
    assert not rg.involutivity_check(S, rg.sphere(3), n_states=20, dual=True)
    assert rol_scan(S, rg.sphere(3), 5, dual=True)["n"] == 2


def test_rol_scan_is_seeded():
    a = rol_scan(rg.perturbed(3, 0.2, seed=0), rg.sphere(2), 5, seed=4)
    b = rol_scan(rg.perturbed(3, 0.2, seed=0), rg.sphere(2), 5, seed=4)
    assert a == b


def test_totally_geodesic_obstruction():
    r = rg.totally_geodesic_obstruction(rg.euclidean(2), rg.sphere(3))
    assert r["verdict"] == "not_controllable" and 2 in r["submanifold_dims"]
    r = rg.totally_geodesic_obstruction(rg.euclidean(2), rg.perturbed(3, 0.2, seed=0))
    assert r["verdict"] == "inconclusive"
    with pytest.raises(ValueError):
        rg.totally_geodesic_obstruction(rg.sphere(3), rg.sphere(2))


def test_codim_report(larc_cases):
    c = rg.codim_report(larc_cases["E2/S3"][1])
    assert c["dim_Q"] == 8 and c["codim"] == 8 - c["rank"] and c["bound"] == 2
    c = rg.codim_report(larc_cases["S2/E2"][1])
    assert c["codim"] == 0 and c["within_bound"]
