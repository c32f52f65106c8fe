"""Rolling curvature, bracket formulas and a flow-commutator oracle.

Vector fields on M enter the bracket formulas through an extension
convention around the base point x:

``parallel``   covariantly constant at x (nabla X = 0 at x);
``frame``      constant components in the orthonormal frame;
``coordinate`` constant components in the chart basis.

The brackets keep every ``nabla_Z X`` term, so all three conventions give
exact values for the corresponding fields; ``parallel`` makes those terms
vanish at x.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DomainError
from .manifolds import ManifoldSpec
from .state import RollingState, TangentTriple, coords_to_triple

EXTENSIONS = ("parallel", "frame", "coordinate")


class PointGeometry:
    """Lazily evaluated geometry of one manifold at one point."""

    def __init__(self, M: ManifoldSpec, x):
        self.M = M
        self.x = np.asarray(x, dtype=float)
        self._c = {}

    def _get(self, key, fn):
        if key not in self._c:
            self._c[key] = fn()
        return self._c[key]

    @property
    def F(self):
        return self._fw[0]

    @property
    def W(self):
        return self._fw[1]

    @property
    def _fw(self):
        return self._get("fw", lambda: self.M.frame_omega(self.x))

    @property
    def Rm(self):
        return self._get("Rm", lambda: self.M.curvature_frame(self.x))

    @property
    def DR(self):
        return self._get("DR", lambda: self.M.nabla_curvature(self.x))

    @property
    def D2R(self):
        return self._get("D2R", lambda: self.M.nabla2_curvature(self.x))

    @property
    def Gam(self):
        return self._get("Gam", lambda: self.M.christoffel_coords(self.x))

    def omega(self, u):
        return np.einsum("m,mli->li", u, self.W)

    def R(self, X, Y):
        return np.einsum("ijlk,i,j->lk", self.Rm, X, Y)

    def dR(self, X, Y, Z):
        return np.einsum("ijlkm,i,j,m->lk", self.DR, X, Y, Z)

    def d2R(self, X, Y, Z1, Z2):
        return np.einsum("ijlkpm,i,j,p,m->lk", self.D2R, X, Y, Z1, Z2)

    def nabla_ext(self, ext: str, Z, X):
        """Frame components of nabla_Z X~ at the base point."""
        if ext == "parallel":
            return np.zeros_like(np.asarray(X, dtype=float))
        if ext == "frame":
            return self.omega(Z) @ X
        if ext == "coordinate":
            F = self.F
            return np.linalg.solve(F, np.einsum("kij,i,j->k", self.Gam, F @ Z, F @ X))
        raise ValueError(f"unknown extension convention {ext!r}")


class StateGeometry:
    """Geometry at both base points of a state, with the frame matrix A."""

    def __init__(self, M, M_hat, x, x_hat, A, cache: dict | None = None):
        self.A = np.asarray(A, dtype=float)
        self.g = _cached(cache, M, x)
        self.gh = _cached(cache, M_hat, x_hat)

    @staticmethod
    def of(q: RollingState, cache: dict | None = None) -> "StateGeometry":
        return StateGeometry(q.M, q.M_hat, q.x, q.x_hat, q.A, cache)

    def rol(self, X, Y):
        A = self.A
        return A @ self.g.R(X, Y) - self.gh.R(A @ X, A @ Y) @ A

    def rol_cov1(self, X, Y, Z):
        A = self.A
        return A @ self.g.dR(X, Y, Z) - self.gh.dR(A @ X, A @ Y, A @ Z) @ A

    def rol_cov2(self, X, Y, Z1, Z2):
        A = self.A
        return A @ self.g.d2R(X, Y, Z1, Z2) - self.gh.d2R(A @ X, A @ Y, A @ Z1, A @ Z2) @ A


def _cached(cache, M, x):
    if cache is None:
        return PointGeometry(M, x)
    key = (id(M), np.asarray(x, dtype=float).tobytes())
    if key not in cache:
        cache[key] = PointGeometry(M, x)
    return cache[key]


# ---------------------------------------------------------------------------
# rolling curvature


@dataclass(frozen=True, eq=False)
class RolValue:
    B: np.ndarray
    q: RollingState
    X: np.ndarray
    Y: np.ndarray


def rol(q: RollingState, X, Y) -> RolValue:
    """Rol_q(X, Y) = A R(X, Y) - R^(AX, AY) A."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return RolValue(StateGeometry.of(q).rol(X, Y), q, X, Y)


def rol_cov(q: RollingState, X, Y, *Z) -> np.ndarray:
    """k-th covariant derivative of Rol with k = len(Z) in {0, 1, 2}."""
    sg = StateGeometry.of(q)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Z = [np.asarray(z, dtype=float) for z in Z]
    if len(Z) == 0:
        return sg.rol(X, Y)
    if len(Z) == 1:
        return sg.rol_cov1(X, Y, Z[0])
    if len(Z) == 2:
        return sg.rol_cov2(X, Y, Z[0], Z[1])
    raise ValueError("rol_cov supports k in {0, 1, 2}")


def rol_norm(q: RollingState) -> float:
    """sqrt(sum_{i<j} |Rol(E_i, E_j)|_F^2)."""
    sg = StateGeometry.of(q)
    n = q.n
    I = np.eye(n)
    tot = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            tot += float(np.sum(sg.rol(I[i], I[j]) ** 2))
    return tot ** 0.5


# ---------------------------------------------------------------------------
# bracket formulas


def _check_ext(ext):
    if ext not in EXTENSIONS:
        raise ValueError(f"unknown extension convention {ext!r}")


def lr_bracket(q: RollingState, X, Y, ext: str = "parallel", cache=None) -> TangentTriple:
    """[L_R(X), L_R(Y)] = L_R([X, Y]) + nu(Rol(X, Y)) at q."""
    _check_ext(ext)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    sg = StateGeometry.of(q, cache)
    w = sg.g.nabla_ext(ext, X, Y) - sg.g.nabla_ext(ext, Y, X)
    return TangentTriple(w, q.A @ w, sg.rol(X, Y))


def lr_nu_bracket(q: RollingState, Z, X, Y, ext: str = "parallel", cache=None) -> TangentTriple:
    """[L_R(Z), nu(Rol(X, Y))] at q.

    Base part: no-spin lift of (0, -Rol(X, Y) Z). Vertical part: the
    derivative of Rol along L_R(Z), including the nabla_Z X, nabla_Z Y terms.
    """
    _check_ext(ext)
    X, Y, Z = (np.asarray(v, dtype=float) for v in (X, Y, Z))
    sg = StateGeometry.of(q, cache)
    g = sg.g
    B = sg.rol_cov1(X, Y, Z) + sg.rol(g.nabla_ext(ext, Z, X), Y) + sg.rol(X, g.nabla_ext(ext, Z, Y))
    return TangentTriple(np.zeros(q.n), -sg.rol(X, Y) @ Z, B)


def _comm(P, Q):
    return P @ Q - Q @ P


def nu_nu_bracket(q: RollingState, X, Y, Z, W, cache=None) -> TangentTriple:
    """[nu(Rol(X, Y)), nu(Rol(Z, W))] at q (purely vertical)."""
    X, Y, Z, W = (np.asarray(v, dtype=float) for v in (X, Y, Z, W))
    sg = StateGeometry.of(q, cache)
    A, g, gh = q.A, sg.g, sg.gh
    rXY = sg.rol(X, Y)
    rZW = sg.rol(Z, W)
    B = (A @ _comm(g.R(X, Y), g.R(Z, W))
         - _comm(gh.R(A @ X, A @ Y), gh.R(A @ Z, A @ W)) @ A
         - gh.R(rXY @ Z, A @ W) @ A
         - gh.R(A @ Z, rXY @ W) @ A
         + gh.R(A @ X, rZW @ Y) @ A
         + gh.R(rZW @ X, A @ Y) @ A)
    return TangentTriple(np.zeros(q.n), np.zeros(q.n_hat), B)


# ---------------------------------------------------------------------------
# vector fields on Q for the flow oracle


class QField:
    """A vector field on Q evaluated in frame form at raw state data."""

    label = "field"

    def triple(self, sg: StateGeometry, x, xh, A):  # pragma: no cover - interface
        raise NotImplementedError

    def coords(self, M, M_hat, s):
        n, nh = M.dim, M_hat.dim
        x, xh = s[:n], s[n:n + nh]
        A = s[n + nh:].reshape(nh, n)
        sg = StateGeometry(M, M_hat, x, xh, A)
        u, uh, B = self.triple(sg, x, xh, A)
        F, F_h = sg.g.F, sg.gh.F
        dA = A @ sg.g.omega(u) - sg.gh.omega(uh) @ A + B
        return np.concatenate([F @ u, F_h @ uh, dA.ravel()])


class _Extended:
    """Extension X~ of a vector given at base point x0."""

    def __init__(self, X, ext, M, x0):
        _check_ext(ext)
        self.X = np.asarray(X, dtype=float)
        self.ext = ext
        if ext != "frame":
            g0 = PointGeometry(M, x0)
            self.x0 = g0.x
            self.F0 = g0.F
            self.W0 = g0.W
            self.M = M

    def at(self, g: PointGeometry):
        if self.ext == "frame":
            return self.X
        if self.ext == "parallel":
            d = np.linalg.solve(self.F0, g.x - self.x0)
            return self.X - np.einsum("m,mli->li", d, self.W0) @ self.X
        return np.linalg.solve(g.F, self.F0 @ self.X)


class RollingLift(QField):
    """L_R(X~): (X~, A X~, 0)."""

    def __init__(self, X, ext="frame", M=None, x0=None):
        self.Xe = _Extended(X, ext, M, x0)
        self.label = f"L_R({np.round(self.Xe.X, 6).tolist()})"

    def triple(self, sg, x, xh, A):
        X = self.Xe.at(sg.g)
        return X, A @ X, np.zeros_like(A)


class NoSpinLift(QField):
    """L_NS(X, X^) with frame-constant components."""

    def __init__(self, X, X_hat):
        self.X = np.asarray(X, dtype=float)
        self.Xh = np.asarray(X_hat, dtype=float)
        self.label = "L_NS"

    def triple(self, sg, x, xh, A):
        return self.X, self.Xh, np.zeros_like(A)


class RolField(QField):
    """nu(Rol(X~, Y~))."""

    def __init__(self, X, Y, ext="frame", M=None, x0=None):
        self.Xe = _Extended(X, ext, M, x0)
        self.Ye = _Extended(Y, ext, M, x0)
        self.label = "nu(Rol)"

    def triple(self, sg, x, xh, A):
        B = sg.rol(self.Xe.at(sg.g), self.Ye.at(sg.g))
        return np.zeros(x.size), np.zeros(xh.size), B


class LRNuField(QField):
    """[L_R(Z), nu(Rol(X, Y))] for frame-constant Z, X, Y, as a field on Q."""

    def __init__(self, Z, X, Y):
        self.Z, self.X, self.Y = (np.asarray(v, dtype=float) for v in (Z, X, Y))
        self.label = "[L_R, nu(Rol)]"

    def triple(self, sg, x, xh, A):
        Z, X, Y = self.Z, self.X, self.Y
        om = sg.g.omega(Z)
        B = sg.rol_cov1(X, Y, Z) + sg.rol(om @ X, Y) + sg.rol(X, om @ Y)
        return np.zeros(x.size), -sg.rol(X, Y) @ Z, B


class FieldSum(QField):
    def __init__(self, *terms):
        self.terms = terms  # (coefficient, field)
        self.label = "sum"

    def triple(self, sg, x, xh, A):
        u = np.zeros(x.size)
        uh = np.zeros(xh.size)
        B = np.zeros_like(A)
        for c, f in self.terms:
            a, b, C = f.triple(sg, x, xh, A)
            u, uh, B = u + c * a, uh + c * b, B + c * C
        return u, uh, B


# ---------------------------------------------------------------------------
# flow oracle


def _flow(V: QField, M, M_hat, s, t, substeps, dom):
    h = t / substeps
    for _ in range(substeps):
        k1 = V.coords(M, M_hat, s)
        k2 = V.coords(M, M_hat, s + 0.5 * h * k1)
        k3 = V.coords(M, M_hat, s + 0.5 * h * k2)
        k4 = V.coords(M, M_hat, s + h * k3)
        s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        n, nh = M.dim, M_hat.dim
        if not (M.domain.contains(s[:n]) and M_hat.domain.contains(s[n:n + nh])):
            raise DomainError("oracle flow left the chart domain")
    return s


def flow_bracket_oracle(q: RollingState, V1: QField, V2: QField, h: float = 1e-3,
                        substeps: int = 2, richardson: bool = True) -> TangentTriple:
    """[V1, V2] at q from the mixed central difference of
    ``psi(t, s) = Phi1_{-t} Phi2_s Phi1_t (q)``, with one Richardson level.
    """
    M, Mh = q.M, q.M_hat
    s0 = np.concatenate([q.x, q.x_hat, q.A.ravel()])

    def psi(a, b):
        s = _flow(V1, M, Mh, s0, a, substeps, None)
        s = _flow(V2, M, Mh, s, b, substeps, None)
        return _flow(V1, M, Mh, s, -a, substeps, None)

    def D(e):
        return (psi(e, e) - psi(e, -e) - psi(-e, e) + psi(-e, -e)) / (4.0 * e * e)

    d = D(h)
    if richardson:
        d = (4.0 * d - D(2.0 * h)) / 3.0
    n, nh = q.n, q.n_hat
    return coords_to_triple(q, d[:n], d[n:n + nh], d[n + nh:].reshape(nh, n))
