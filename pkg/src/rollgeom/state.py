"""The state space Q(M, M^) of maximal-rank partial isometries in frame coordinates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .manifolds import ManifoldSpec

CONSTRUCTION_TOL = 1e-9
DRIFT_TOL = 1e-6
RANK_TOL = 1e-7


class RankDeficientError(ValueError):
    pass


def dim_Q(n: int, nh: int) -> int:
    N = min(n, nh)
    return n + nh + n * nh - N * (N + 1) // 2


def vertical_dim(n: int, nh: int) -> int:
    N = min(n, nh)
    return n * nh - N * (N + 1) // 2


def i_nnhat(n: int, nh: int) -> np.ndarray:
    """The nh x n matrix with ones on the leading diagonal."""
    return np.eye(nh, n)


def isometry_residual(A: np.ndarray) -> float:
    nh, n = A.shape
    D = A.T @ A - np.eye(n) if n <= nh else A @ A.T - np.eye(nh)
    return float(np.max(np.abs(D))) if D.size else 0.0


@dataclass(frozen=True, eq=False)
class RollingState:
    """q = (x, x^; A) with ``A`` the nh x n matrix of A in the frames at (x, x^)."""

    M: ManifoldSpec
    M_hat: ManifoldSpec
    x: np.ndarray
    x_hat: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        xh = np.array(self.x_hat, dtype=float)
        A = np.array(self.A, dtype=float)
        n, nh = self.M.dim, self.M_hat.dim
        if A.shape != (nh, n):
            raise ValueError(f"A must have shape ({nh}, {n}), got {A.shape}")
        self.M.check_point(x, "x")
        self.M_hat.check_point(xh, "x_hat")
        if isometry_residual(A) > CONSTRUCTION_TOL:
            raise ValueError("A is not a partial isometry of maximal rank")
        for a in (x, xh, A):
            a.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "x_hat", xh)
        object.__setattr__(self, "A", A)

    @property
    def n(self) -> int:
        return self.M.dim

    @property
    def n_hat(self) -> int:
        return self.M_hat.dim

    def replace(self, x=None, x_hat=None, A=None) -> "RollingState":
        return RollingState(self.M, self.M_hat,
                            self.x if x is None else x,
                            self.x_hat if x_hat is None else x_hat,
                            self.A if A is None else A)

    def to_json(self) -> dict:
        return {"x": self.x.tolist(), "x_hat": self.x_hat.tolist(),
                "A_mat": self.A.ravel().tolist(), "n": self.n, "n_hat": self.n_hat}

    @staticmethod
    def from_json(M: ManifoldSpec, M_hat: ManifoldSpec, obj: dict) -> "RollingState":
        n, nh = int(obj["n"]), int(obj["n_hat"])
        if (n, nh) != (M.dim, M_hat.dim):
            raise ValueError("state dimensions do not match the manifolds")
        return RollingState(M, M_hat, obj["x"], obj["x_hat"],
                            np.asarray(obj["A_mat"], dtype=float).reshape(nh, n))

    def distance(self, other: "RollingState") -> float:
        return float(max(np.max(np.abs(self.x - other.x)),
                         np.max(np.abs(self.x_hat - other.x_hat)),
                         np.max(np.abs(self.A - other.A))))


def polar_factor(A_raw) -> np.ndarray:
    """Orthonormal polar factor; rejects rank-deficient input."""
    A_raw = np.asarray(A_raw, dtype=float)
    U, s, Vt = np.linalg.svd(A_raw, full_matrices=False)
    if s.size == 0 or s[-1] <= RANK_TOL * s[0]:
        raise RankDeficientError("A_raw does not have maximal rank")
    return U @ Vt


def make_state(M: ManifoldSpec, M_hat: ManifoldSpec, x, x_hat, A_raw) -> RollingState:
    """State with A replaced by the nearest partial isometry (polar factor).

    For n = n^ the result must be orientation preserving (det > 0).
    """
    A = polar_factor(A_raw)
    if A.shape != (M_hat.dim, M.dim):
        raise ValueError(f"A_raw must have shape ({M_hat.dim}, {M.dim})")
    if M.dim == M_hat.dim and np.linalg.det(A) <= 0:
        raise ValueError("square A must have positive determinant")
    return RollingState(M, M_hat, x, x_hat, A)


def random_partial_isometry(rng: np.random.Generator, n: int, nh: int) -> np.ndarray:
    """Haar-like sample from SO(n, n^) (det > 0 when square)."""
    Z = rng.normal(size=(max(n, nh), max(n, nh)))
    Q, Rr = np.linalg.qr(Z)
    Q = Q * np.sign(np.diag(Rr))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q[:nh, :n].copy() if nh >= n else Q[:n, :nh].T.copy()


def random_state(M: ManifoldSpec, M_hat: ManifoldSpec, rng: np.random.Generator,
                 shrink: float = 0.5) -> RollingState:
    return RollingState(M, M_hat, M.domain.sample(rng, shrink), M_hat.domain.sample(rng, shrink),
                        random_partial_isometry(rng, M.dim, M_hat.dim))


# ---------------------------------------------------------------------------
# vertical space


def _orth_complement(A: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the complement of the column space of A."""
    if A.shape[0] == A.shape[1]:
        return np.zeros((A.shape[0], 0))
    return null_space(A.T)


def vertical_basis_matrix(A: np.ndarray) -> list[np.ndarray]:
    nh, n = A.shape
    if n > nh:
        return [B.T.copy() for B in vertical_basis_matrix(A.T)]
    basis = []
    for i in range(n):
        for j in range(i + 1, n):
            S = np.zeros((n, n))
            S[i, j], S[j, i] = -1.0, 1.0
            basis.append(A @ S / np.sqrt(2.0))
    C = _orth_complement(A)
    for k in range(C.shape[1]):
        for j in range(n):
            E = np.zeros((nh, n))
            E[:, j] = C[:, k]
            basis.append(E)
    return basis


def vertical_basis(q: RollingState) -> list[np.ndarray]:
    """Frobenius-orthonormal basis of {B : A^T B in so(n)} (resp. B A^T in so(n^))."""
    return vertical_basis_matrix(q.A)


def vertical_residual(A: np.ndarray, B: np.ndarray) -> float:
    """Distance of A^T B (or B A^T) from so(.)."""
    nh, n = A.shape
    S = A.T @ B if n <= nh else B @ A.T
    return float(np.max(np.abs(S + S.T))) if S.size else 0.0


def vertical_coords(q_or_A, B: np.ndarray) -> np.ndarray:
    A = q_or_A.A if isinstance(q_or_A, RollingState) else q_or_A
    return np.array([np.sum(E * B) for E in vertical_basis_matrix(A)])


def transpose_dual(q: RollingState) -> RollingState:
    return RollingState(q.M_hat, q.M, q.x_hat, q.x, q.A.T)


def kernel_projections(q: RollingState):
    """``(P_ker, P_coker)`` on T_x M in frame components."""
    n, nh = q.n, q.n_hat
    if n < nh:
        return np.zeros((n, n)), np.eye(n)
    P_coker = q.A.T @ q.A
    return np.eye(n) - P_coker, P_coker


# ---------------------------------------------------------------------------
# tangent vectors


@dataclass(frozen=True)
class TangentTriple:
    """Tangent vector (u, u^, B): base velocities in frames plus the vertical part."""

    u: np.ndarray
    u_hat: np.ndarray
    B: np.ndarray

    def __add__(self, o: "TangentTriple") -> "TangentTriple":
        return TangentTriple(self.u + o.u, self.u_hat + o.u_hat, self.B + o.B)

    def __sub__(self, o: "TangentTriple") -> "TangentTriple":
        return TangentTriple(self.u - o.u, self.u_hat - o.u_hat, self.B - o.B)

    def __neg__(self) -> "TangentTriple":
        return TangentTriple(-self.u, -self.u_hat, -self.B)

    def scale(self, c: float) -> "TangentTriple":
        return TangentTriple(c * self.u, c * self.u_hat, c * self.B)

    def norm(self) -> float:
        return float(np.sqrt(self.u @ self.u + self.u_hat @ self.u_hat + np.sum(self.B ** 2)))

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.u), initial=0.0),
                         np.max(np.abs(self.u_hat), initial=0.0),
                         np.max(np.abs(self.B), initial=0.0)))

    def vec(self, q: RollingState) -> np.ndarray:
        """Coordinates in R^{dim Q}: (u, u^, vertical coordinates of B)."""
        return np.concatenate([self.u, self.u_hat, vertical_coords(q, self.B)])

    @staticmethod
    def zero(n: int, nh: int) -> "TangentTriple":
        return TangentTriple(np.zeros(n), np.zeros(nh), np.zeros((nh, n)))

    def to_json(self) -> dict:
        return {"u": self.u.tolist(), "u_hat": self.u_hat.tolist(), "B": self.B.tolist()}


def triple_to_coords(q: RollingState, t: TangentTriple):
    """Coordinate velocity (x', x^', A') of the tangent vector t at q."""
    F, W = q.M.frame_omega(q.x)
    Fh, Wh = q.M_hat.frame_omega(q.x_hat)
    om = np.einsum("m,mli->li", t.u, W)
    omh = np.einsum("m,mli->li", t.u_hat, Wh)
    return F @ t.u, Fh @ t.u_hat, q.A @ om - omh @ q.A + t.B


def coords_to_triple(q: RollingState, dx, dxh, dA) -> TangentTriple:
    F, W = q.M.frame_omega(q.x)
    Fh, Wh = q.M_hat.frame_omega(q.x_hat)
    u = np.linalg.solve(F, dx)
    uh = np.linalg.solve(Fh, dxh)
    om = np.einsum("m,mli->li", u, W)
    omh = np.einsum("m,mli->li", uh, Wh)
    return TangentTriple(u, uh, np.asarray(dA) - (q.A @ om - omh @ q.A))
