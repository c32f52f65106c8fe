"""Lifts and projections bridging rolling problems whose dimensions differ by one.

``target`` side (n = n^ + 1): roll M on R x M^, the kernel direction of A goes to d/dr.
``source`` side (n = n^ - 1): roll R x M on M^, d/dr goes to the normal of im A.
In both cases the extended frame matrix has positive determinant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .manifolds import ManifoldSpec, euclidean, product
from .rolling import ControlSignal, roll
from .state import CONSTRUCTION_TOL, RollingState, isometry_residual

SIDES = ("target_augmented", "source_augmented")


@dataclass(frozen=True)
class GapConfig:
    side: str
    a: float = 0.0

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")

    def to_json(self) -> dict:
        return {"side": self.side, "a": self.a}


_LINE_PRODUCTS: dict = {}


def line_product(M: ManifoldSpec) -> ManifoldSpec:
    """R x M with the line as coordinate 0 (cached per manifold object)."""
    key = id(M)
    hit = _LINE_PRODUCTS.get(key)
    if hit is None or hit[0] is not M:
        hit = (M, product(euclidean(1), M))
        _LINE_PRODUCTS[key] = hit
    return hit[1]


def _unit_null(A: np.ndarray) -> np.ndarray:
    N = null_space(A)
    if N.shape[1] != 1:
        raise ValueError("expected a one-dimensional kernel")
    return N[:, 0]


def lift_target(q: RollingState, a: float = 0.0) -> RollingState:
    """q in Q(M, M^) with n = n^ + 1 to Q(M, R x M^)."""
    n, nh = q.n, q.n_hat
    if n != nh + 1:
        raise ValueError("target lift needs n = n^ + 1")
    k = _unit_null(q.A)
    A1 = np.vstack([k[None, :], q.A])
    if np.linalg.det(A1) < 0:
        A1[0] = -A1[0]
    M1 = line_product(q.M_hat)
    return RollingState(q.M, M1, q.x, np.concatenate([[a], q.x_hat]), A1)


def project_target(q1: RollingState, M_hat: ManifoldSpec) -> RollingState:
    """Drop the line row: Q(M, R x M^) to Q(M, M^)."""
    A = q1.A[1:]
    if isometry_residual(A) > 1e3 * CONSTRUCTION_TOL:
        raise AssertionError("projected frame matrix is not a partial isometry")
    return RollingState(q1.M, M_hat, q1.x, q1.x_hat[1:], A)


def lift_source(q: RollingState, a: float = 0.0) -> RollingState:
    """q in Q(M, M^) with n = n^ - 1 to Q(R x M, M^)."""
    n, nh = q.n, q.n_hat
    if n != nh - 1:
        raise ValueError("source lift needs n = n^ - 1")
    nu = _unit_null(q.A.T)
    A1 = np.hstack([nu[:, None], q.A])
    if np.linalg.det(A1) < 0:
        A1[:, 0] = -A1[:, 0]
    M1 = line_product(q.M)
    return RollingState(M1, q.M_hat, np.concatenate([[a], q.x]), q.x_hat, A1)


def project_source(q1: RollingState, M: ManifoldSpec) -> RollingState:
    """Drop the line column: Q(R x M, M^) to Q(M, M^)."""
    A = q1.A[:, 1:]
    if isometry_residual(A) > 1e3 * CONSTRUCTION_TOL:
        raise AssertionError("projected frame matrix is not a partial isometry")
    return RollingState(M, q1.M_hat, q1.x[1:], q1.x_hat, A)


def lift(q: RollingState, cfg: GapConfig) -> RollingState:
    return lift_target(q, cfg.a) if cfg.side == "target_augmented" else lift_source(q, cfg.a)


def project(q1: RollingState, base_other: ManifoldSpec, cfg: GapConfig) -> RollingState:
    if cfg.side == "target_augmented":
        return project_target(q1, base_other)
    return project_source(q1, base_other)


# ---------------------------------------------------------------------------
# commutation with rolling


def _pad_control(c: ControlSignal) -> ControlSignal:
    """(0, u): control on R x M with no line component."""
    vals = np.asarray(c.values, dtype=float)
    z = np.zeros(vals.shape[:-1] + (1,))
    return ControlSignal(c.kind, c.T, c.times, np.concatenate([z, vals], axis=-1))


def _line_quadrature(traj) -> np.ndarray:
    """int_0^t <row 0 of A1, u> by Simpson on the stage controls, with A1 at half steps
    from cubic Hermite interpolation."""
    M, Mh = traj.M, traj.M_hat
    U = traj.stage_controls
    out = np.zeros(len(traj))
    for k in range(U.shape[0]):
        h = traj.times[k + 1] - traj.times[k]
        R0, R1 = traj.A[k], traj.A[k + 1]
        d = [R @ M.omega(x, u) - Mh.omega(xh, R @ u) @ R
             for R, x, xh, u in ((R0, traj.x[k], traj.x_hat[k], U[k, 0]),
                                 (R1, traj.x[k + 1], traj.x_hat[k + 1], U[k, 2]))]
        Rm = 0.5 * (R0 + R1) + 0.125 * h * (d[0] - d[1])
        inc = R0[0] @ U[k, 0] + 4.0 * Rm[0] @ U[k, 1] + R1[0] @ U[k, 2]
        out[k + 1] = out[k] + h * inc / 6.0
    return out


def target_commutation(q: RollingState, control: ControlSignal, a: float = 0.0,
                       step: float = 1e-3) -> dict:
    """Roll q and its target lift with the same control; compare after projecting."""
    base = roll(q.M, q.M_hat, q, control, step, strict=True)
    q1 = lift_target(q, a)
    lifted = roll(q1.M, q1.M_hat, q1, control, step, strict=True)
    dx = np.max(np.abs(lifted.x - base.x))
    dxh = np.max(np.abs(lifted.x_hat[:, 1:] - base.x_hat))
    dA = np.max(np.abs(lifted.A[:, 1:, :] - base.A))
    ts = lifted.times
    r_quad = a + _line_quadrature(lifted)
    return {"side": "target_augmented", "steps": int(ts.size - 1),
            "projection_error": float(max(dx, dxh, dA)),
            "line_coordinate_error": float(np.max(np.abs(lifted.x_hat[:, 0] - r_quad))),
            "roundtrip_error": float(project_target(q1, q.M_hat).distance(q))}


def source_commutation(q: RollingState, control: ControlSignal, a: float = 0.0,
                       step: float = 1e-3) -> dict:
    """Roll the source lift with tangential controls (0, u); it must stay in the image of
    the lift and project onto the base trajectory."""
    base = roll(q.M, q.M_hat, q, control, step, strict=True)
    q1 = lift_source(q, a)
    lifted = roll(q1.M, q1.M_hat, q1, _pad_control(control), step, strict=True)
    stay = 0.0
    for k in range(len(lifted)):
        qk = project_source(lifted.state(k), q.M)
        back = lift_source(qk, a)
        stay = max(stay, back.distance(lifted.state(k)))
    dx = np.max(np.abs(lifted.x[:, 1:] - base.x))
    dxh = np.max(np.abs(lifted.x_hat - base.x_hat))
    dA = np.max(np.abs(lifted.A[:, :, 1:] - base.A))
    return {"side": "source_augmented", "steps": len(lifted) - 1,
            "image_distance": float(stay), "projection_error": float(max(dx, dxh, dA)),
            "roundtrip_error": float(project_source(q1, q.M).distance(q))}


def commutation(q: RollingState, control: ControlSignal, cfg: GapConfig,
                step: float = 1e-3) -> dict:
    fn = target_commutation if cfg.side == "target_augmented" else source_commutation
    return fn(q, control, cfg.a, step)
