"""Integration of the rolling (no-slip, no-spin) and no-spin systems."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .domain import DomainError
from .manifolds import (Isometry, ManifoldSpec, PathSpec, antidevelop, develop,
                        frame_transport, geodesic_path, grid_from_breaks,
                        isometry_frame_matrix)
from .state import RollingState, isometry_residual

__all__ = ["ControlSignal", "GeodesicControl", "RollingTrajectory", "roll", "roll_ns",
           "roll_geodesic", "develop", "antidevelop", "act_isometry", "control_path",
           "dual_stage_controls", "random_piecewise", "holonomy_angle"]


# ---------------------------------------------------------------------------
# controls


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Frame-component control ``t -> u(t)`` on [0, T].

    ``piecewise``: ``times`` are K+1 breaks, ``values`` K rows.
    ``samples``: linear interpolation through (times, values).
    ``stages``: explicit stage values (N, 3, n) on the grid ``times``.
    """

    kind: str
    T: float
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if self.kind not in ("piecewise", "samples", "stages"):
            raise ValueError(f"unknown control type {self.kind!r}")
        if not self.T > 0:
            raise ValueError("control horizon T must be positive")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0) or abs(t[-1] - self.T) > 1e-12 * max(1, self.T):
            raise ValueError("control times must increase strictly from 0 to T")
        if self.kind == "piecewise" and v.shape[0] != t.size - 1:
            raise ValueError("piecewise control needs one value row per segment")
        if self.kind == "samples" and v.shape[0] != t.size:
            raise ValueError("sampled control needs one value row per sample time")
        if self.kind == "stages" and v.shape[:2] != (t.size - 1, 3):
            raise ValueError("stage control needs shape (N, 3, n)")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    @staticmethod
    def constant(u, T: float) -> "ControlSignal":
        return ControlSignal("piecewise", T, [0.0, T], [np.asarray(u, dtype=float)])

    @staticmethod
    def piecewise(breaks, values) -> "ControlSignal":
        breaks = np.asarray(breaks, dtype=float)
        return ControlSignal("piecewise", float(breaks[-1]), breaks, values)

    @staticmethod
    def samples(times, values) -> "ControlSignal":
        times = np.asarray(times, dtype=float)
        return ControlSignal("samples", float(times[-1]), times, values)

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == "piecewise":
            i = min(int(np.searchsorted(self.times, t, side="right")) - 1, self.values.shape[0] - 1)
            return self.values[max(i, 0)].copy()
        if self.kind == "samples":
            return np.array([np.interp(t, self.times, self.values[:, j]) for j in range(self.dim)])
        i = min(max(int(np.searchsorted(self.times, t, side="right")) - 1, 0),
                self.values.shape[0] - 1)
        return self.values[i, 0].copy()

    def stage_values(self, step: float):
        """Grid times and stage controls (N, 3, n) at t, t+h/2, t+h."""
        if self.kind == "stages":
            return self.times, self.values
        ts = grid_from_breaks(self.times, step)
        N = ts.size - 1
        U = np.empty((N, 3, self.dim))
        if self.kind == "piecewise":
            idx = np.searchsorted(self.times, 0.5 * (ts[:-1] + ts[1:]), side="right") - 1
            U[:] = self.values[idx][:, None, :]
        else:
            for j, tt in enumerate((ts[:-1], 0.5 * (ts[:-1] + ts[1:]), ts[1:])):
                for c in range(self.dim):
                    U[:, j, c] = np.interp(tt, self.times, self.values[:, c])
        return ts, U

    def reversed(self) -> "ControlSignal":
        """The control ``-u(T - t)``."""
        if self.kind == "piecewise":
            return ControlSignal("piecewise", self.T, self.T - self.times[::-1], -self.values[::-1])
        if self.kind == "samples":
            return ControlSignal("samples", self.T, self.T - self.times[::-1], -self.values[::-1])
        return ControlSignal("stages", self.T, self.T - self.times[::-1],
                             -self.values[::-1, ::-1])

    def to_json(self) -> dict:
        if self.kind == "piecewise":
            data = {"breaks": self.times.tolist(), "values": self.values.tolist()}
        elif self.kind == "samples":
            data = {"times": self.times.tolist(), "values": self.values.tolist()}
        else:
            data = {"times": self.times.tolist(), "stages": self.values.tolist()}
        return {"type": self.kind, "T": self.T, "data": data}


@dataclass(frozen=True, eq=False)
class GeodesicControl:
    """Feedback control following geodesic legs.

    The control is parallel along the base curve (u' = -Gamma(u) u) and is
    rotated by ``turns`` at the given times. A turn is ``(time, angle)`` for a
    rotation in the (e1, e2) frame plane or ``(time, matrix)``.
    """

    X: np.ndarray
    T: float
    turns: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float))
        if not self.T > 0:
            raise ValueError("horizon must be positive")
        for t, _ in self.turns:
            if not 0 < t < self.T:
                raise ValueError("turn times must lie inside (0, T)")

    @property
    def dim(self) -> int:
        return self.X.size

    @staticmethod
    def polygon(X, legs, angles) -> "GeodesicControl":
        """Legs of the given lengths with turns by ``angles`` between them (unit speed)."""
        X = np.asarray(X, dtype=float)
        X = X / np.linalg.norm(X)
        t = np.cumsum(legs)
        return GeodesicControl(X, float(t[-1]), tuple((float(tt), float(a))
                                                       for tt, a in zip(t[:-1], angles)))

    def turn_matrix(self, spec) -> np.ndarray:
        n = self.dim
        if np.isscalar(spec):
            c, s = math.cos(spec), math.sin(spec)
            Rm = np.eye(n)
            Rm[:2, :2] = [[c, -s], [s, c]]
            return Rm
        return np.asarray(spec, dtype=float)

    def to_json(self) -> dict:
        return {"type": "geodesic", "T": self.T,
                "data": {"X": self.X.tolist(),
                         "turns": [{"time": t, "angle": a} if np.isscalar(a)
                                   else {"time": t, "matrix": np.asarray(a).tolist()}
                                   for t, a in self.turns]}}


def control_from_json(obj: dict, n: int):
    kind = obj.get("type")
    T = float(obj["T"])
    data = obj["data"]
    if kind == "piecewise":
        c = ControlSignal("piecewise", T, data["breaks"], data["values"])
    elif kind == "samples":
        c = ControlSignal("samples", T, data["times"], data["values"])
    elif kind == "geodesic":
        turns = tuple((float(t["time"]), t["angle"] if "angle" in t else np.asarray(t["matrix"]))
                      for t in data.get("turns", []))
        c = GeodesicControl(data["X"], T, turns)
    else:
        raise ValueError(f"unknown control type {kind!r}")
    if c.dim != n:
        raise ValueError(f"control dimension {c.dim} does not match manifold dimension {n}")
    return c


def random_piecewise(rng: np.random.Generator, n: int, T: float = 1.0, segments: int = 10,
                     scale: float = 1.0) -> ControlSignal:
    breaks = np.linspace(0.0, T, segments + 1)
    return ControlSignal.piecewise(breaks, scale * rng.normal(size=(segments, n)))


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class RollingTrajectory:
    M: ManifoldSpec
    M_hat: ManifoldSpec
    times: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray
    A: np.ndarray
    controls: np.ndarray
    diagnostics: dict
    exit: dict | None = None
    stage_controls: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.times.size

    def state(self, k: int) -> RollingState:
        return RollingState(self.M, self.M_hat, self.x[k], self.x_hat[k], self.A[k])

    @property
    def states(self) -> list[RollingState]:
        return [self.state(k) for k in range(len(self))]

    @property
    def final(self) -> RollingState:
        return self.state(len(self) - 1)

    def contact_paths(self):
        """The rolled curves on M and M^ as paths, with one-sided velocities at the
        samples taken from the stage controls."""
        M, Mh = self.M, self.M_hat
        if self.stage_controls is None:
            V = np.array([M.frame(x) @ u for x, u in zip(self.x, self.controls)])
            Vh = np.array([Mh.frame(xh) @ (A @ u)
                           for xh, A, u in zip(self.x_hat, self.A, self.controls)])
            return (PathSpec.from_samples(self.times, self.x, V),
                    PathSpec.from_samples(self.times, self.x_hat, Vh))
        U = self.stage_controls
        N = U.shape[0]
        v0 = np.array([M.frame(self.x[k]) @ U[k, 0] for k in range(N)])
        v1 = np.array([M.frame(self.x[k + 1]) @ U[k, 2] for k in range(N)])
        w0 = np.array([Mh.frame(self.x_hat[k]) @ (self.A[k] @ U[k, 0]) for k in range(N)])
        w1 = np.array([Mh.frame(self.x_hat[k + 1]) @ (self.A[k + 1] @ U[k, 2])
                       for k in range(N)])
        return (PathSpec.from_hermite_steps(self.times[:N + 1], self.x[:N + 1], v0, v1),
                PathSpec.from_hermite_steps(self.times[:N + 1], self.x_hat[:N + 1], w0, w1))

    def to_json(self, every: int = 1) -> dict:
        idx = list(range(0, len(self), every))
        if idx[-1] != len(self) - 1:
            idx.append(len(self) - 1)
        return {"M": self.M.to_json(), "M_hat": self.M_hat.to_json(),
                "times": self.times[idx].tolist(), "x": self.x[idx].tolist(),
                "x_hat": self.x_hat[idx].tolist(),
                "A_mat": self.A[idx].reshape(len(idx), -1).tolist(),
                "controls": self.controls[idx].tolist(),
                "diagnostics": self.diagnostics, "exit": self.exit,
                "final_state": self.final.to_json()}

    def to_csv(self) -> str:
        n, nh = self.M.dim, self.M_hat.dim
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{i}" for i in range(n)] + [f"xh{i}" for i in range(nh)]
                   + [f"A{i}{j}" for i in range(nh) for j in range(n)]
                   + [f"u{i}" for i in range(n)] + ["drift", "no_slip", "no_spin"])
        res = self.diagnostics.get("per_step")
        for k in range(len(self)):
            r = [res[j][k - 1] if (res is not None and k > 0) else 0.0 for j in range(3)]
            w.writerow([repr(float(v)) for v in
                        np.concatenate([[self.times[k]], self.x[k], self.x_hat[k],
                                        self.A[k].ravel(), self.controls[k], r])])
        return buf.getvalue()


def _roll_kernel(M, M_hat):
    return K.roll_loop_jit if (M.use_jit() and M_hat.use_jit()) else K.roll_loop_py


def _stage_controls_from_path(M: ManifoldSpec, path: PathSpec, step: float):
    ts, hs, XS, VS = path.stages(step)
    U = np.empty_like(VS)
    for s in range(XS.shape[0]):
        for j in range(3):
            U[s, j] = np.linalg.solve(M.frame(XS[s, j]), VS[s, j])
    return ts, U


def roll(M: ManifoldSpec, M_hat: ManifoldSpec, q0: RollingState, control, step: float = 1e-3,
         strict: bool = False) -> RollingTrajectory:
    """Integrate the rolling system driven by ``control``.

    ``control`` is a ControlSignal (frame components), a GeodesicControl, or a
    PathSpec on M starting at x0 (its frame velocity is used as control).
    On chart exit the partial trajectory is returned with ``exit`` set, or a
    DomainError is raised when ``strict``.
    """
    if q0.M is not M or q0.M_hat is not M_hat:
        raise ValueError("q0 belongs to a different pair of manifolds")
    n = M.dim
    geodesic = isinstance(control, GeodesicControl)
    if geodesic:
        breaks = np.concatenate([[0.0], [t for t, _ in control.turns], [control.T]])
        ts = grid_from_breaks(breaks, step)
        U = np.zeros((ts.size - 1, 3, n))
        U[0, 0] = control.X
        turn_idx = -np.ones(ts.size - 1, dtype=np.int64)
        mats = [np.eye(n)]
        for t, spec in control.turns:
            k = int(np.argmin(np.abs(ts - t)))
            turn_idx[k] = len(mats)
            mats.append(control.turn_matrix(spec))
        turn_mats = np.array(mats)
    else:
        if isinstance(control, PathSpec):
            if np.max(np.abs(control(0.0)[0] - q0.x)) > 1e-9:
                raise ValueError("path must start at x0")
            ts, U = _stage_controls_from_path(M, control, step)
        elif isinstance(control, ControlSignal):
            if control.dim != n:
                raise ValueError("control dimension mismatch")
            ts, U = control.stage_values(step)
        else:
            raise TypeError("unsupported control type")
        turn_idx = -np.ones(ts.size - 1, dtype=np.int64)
        turn_mats = np.zeros((1, n, n))
    hs = np.diff(ts)
    gm, pm = M.kernel_args()
    gh, ph = M_hat.kernel_args()
    dm, lom, him = M.domain.arrays()
    dh, loh, hih = M_hat.domain.arrays()
    t0 = time.perf_counter()
    X, XH, RS, UC, drift, noslip, nospin, status, done = _roll_kernel(M, M_hat)(
        gm, pm, dm, lom, him, gh, ph, dh, loh, hih,
        q0.x.copy(), q0.x_hat.copy(), np.ascontiguousarray(q0.A), np.ascontiguousarray(U),
        geodesic, turn_idx, np.ascontiguousarray(turn_mats), hs)
    runtime = time.perf_counter() - t0
    exit_info = None
    if status:
        which = "M" if status == 1 else "M_hat"
        t_exit = float(ts[done + 1])
        exit_info = {"which": which, "time": t_exit}
        if strict:
            raise DomainError(f"rolling left the chart domain of {which} at t={t_exit:.6g}",
                              which=which, time=t_exit)
    m = done + 1
    per = (drift[:done], noslip[:done], nospin[:done])
    diag = {
        "max_drift": float(np.max(per[0], initial=0.0)),
        "total_drift": float(np.sum(per[0])),
        "max_no_slip": float(np.max(per[1], initial=0.0)),
        "max_no_spin": float(np.max(per[2], initial=0.0)),
        "steps": int(done),
        "runtime_s": runtime,
        "per_step": [p.tolist() for p in per],
    }
    return RollingTrajectory(M, M_hat, ts[:m], X[:m], XH[:m], RS[:m], UC[:m], diag, exit_info,
                             None if geodesic else U[:done])


def _project(A: np.ndarray) -> np.ndarray:
    U_, _, Vt = np.linalg.svd(A, full_matrices=False)
    return U_ @ Vt


def roll_ns(M: ManifoldSpec, M_hat: ManifoldSpec, q0: RollingState, gamma: PathSpec,
            gamma_hat: PathSpec, step: float = 1e-3) -> RollingTrajectory:
    """No-spin motion along prescribed curves: A(t) = P_0^t(gamma^) A0 P_t^0(gamma)."""
    if abs(gamma.T - gamma_hat.T) > 1e-12:
        raise ValueError("paths must share the horizon")
    if np.max(np.abs(gamma(0.0)[0] - q0.x)) > 1e-9 or \
            np.max(np.abs(gamma_hat(0.0)[0] - q0.x_hat)) > 1e-9:
        raise ValueError("paths must start at the base points of q0")
    ts = grid_from_breaks(np.union1d(gamma.breaks, gamma_hat.breaks), step)
    P = _transports_on(M, gamma, ts)
    Ph = _transports_on(M_hat, gamma_hat, ts)
    N = ts.size
    As = np.empty((N, M_hat.dim, M.dim))
    drift = np.zeros(N)
    for k in range(N):
        Ak = Ph[k] @ q0.A @ np.linalg.inv(P[k])
        drift[k] = isometry_residual(Ak)
        As[k] = _project(Ak)
    sides = [1] + [-1] * (N - 1)
    X = np.array([gamma(t, sd)[0] for t, sd in zip(ts, sides)])
    XH = np.array([gamma_hat(t, sd)[0] for t, sd in zip(ts, sides)])
    UC = np.array([np.linalg.solve(M.frame(x), gamma(t, sd)[1])
                   for x, t, sd in zip(X, ts, sides)])
    diag = {"max_drift": float(drift.max()), "total_drift": float(drift.sum()),
            "steps": N - 1}
    return RollingTrajectory(M, M_hat, ts, X, XH, As, UC, diag)


def _transports_on(M: ManifoldSpec, path: PathSpec, ts) -> np.ndarray:
    """Frame transports P_0^t along ``path`` at the grid times ``ts``."""
    _, hs, XS, VS = path.stages(1.0, ts=ts)
    for s in range(XS.shape[0]):
        for j in range(3):
            if not M.domain.contains(XS[s, j]):
                raise DomainError(f"path leaves the chart domain of {M}", which=str(M),
                                  time=float(ts[s]), point=XS[s, j])
    geo, par = M.kernel_args()
    loop = K.transport_loop_jit if M.use_jit() else K.transport_loop_py
    PS, _ = loop(geo, par, XS, VS, np.eye(M.dim), hs)
    return PS


def roll_geodesic(M: ManifoldSpec, M_hat: ManifoldSpec, q0: RollingState, X, T: float,
                  step: float = 1e-3) -> RollingTrajectory:
    """Closed-form rolling along the geodesic with initial velocity X (frame components)."""
    X = np.asarray(X, dtype=float)
    g = geodesic_path(M, q0.x, X, T, step)
    gh = geodesic_path(M_hat, q0.x_hat, q0.A @ X, T, step)
    N = g.times.size
    As = np.empty((N, M_hat.dim, M.dim))
    drift = np.zeros(N)
    for k in range(N):
        Ak = gh.transports[k] @ q0.A @ np.linalg.inv(g.transports[k])
        drift[k] = isometry_residual(Ak)
        As[k] = _project(Ak)
    diag = {"max_drift": float(drift.max()), "total_drift": float(drift.sum()), "steps": N - 1}
    return RollingTrajectory(M, M_hat, g.times, g.points, gh.points, As, g.velocities, diag)


def control_path(M: ManifoldSpec, x0, control, step: float = 1e-3) -> PathSpec:
    """Base curve on M traced by a frame-component control (sampled, Hermite)."""
    from .manifolds import euclidean
    E = euclidean(M.dim)
    q = RollingState(M, E, x0, np.zeros(M.dim), np.eye(M.dim))
    tr = roll(M, E, q, control, step, strict=True)
    return tr.contact_paths()[0]


def dual_stage_controls(traj: RollingTrajectory) -> ControlSignal:
    """Stage controls u^(t) = A(t) u(t) for driving the transposed problem.

    A(t) at half steps is recovered by cubic Hermite interpolation of the
    stored samples with derivatives from the rolling equation.
    """
    if traj.stage_controls is None:
        raise ValueError("trajectory has no stage controls")
    M, Mh = traj.M, traj.M_hat
    U = traj.stage_controls
    N = U.shape[0]
    out = np.empty((N, 3, Mh.dim))
    for k in range(N):
        h = traj.times[k + 1] - traj.times[k]
        R0, R1 = traj.A[k], traj.A[k + 1]
        d = []
        for R, x, xh, u in ((R0, traj.x[k], traj.x_hat[k], U[k, 0]),
                            (R1, traj.x[k + 1], traj.x_hat[k + 1], U[k, 2])):
            om = M.omega(x, u)
            omh = Mh.omega(xh, R @ u)
            d.append(R @ om - omh @ R)
        Rm = 0.5 * (R0 + R1) + 0.125 * h * (d[0] - d[1])
        out[k, 0] = R0 @ U[k, 0]
        out[k, 1] = Rm @ U[k, 1]
        out[k, 2] = R1 @ U[k, 2]
    return ControlSignal("stages", float(traj.times[-1]), traj.times, out)


def holonomy_angle(A0: np.ndarray, A1: np.ndarray) -> float:
    """Rotation angle of A1^T A0 for 2 x 2 states.

    With a flat M^ this is the angle of parallel transport on M along the
    rolled path (counterclockwise positive).
    """
    Rr = A1.T @ A0
    if Rr.shape != (2, 2):
        raise ValueError("holonomy angle is defined for 2 x 2 states")
    return float(math.atan2(Rr[1, 0], Rr[0, 0]))


# ---------------------------------------------------------------------------
# isometry action


def act_isometry(q: RollingState, F: Isometry | None = None,
                 F_hat: Isometry | None = None) -> RollingState:
    """``F^ . q . F = (F^{-1}(x), F^(x^); F^_* A F_*)``."""
    F = F or Isometry.identity()
    F_hat = F_hat or Isometry.identity()
    y = F.inverse().apply(q.x)
    J = isometry_frame_matrix(q.M, F, y)
    Jh = isometry_frame_matrix(q.M_hat, F_hat, q.x_hat)
    return RollingState(q.M, q.M_hat, y, F_hat.apply(q.x_hat), _project(Jh @ q.A @ J))
