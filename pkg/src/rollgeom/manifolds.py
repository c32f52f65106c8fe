"""Chart-based Riemannian manifolds.

All tensors are returned in the deterministic orthonormal frame ``F(x)``
obtained by Gram-Schmidt of the coordinate basis in index order (for a metric
``G = L L^T`` this is ``F = L^{-T}``, upper triangular with positive diagonal).

Index conventions
-----------------
``W[m][l, i] = g(nabla_{E_m} E_i, E_l)`` so that ``omega(u) = sum_m u_m W[m]``
is antisymmetric and ``nabla_X E_i = sum_l omega(X)[l, i] E_l``.

``Rm[i, j, l, k] = g(R(E_i, E_j) E_k, E_l)``, i.e. ``Rm[i, j]`` is the matrix
of the endomorphism ``R(E_i, E_j)``. Sectional curvature is
``g(R(X, Y) Y, X)`` on an orthonormal pair.

``nabla R`` appends the differentiation slot last:
``DR[i, j, l, k, m] = g((nabla_{E_m} R)(E_i, E_j) E_k, E_l)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.linalg import solve_triangular

from . import kernels as K
from ._accel import USE_NUMBA
from .domain import Domain, DomainError

# base relative steps for nested 5-point central differences, by nesting level
FD_STEPS = (2e-3, 1e-2, 2e-2, 4e-2)

KINDS = ("euclidean", "sphere", "hyperbolic", "product", "warped", "custom_metric")


# ---------------------------------------------------------------------------
# finite differences


def fd_partials(fn: Callable, x: np.ndarray, rel: float) -> np.ndarray:
    """Fourth-order central partial derivatives, derivative axis appended last.

    Coordinate i uses the step ``rel * (1 + |x_i|)``.
    """
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = rel * (1.0 + abs(x[i]))
        e = np.zeros(x.size)
        e[i] = h
        d = 8.0 * (np.asarray(fn(x + e)) - np.asarray(fn(x - e)))
        d -= np.asarray(fn(x + 2 * e)) - np.asarray(fn(x - 2 * e))
        cols.append(d / (12.0 * h))
    return np.stack(cols, axis=-1)


def fd_directional(fn: Callable, x: np.ndarray, d: np.ndarray, rel: float) -> np.ndarray:
    """Fourth-order central derivative of ``fn`` along the coordinate vector ``d``."""
    x = np.asarray(x, dtype=float)
    nd = np.linalg.norm(d)
    if nd == 0.0:
        return np.zeros_like(np.asarray(fn(x)))
    h = rel * (1.0 + np.abs(x) @ np.abs(d) / nd) / nd
    a = 8.0 * (np.asarray(fn(x + h * d)) - np.asarray(fn(x - h * d)))
    a -= np.asarray(fn(x + 2 * h * d)) - np.asarray(fn(x - 2 * h * d))
    return a / (12.0 * h)


def christoffel_from_jets(G: np.ndarray, dG: np.ndarray) -> np.ndarray:
    """Coordinate Christoffels ``Gam[k, i, j]`` from ``dG[a, b, c] = d_c g_ab``."""
    S = np.transpose(dG, (0, 2, 1)) + dG - np.transpose(dG, (2, 0, 1))
    return 0.5 * np.einsum("kl,lij->kij", np.linalg.inv(G), S)


def frame_from_metric(G: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(G)
    return solve_triangular(L.T, np.eye(G.shape[0]), lower=False)


def covariant_terms(T: np.ndarray, dT: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Frame covariant derivative from directional derivatives ``dT[..., m] = E_m(T)``."""
    out = np.array(dT, dtype=float, copy=True)
    for s in range(T.ndim):
        Tm = np.moveaxis(T, s, -1)
        term = np.einsum("...b,mba->...am", Tm, W)
        out -= np.moveaxis(term, -2, s)
    return out


def _pair_tensor(Kp: np.ndarray) -> np.ndarray:
    """Curvature tensor whose operator is diagonal on e_i^e_j with eigenvalue Kp[i, j]."""
    d = Kp.shape[0]
    I = np.eye(d)
    pat = np.einsum("jk,il->ijlk", I, I) - np.einsum("ik,jl->ijlk", I, I)
    return Kp[:, :, None, None] * pat


def _antisym_curv(Rm: np.ndarray) -> np.ndarray:
    Rm = 0.5 * (Rm - np.swapaxes(Rm, 0, 1))
    return 0.5 * (Rm - np.swapaxes(Rm, 2, 3))


# ---------------------------------------------------------------------------
# custom metric families


@dataclass(frozen=True)
class PerturbedMetric:
    """``g(x) = I + amplitude * S(x)`` with seeded smooth symmetric S."""

    dim: int
    amplitude: float
    seed: int
    modes: int = 3

    def _coeffs(self):
        rng = np.random.default_rng(self.seed)
        n, T = self.dim, self.modes
        a = rng.normal(size=(T, n, n))
        a = 0.5 * (a + np.transpose(a, (0, 2, 1)))
        a /= np.max(np.abs(a).sum(axis=(1, 2)))
        k = rng.normal(size=(T, n))
        ph = rng.uniform(0, 2 * np.pi, size=T)
        return a, k, ph

    def __post_init__(self):
        if not 0 <= self.amplitude < 1.0 / max(self.modes, 1):
            raise ValueError("amplitude must lie in [0, 1/modes) to keep the metric positive")
        object.__setattr__(self, "_c", self._coeffs())

    def __call__(self, x):
        a, k, ph = self._c
        s = np.sin(k @ np.asarray(x, dtype=float) + ph)
        return np.eye(self.dim) + self.amplitude * np.einsum("t,tij->ij", s, a)

    def to_json(self) -> dict:
        return {"family": "perturbed", "amplitude": self.amplitude, "seed": self.seed,
                "modes": self.modes}


CUSTOM_FAMILIES = {"perturbed": PerturbedMetric}


# ---------------------------------------------------------------------------
# manifold spec


def _custom_geo(par, x):
    return par.frame_omega(x)


@dataclass(frozen=True, eq=False)
class ManifoldSpec:
    """A Riemannian manifold described in one chart."""

    kind: str
    dim: int
    params: dict
    domain: Domain
    simply_connected: bool = True
    complete: bool = True
    totally_geodesic_dims: frozenset = frozenset()
    blocks: np.ndarray | None = field(default=None, repr=False)
    metric_fn: Callable | None = field(default=None, repr=False)
    label: str = ""

    # -- structure -------------------------------------------------------
    @property
    def closed_form(self) -> bool:
        return self.blocks is not None

    def __str__(self) -> str:
        return self.label or f"{self.kind}({self.dim})"

    def kernel_args(self):
        """(geometry function, parameter) pair accepted by the kernel loops."""
        if self.closed_form:
            if USE_NUMBA:
                return K.block_geom_jit, self.blocks
            return K.block_geom_py, self.blocks
        return _custom_geo, self

    def use_jit(self) -> bool:
        return USE_NUMBA and self.closed_form

    def check_point(self, x, what: str = "point") -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"{what} must have shape ({self.dim},), got {x.shape}")
        if not self.domain.contains(x):
            raise DomainError(f"{what} {x.tolist()} is outside the chart domain of {self}",
                              point=x)
        return x

    def as_fd(self) -> "ManifoldSpec":
        """Same metric, but every quantity computed by finite differences."""
        return ManifoldSpec("custom_metric", self.dim, {"source": self.to_json()}, self.domain,
                            self.simply_connected, self.complete, self.totally_geodesic_dims,
                            None, self.metric, f"fd[{self}]")

    # -- metric ----------------------------------------------------------
    def metric(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.closed_form:
            G = np.asarray(self.metric_fn(x), dtype=float)
            return 0.5 * (G + G.T)
        G = np.zeros((self.dim, self.dim))
        for code, d, o, p0, p1, p2, _ in self.blocks:
            d, o = int(d), int(o)
            sl = slice(o, o + d)
            xs = x[sl]
            if code == K.EUCLIDEAN:
                G[sl, sl] = np.eye(d)
            elif code in (K.SPHERE, K.HYPERBOLIC):
                r2, s = p0 * p0, xs @ xs
                lam = 2 * r2 / (r2 + s) if code == K.SPHERE else 2 * r2 / (r2 - s)
                G[sl, sl] = lam * lam * np.eye(d)
            else:
                f = K._warp_profile(int(p0), p1, p2, xs[0])[0]
                G[sl, sl] = np.diag([1.0] + [f * f] * (d - 1))
        return G

    def metric_jacobian(self, x) -> np.ndarray:
        """``dG[a, b, c] = d_c g_ab``."""
        x = np.asarray(x, dtype=float)
        if not self.closed_form:
            return fd_partials(self.metric, x, FD_STEPS[0])
        n = self.dim
        dG = np.zeros((n, n, n))
        for code, d, o, p0, p1, p2, _ in self.blocks:
            d, o = int(d), int(o)
            xs = x[o:o + d]
            if code in (K.SPHERE, K.HYPERBOLIC):
                r2, s = p0 * p0, xs @ xs
                if code == K.SPHERE:
                    lam, c = 2 * r2 / (r2 + s), -2.0 / (r2 + s)
                else:
                    lam, c = 2 * r2 / (r2 - s), 2.0 / (r2 - s)
                for a in range(d):
                    for kk in range(d):
                        dG[o + a, o + a, o + kk] = 2 * lam * lam * c * xs[kk]
            elif code == K.WARPED:
                f, fp, _ = K._warp_profile(int(p0), p1, p2, xs[0])
                for a in range(1, d):
                    dG[o + a, o + a, o] = 2 * f * fp
        return dG

    def christoffel_coords(self, x) -> np.ndarray:
        """Coordinate Christoffel symbols ``Gam[k, i, j]``."""
        return christoffel_from_jets(self.metric(x), self.metric_jacobian(x))

    # -- frame and connection -------------------------------------------
    def frame(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.closed_form:
            return K.block_geom_py(self.blocks, x)[0] if not USE_NUMBA else \
                K.block_geom_jit(self.blocks, x)[0]
        return frame_from_metric(self.metric(x))

    def frame_omega(self, x):
        """Return ``(F, W)``: frame columns and connection matrices ``W[m]``."""
        x = np.asarray(x, dtype=float)
        if self.closed_form:
            geo, par = self.kernel_args()
            F, W = geo(par, x)
            return np.asarray(F), np.asarray(W)
        return self._fd_frame_omega(x)

    def _fd_frame_omega(self, x):
        G = self.metric(x)
        F = frame_from_metric(G)
        Gam = christoffel_from_jets(G, fd_partials(self.metric, x, FD_STEPS[0]))
        dF = fd_partials(lambda y: frame_from_metric(self.metric(y)), x, FD_STEPS[0])
        n = self.dim
        W = np.empty((n, n, n))
        for m in range(n):
            v = F[:, m]
            nab = dF @ v + np.einsum("kij,i,jp->kp", Gam, v, F)
            W[m] = F.T @ G @ nab
        W = 0.5 * (W - np.transpose(W, (0, 2, 1)))
        return F, W

    def omega(self, x, u) -> np.ndarray:
        """Connection matrix ``Gamma(u)`` (antisymmetric) for frame components u."""
        _, W = self.frame_omega(x)
        return np.einsum("m,mli->li", np.asarray(u, dtype=float), W)

    # -- curvature -------------------------------------------------------
    def curvature_frame(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.closed_form:
            return self._fd_curvature(x)
        n = self.dim
        Rm = np.zeros((n, n, n, n))
        for code, d, o, p0, p1, p2, _ in self.blocks:
            d, o = int(d), int(o)
            sl = slice(o, o + d)
            Kp = self._pair_curvatures(code, d, p0, p1, p2, x[sl])
            if Kp is not None:
                Rm[sl, sl, sl, sl] = _pair_tensor(Kp)
        return Rm

    @staticmethod
    def _pair_curvatures(code, d, p0, p1, p2, xs, deriv: bool = False):
        if code == K.EUCLIDEAN:
            return None
        if code in (K.SPHERE, K.HYPERBOLIC):
            if deriv:
                return None
            k = (1.0 if code == K.SPHERE else -1.0) / (p0 * p0)
            return np.full((d, d), k)
        f, fp, fpp = K._warp_profile(int(p0), p1, p2, xs[0])
        fppp = {K.PROFILE_EXP: p2 ** 3 * p1 * math.exp(p2 * xs[0])}.get(int(p0), 0.0)
        phi = fp / f
        if deriv:
            k1 = -(fppp * f - fpp * fp) / (f * f)
            k2 = -2.0 * phi * (fpp * f - fp * fp) / (f * f)
        else:
            k1 = -fpp / f
            k2 = -phi * phi
        Kp = np.full((d, d), k2)
        Kp[0, :] = k1
        Kp[:, 0] = k1
        return Kp

    def _fd_curvature(self, x, rel=FD_STEPS[1]):
        F = frame_from_metric(self.metric(x))
        Gam_fn = self.christoffel_coords
        Gam = Gam_fn(x)
        dGam = fd_partials(Gam_fn, x, rel)  # dGam[k, i, j, a] = d_a Gam^k_ij
        Rc = (np.einsum("ljki->ijlk", dGam) - np.einsum("likj->ijlk", dGam)
              + np.einsum("lip,pjk->ijlk", Gam, Gam) - np.einsum("ljp,pik->ijlk", Gam, Gam))
        tmp = np.einsum("ai,bj,abpq->ijpq", F, F, Rc)
        Rm = np.einsum("lp,ijpq,qk->ijlk", np.linalg.inv(F), tmp, F)
        return _antisym_curv(Rm)

    def curvature_frame_derivative(self, x) -> np.ndarray:
        """Directional derivatives ``E_m(Rm)`` of the frame components, m last."""
        x = np.asarray(x, dtype=float)
        n = self.dim
        if not self.closed_form:
            F = self.frame(x)
            return np.stack([fd_directional(self._fd_curvature, x, F[:, m], FD_STEPS[2])
                             for m in range(n)], axis=-1)
        dR = np.zeros((n, n, n, n, n))
        for code, d, o, p0, p1, p2, _ in self.blocks:
            d, o = int(d), int(o)
            sl = slice(o, o + d)
            Kp = self._pair_curvatures(code, d, p0, p1, p2, x[sl], deriv=True)
            if Kp is not None:
                dR[sl, sl, sl, sl, o] = _pair_tensor(Kp)  # E_0 = d/dr in warped blocks
        return dR

    def nabla_curvature(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        _, W = self.frame_omega(x)
        return covariant_terms(self.curvature_frame(x), self.curvature_frame_derivative(x), W)

    def nabla2_curvature(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        F, W = self.frame_omega(x)
        rel = FD_STEPS[1] if self.closed_form else FD_STEPS[3]
        D = self.nabla_curvature(x)
        dD = np.stack([fd_directional(self.nabla_curvature, x, F[:, m], rel)
                       for m in range(self.dim)], axis=-1)
        return covariant_terms(D, dD, W)

    # -- serialization ---------------------------------------------------
    def to_json(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim, "params": _jsonable(self.params),
               "domain": self.domain.to_json()}
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, ManifoldSpec):
        return obj.to_json()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# catalog


def _block_row(code, d, p=(0.0, 0.0, 0.0, 0.0)):
    return np.array([[code, d, 0, *p]], dtype=float)


def euclidean(n: int, domain: Domain | None = None) -> ManifoldSpec:
    domain = domain or Domain.ball(np.zeros(n), 100.0)
    return ManifoldSpec("euclidean", n, {}, domain, True, True,
                        frozenset(range(1, n)), _block_row(K.EUCLIDEAN, n),
                        label=f"euclidean({n})")


def sphere(n: int, radius: float = 1.0, domain: Domain | None = None) -> ManifoldSpec:
    """Round sphere of radius r in the stereographic chart from the north pole."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    domain = domain or Domain.ball(np.zeros(n), 10.0 * radius)
    return ManifoldSpec("sphere", n, {"radius": float(radius)}, domain, n >= 2, True,
                        frozenset(range(1, n)), _block_row(K.SPHERE, n, (radius, 0, 0, 0)),
                        label=f"sphere({n},{radius:g})")


def hyperbolic(n: int, radius: float = 1.0, domain: Domain | None = None) -> ManifoldSpec:
    """Hyperbolic space of curvature -1/r^2 in the Poincare ball chart."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    domain = domain or Domain.ball(np.zeros(n), 0.95 * radius)
    if not all(p.kind == "ball" and np.linalg.norm(p.lo) + p.radius <= radius
               for p in domain.parts):
        raise ValueError("hyperbolic chart domain must lie inside the Poincare ball")
    return ManifoldSpec("hyperbolic", n, {"radius": float(radius)}, domain, True, True,
                        frozenset(range(1, n)), _block_row(K.HYPERBOLIC, n, (radius, 0, 0, 0)),
                        label=f"hyperbolic({n},{radius:g})")


_PROFILES = {"constant": K.PROFILE_CONST, "linear": K.PROFILE_LINEAR,
             "exponential": K.PROFILE_EXP}


def warped(fiber_dim: int, profile: str, coeffs, interval=(0.5, 3.0),
           fiber_extent: float = 10.0, totally_geodesic_dims=()) -> ManifoldSpec:
    """``dr^2 + f(r)^2 |dy|^2`` on ``interval x R^fiber_dim`` with a flat fiber.

    profile ``constant``: f = c0; ``linear``: f = c0 r + c1;
    ``exponential``: f = c0 exp(c1 r).
    """
    if profile not in _PROFILES:
        raise ValueError(f"unknown warping profile {profile!r}")
    c = [float(v) for v in coeffs] + [0.0] * (2 - len(coeffs))
    a, b = float(interval[0]), float(interval[1])
    rs = np.linspace(a, b, 33)
    fv = [K._warp_profile(_PROFILES[profile], c[0], c[1], r)[0] for r in rs]
    if min(fv) <= 0:
        raise ValueError("warping function must be positive on the interval")
    n = fiber_dim + 1
    lo = [a] + [-fiber_extent] * fiber_dim
    hi = [b] + [fiber_extent] * fiber_dim
    return ManifoldSpec("warped", n,
                        {"fiber_dim": fiber_dim, "profile": profile, "coeffs": c[:2],
                         "interval": [a, b], "fiber_extent": fiber_extent,
                         "totally_geodesic_dims": sorted(totally_geodesic_dims)},
                        Domain.box(lo, hi), True, False, frozenset(totally_geodesic_dims),
                        _block_row(K.WARPED, n, (_PROFILES[profile], c[0], c[1], 0)),
                        label=f"warped({n},{profile})")


def product(*factors: ManifoldSpec) -> ManifoldSpec:
    if len(factors) < 2:
        raise ValueError("product needs at least two factors")
    n = sum(f.dim for f in factors)
    domain = Domain.product(*[f.domain for f in factors])
    blocks = None
    if all(f.closed_form for f in factors):
        rows, off = [], 0
        for f in factors:
            b = f.blocks.copy()
            b[:, 2] += off
            rows.append(b)
            off += f.dim
        blocks = np.vstack(rows)
    metric_fn = None
    if blocks is None:
        def metric_fn(x, _fs=factors):
            G = np.zeros((n, n))
            o = 0
            for f in _fs:
                G[o:o + f.dim, o:o + f.dim] = f.metric(x[o:o + f.dim])
                o += f.dim
            return G
    # totally geodesic products of complete totally geodesic factors
    dims = {0}
    for f in factors:
        opts = set(f.totally_geodesic_dims) | {0}
        if f.complete:
            opts.add(f.dim)
        dims = {a + b for a in dims for b in opts}
    tg = frozenset(d for d in dims if 0 < d < n)
    return ManifoldSpec("product", n, {"factors": list(factors)}, domain,
                        all(f.simply_connected for f in factors),
                        all(f.complete for f in factors), tg, blocks, metric_fn,
                        label=" x ".join(str(f) for f in factors))


def custom_metric(metric_fn: Callable, n: int, domain: Domain | None = None, *,
                  params: dict | None = None, simply_connected: bool = True,
                  totally_geodesic_dims=(), label: str = "") -> ManifoldSpec:
    """Arbitrary metric ``x -> G(x)``; geometry by nested finite differences."""
    domain = domain or Domain.ball(np.zeros(n), 2.0)
    return ManifoldSpec("custom_metric", n, dict(params or {}), domain, simply_connected, False,
                        frozenset(totally_geodesic_dims), None, metric_fn,
                        label=label or f"custom_metric({n})")


def perturbed(n: int, amplitude: float = 0.2, seed: int = 0, modes: int = 3,
              radius: float = 1.5) -> ManifoldSpec:
    fn = PerturbedMetric(n, amplitude, seed, modes)
    return custom_metric(fn, n, Domain.ball(np.zeros(n), radius), params=fn.to_json(),
                         label=f"perturbed({n},seed={seed})")


def from_json(obj: dict) -> ManifoldSpec:
    """Build a manifold from ``{kind, dim, params, domain}``."""
    kind = obj.get("kind")
    if kind not in KINDS:
        raise ValueError(f"unknown manifold kind {kind!r}")
    params = dict(obj.get("params", {}))
    n = obj.get("dim")
    dom = obj.get("domain")
    if kind == "product":
        fs = [from_json(f) for f in params["factors"]]
        M = product(*fs)
        if n is not None and n != M.dim:
            raise ValueError("product dimension mismatch")
        return M
    if not isinstance(n, int) or n < 1:
        raise ValueError("dim must be a positive integer")
    domain = Domain.from_json(dom, n) if dom is not None else None
    if kind == "euclidean":
        return euclidean(n, domain)
    if kind == "sphere":
        return sphere(n, params.get("radius", 1.0), domain)
    if kind == "hyperbolic":
        return hyperbolic(n, params.get("radius", 1.0), domain)
    if kind == "warped":
        M = warped(n - 1, params["profile"], params["coeffs"], params.get("interval", (0.5, 3.0)),
                   params.get("fiber_extent", 10.0), params.get("totally_geodesic_dims", ()))
        return M
    fam = params.get("family")
    if fam not in CUSTOM_FAMILIES:
        raise ValueError(f"unknown custom_metric family {fam!r}")
    fn = PerturbedMetric(n, float(params.get("amplitude", 0.2)), int(params.get("seed", 0)),
                         int(params.get("modes", 3)))
    return custom_metric(fn, n, domain or Domain.ball(np.zeros(n), 1.5), params=fn.to_json(),
                         simply_connected=bool(params.get("simply_connected", True)),
                         totally_geodesic_dims=params.get("totally_geodesic_dims", ()),
                         label=f"perturbed({n},seed={fn.seed})")


# ---------------------------------------------------------------------------
# module-level operations


@dataclass(frozen=True)
class CurvatureTensor:
    """Frame components ``comps[i, j, l, k] = g(R(E_i, E_j) E_k, E_l)``."""

    comps: np.ndarray
    base: np.ndarray

    def endo(self, X, Y) -> np.ndarray:
        return np.einsum("ijlk,i,j->lk", self.comps, X, Y)

    def apply(self, X, Y, Z) -> np.ndarray:
        return self.endo(X, Y) @ np.asarray(Z, dtype=float)

    def sectional(self, X, Y) -> float:
        return _sectional(self.comps, X, Y)


def metric(M: ManifoldSpec, x) -> np.ndarray:
    return M.metric(M.check_point(x))


def orthonormal_frame(M: ManifoldSpec, x) -> np.ndarray:
    return M.frame(M.check_point(x))


def christoffel_frame(M: ManifoldSpec, x) -> Callable[[np.ndarray], np.ndarray]:
    """Return the linear map ``u -> Gamma(u)`` at x."""
    _, W = M.frame_omega(M.check_point(x))
    return lambda u: np.einsum("m,mli->li", np.asarray(u, dtype=float), W)


def curvature(M: ManifoldSpec, x) -> CurvatureTensor:
    x = M.check_point(x)
    return CurvatureTensor(M.curvature_frame(x), x)


def _sectional(Rm, X, Y) -> float:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    den = (X @ X) * (Y @ Y) - (X @ Y) ** 2
    if den <= 1e-12 * (X @ X) * (Y @ Y) or den == 0.0:
        raise ValueError("sectional curvature needs linearly independent X, Y")
    return float(np.einsum("ijlk,i,j,l,k->", Rm, X, Y, X, Y) / den)


def sectional(M: ManifoldSpec, x, X, Y) -> float:
    return _sectional(M.curvature_frame(M.check_point(x)), X, Y)


def curvature_cov(M: ManifoldSpec, x, k: int) -> np.ndarray:
    x = M.check_point(x)
    if k == 0:
        return M.curvature_frame(x)
    if k == 1:
        return M.nabla_curvature(x)
    if k == 2:
        return M.nabla2_curvature(x)
    raise ValueError("curvature_cov supports k in {0, 1, 2}")


# ---------------------------------------------------------------------------
# geodesics and transport


@dataclass(frozen=True)
class GeodesicResult:
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray  # frame components
    transports: np.ndarray  # transported vectors, frame components
    exit_time: float | None = None


def _geo_loop(M: ManifoldSpec):
    return K.geodesic_loop_jit if M.use_jit() else K.geodesic_loop_py


def geodesic_path(M: ManifoldSpec, x, v, T: float, step: float = 1e-3, P0=None,
                  strict: bool = True) -> GeodesicResult:
    """Geodesic with initial frame velocity v, transporting the columns of P0."""
    x = M.check_point(x)
    v = np.asarray(v, dtype=float)
    if step <= 0 or T < 0:
        raise ValueError("need step > 0 and T >= 0")
    nsteps = max(1, int(math.ceil(T / step - 1e-9))) if T > 0 else 0
    h = T / nsteps if nsteps else 0.0
    P0 = np.eye(M.dim) if P0 is None else np.asarray(P0, dtype=float).reshape(M.dim, -1)
    geo, par = M.kernel_args()
    dom, lo, hi = M.domain.arrays()
    X, U, PS, status, done = _geo_loop(M)(geo, par, dom, lo, hi, x, v, np.ascontiguousarray(P0),
                                          h, nsteps)
    times = np.arange(nsteps + 1) * h
    exit_time = None
    if status:
        exit_time = float((done + 1) * h)
        if strict:
            raise DomainError(f"geodesic left the chart domain of {M} at t={exit_time:.6g}",
                              which="M", time=exit_time, point=X[done])
        X, U, PS, times = X[:done + 1], U[:done + 1], PS[:done + 1], times[:done + 1]
    return GeodesicResult(times, X, U, PS, exit_time)


def geodesic_flow(M: ManifoldSpec, x, v, T: float, step: float = 1e-3):
    """Endpoint ``(x(T), v(T))`` of the geodesic; v in frame components."""
    r = geodesic_path(M, x, v, T, step)
    return r.points[-1], r.velocities[-1]


def grid_from_breaks(breaks, step: float) -> np.ndarray:
    """Grid containing every break, each interval split into equal steps <= step."""
    if step <= 0:
        raise ValueError("step must be positive")
    breaks = np.asarray(breaks, dtype=float)
    ts = [0.0]
    for a, b in zip(breaks[:-1], breaks[1:]):
        m = max(1, int(math.ceil((b - a) / step - 1e-9)))
        ts.extend(a + (b - a) * np.arange(1, m + 1) / m)
    ts = np.array(ts)
    ts[-1] = breaks[-1]
    return ts


class PathSpec:
    """A curve ``t -> (x(t), x'(t))`` on [0, T] with optional corner breaks.

    ``fn(t, side)`` returns the point and coordinate velocity; ``side`` = +1
    selects the right limit and -1 the left limit at a break.
    """

    def __init__(self, fn: Callable, breaks, dim: int):
        self.fn = fn
        self.breaks = np.asarray(breaks, dtype=float)
        if self.breaks[0] != 0.0 or np.any(np.diff(self.breaks) <= 0):
            raise ValueError("path breaks must start at 0 and be strictly increasing")
        self.dim = dim

    @property
    def T(self) -> float:
        return float(self.breaks[-1])

    def __call__(self, t: float, side: int = 1):
        x, v = self.fn(float(t), side)
        return np.asarray(x, dtype=float), np.asarray(v, dtype=float)

    def grid(self, step: float):
        return grid_from_breaks(self.breaks, step)

    def stages(self, step: float, ts=None):
        """Grid times, step sizes and stage positions/velocities, shape (N, 3, n)."""
        ts = self.grid(step) if ts is None else np.asarray(ts, dtype=float)
        hs = np.diff(ts)
        N = hs.size
        XS = np.empty((N, 3, self.dim))
        VS = np.empty((N, 3, self.dim))
        for s in range(N):
            for j, (t, side) in enumerate(((ts[s], 1), (ts[s] + 0.5 * hs[s], 1), (ts[s + 1], -1))):
                XS[s, j], VS[s, j] = self(t, side)
        return ts, hs, XS, VS

    # constructors -----------------------------------------------------
    @staticmethod
    def from_samples(times, points, velocities=None) -> "PathSpec":
        times = np.asarray(times, dtype=float)
        points = np.asarray(points, dtype=float)
        if times[0] != 0.0:
            raise ValueError("sample times must start at 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if velocities is None:
            sp = CubicSpline(times, points, axis=0)
        else:
            sp = CubicHermiteSpline(times, points, np.asarray(velocities, dtype=float), axis=0)
        dsp = sp.derivative()
        return PathSpec(lambda t, side: (sp(t), dsp(t)), [0.0, times[-1]], points.shape[1])

    @staticmethod
    def from_hermite_steps(times, points, v_start, v_end) -> "PathSpec":
        """Cubic Hermite on each step with one-sided end velocities, so kinks at the
        samples are represented exactly: ``v_start[k]`` leaves ``times[k]`` and
        ``v_end[k]`` arrives at ``times[k + 1]``."""
        times = np.asarray(times, dtype=float)
        P = np.asarray(points, dtype=float)
        V0 = np.asarray(v_start, dtype=float)
        V1 = np.asarray(v_end, dtype=float)
        N = times.size - 1
        if V0.shape[0] != N or V1.shape[0] != N:
            raise ValueError("need one start and one end velocity per step")

        def fn(t, side):
            i = int(np.searchsorted(times, t, side="right" if side > 0 else "left")) - 1
            i = min(max(i, 0), N - 1)
            h = times[i + 1] - times[i]
            s = (t - times[i]) / h
            m0, m1 = h * V0[i], h * V1[i]
            s2, s3 = s * s, s * s * s
            x = ((2 * s3 - 3 * s2 + 1) * P[i] + (s3 - 2 * s2 + s) * m0
                 + (-2 * s3 + 3 * s2) * P[i + 1] + (s3 - s2) * m1)
            dx = ((6 * s2 - 6 * s) * P[i] + (3 * s2 - 4 * s + 1) * m0
                  + (-6 * s2 + 6 * s) * P[i + 1] + (3 * s2 - 2 * s) * m1) / h
            return x, dx

        return PathSpec(fn, times, P.shape[1])

    @staticmethod
    def from_function(fn: Callable, T: float, dim: int) -> "PathSpec":
        """``fn(t) -> (x, x')`` smooth on [0, T]."""
        return PathSpec(lambda t, side: fn(t), [0.0, T], dim)

    @staticmethod
    def piecewise(pieces, dim: int) -> "PathSpec":
        """Concatenate ``(duration, fn)`` pieces with ``fn`` in local time."""
        durs = [float(d) for d, _ in pieces]
        breaks = np.concatenate([[0.0], np.cumsum(durs)])
        fns = [f for _, f in pieces]

        def fn(t, side):
            i = int(np.searchsorted(breaks, t, side="right" if side > 0 else "left")) - 1
            i = min(max(i, 0), len(fns) - 1)
            return fns[i](t - breaks[i])

        return PathSpec(fn, breaks, dim)

    @staticmethod
    def constant(x, T: float) -> "PathSpec":
        x = np.asarray(x, dtype=float)
        return PathSpec(lambda t, side: (x, np.zeros_like(x)), [0.0, T], x.size)

    def mapped(self, iso: "Isometry") -> "PathSpec":
        """The image curve ``iso o gamma``."""
        def fn(t, side):
            x, v = self(t, side)
            return iso.apply(x), iso.jacobian(x) @ v
        return PathSpec(fn, self.breaks, self.dim)


def _tr_loop(M):
    return K.transport_loop_jit if M.use_jit() else K.transport_loop_py


@dataclass(frozen=True)
class TransportResult:
    times: np.ndarray
    transports: np.ndarray  # (N+1, n, k) transported vectors in frame components
    development: np.ndarray  # (N+1, n) development curve (when P0 = I)
    points: np.ndarray


def frame_transport(M: ManifoldSpec, path: PathSpec, P0=None, step: float = 1e-3) -> TransportResult:
    """Transport the columns of P0 (default: the frame) along ``path``."""
    ts, hs, XS, VS = path.stages(step)
    for s in range(XS.shape[0]):
        for j in range(3):
            if not M.domain.contains(XS[s, j]):
                raise DomainError(f"path leaves the chart domain of {M} near t={ts[s]:.6g}",
                                  which="M", time=float(ts[s]), point=XS[s, j])
    P0 = np.eye(M.dim) if P0 is None else np.asarray(P0, dtype=float).reshape(M.dim, -1)
    geo, par = M.kernel_args()
    PS, C = _tr_loop(M)(geo, par, XS, VS, np.ascontiguousarray(P0), hs)
    pts = np.vstack([XS[:, 0], XS[-1:, 2]])
    return TransportResult(ts, PS, C, pts)


def parallel_transport(M: ManifoldSpec, path: PathSpec, v0, step: float = 1e-3) -> np.ndarray:
    """Transport the frame-component vector v0 from path(0) to path(T)."""
    r = frame_transport(M, path, np.asarray(v0, dtype=float).reshape(-1, 1), step)
    return r.transports[-1][:, 0]


def develop(M: ManifoldSpec, path: PathSpec, step: float = 1e-3):
    """Development ``t -> int_0^t P_s^0 gamma'(s) ds`` in frame components at path(0)."""
    r = frame_transport(M, path, None, step)
    return r.times, r.development


def antidevelop(M: ManifoldSpec, y0, curve: PathSpec, step: float = 1e-3,
                strict: bool = True) -> PathSpec:
    """Curve on M whose development is ``curve`` (a path in R^n, frame components at y0)."""
    y0 = M.check_point(y0)
    ts, hs, _, CD = curve.stages(step)
    if not np.allclose(hs, hs[0], rtol=1e-12, atol=0):
        raise ValueError("antidevelop needs a curve without interior breaks")
    geo, par = M.kernel_args()
    dom, lo, hi = M.domain.arrays()
    loop = K.antidevelop_loop_jit if M.use_jit() else K.antidevelop_loop_py
    X, V, _, status, done = loop(geo, par, dom, lo, hi, y0, CD, hs[0])
    if status:
        if strict:
            raise DomainError(f"anti-development left the chart domain of {M}",
                              which="M", time=float(ts[done + 1]), point=X[done])
        X, V, ts = X[:done + 1], V[:done + 1], ts[:done + 1]
    return PathSpec.from_samples(ts, X, V)


# ---------------------------------------------------------------------------
# isometries


def _stereo(p, r):
    n = p.size - 1
    return r * p[:n] / (r - p[n])


def _stereo_inv(x, r):
    s = x @ x + r * r
    return np.concatenate([2 * r * r * x / s, [r * (x @ x - r * r) / s]])


def _stereo_jac(p, r):
    n = p.size - 1
    d = r - p[n]
    J = np.zeros((n, n + 1))
    J[:, :n] = (r / d) * np.eye(n)
    J[:, n] = r * p[:n] / (d * d)
    return J


def _stereo_inv_jac(x, r):
    n = x.size
    s = x @ x + r * r
    J = np.zeros((n + 1, n))
    J[:n] = 2 * r * r * (np.eye(n) / s - 2 * np.outer(x, x) / (s * s))
    J[n] = 4 * r ** 3 * x / (s * s)
    return J


@dataclass(frozen=True)
class Isometry:
    """Catalog isometries: identity, rigid motions, sphere and ball rotations, products."""

    kind: str
    matrix: np.ndarray | None = None
    shift: np.ndarray | None = None
    radius: float = 1.0
    parts: tuple = ()

    @staticmethod
    def identity() -> "Isometry":
        return Isometry("identity")

    @staticmethod
    def rigid(Q, c) -> "Isometry":
        Q = np.asarray(Q, dtype=float)
        if not np.allclose(Q.T @ Q, np.eye(Q.shape[0]), atol=1e-12) or np.linalg.det(Q) <= 0:
            raise ValueError("rigid motion needs a rotation matrix")
        return Isometry("rigid", Q, np.asarray(c, dtype=float))

    @staticmethod
    def translation(c) -> "Isometry":
        c = np.asarray(c, dtype=float)
        return Isometry("rigid", np.eye(c.size), c)

    @staticmethod
    def sphere_rotation(O, radius: float = 1.0) -> "Isometry":
        O = np.asarray(O, dtype=float)
        if not np.allclose(O.T @ O, np.eye(O.shape[0]), atol=1e-12) or np.linalg.det(O) <= 0:
            raise ValueError("sphere rotation needs a matrix in SO(n+1)")
        return Isometry("sphere", O, None, float(radius))

    @staticmethod
    def ball_rotation(Q) -> "Isometry":
        Q = np.asarray(Q, dtype=float)
        return Isometry("ball", Q)

    @staticmethod
    def product(*parts: "Isometry", dims) -> "Isometry":
        return Isometry("product", None, np.asarray(dims, dtype=int), 1.0, tuple(parts))

    def inverse(self) -> "Isometry":
        if self.kind == "identity":
            return self
        if self.kind == "rigid":
            return Isometry("rigid", self.matrix.T, -self.matrix.T @ self.shift)
        if self.kind in ("sphere", "ball"):
            return Isometry(self.kind, self.matrix.T, None, self.radius)
        return Isometry("product", None, self.shift, 1.0, tuple(p.inverse() for p in self.parts))

    def _split(self, x):
        offs = np.concatenate([[0], np.cumsum(self.shift)])
        return [x[offs[i]:offs[i + 1]] for i in range(len(self.parts))]

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "rigid":
            return self.matrix @ x + self.shift
        if self.kind == "ball":
            return self.matrix @ x
        if self.kind == "sphere":
            p = self.matrix @ _stereo_inv(x, self.radius)
            if self.radius - p[-1] <= 1e-12 * self.radius:
                raise DomainError("sphere rotation maps the point to the chart pole", point=x)
            return _stereo(p, self.radius)
        return np.concatenate([f.apply(xs) for f, xs in zip(self.parts, self._split(x))])

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return np.eye(x.size)
        if self.kind in ("rigid", "ball"):
            return self.matrix.copy()
        if self.kind == "sphere":
            r = self.radius
            p = self.matrix @ _stereo_inv(x, r)
            if r - p[-1] <= 1e-12 * r:
                raise DomainError("sphere rotation maps the point to the chart pole", point=x)
            return _stereo_jac(p, r) @ self.matrix @ _stereo_inv_jac(x, r)
        from scipy.linalg import block_diag
        return block_diag(*[f.jacobian(xs) for f, xs in zip(self.parts, self._split(x))])


def isometry_frame_matrix(M: ManifoldSpec, iso: Isometry, y) -> np.ndarray:
    """Matrix of ``iso_*: T_y M -> T_{iso(y)} M`` in the orthonormal frames."""
    y = np.asarray(y, dtype=float)
    return np.linalg.solve(M.frame(iso.apply(y)), iso.jacobian(y) @ M.frame(y))
