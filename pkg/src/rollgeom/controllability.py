"""Controllability diagnostics for the no-spin and the rolling system."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import logm

from .domain import DomainError
from .manifolds import ManifoldSpec, PathSpec, frame_transport, geodesic_path
from .rol import (LRNuField, RolField, RollingLift, StateGeometry, flow_bracket_oracle,
                  lr_bracket, lr_nu_bracket, nu_nu_bracket)
from .state import (RANK_TOL, RollingState, TangentTriple, dim_Q, i_nnhat,
                    random_partial_isometry, random_state, transpose_dual, vertical_basis,
                    vertical_coords, vertical_dim)

HOLONOMY_FLOOR = 1e-8
AUDIT_TOL = 1e-4


# ---------------------------------------------------------------------------
# holonomy


def _so_vec(K: np.ndarray) -> np.ndarray:
    n = K.shape[0]
    iu = np.triu_indices(n, 1)
    return np.sqrt(2.0) * K[iu]


def _so_mat(v: np.ndarray, n: int) -> np.ndarray:
    K = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    K[iu] = v / np.sqrt(2.0)
    return K - K.T


def _greedy_span(vecs, tol_rel=RANK_TOL, floor=HOLONOMY_FLOOR):
    """Greedy Gram-Schmidt; returns (orthonormal basis rows, indices kept)."""
    if not vecs:
        return [], []
    scale = max(float(np.linalg.norm(v)) for v in vecs)
    thr = max(floor, tol_rel * scale, 1e-6 * scale)
    basis, kept = [], []
    for k, v in enumerate(vecs):
        w = np.array(v, dtype=float)
        for _ in range(2):
            for b in basis:
                w = w - (b @ w) * b
        nw = float(np.linalg.norm(w))
        if nw > thr:
            basis.append(w / nw)
            kept.append(k)
    return basis, kept


@dataclass
class HolonomyAlgebra:
    x: np.ndarray
    basis: list  # orthonormal so(n) matrices
    provenance: list
    n_samples: int
    skipped: int = 0

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def n(self) -> int:
        return self.x.size

    def residual(self, K: np.ndarray) -> float:
        """Frobenius distance of K from the span."""
        K = np.asarray(K, dtype=float)
        R = K.copy()
        for B in self.basis:
            R = R - np.sum(B * R) * B
        return float(np.linalg.norm(R))

    def closure_defect(self) -> float:
        worst = 0.0
        for a in self.basis:
            for b in self.basis:
                worst = max(worst, self.residual(a @ b - b @ a))
        return worst

    def to_json(self) -> dict:
        return {"x": self.x.tolist(), "dim": self.dim, "n_samples": self.n_samples,
                "skipped": self.skipped,
                "basis": [np.round(B, 12).tolist() for B in self.basis],
                "provenance": self.provenance}


def holonomy_algebra(M: ManifoldSpec, x, n_samples: int = 200, seed: int = 0,
                     reach: float = 1.0, step: float = 1e-2) -> HolonomyAlgebra:
    """Span of curvature endomorphisms transported back to x along geodesics, closed
    under brackets.

    Sample k draws a unit direction and a length in [0, reach) from one seeded
    stream, so the first m samples of a larger run coincide with an m-sample run.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = M.check_point(x)
    n = M.dim
    rng = np.random.default_rng(seed)
    iu = list(zip(*np.triu_indices(n, 1)))
    gens, prov = [], []

    def add(Rm, P, tag):
        for i, j in iu:
            gens.append(_so_vec(P.T @ Rm[i, j] @ P))
            prov.append(f"{tag}:R(E{i},E{j})")

    add(M.curvature_frame(x), np.eye(n), "base")
    skipped = 0
    for k in range(n_samples):
        d = rng.normal(size=n)
        d /= np.linalg.norm(d)
        t = reach * rng.uniform()
        try:
            g = geodesic_path(M, x, t * d, 1.0, step)
        except DomainError:
            skipped += 1
            continue
        P = g.transports[-1]
        add(M.curvature_frame(g.points[-1]), P, f"geodesic[{k}]")
    if n < 2:
        return HolonomyAlgebra(x, [], [], n_samples, skipped)
    basis, kept = _greedy_span(gens)
    prov = [prov[k] for k in kept]
    # bracket closure
    while True:
        mats = [_so_mat(b, n) for b in basis]
        extra = [_so_vec(a @ b - b @ a) for i, a in enumerate(mats) for b in mats[i + 1:]]
        new, kept2 = _greedy_span(basis + extra, floor=1e-10)
        if len(new) == len(basis):
            break
        prov = prov + ["bracket"] * (len(new) - len(basis))
        basis = new
    return HolonomyAlgebra(x, [_so_mat(b, n) for b in basis], prov, n_samples, skipped)


def loop_transport(M: ManifoldSpec, x, d1, d2, eps: float, step: float = 1e-4) -> np.ndarray:
    """Frame transport around the coordinate parallelogram spanned by eps*d1, eps*d2."""
    x = np.asarray(x, dtype=float)
    F = M.frame(x)
    a, b = eps * (F @ np.asarray(d1, float)), eps * (F @ np.asarray(d2, float))
    corners = [x, x + a, x + a + b, x + b, x]
    pieces = [(1.0, lambda t, p=p, q=q: (p + t * (q - p), q - p))
              for p, q in zip(corners[:-1], corners[1:])]
    path = PathSpec.piecewise(pieces, M.dim)
    return frame_transport(M, path, step=step).transports[-1]


def loop_generator(M: ManifoldSpec, x, d1, d2, eps: float = 1e-2) -> np.ndarray:
    """log of the small-loop transport scaled by 1/eps^2; approximates an element of the
    holonomy algebra at x."""
    P = loop_transport(M, x, d1, d2, eps)
    L = np.real(logm(P)) / eps ** 2
    return 0.5 * (L - L.T)


# ---------------------------------------------------------------------------
# no-spin system


def ns_fiber_span(q: RollingState, h: HolonomyAlgebra, h_hat: HolonomyAlgebra) -> list:
    """Generators k^ A - A k of the fiber tangent directions at q."""
    out = [Kh @ q.A for Kh in h_hat.basis] + [-q.A @ Kk for Kk in h.basis]
    return out


def ns_fiber_tangent_dim(q: RollingState, h: HolonomyAlgebra, h_hat: HolonomyAlgebra,
                         tol: float = RANK_TOL) -> int:
    if h.n != q.n or h_hat.n != q.n_hat:
        raise ValueError("holonomy algebras do not match the state dimensions")
    gens = ns_fiber_span(q, h, h_hat)
    if not gens:
        return 0
    V = np.array([vertical_coords(q, B) for B in gens])
    if V.size == 0:
        return 0
    s = np.linalg.svd(V, compute_uv=False)
    if s[0] <= HOLONOMY_FLOOR:
        return 0
    return int(np.sum(s > tol * s[0]))


@dataclass
class NSVerdict:
    verdict: bool | None
    fiber_dim: int
    vertical_dim: int
    holonomy_dims: tuple
    generators: list
    probe_dims: list
    probe_all_full: bool
    note: str = ""

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "fiber_dim": self.fiber_dim,
                "vertical_dim": self.vertical_dim, "holonomy_dims": list(self.holonomy_dims),
                "generators": [np.round(B, 12).tolist() for B in self.generators],
                "probe_dims": self.probe_dims, "probe_all_full": self.probe_all_full,
                "note": self.note}


def ns_controllable(M: ManifoldSpec, M_hat: ManifoldSpec, n_samples: int = 200, seed: int = 0,
                    n_probe: int = 10, x=None, x_hat=None) -> NSVerdict:
    """No-spin controllability from holonomy algebras at A = I_{n,n^}.

    The verdict requires both manifolds to be declared simply connected; otherwise
    only the random-A probe is reported.
    """
    x = M.domain.center() if x is None else np.asarray(x, float)
    x_hat = M_hat.domain.center() if x_hat is None else np.asarray(x_hat, float)
    h = holonomy_algebra(M, x, n_samples, seed)
    hh = holonomy_algebra(M_hat, x_hat, n_samples, seed + 1)
    n, nh = M.dim, M_hat.dim
    vd = vertical_dim(n, nh)
    q = RollingState(M, M_hat, x, x_hat, i_nnhat(n, nh))
    fd = ns_fiber_tangent_dim(q, h, hh)
    rng = np.random.default_rng(seed + 2)
    probe = []
    for _ in range(n_probe):
        qa = q.replace(A=random_partial_isometry(rng, n, nh))
        probe.append(ns_fiber_tangent_dim(qa, h, hh))
    full = all(p == vd for p in probe)
    if M.simply_connected and M_hat.simply_connected:
        verdict, note = fd == vd, ""
    else:
        verdict, note = None, "simple connectedness not declared; probe only"
    if not full and verdict:
        note = "probe found A with a smaller fiber span"
    return NSVerdict(verdict, fd, vd, (h.dim, hh.dim), ns_fiber_span(q, h, hh), probe, full,
                     note)


# ---------------------------------------------------------------------------
# rolling system: Lie span


@dataclass
class LieSpanReport:
    q: RollingState
    depth_reached: int
    rank_per_depth: list
    basis: list
    verdict: str
    tol: float
    singular_values: list
    generators: list
    audit: dict = field(default_factory=dict)
    early_stop: bool = False

    @property
    def rank(self) -> int:
        return self.rank_per_depth[-1]

    @property
    def dim_Q(self) -> int:
        return dim_Q(self.q.n, self.q.n_hat)

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "rank_per_depth": self.rank_per_depth,
                "depth_reached": self.depth_reached, "dim_Q": self.dim_Q,
                "singular_values": [float(f"{s:.10e}") for s in self.singular_values],
                "generators": self.generators, "tolerance": self.tol,
                "early_stop": self.early_stop, "audit": self.audit,
                "state": self.q.to_json()}


def _rank(vecs, tol):
    if not vecs:
        return 0, np.zeros(0), np.zeros((0, 0))
    _, s, Vt = np.linalg.svd(np.array(vecs), full_matrices=False)
    if s[0] == 0:
        return 0, s, Vt
    return int(np.sum(s > tol * s[0])), s, Vt


def _triple_from_vec(q: RollingState, v: np.ndarray) -> TangentTriple:
    n, nh = q.n, q.n_hat
    Es = vertical_basis(q)
    B = np.zeros((nh, n))
    for c, E in zip(v[n + nh:], Es):
        B = B + c * E
    return TangentTriple(v[:n].copy(), v[n:n + nh].copy(), B)


def larc(M: ManifoldSpec, M_hat: ManifoldSpec, q: RollingState, depth: int = 3,
         h: float = 1e-3, audit_fraction: float = 0.1, seed: int = 0,
         tol: float = RANK_TOL, stop_early: bool = True) -> LieSpanReport:
    """Rank of the Lie span of the rolling distribution at q, by bracket depth.

    depth 1: L_R(E_i); depth 2: [L_R(E_i), L_R(E_j)]; depth 3: [L_R(E_k), nu(Rol(E_i, E_j))];
    depth 4: [nu(Rol), nu(Rol)] plus flow-oracle brackets [L_R(E_m), depth-3 fields].
    A seeded fraction of the analytic insertions is checked against the flow oracle.
    """
    if depth not in (1, 2, 3, 4):
        raise ValueError("depth must be in 1..4")
    if q.M is not M or q.M_hat is not M_hat:
        q = RollingState(M, M_hat, q.x, q.x_hat, q.A)
    n, nh = M.dim, M_hat.dim
    dq = dim_Q(n, nh)
    rng = np.random.default_rng(seed)
    cache = {}
    I = np.eye(n)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    vecs, labels, ranks = [], [], []
    audits = {"checked": 0, "max_error": 0.0, "failed": 0, "tolerance": AUDIT_TOL}

    def audit(items, oracle):
        k = len(items)
        if k == 0 or audit_fraction <= 0:
            return items
        m = max(1, int(math.ceil(audit_fraction * k)))
        idx = set(rng.choice(k, size=min(m, k), replace=False).tolist())
        out = []
        for a, (lab, t, args) in enumerate(items):
            if a in idx:
                o = oracle(*args)
                err = (o - t).max_abs()
                audits["checked"] += 1
                audits["max_error"] = max(audits["max_error"], float(err))
                if err > AUDIT_TOL:
                    audits["failed"] += 1
                    t = o
            out.append((lab, t, args))
        return out

    def insert(items):
        for lab, t, _ in items:
            vecs.append(t.vec(q))
            labels.append(lab)
        r, s, Vt = _rank(vecs, tol)
        ranks.append(r)
        return r, s, Vt

    def lr(i):
        return RollingLift(I[i])

    # depth 1
    items = [(f"L_R(E{i})", TangentTriple(I[i], q.A @ I[i], np.zeros((nh, n))), None)
             for i in range(n)]
    r, s, Vt = insert(items)
    d_done = 1
    early = False
    for d in range(2, depth + 1):
        if stop_early and r == dq:
            early = True
            break
        if d == 2:
            items = [(f"[L_R(E{i}),L_R(E{j})]", lr_bracket(q, I[i], I[j], "frame", cache), (i, j))
                     for i, j in pairs]
            items = audit(items, lambda i, j: flow_bracket_oracle(q, lr(i), lr(j), h))
        elif d == 3:
            items = [(f"[L_R(E{k}),nu(Rol(E{i},E{j}))]",
                      lr_nu_bracket(q, I[k], I[i], I[j], "frame", cache), (k, i, j))
                     for k in range(n) for i, j in pairs]
            items = audit(items, lambda k, i, j: flow_bracket_oracle(
                q, lr(k), RolField(I[i], I[j]), h))
        else:
            items = [(f"[nu(Rol(E{i},E{j})),nu(Rol(E{k},E{l}))]",
                      nu_nu_bracket(q, I[i], I[j], I[k], I[l], cache), (i, j, k, l))
                     for a, (i, j) in enumerate(pairs) for (k, l) in pairs[a + 1:]]
            items = audit(items, lambda i, j, k, l: flow_bracket_oracle(
                q, RolField(I[i], I[j]), RolField(I[k], I[l]), h))
            items += [(f"[L_R(E{m}),[L_R(E{k}),nu(Rol(E{i},E{j}))]]",
                       flow_bracket_oracle(q, lr(m), LRNuField(I[k], I[i], I[j]), h), None)
                      for m in range(n) for k in range(n) for i, j in pairs]
        r, s, Vt = insert(items)
        d_done = d
    if early:
        ranks += [r] * (depth - d_done)
    basis = [_triple_from_vec(q, v) for v in Vt[:r]]
    return LieSpanReport(q, d_done, ranks, basis, "full_rank" if r == dq else "rank_deficient",
                         tol, [float(v) for v in s], labels, audits, early)


# ---------------------------------------------------------------------------
# rolling curvature scans and predicates


def rol_scan(M: ManifoldSpec, M_hat: ManifoldSpec, n_states: int = 100, seed: int = 0,
             dual: bool = False, shrink: float = 0.5) -> dict:
    """Statistics of the Frobenius norm of Rol(E_i, E_j) over seeded random states."""
    rng = np.random.default_rng(seed)
    n = M.dim
    norms = []
    for _ in range(n_states):
        q = random_state(M, M_hat, rng, shrink)
        if dual:
            q = transpose_dual(q)
        sg = StateGeometry.of(q)
        m = q.n
        I = np.eye(m)
        tot = sum(float(np.sum(sg.rol(I[i], I[j]) ** 2))
                  for i in range(m) for j in range(i + 1, m))
        norms.append(math.sqrt(tot))
    a = np.array(norms)
    return {"n_states": n_states, "seed": seed, "dual": dual, "n": n, "n_hat": M_hat.dim,
            "max": float(a.max()), "min": float(a.min()), "mean": float(a.mean()),
            "median": float(np.median(a))}


def involutivity_check(M: ManifoldSpec, M_hat: ManifoldSpec, n_states: int = 100,
                       seed: int = 0, dual: bool | None = None, tol: float = RANK_TOL) -> bool:
    """True iff Rol vanishes (to tol) on all sampled states.

    With ``dual`` (default when n < n^) the transposed problem is sampled.
    """
    if dual is None:
        dual = M.dim < M_hat.dim
    return rol_scan(M, M_hat, n_states, seed, dual)["max"] <= tol


def totally_geodesic_obstruction(M: ManifoldSpec, M_hat: ManifoldSpec) -> dict:
    n, nh = M.dim, M_hat.dim
    if not n < nh:
        raise ValueError("the obstruction applies to n < n^")
    dims = sorted(m for m in M_hat.totally_geodesic_dims if n <= m < nh)
    return {"verdict": "not_controllable" if dims else "inconclusive",
            "submanifold_dims": dims, "n": n, "n_hat": nh}


def codim_report(report: LieSpanReport) -> dict:
    n, nh = report.q.n, report.q.n_hat
    codim = report.dim_Q - report.rank
    bound = abs(nh - n) + 1
    out = {"dim_Q": report.dim_Q, "rank": report.rank, "codim": codim, "bound": bound,
           "within_bound": codim <= bound,
           "note": "informational; the bound's hypothesis is not checked"}
    if codim > bound:
        out["note"] = "codimension exceeds the bound, so its hypothesis fails for this pair"
    return out


__all__ = ["HolonomyAlgebra", "holonomy_algebra", "loop_transport", "loop_generator",
           "ns_fiber_span", "ns_fiber_tangent_dim", "NSVerdict", "ns_controllable",
           "LieSpanReport", "larc", "rol_scan", "involutivity_check",
           "totally_geodesic_obstruction", "codim_report"]
