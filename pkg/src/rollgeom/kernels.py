"""Hot loops: closed-form frame geometry and fixed-step RK4 integrators.

Every function here is written in the numpy subset that numba accepts. The
integrators call the geometry evaluators ``_geo_m(par, x) -> (F, W)`` and
``_geo_h`` (second manifold), module globals bound to the closed-form
``_block_geom``; the python entry points rebind them per call. ``F`` is the
orthonormal frame (columns in coordinates) and ``W[m]`` is the connection
matrix of the frame along ``F[:, m]``, so that
``omega(u) = sum_m u[m] * W[m]``.

Block table layout (one row per factor, float64)::

    [code, dim, offset, p0, p1, p2, p3]

code 0 euclidean, 1 sphere (p0 = radius), 2 hyperbolic (p0 = radius),
3 warped ``dr^2 + f(r)^2 |dy|^2`` with profile p0 (0 constant f = p1,
1 linear f = p1 r + p2, 2 exponential f = p1 exp(p2 r)).

Domain table layout: rows ``[type, offset, dim, radius]`` with type 0 box
(bounds in ``lo``/``hi``) and type 1 ball (center in ``lo``).
"""
from __future__ import annotations

import types

import numpy as np

from ._accel import USE_NUMBA, jit

EUCLIDEAN, SPHERE, HYPERBOLIC, WARPED = 0, 1, 2, 3
PROFILE_CONST, PROFILE_LINEAR, PROFILE_EXP = 0, 1, 2


# ---------------------------------------------------------------------------
# closed-form geometry


def _warp_profile(kind, p1, p2, r):
    """Return f, f', f'' for the warping menu."""
    if kind == PROFILE_CONST:
        return p1, 0.0, 0.0
    if kind == PROFILE_LINEAR:
        return p1 * r + p2, p1, 0.0
    e = p1 * np.exp(p2 * r)
    return e, p2 * e, p2 * p2 * e


def _block_geom(blocks, x):
    n = x.shape[0]
    F = np.zeros((n, n))
    W = np.zeros((n, n, n))
    for b in range(blocks.shape[0]):
        code = int(blocks[b, 0])
        d = int(blocks[b, 1])
        o = int(blocks[b, 2])
        if code == EUCLIDEAN:
            for i in range(d):
                F[o + i, o + i] = 1.0
        elif code == SPHERE or code == HYPERBOLIC:
            r2 = blocks[b, 3] * blocks[b, 3]
            s = 0.0
            for i in range(d):
                s += x[o + i] * x[o + i]
            if code == SPHERE:
                lam = 2.0 * r2 / (r2 + s)
                c = -2.0 / (r2 + s)
            else:
                lam = 2.0 * r2 / (r2 - s)
                c = 2.0 / (r2 - s)
            inv = 1.0 / lam
            for i in range(d):
                F[o + i, o + i] = inv
            # omega(E_m)[l, i] = (delta_ml df_i - delta_mi df_l) / lam, df = c x
            for m in range(d):
                for i in range(d):
                    if i != m:
                        v = inv * c * x[o + i]
                        W[o + m, o + m, o + i] += v
                        W[o + m, o + i, o + m] -= v
        else:
            f, fp, _ = _warp_profile(int(blocks[b, 3]), blocks[b, 4], blocks[b, 5], x[o])
            phi = fp / f
            F[o, o] = 1.0
            for a in range(1, d):
                F[o + a, o + a] = 1.0 / f
                W[o + a, o + a, o] = phi
                W[o + a, o, o + a] = -phi
    return F, W


def _omega(W, u):
    n = W.shape[1]
    out = np.zeros((n, n))
    for m in range(W.shape[0]):
        if u[m] != 0.0:
            out += u[m] * W[m]
    return out


def _inside(dom, lo, hi, x):
    for k in range(dom.shape[0]):
        t = int(dom[k, 0])
        o = int(dom[k, 1])
        d = int(dom[k, 2])
        if t == 0:
            for i in range(d):
                if not (lo[o + i] < x[o + i] < hi[o + i]):
                    return False
        else:
            s = 0.0
            for i in range(d):
                s += (x[o + i] - lo[o + i]) ** 2
            if not (s < dom[k, 3] * dom[k, 3]):
                return False
        if not np.all(np.isfinite(x)):
            return False
    return True


def _polar(R):
    U, s, Vt = np.linalg.svd(R, full_matrices=False)
    return U @ Vt


def _drift(R):
    nh, n = R.shape
    if n <= nh:
        D = R.T @ R - np.eye(n)
    else:
        D = R @ R.T - np.eye(nh)
    return np.sqrt(np.sum(D * D))


# ---------------------------------------------------------------------------
# rolling integrator


def _roll_loop(par_m, dom_m, lo_m, hi_m,
               par_h, dom_h, lo_h, hi_h,
               x0, xh0, R0, U, geodesic, turn_idx, turn_mats, hs):
    """RK4 for x' = F u, xh' = Fh R u, R' = R om(u) - omh(R u) R.

    ``U`` holds stage controls (nsteps, 3, n) at t, t+h/2, t+h with per-step
    sizes ``hs``. In geodesic
    mode only ``U[0, 0]`` is used and u follows u' = -om(u) u, with optional
    turns ``u <- turn_mats[turn_idx[k]] @ u`` at the start of step k.
    """
    n = x0.shape[0]
    nh = xh0.shape[0]
    nsteps = hs.shape[0]
    X = np.zeros((nsteps + 1, n))
    XH = np.zeros((nsteps + 1, nh))
    RS = np.zeros((nsteps + 1, nh, n))
    UC = np.zeros((nsteps + 1, n))
    drift = np.zeros(nsteps)
    noslip = np.zeros(nsteps)
    nospin = np.zeros(nsteps)
    X[0] = x0
    XH[0] = xh0
    RS[0] = R0
    x = x0.copy()
    xh = xh0.copy()
    R = R0.copy()
    ug = U[0, 0].copy()
    status = 0
    done = 0
    for k in range(nsteps):
        h = hs[k]
        if geodesic and turn_idx[k] >= 0:
            ug = turn_mats[turn_idx[k]] @ ug
        # stage 1
        F1, W1 = _geo_m(par_m, x)
        Fh1, Wh1 = _geo_h(par_h, xh)
        u1 = ug.copy() if geodesic else U[k, 0].copy()
        om1 = _omega(W1, u1)
        uh1 = R @ u1
        kx1 = F1 @ u1
        kh1 = Fh1 @ uh1
        kR1 = R @ om1 - _omega(Wh1, uh1) @ R
        ku1 = -om1 @ u1
        # stage 2
        x2 = x + 0.5 * h * kx1
        xh2 = xh + 0.5 * h * kh1
        R2 = R + 0.5 * h * kR1
        u2 = ug + 0.5 * h * ku1 if geodesic else U[k, 1].copy()
        F2, W2 = _geo_m(par_m, x2)
        Fh2, Wh2 = _geo_h(par_h, xh2)
        om2 = _omega(W2, u2)
        uh2 = R2 @ u2
        kx2 = F2 @ u2
        kh2 = Fh2 @ uh2
        kR2 = R2 @ om2 - _omega(Wh2, uh2) @ R2
        ku2 = -om2 @ u2
        # stage 3
        x3 = x + 0.5 * h * kx2
        xh3 = xh + 0.5 * h * kh2
        R3 = R + 0.5 * h * kR2
        u3 = ug + 0.5 * h * ku2 if geodesic else U[k, 1].copy()
        F3, W3 = _geo_m(par_m, x3)
        Fh3, Wh3 = _geo_h(par_h, xh3)
        om3 = _omega(W3, u3)
        uh3 = R3 @ u3
        kx3 = F3 @ u3
        kh3 = Fh3 @ uh3
        kR3 = R3 @ om3 - _omega(Wh3, uh3) @ R3
        ku3 = -om3 @ u3
        # stage 4
        x4 = x + h * kx3
        xh4 = xh + h * kh3
        R4 = R + h * kR3
        u4 = ug + h * ku3 if geodesic else U[k, 2].copy()
        F4, W4 = _geo_m(par_m, x4)
        Fh4, Wh4 = _geo_h(par_h, xh4)
        om4 = _omega(W4, u4)
        uh4 = R4 @ u4
        kx4 = F4 @ u4
        kh4 = Fh4 @ uh4
        kR4 = R4 @ om4 - _omega(Wh4, uh4) @ R4
        ku4 = -om4 @ u4

        xn = x + (h / 6.0) * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4)
        xhn = xh + (h / 6.0) * (kh1 + 2.0 * kh2 + 2.0 * kh3 + kh4)
        Rt = R + (h / 6.0) * (kR1 + 2.0 * kR2 + 2.0 * kR3 + kR4)
        if geodesic:
            ugn = ug + (h / 6.0) * (ku1 + 2.0 * ku2 + 2.0 * ku3 + ku4)
            ua = u1
            uc = ugn
        else:
            ugn = ug
            ua = U[k, 0]
            uc = U[k, 2]

        if not _inside(dom_m, lo_m, hi_m, xn):
            status = 1
            break
        if not _inside(dom_h, lo_h, hi_h, xhn):
            status = 2
            break

        # diagnostics from the stored endpoint samples
        drift[k] = _drift(Rt)
        Fe, We = _geo_m(par_m, xn)
        Fhe, Whe = _geo_h(par_h, xhn)
        v0 = F1 @ ua
        v1 = Fe @ uc
        vh0 = Fh1 @ (R @ ua)
        vh1 = Fhe @ (Rt @ uc)
        xm = 0.5 * (x + xn) + 0.125 * h * (v0 - v1)
        vm = 1.5 * (xn - x) / h - 0.25 * (v0 + v1)
        xhm = 0.5 * (xh + xhn) + 0.125 * h * (vh0 - vh1)
        vhm = 1.5 * (xhn - xh) / h - 0.25 * (vh0 + vh1)
        Fm, Wm = _geo_m(par_m, xm)
        Fhm, Whm = _geo_h(par_h, xhm)
        um = np.linalg.solve(Fm, vm)
        uhm = np.linalg.solve(Fhm, vhm)
        # one-step transports along the Hermite interpolants
        a0 = _omega(W1, ua)
        am = _omega(Wm, um)
        a1 = _omega(We, uc)
        b0 = _omega(Wh1, R @ ua)
        bm = _omega(Whm, uhm)
        b1 = _omega(Whe, Rt @ uc)
        P = _rk4_linear(a0, am, a1, h)
        Ph = _rk4_linear(b0, bm, b1, h)
        E = Rt - Ph @ R @ P.T
        nospin[k] = np.sqrt(np.sum(E * E)) / h
        Rd0 = R @ a0 - b0 @ R
        Rd1 = Rt @ a1 - b1 @ Rt
        Rm = 0.5 * (R + Rt) + 0.125 * h * (Rd0 - Rd1)
        ns = uhm - Rm @ um
        noslip[k] = np.sqrt(np.sum(ns * ns))

        x = xn
        xh = xhn
        R = _polar(Rt)
        ug = ugn
        X[k + 1] = x
        XH[k + 1] = xh
        RS[k + 1] = R
        UC[k] = ua
        UC[k + 1] = uc
        done = k + 1
    return X, XH, RS, UC, drift, noslip, nospin, status, done


def _rk4_linear(a0, am, a1, h):
    """One RK4 step of P' = -a(t) P from P = I with a at t, t+h/2, t+h."""
    n = a0.shape[0]
    I = np.eye(n)
    k1 = -a0
    k2 = -am @ (I + 0.5 * h * k1)
    k3 = -am @ (I + 0.5 * h * k2)
    k4 = -a1 @ (I + h * k3)
    return I + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# geodesics with frame transport


def _geodesic_loop(par, dom, lo, hi, x0, u0, P0, h, nsteps):
    """x' = F u, u' = -om(u) u, P' = -om(u) P (P holds transported vectors)."""
    n = x0.shape[0]
    k = P0.shape[1]
    X = np.zeros((nsteps + 1, n))
    U = np.zeros((nsteps + 1, n))
    PS = np.zeros((nsteps + 1, n, k))
    X[0] = x0
    U[0] = u0
    PS[0] = P0
    x = x0.copy()
    u = u0.copy()
    P = P0.copy()
    status = 0
    done = 0
    for s in range(nsteps):
        F1, W1 = _geo_m(par, x)
        o1 = _omega(W1, u)
        kx1 = F1 @ u
        ku1 = -o1 @ u
        kP1 = -o1 @ P
        F2, W2 = _geo_m(par, x + 0.5 * h * kx1)
        u2 = u + 0.5 * h * ku1
        o2 = _omega(W2, u2)
        kx2 = F2 @ u2
        ku2 = -o2 @ u2
        kP2 = -o2 @ (P + 0.5 * h * kP1)
        F3, W3 = _geo_m(par, x + 0.5 * h * kx2)
        u3 = u + 0.5 * h * ku2
        o3 = _omega(W3, u3)
        kx3 = F3 @ u3
        ku3 = -o3 @ u3
        kP3 = -o3 @ (P + 0.5 * h * kP2)
        F4, W4 = _geo_m(par, x + h * kx3)
        u4 = u + h * ku3
        o4 = _omega(W4, u4)
        kx4 = F4 @ u4
        ku4 = -o4 @ u4
        kP4 = -o4 @ (P + h * kP3)
        xn = x + (h / 6.0) * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4)
        if not _inside(dom, lo, hi, xn):
            status = 1
            break
        x = xn
        u = u + (h / 6.0) * (ku1 + 2.0 * ku2 + 2.0 * ku3 + ku4)
        P = P + (h / 6.0) * (kP1 + 2.0 * kP2 + 2.0 * kP3 + kP4)
        X[s + 1] = x
        U[s + 1] = u
        PS[s + 1] = P
        done = s + 1
    return X, U, PS, status, done


# ---------------------------------------------------------------------------
# transport and development along a prescribed path


def _transport_loop(par, XS, VS, P0, hs):
    """Transport P along a path given at stage times.

    ``XS``/``VS`` have shape (nsteps, 3, n): positions and coordinate
    velocities at t, t+h/2, t+h, with per-step sizes ``hs``. Also accumulates
    the development ``c' = P^T u`` (meaningful when P0 = I).
    """
    nsteps = XS.shape[0]
    n = XS.shape[2]
    k = P0.shape[1]
    PS = np.zeros((nsteps + 1, n, k))
    C = np.zeros((nsteps + 1, n))
    PS[0] = P0
    P = P0.copy()
    c = np.zeros(n)
    for s in range(nsteps):
        h = hs[s]
        Fa, Wa = _geo_m(par, XS[s, 0])
        Fm, Wm = _geo_m(par, XS[s, 1])
        Fb, Wb = _geo_m(par, XS[s, 2])
        ua = np.linalg.solve(Fa, VS[s, 0])
        um = np.linalg.solve(Fm, VS[s, 1])
        ub = np.linalg.solve(Fb, VS[s, 2])
        oa = _omega(Wa, ua)
        om = _omega(Wm, um)
        ob = _omega(Wb, ub)
        k1 = -oa @ P
        Pm1 = P + 0.5 * h * k1
        k2 = -om @ Pm1
        Pm2 = P + 0.5 * h * k2
        k3 = -om @ Pm2
        Pe = P + h * k3
        k4 = -ob @ Pe
        c = c + (h / 6.0) * (P.T @ ua + 2.0 * (Pm1.T @ um) + 2.0 * (Pm2.T @ um) + Pe.T @ ub)
        P = P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        PS[s + 1] = P
        C[s + 1] = c
    return PS, C


def _antidevelop_loop(par, dom, lo, hi, x0, CD, h):
    """Solve x' = F P c', P' = -om(P c') P with stage values of c'."""
    nsteps = CD.shape[0]
    n = x0.shape[0]
    X = np.zeros((nsteps + 1, n))
    V = np.zeros((nsteps + 1, n))
    PS = np.zeros((nsteps + 1, n, n))
    X[0] = x0
    PS[0] = np.eye(n)
    x = x0.copy()
    P = np.eye(n)
    status = 0
    done = 0
    for s in range(nsteps):
        F1, W1 = _geo_m(par, x)
        w1 = P @ CD[s, 0]
        if s == 0:
            V[0] = F1 @ w1
        o1 = _omega(W1, w1)
        kx1 = F1 @ w1
        kP1 = -o1 @ P
        Pb = P + 0.5 * h * kP1
        F2, W2 = _geo_m(par, x + 0.5 * h * kx1)
        w2 = Pb @ CD[s, 1]
        o2 = _omega(W2, w2)
        kx2 = F2 @ w2
        kP2 = -o2 @ Pb
        Pc = P + 0.5 * h * kP2
        F3, W3 = _geo_m(par, x + 0.5 * h * kx2)
        w3 = Pc @ CD[s, 1]
        o3 = _omega(W3, w3)
        kx3 = F3 @ w3
        kP3 = -o3 @ Pc
        Pd = P + h * kP3
        F4, W4 = _geo_m(par, x + h * kx3)
        w4 = Pd @ CD[s, 2]
        o4 = _omega(W4, w4)
        kx4 = F4 @ w4
        kP4 = -o4 @ Pd
        xn = x + (h / 6.0) * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4)
        if not _inside(dom, lo, hi, xn):
            status = 1
            break
        x = xn
        P = P + (h / 6.0) * (kP1 + 2.0 * kP2 + 2.0 * kP3 + kP4)
        Fe, We = _geo_m(par, x)
        X[s + 1] = x
        PS[s + 1] = P
        V[s + 1] = Fe @ (P @ CD[s, 2])
        done = s + 1
    return X, V, PS, status, done


# module-level evaluators used by the loops
_geo_m = _block_geom
_geo_h = _block_geom

_RAW = {"roll": _roll_loop, "geodesic": _geodesic_loop, "transport": _transport_loop,
        "antidevelop": _antidevelop_loop}


def _rebind(fn, geo_m, geo_h):
    g = dict(fn.__globals__)
    g["_geo_m"] = geo_m
    g["_geo_h"] = geo_h
    return types.FunctionType(fn.__code__, g, fn.__name__, fn.__defaults__)


# python entry points: geometry evaluators passed explicitly (pure numpy path and
# metrics without closed form)
block_geom_py = _block_geom


def roll_loop_py(geo_m, par_m, dom_m, lo_m, hi_m, geo_h, par_h, *rest):
    return _rebind(_RAW["roll"], geo_m, geo_h)(par_m, dom_m, lo_m, hi_m, par_h, *rest)


def geodesic_loop_py(geo, par, *rest):
    return _rebind(_RAW["geodesic"], geo, geo)(par, *rest)


def transport_loop_py(geo, par, *rest):
    return _rebind(_RAW["transport"], geo, geo)(par, *rest)


def antidevelop_loop_py(geo, par, *rest):
    return _rebind(_RAW["antidevelop"], geo, geo)(par, *rest)


if USE_NUMBA:
    # helpers must be compiled before the loops that call them
    _warp_profile = jit(_warp_profile)
    _omega = jit(_omega)
    _inside = jit(_inside)
    _polar = jit(_polar)
    _drift = jit(_drift)
    _rk4_linear = jit(_rk4_linear)
    block_geom_jit = jit(_block_geom)
    _geo_m = _geo_h = block_geom_jit
    _roll_nb = jit(_roll_loop)
    _geodesic_nb = jit(_geodesic_loop)
    _transport_nb = jit(_transport_loop)
    _antidevelop_nb = jit(_antidevelop_loop)

    # the evaluator arguments are accepted for a uniform signature and ignored:
    # compiled loops always use the closed-form block geometry
    def roll_loop_jit(geo_m, par_m, dom_m, lo_m, hi_m, geo_h, par_h, *rest):
        return _roll_nb(par_m, dom_m, lo_m, hi_m, par_h, *rest)

    def geodesic_loop_jit(geo, par, *rest):
        return _geodesic_nb(par, *rest)

    def transport_loop_jit(geo, par, *rest):
        return _transport_nb(par, *rest)

    def antidevelop_loop_jit(geo, par, *rest):
        return _antidevelop_nb(par, *rest)
else:
    block_geom_jit = None
    roll_loop_jit = None
    geodesic_loop_jit = None
    transport_loop_jit = None
    antidevelop_loop_jit = None
