"""Command-line front end.

Exit codes: 0 success, 1 computational error (domain exit, failed assertion),
2 configuration error.
"""
from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import manifolds as mf
from .config import (ConfigError, build_control, build_isometry, build_manifold, build_state,
                     dumps, envelope, load_config, require_seed, state_is_random, tolerances,
                     validate, write_atomic)
from .controllability import (codim_report, holonomy_algebra, larc, ns_controllable, rol_scan,
                              totally_geodesic_obstruction)
from .dimgap import GapConfig, commutation, lift, project
from .domain import DomainError
from .rol import (RolField, RollingLift, flow_bracket_oracle, lr_bracket, lr_nu_bracket,
                  nu_nu_bracket)
from .rolling import (ControlSignal, GeodesicControl, act_isometry, control_path, develop,
                      holonomy_angle, roll, roll_geodesic, roll_ns)
from .state import RankDeficientError, dim_Q, random_state

COMMANDS = ("roll", "larc", "holonomy", "ns-check", "rol-scan", "dimgap", "report")


class ComputationError(RuntimeError):
    """Computation finished but an asserted property failed (exit code 1)."""


def _rng(cfg):
    return np.random.default_rng(cfg["seed"]) if "seed" in cfg else None


def _pairs(cfg):
    if "pairs" in cfg:
        return cfg["pairs"]
    if "M" in cfg and "M_hat" in cfg:
        return [{"M": cfg["M"], "M_hat": cfg["M_hat"], "state": cfg.get("state")}]
    raise ConfigError("config needs M and M_hat, or pairs")


def _diag(traj) -> dict:
    return {k: v for k, v in traj.diagnostics.items() if k not in ("runtime_s", "per_step")}


# ---------------------------------------------------------------------------
# roll


def _transport_oracle(M, Mh, q, control, step):
    """Compare the integrated A(t) with P^ A0 P^{-1} along the rolled curves."""
    tr = roll(M, Mh, q, control, step, strict=True)
    g, gh = tr.contact_paths()
    ns = roll_ns(M, Mh, q, g, gh, step)
    return float(np.max(np.linalg.norm(ns.A - tr.A, axis=(1, 2))))


def cmd_roll(cfg: dict, out: Path):
    M, Mh = build_manifold(cfg["M"]), build_manifold(cfg["M_hat"])
    if "control" not in cfg:
        raise ConfigError("roll needs a control")
    randomized = state_is_random(cfg.get("state")) or cfg["control"]["type"] == "random_piecewise"
    rng = np.random.default_rng(require_seed(cfg)) if randomized else _rng(cfg)
    q = build_state(cfg.get("state"), M, Mh, rng)
    control = build_control(cfg["control"], M.dim, rng)
    step = float(cfg.get("step", 1e-3))
    tr = roll(M, Mh, q, control, step)
    res = {"M": M.to_json(), "M_hat": Mh.to_json(), "initial_state": q.to_json(),
           "control": control.to_json(), "step": step, "diagnostics": _diag(tr),
           "exit": tr.exit, "final_state": tr.final.to_json(),
           "loop_closure": float(np.linalg.norm(tr.x[-1] - tr.x[0]))}
    if M.dim == 2 and Mh.dim == 2:
        res["holonomy_angle"] = holonomy_angle(tr.A[0], tr.A[-1])
    traj = tr.to_json(int(cfg.get("every", 1)))
    traj.pop("diagnostics", None)
    res["trajectory"] = traj
    checks = {}
    if tr.exit is None:
        for name in cfg.get("checks", []):
            checks[name] = _roll_check(name, cfg, M, Mh, q, control, tr, step)
    res["checks"] = checks
    files = {"roll.csv": tr.to_csv()}
    if tr.exit is None:
        return res, files, 0
    err = {"code": "domain_exit", "message": f"rolling left the chart domain of "
           f"{tr.exit['which']} at t={tr.exit['time']:.6g}; partial trajectory kept"}
    return res, files, 1, err


def _roll_check(name, cfg, M, Mh, q, control, tr, step):
    if name == "transport_oracle":
        errs = [_transport_oracle(M, Mh, q, control, step)]
        k = int(cfg.get("n_controls", 1))
        if k > 1 and not isinstance(control, GeodesicControl):
            rng = np.random.default_rng(require_seed(cfg) + 1)
            c0 = cfg["control"]
            for _ in range(k - 1):
                c = build_control({**c0, "type": "random_piecewise"}, M.dim, rng)
                errs.append(_transport_oracle(M, Mh, q, c, step))
        return {"n_controls": len(errs), "max_frobenius_error": max(errs), "errors": errs}
    if name == "geodesic_closed_form":
        if not isinstance(control, GeodesicControl) or control.turns:
            raise ConfigError("geodesic_closed_form needs a geodesic control without turns")
        rg = roll_geodesic(M, Mh, q, control.X, control.T, step)
        err = max(np.max(np.abs(rg.x - tr.x)), np.max(np.abs(rg.x_hat - tr.x_hat)),
                  np.max(np.abs(rg.A - tr.A)))
        path = mf.PathSpec.from_samples(
            tr.times, tr.x, np.array([M.frame(x) @ u for x, u in zip(tr.x, tr.controls)]))
        ts, C = develop(M, path, step)
        ray = float(np.max(np.abs(C - ts[:, None] * control.X[None, :])))
        return {"max_difference": float(err), "development_ray_error": ray}
    if name == "development":
        if Mh.kind != "euclidean":
            raise ConfigError("development check needs a euclidean M_hat")
        path = control_path(M, q.x, control, step)
        ts, C = develop(M, path, step)
        pred = q.x_hat[None, :] + C @ q.A.T
        xh = np.array([np.interp(ts, tr.times, tr.x_hat[:, j]) for j in range(Mh.dim)]).T
        return {"max_contact_curve_error": float(np.max(np.abs(pred - xh)))}
    if name == "isometry":
        iso = cfg.get("isometry", {})
        F, Fh = build_isometry(iso.get("M"), M), build_isometry(iso.get("M_hat"), Mh)
        q2 = act_isometry(q, F, Fh)
        path = control_path(M, q.x, control, step).mapped(F.inverse())
        tr2 = roll(M, Mh, q2, path, step, strict=True)
        err = 0.0
        for k in range(len(tr)):
            s1 = act_isometry(tr.state(k), F, Fh)
            err = max(err, s1.distance(tr2.state(k)))
        return {"max_difference": float(err)}
    raise ConfigError(f"unknown check {name!r}")


# ---------------------------------------------------------------------------
# larc / ns-check / rol-scan / holonomy


def cmd_larc(cfg: dict, out: Path):
    seed = require_seed(cfg)
    depth = int(cfg.get("depth", 3))
    tol = tolerances(cfg)["rank"]
    results = []
    for k, p in enumerate(_pairs(cfg)):
        M, Mh = build_manifold(p["M"]), build_manifold(p["M_hat"])
        rng = np.random.default_rng(seed + k)
        q = build_state(p.get("state"), M, Mh, rng)
        rep = larc(M, Mh, q, depth, seed=seed + k, tol=tol)
        r = {"M": str(M), "M_hat": str(Mh), "report": rep.to_json(), "codim": codim_report(rep)}
        if M.dim < Mh.dim:
            r["totally_geodesic"] = totally_geodesic_obstruction(M, Mh)
        if "isometry" in cfg:
            F = build_isometry(cfg["isometry"].get("M"), M)
            Fh = build_isometry(cfg["isometry"].get("M_hat"), Mh)
            rep2 = larc(M, Mh, act_isometry(q, F, Fh), depth, seed=seed + k, tol=tol)
            r["isometry_rank_per_depth"] = rep2.rank_per_depth
            r["isometry_rank_invariant"] = rep2.rank_per_depth == rep.rank_per_depth
        if p.get("expect"):
            r["expect"] = p["expect"]
        results.append(r)
    return {"depth": depth, "pairs": results}, {}, 0


def cmd_ns_check(cfg: dict, out: Path):
    seed = require_seed(cfg)
    results = []
    for k, p in enumerate(_pairs(cfg)):
        M, Mh = build_manifold(p["M"]), build_manifold(p["M_hat"])
        samples = cfg.get("samples", 200)
        samples = samples[0] if isinstance(samples, list) else samples
        v = ns_controllable(M, Mh, int(samples), seed, int(cfg.get("n_probe", 10)))
        results.append({"M": str(M), "M_hat": str(Mh), **v.to_json()})
    return {"pairs": results}, {}, 0


def _bracket_gate(M, Mh, n_states, h, rng):
    worst = {"lr_bracket": 0.0, "lr_nu_bracket": 0.0, "nu_nu_bracket": 0.0}
    for _ in range(n_states):
        q = random_state(M, Mh, rng, 0.3)
        X, Y, Z, W = (rng.normal(size=M.dim) for _ in range(4))
        a = lr_bracket(q, X, Y)
        o = flow_bracket_oracle(q, RollingLift(X, "parallel", M, q.x),
                                RollingLift(Y, "parallel", M, q.x), h)
        worst["lr_bracket"] = max(worst["lr_bracket"], (a - o).max_abs())
        a = lr_nu_bracket(q, Z, X, Y)
        o = flow_bracket_oracle(q, RollingLift(Z, "parallel", M, q.x),
                                RolField(X, Y, "parallel", M, q.x), h)
        worst["lr_nu_bracket"] = max(worst["lr_nu_bracket"], (a - o).max_abs())
        a = nu_nu_bracket(q, X, Y, Z, W)
        o = flow_bracket_oracle(q, RolField(X, Y), RolField(Z, W), h)
        worst["nu_nu_bracket"] = max(worst["nu_nu_bracket"], (a - o).max_abs())
    return {k: float(v) for k, v in worst.items()}


def cmd_rol_scan(cfg: dict, out: Path):
    seed = require_seed(cfg)
    n_states = int(cfg.get("n_states", 100))
    tol = tolerances(cfg)["rol"]
    results = []
    for k, p in enumerate(_pairs(cfg)):
        M, Mh = build_manifold(p["M"]), build_manifold(p["M_hat"])
        dual = cfg.get("dual", M.dim < Mh.dim)
        stats = rol_scan(M, Mh, n_states, seed + k, dual)
        r = {"M": str(M), "M_hat": str(Mh), **stats, "involutive": stats["max"] <= tol}
        if "bracket_check" in cfg:
            bc = cfg["bracket_check"]
            rng = np.random.default_rng(seed + 1000 + k)
            r["bracket_check"] = _bracket_gate(M, Mh, int(bc.get("n_states", 20)),
                                               float(bc.get("h", 1e-3)), rng)
        results.append(r)
    return {"pairs": results}, {}, 0


def _triangle_angle(M):
    """Rolling M = sphere(2, r) on the plane around the geodesic triangle with three right
    angles; returns (transport angle, closure distance)."""
    r = M.params["radius"]
    E = mf.euclidean(2)
    from .state import RollingState
    q = RollingState(M, E, np.zeros(2), np.zeros(2), np.eye(2))
    gc = GeodesicControl.polygon([1.0, 0.0], [math.pi * r / 2] * 3, [math.pi / 2] * 2)
    tr = roll(M, E, q, gc, 1e-3, strict=True)
    return holonomy_angle(tr.A[0], tr.A[-1]), float(np.linalg.norm(tr.x[-1]))


def cmd_holonomy(cfg: dict, out: Path):
    seed = require_seed(cfg)
    specs = cfg.get("manifolds") or ([cfg["M"]] if "M" in cfg else None)
    if not specs:
        raise ConfigError("holonomy needs M or manifolds")
    counts = cfg.get("samples", 200)
    counts = counts if isinstance(counts, list) else [counts]
    results = []
    for spec in specs:
        M = build_manifold(spec)
        x = np.asarray(cfg["x"], float) if "x" in cfg else M.domain.center()
        algs = [holonomy_algebra(M, x, int(c), seed) for c in counts]
        r = {"M": str(M), "x": x.tolist(), "dims": {str(c): a.dim for c, a in zip(counts, algs)},
             "stable": len({a.dim for a in algs}) == 1, "algebra": algs[-1].to_json(),
             "closure_defect": algs[-1].closure_defect()}
        if cfg.get("triangle") and M.kind == "sphere" and M.dim == 2:
            ang, clo = _triangle_angle(M)
            r["triangle"] = {"angle": ang, "expected": math.pi / 2, "closure": clo}
        results.append(r)
    return {"manifolds": results}, {}, 0


# ---------------------------------------------------------------------------
# dimgap


def cmd_dimgap(cfg: dict, out: Path):
    cases = cfg.get("cases")
    if cases is None:
        if "gap" not in cfg:
            raise ConfigError("dimgap needs gap or cases")
        cases = [{"M": cfg["M"], "M_hat": cfg["M_hat"], "state": cfg.get("state"),
                  "control": cfg.get("control"), "gap": cfg["gap"]}]
    seed = require_seed(cfg)
    step = float(cfg.get("step", 1e-3))
    results = []
    for k, c in enumerate(cases):
        M, Mh = build_manifold(c["M"]), build_manifold(c["M_hat"])
        gap = GapConfig(c["gap"]["side"], float(c["gap"].get("a", 0.0)))
        need = (M.dim == Mh.dim + 1) if gap.side == "target_augmented" else (M.dim + 1 == Mh.dim)
        if not need:
            raise ConfigError(f"case {k}: dimensions do not fit the {gap.side} construction")
        rng = np.random.default_rng(seed + k)
        q = build_state(c.get("state"), M, Mh, rng)
        ctrl = c.get("control") or {"type": "random_piecewise", "T": 1.0, "segments": 10}
        control = build_control(ctrl, M.dim, rng)
        if not isinstance(control, ControlSignal):
            raise ConfigError("dimgap needs a piecewise or sampled control")
        q1 = lift(q, gap)
        other = Mh if gap.side == "target_augmented" else M
        back = project(q1, other, gap)
        r = {"M": str(M), "M_hat": str(Mh), "gap": gap.to_json(), "state": q.to_json(),
             "lifted_state": q1.to_json(),
             "roundtrip_exact": bool(np.array_equal(back.x, q.x) and
                                     np.array_equal(back.x_hat, q.x_hat) and
                                     np.array_equal(back.A, q.A)),
             "commutation": commutation(q, control, gap, step)}
        if c.get("larc"):
            depth = int(cfg.get("depth", 4))
            rb = larc(M, Mh, q, depth, seed=seed + k)
            rl = larc(q1.M, q1.M_hat, q1, depth, seed=seed + k)
            r["larc"] = {"base": rb.to_json(), "lifted": rl.to_json(),
                         "base_dim_Q": dim_Q(M.dim, Mh.dim),
                         "lifted_dim_Q": dim_Q(q1.n, q1.n_hat),
                         "lifted_codim": dim_Q(q1.n, q1.n_hat) - rl.rank}
        results.append(r)
    return {"cases": results}, {}, 0


# ---------------------------------------------------------------------------
# report (batch)

_RUNNERS = {"roll": cmd_roll, "larc": cmd_larc, "holonomy": cmd_holonomy,
            "ns-check": cmd_ns_check, "rol-scan": cmd_rol_scan, "dimgap": cmd_dimgap}


def _run_one(command: str, cfg: dict, out: Path):
    """Run a command; returns (report envelope, extra files, exit code)."""
    try:
        res, files, code, *err = _RUNNERS[command](cfg, out)
        return envelope(command, cfg, res, err[0] if err else None), files, code
    except ConfigError:
        raise
    except DomainError as e:
        err = {"code": "domain_exit", "message": str(e)}
    except RankDeficientError as e:
        err = {"code": "rank_deficient", "message": str(e)}
    except ComputationError as e:
        err = {"code": "computation_error", "message": str(e)}
    except (FloatingPointError, np.linalg.LinAlgError) as e:
        err = {"code": "numerical_error", "message": str(e)}
    return envelope(command, cfg, {}, err), {}, 1


def cmd_report(cfg: dict, out: Path, base: Path):
    exps = cfg.get("experiments")
    if not exps:
        raise ConfigError("report needs experiments")
    jobs = []
    for e in exps:
        if "config" in e:
            sub = dict(e["config"])
        elif "path" in e:
            sub = load_config(base / e["path"])
        else:
            raise ConfigError(f"experiment {e['name']} needs path or config")
        if "seed" in cfg and "seed" not in sub:
            sub["seed"] = cfg["seed"]
        validate(sub)
        command = sub.get("command")
        if command not in _RUNNERS:
            raise ConfigError(f"experiment {e['name']} needs a runnable command")
        jobs.append((e["name"], command, sub))

    def work(job):
        name, command, sub = job
        return _run_one(command, sub, out / name)

    with ThreadPoolExecutor(max_workers=int(cfg.get("workers", 4))) as ex:
        outs = list(ex.map(work, jobs))
    summary, code = [], 0
    for (name, command, sub), (rep, files, c) in zip(jobs, outs):
        write_atomic(out / name / f"{command}.json", dumps(rep))
        for fname, text in files.items():
            write_atomic(out / name / fname, text)
        summary.append({"name": name, "command": command, "exit_code": c,
                        "config_sha256": rep["config_sha256"]})
        code = max(code, c)
    return {"experiments": summary}, {}, code


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rollgeom",
                                description="Rolling of Riemannian manifolds: simulation and "
                                            "controllability diagnostics.")
    p.add_argument("--version", action="version", version=f"rollgeom {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="experiment config (JSON)")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--step", type=float, help="override the integration step")
        s.add_argument("--depth", type=int, help="override the bracket depth")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = load_config(args.config, {"seed": args.seed, "step": args.step,
                                        "depth": args.depth})
        if cfg.get("command", args.command) != args.command:
            raise ConfigError(f"config is for command {cfg['command']!r}, not {args.command!r}")
        if args.command == "report":
            res, files, code = cmd_report(cfg, out, Path(args.config).resolve().parent)
            rep = envelope("report", cfg, res)
        else:
            rep, files, code = _run_one(args.command, cfg, out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    path = out / f"{args.command}.json"
    write_atomic(path, dumps(rep))
    for fname, text in files.items():
        write_atomic(out / fname, text)
    if "error" in rep:
        print(f"{args.command}: {rep['error']['code']}: {rep['error']['message']}",
              file=sys.stderr)
    else:
        print(f"{args.command}: wrote {path}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
