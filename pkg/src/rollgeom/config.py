"""Experiment configs: schema validation, object builders, deterministic report files."""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import manifolds as mf
from .rolling import ControlSignal, GeodesicControl, control_from_json, random_piecewise
from .state import CONSTRUCTION_TOL, DRIFT_TOL, RANK_TOL, RollingState, make_state, random_state

TOOL = "rollgeom"


class ConfigError(ValueError):
    """Invalid configuration (exit code 2)."""


_SCHEMA = None


def schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        txt = resources.files("rollgeom").joinpath("schema/config.schema.json").read_text()
        _SCHEMA = json.loads(txt)
    return _SCHEMA


def validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {e.message}") from None


def load_config(path, overrides: dict | None = None) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    validate(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def tolerances(cfg: dict) -> dict:
    t = {"construction": CONSTRUCTION_TOL, "drift": DRIFT_TOL, "rank": RANK_TOL, "rol": 1e-7}
    t.update(cfg.get("tolerances", {}))
    return t


def require_seed(cfg: dict) -> int:
    if "seed" not in cfg:
        raise ConfigError("this configuration is randomized and needs a seed (config or --seed)")
    return int(cfg["seed"])


# ---------------------------------------------------------------------------
# builders


def build_manifold(obj: dict) -> mf.ManifoldSpec:
    try:
        return mf.from_json(obj)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid manifold: {e}") from None


def build_state(obj: dict | None, M, M_hat, rng: np.random.Generator | None) -> RollingState:
    obj = obj or {"mode": "random"}
    mode = obj["mode"]
    try:
        if mode == "explicit":
            return make_state(M, M_hat, obj["x"], obj["x_hat"], np.asarray(obj["A"], dtype=float))
        if mode == "center":
            A = obj.get("A")
            A = np.eye(M_hat.dim, M.dim) if A is None else np.asarray(A, dtype=float)
            return make_state(M, M_hat, M.domain.center(), M_hat.domain.center(), A)
    except mf.DomainError:
        raise
    except (ValueError, KeyError) as e:
        raise ConfigError(f"invalid state: {e}") from None
    if rng is None:
        raise ConfigError("random state needs a seed")
    return random_state(M, M_hat, rng, float(obj.get("shrink", 0.5)))


def state_is_random(obj: dict | None) -> bool:
    return obj is None or obj.get("mode") == "random"


def build_control(obj: dict, n: int, rng: np.random.Generator | None):
    kind = obj["type"]
    try:
        if kind == "random_piecewise":
            if rng is None:
                raise ConfigError("random control needs a seed")
            return random_piecewise(rng, n, float(obj.get("T", 1.0)), int(obj.get("segments", 10)),
                                    float(obj.get("scale", 1.0)))
        if kind == "polygon":
            d = obj["data"]
            g = GeodesicControl.polygon(d["X"], d["legs"], d["angles"])
            if g.dim != n:
                raise ValueError("control dimension mismatch")
            return g
        return control_from_json({"type": kind, "T": obj.get("T"), "data": obj["data"]}, n)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid control: {e}") from None


def _rotation(m: int, angle: float) -> np.ndarray:
    Q = np.eye(m)
    c, s = math.cos(angle), math.sin(angle)
    Q[0, 0], Q[0, m - 1], Q[m - 1, 0], Q[m - 1, m - 1] = c, -s, s, c
    return Q


def build_isometry(obj: dict | None, M: mf.ManifoldSpec) -> mf.Isometry:
    if obj is None or obj["type"] == "identity":
        return mf.Isometry.identity()
    kind = obj["type"]
    n = M.dim
    try:
        if kind == "rigid":
            Q = np.asarray(obj["Q"], float) if "Q" in obj else _rotation(n, obj.get("angle", 0.0))
            return mf.Isometry.rigid(Q, obj.get("c", np.zeros(n)))
        if kind == "sphere_rotation":
            Q = np.asarray(obj["Q"], float) if "Q" in obj else _rotation(n + 1, obj.get("angle", 0.0))
            return mf.Isometry.sphere_rotation(Q, M.params.get("radius", 1.0))
        if kind == "ball_rotation":
            Q = np.asarray(obj["Q"], float) if "Q" in obj else _rotation(n, obj.get("angle", 0.0))
            return mf.Isometry.ball_rotation(Q)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"invalid isometry: {e}") from None
    raise ConfigError(f"unknown isometry type {kind!r}")


# ---------------------------------------------------------------------------
# reports


def _clean(obj):
    """JSON-safe copy: numpy to python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps(payload: dict) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=1) + "\n"


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def envelope(command: str, cfg: dict, result: dict, error: dict | None = None) -> dict:
    from . import __version__
    from ._accel import backend
    out = {"tool": TOOL, "version": __version__, "backend": backend(), "command": command,
           "config_sha256": config_hash(cfg), "seed": cfg.get("seed"),
           "tolerances": tolerances(cfg), "result": result}
    if error is not None:
        out["error"] = error
    return out
