"""Chart domains: products of open boxes and balls."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """A point or trajectory left the chart domain."""

    def __init__(self, message: str, *, which: str | None = None,
                 time: float | None = None, point=None):
        super().__init__(message)
        self.which = which
        self.time = time
        self.point = None if point is None else np.asarray(point, dtype=float).tolist()


@dataclass(frozen=True)
class DomainPart:
    kind: str  # "box" or "ball"
    offset: int
    dim: int
    lo: tuple  # box lower bounds or ball center
    hi: tuple  # box upper bounds (empty for balls)
    radius: float = 0.0

    def to_json(self) -> dict:
        if self.kind == "box":
            return {"type": "box", "lo": list(self.lo), "hi": list(self.hi)}
        return {"type": "ball", "center": list(self.lo), "radius": self.radius}


@dataclass(frozen=True)
class Domain:
    parts: tuple

    @property
    def dim(self) -> int:
        return sum(p.dim for p in self.parts)

    @staticmethod
    def box(lo, hi) -> "Domain":
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        if len(lo) != len(hi) or not all(a < b for a, b in zip(lo, hi)):
            raise ValueError("box bounds must satisfy lo < hi componentwise")
        return Domain((DomainPart("box", 0, len(lo), lo, hi),))

    @staticmethod
    def ball(center, radius: float) -> "Domain":
        c = tuple(float(v) for v in center)
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        return Domain((DomainPart("ball", 0, len(c), c, (), float(radius)),))

    @staticmethod
    def product(*domains: "Domain") -> "Domain":
        parts = []
        off = 0
        for d in domains:
            for p in d.parts:
                parts.append(DomainPart(p.kind, off + p.offset, p.dim, p.lo, p.hi, p.radius))
            off += d.dim
        return Domain(tuple(parts))

    @staticmethod
    def from_json(obj: dict, dim: int) -> "Domain":
        kind = obj.get("type")
        if kind == "box":
            d = Domain.box(obj["lo"], obj["hi"])
        elif kind == "ball":
            d = Domain.ball(obj["center"], obj["radius"])
        elif kind == "product":
            d = Domain.product(*[Domain.from_json(o, len(o.get("lo", o.get("center", []))))
                                 for o in obj["parts"]])
        else:
            raise ValueError(f"unknown domain type {kind!r}")
        if d.dim != dim:
            raise ValueError(f"domain dimension {d.dim} does not match manifold dimension {dim}")
        return d

    def to_json(self) -> dict:
        if len(self.parts) == 1:
            return self.parts[0].to_json()
        return {"type": "product", "parts": [p.to_json() for p in self.parts]}

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            return False
        for p in self.parts:
            xs = x[p.offset:p.offset + p.dim]
            if p.kind == "box":
                if not (np.all(xs > np.array(p.lo)) and np.all(xs < np.array(p.hi))):
                    return False
            elif np.sum((xs - np.array(p.lo)) ** 2) >= p.radius ** 2:
                return False
        return True

    def arrays(self):
        """Kernel representation (table, lo, hi)."""
        n = self.dim
        table = np.zeros((len(self.parts), 4))
        lo = np.zeros(n)
        hi = np.zeros(n)
        for k, p in enumerate(self.parts):
            table[k] = (0.0 if p.kind == "box" else 1.0, p.offset, p.dim, p.radius)
            lo[p.offset:p.offset + p.dim] = p.lo
            if p.kind == "box":
                hi[p.offset:p.offset + p.dim] = p.hi
        return table, lo, hi

    def sample(self, rng: np.random.Generator, shrink: float = 0.5) -> np.ndarray:
        """Uniform-ish sample from the domain scaled about its center by ``shrink``."""
        x = np.zeros(self.dim)
        for p in self.parts:
            sl = slice(p.offset, p.offset + p.dim)
            if p.kind == "box":
                lo, hi = np.array(p.lo), np.array(p.hi)
                mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
                x[sl] = mid + shrink * half * rng.uniform(-1.0, 1.0, p.dim)
            else:
                d = rng.normal(size=p.dim)
                d /= np.linalg.norm(d)
                rad = p.radius * shrink * rng.uniform() ** (1.0 / p.dim)
                x[sl] = np.array(p.lo) + rad * d
        return x

    def center(self) -> np.ndarray:
        x = np.zeros(self.dim)
        for p in self.parts:
            sl = slice(p.offset, p.offset + p.dim)
            x[sl] = 0.5 * (np.array(p.lo) + np.array(p.hi)) if p.kind == "box" else np.array(p.lo)
        return x
