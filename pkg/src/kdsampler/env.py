"""Obstacle worlds, the counted collision oracle and exact free-space measure."""

from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np

from .geometry import HyperRect, Point, as_point, measure


class OutOfDomain(ValueError):
    pass


class UnsupportedGeometry(TypeError):
    """Exact free measure was requested for a world containing spheres."""


class ParseError(ValueError):
    def __init__(self, message: str, where: str = "", line: int | None = None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if where:
            loc.append(where)
        super().__init__(f"{': '.join(loc)}: {message}" if loc else message)
        self.where = where
        self.line = line


class DimensionMismatch(ParseError):
    pass


@dataclass(frozen=True)
class AABB:
    lo: Point
    hi: Point

    def __post_init__(self):
        box = HyperRect(self.lo, self.hi)  # validates lo <= hi
        object.__setattr__(self, "lo", box.lo)
        object.__setattr__(self, "hi", box.hi)

    @property
    def rect(self) -> HyperRect:
        return HyperRect(self.lo, self.hi)

    @property
    def dim(self) -> int:
        return len(self.lo)


@dataclass(frozen=True)
class Sphere:
    center: Point
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"sphere radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return len(self.center)


Obstacle = Union[AABB, Sphere]


@dataclass
class Environment:
    """A bounded box domain with closed obstacles.

    ``query_count`` only tracks :meth:`collision_free` calls; every other
    query (``is_free``, ``free_mask``, measure queries) is uncounted so that
    analysis code never pollutes efficiency numbers.
    """

    domain: HyperRect
    obstacles: list[Obstacle] = field(default_factory=list)
    query_count: int = field(default=0, compare=False)

    def __post_init__(self):
        self.obstacles = list(self.obstacles)
        if measure(self.domain) <= 0.0:
            raise ValueError(f"domain must have positive measure: {self.domain}")
        for k, ob in enumerate(self.obstacles):
            if ob.dim != self.dimension:
                raise DimensionMismatch(
                    f"obstacle has dimension {ob.dim}, domain has {self.dimension}",
                    where=f"obstacles[{k}]",
                )
        self._boxes = [(ob.lo, ob.hi) for ob in self.obstacles if isinstance(ob, AABB)]
        self._balls = [
            (ob.center, ob.radius * ob.radius) for ob in self.obstacles if isinstance(ob, Sphere)
        ]

    @property
    def dimension(self) -> int:
        return self.domain.dim

    @property
    def aabb_only(self) -> bool:
        return not self._balls

    def collision_free(self, x: Sequence[float]) -> bool:
        """Counted collision check. Obstacle boundaries collide."""
        self.query_count += 1
        for a, c, b in zip(self.domain.lo, x, self.domain.hi):
            if not a <= c <= b:
                raise OutOfDomain(f"{tuple(x)} outside domain {self.domain}")
        return self.is_free(x)

    def is_free(self, x: Sequence[float]) -> bool:
        for lo, hi in self._boxes:
            for a, c, b in zip(lo, x, hi):
                if c < a or c > b:
                    break
            else:
                return False
        for center, r2 in self._balls:
            if sum((c - o) * (c - o) for c, o in zip(x, center)) <= r2:
                return False
        return True

    def free_mask(self, points: np.ndarray) -> np.ndarray:
        """Vectorised uncounted ``is_free`` over an ``(n, d)`` array."""
        pts = np.asarray(points, dtype=float)
        free = np.ones(len(pts), dtype=bool)
        for lo, hi in self._boxes:
            free &= ~np.all((pts >= lo) & (pts <= hi), axis=1)
        for center, r2 in self._balls:
            free &= np.sum((pts - center) ** 2, axis=1) > r2
        return free

    def obstacle_measure_exact(self, cell: HyperRect) -> float:
        """Measure of ``cell`` covered by the union of obstacle boxes."""
        if self._balls:
            raise UnsupportedGeometry("exact measure needs an AABB-only world")
        clipped = []
        for lo, hi in self._boxes:
            clo = tuple(max(a, b) for a, b in zip(lo, cell.lo))
            chi = tuple(min(a, b) for a, b in zip(hi, cell.hi))
            if all(a < b for a, b in zip(clo, chi)):
                clipped.append((clo, chi))
        if not clipped:
            return 0.0
        if len(clipped) == 1:
            lo, hi = clipped[0]
            return math.prod(b - a for a, b in zip(lo, hi))
        # coordinate compression: elementary cells are either fully covered or not
        d = cell.dim
        grids = [np.unique([v for lo, hi in clipped for v in (lo[i], hi[i])]) for i in range(d)]
        covered = np.zeros(tuple(len(g) - 1 for g in grids), dtype=bool)
        for lo, hi in clipped:
            idx = tuple(
                slice(np.searchsorted(g, lo[i]), np.searchsorted(g, hi[i]))
                for i, g in enumerate(grids)
            )
            covered[idx] = True
        volumes = functools.reduce(np.multiply.outer, [np.diff(g) for g in grids])
        return float(np.sum(volumes[covered]))

    def free_measure_exact(self, cell: HyperRect) -> float:
        total = measure(cell)
        return min(total, max(0.0, total - self.obstacle_measure_exact(cell)))

    def free_measure_mc(
        self,
        cell: HyperRect,
        n: int,
        rng: np.random.Generator | int | None = None,
        chunk: int = 1 << 20,
    ) -> tuple[float, float]:
        """Monte Carlo estimate of the free measure of ``cell`` and its standard error."""
        if n < 1:
            raise ValueError("need at least one sample")
        rng = np.random.default_rng(rng)
        lo = np.asarray(cell.lo)
        span = np.asarray(cell.hi) - lo
        hits = 0
        left = n
        while left > 0:
            k = min(chunk, left)
            pts = lo + rng.random((k, cell.dim)) * span
            hits += int(np.count_nonzero(self.free_mask(pts)))
            left -= k
        p = hits / n
        vol = measure(cell)
        return vol * p, vol * math.sqrt(p * (1.0 - p) / n)

    def free_measure(self, cell: HyperRect | None = None) -> float:
        """Exact free measure when possible, otherwise a fixed-seed MC estimate."""
        cell = self.domain if cell is None else cell
        if self.aabb_only:
            return self.free_measure_exact(cell)
        return self.free_measure_mc(cell, 1 << 20, rng=0)[0]

    def copy(self) -> "Environment":
        """Same world with a fresh query counter."""
        return Environment(self.domain, list(self.obstacles))

    def to_dict(self) -> dict[str, Any]:
        obs: list[dict[str, Any]] = []
        for ob in self.obstacles:
            if isinstance(ob, AABB):
                obs.append({"type": "aabb", "min": list(ob.lo), "max": list(ob.hi)})
            else:
                obs.append({"type": "sphere", "center": list(ob.center), "radius": ob.radius})
        return {
            "dimension": self.dimension,
            "domain": {"min": list(self.domain.lo), "max": list(self.domain.hi)},
            "obstacles": obs,
        }


# --- file format -----------------------------------------------------------

_TOP_KEYS = {"dimension", "domain", "obstacles"}
_OBSTACLE_KEYS = {"aabb": {"type", "min", "max"}, "sphere": {"type", "center", "radius"}}


def _expect_keys(obj: Any, allowed: set[str], where: str, required: set[str] | None = None):
    if not isinstance(obj, dict):
        raise ParseError("expected an object", where)
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ParseError(f"unknown field(s) {unknown}", where)
    missing = sorted((allowed if required is None else required) - set(obj))
    if missing:
        raise ParseError(f"missing field(s) {missing}", where)


def _vector(value: Any, d: int, where: str) -> Point:
    if not isinstance(value, list):
        raise ParseError("expected an array of numbers", where)
    if len(value) != d:
        raise DimensionMismatch(f"expected {d} values, got {len(value)}", where)
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ParseError(f"not a finite number: {v!r}", where)
    return tuple(float(v) for v in value)


def environment_from_dict(data: Any) -> Environment:
    _expect_keys(data, _TOP_KEYS, "<root>")
    d = data["dimension"]
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise ParseError(f"dimension must be a positive integer, got {d!r}", "dimension")
    _expect_keys(data["domain"], {"min", "max"}, "domain")
    lo = _vector(data["domain"]["min"], d, "domain.min")
    hi = _vector(data["domain"]["max"], d, "domain.max")
    if any(a >= b for a, b in zip(lo, hi)):
        raise ParseError("domain needs min < max on every axis", "domain")
    if not isinstance(data["obstacles"], list):
        raise ParseError("expected an array", "obstacles")
    obstacles: list[Obstacle] = []
    for k, raw in enumerate(data["obstacles"]):
        where = f"obstacles[{k}]"
        kind = raw.get("type") if isinstance(raw, dict) else None
        if kind not in _OBSTACLE_KEYS:
            raise ParseError(f"type must be one of {sorted(_OBSTACLE_KEYS)}, got {kind!r}", where)
        _expect_keys(raw, _OBSTACLE_KEYS[kind], where)
        if kind == "aabb":
            blo = _vector(raw["min"], d, where + ".min")
            bhi = _vector(raw["max"], d, where + ".max")
            if any(a > b for a, b in zip(blo, bhi)):
                raise ParseError("min > max", where)
            obstacles.append(AABB(blo, bhi))
        else:
            center = _vector(raw["center"], d, where + ".center")
            r = raw["radius"]
            if isinstance(r, bool) or not isinstance(r, (int, float)) or not r > 0:
                raise ParseError(f"radius must be a positive number, got {r!r}", where + ".radius")
            obstacles.append(Sphere(center, float(r)))
    return Environment(HyperRect(lo, hi), obstacles)


def loads_environment(text: str) -> Environment:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    return environment_from_dict(data)


def dumps_environment(env: Environment) -> str:
    data = env.to_dict()
    obstacles = ",\n".join("    " + json.dumps(ob) for ob in data["obstacles"])
    return (
        "{\n"
        f'  "dimension": {data["dimension"]},\n'
        f'  "domain": {json.dumps(data["domain"])},\n'
        f'  "obstacles": [' + (f"\n{obstacles}\n  " if obstacles else "") + "]\n"
        "}\n"
    )


def load_environment(path: str | Path) -> Environment:
    return loads_environment(Path(path).read_text(encoding="utf-8"))


def save_environment(env: Environment, path: str | Path) -> None:
    Path(path).write_text(dumps_environment(env), encoding="utf-8")


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
