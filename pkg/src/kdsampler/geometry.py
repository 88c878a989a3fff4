"""Axis-aligned boxes: measure, uniform draws and axis-orthogonal splits."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Sequence, Tuple

Point = Tuple[float, ...]


class DegenerateRect(ValueError):
    """Raised when a uniform draw is requested from a zero-measure box."""

    def __init__(self, rect: "HyperRect", point: Point):
        super().__init__(f"cannot sample uniformly from degenerate rect {rect}")
        self.rect = rect
        self.point = point


class PointOutsideRect(ValueError):
    pass


def as_point(coords: Sequence[float]) -> Point:
    pt = tuple(float(c) for c in coords)
    if not pt:
        raise ValueError("a point needs at least one coordinate")
    if not all(math.isfinite(c) for c in pt):
        raise ValueError(f"non-finite coordinate in {pt}")
    return pt


@dataclass(frozen=True)
class HyperRect:
    """Closed box ``[lo[0], hi[0]] x ... x [lo[d-1], hi[d-1]]``.

    Degenerate boxes (``lo[i] == hi[i]``) are allowed and have measure 0.
    """

    lo: Point
    hi: Point

    def __post_init__(self):
        lo = as_point(self.lo)
        hi = as_point(self.hi)
        if len(lo) != len(hi):
            raise ValueError(f"corner dimensions differ: {len(lo)} vs {len(hi)}")
        for i, (a, b) in enumerate(zip(lo, hi)):
            if a > b:
                raise ValueError(f"lo[{i}]={a} > hi[{i}]={b}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls, d: int = 2) -> "HyperRect":
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def sides(self) -> Point:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    def measure(self) -> float:
        return measure(self)

    def contains(self, x: Sequence[float]) -> bool:
        return contains(self, x)

    def intersection(self, other: "HyperRect") -> "HyperRect | None":
        """Closed intersection, or None when the boxes are disjoint."""
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return HyperRect(lo, hi)


def measure(r: HyperRect) -> float:
    return math.prod(b - a for a, b in zip(r.lo, r.hi))


def contains(r: HyperRect, x: Sequence[float]) -> bool:
    if len(x) != len(r.lo):
        raise ValueError(f"dimension mismatch: point has {len(x)}, rect has {len(r.lo)}")
    return all(a <= c <= b for a, c, b in zip(r.lo, x, r.hi))


def sample_uniform(r: HyperRect, rng: random.Random) -> Point:
    """Draw a point uniformly from ``r`` (half-open per axis: ``lo <= x < hi``).

    A degenerate box raises :class:`DegenerateRect` carrying ``r.lo`` as the
    fallback point, after consuming the same number of random draws as a
    regular call so the stream stays aligned.
    """
    pt = tuple(_draw(a, b, rng.random()) for a, b in zip(r.lo, r.hi))
    if measure(r) <= 0.0:
        raise DegenerateRect(r, r.lo)
    return pt


def _draw(a: float, b: float, u: float) -> float:
    x = a + u * (b - a)
    # rounding can land exactly on hi
    return x if x < b or a == b else math.nextafter(b, a)


def split(r: HyperRect, x: Sequence[float], j: int) -> tuple[HyperRect, HyperRect]:
    """Cut ``r`` with the plane orthogonal to axis ``j`` through ``x``."""
    if not 0 <= j < r.dim:
        raise ValueError(f"axis {j} out of range for dimension {r.dim}")
    if not contains(r, x):
        raise PointOutsideRect(f"{tuple(x)} not in {r}")
    hi0 = list(r.hi)
    hi0[j] = float(x[j])
    lo1 = list(r.lo)
    lo1[j] = float(x[j])
    return HyperRect(r.lo, tuple(hi0)), HyperRect(tuple(lo1), r.hi)
