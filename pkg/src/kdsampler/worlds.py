"""Stock obstacle worlds on the unit square used by the tests and the CLI."""

from __future__ import annotations

import random

from .env import AABB, Environment, Sphere
from .geometry import HyperRect


def empty(d: int = 2) -> Environment:
    return Environment(HyperRect.unit(d))


def full(d: int = 2) -> Environment:
    """Every point of the domain collides."""
    return Environment(HyperRect.unit(d), [AABB((0.0,) * d, (1.0,) * d)])


def quarter() -> Environment:
    """Two disjoint 0.25 x 0.5 boxes; obstacles cover exactly 25% of the square."""
    return Environment(
        HyperRect.unit(2),
        [AABB((0.2, 0.1), (0.45, 0.6)), AABB((0.55, 0.4), (0.8, 0.9))],
    )


def half() -> Environment:
    return Environment(HyperRect.unit(2), [AABB((0.0, 0.0), (0.5, 1.0))])


def random_boxes(n: int = 4, seed: int = 7, d: int = 2, max_side: float = 0.4) -> Environment:
    """``n`` random (possibly overlapping) boxes inside the unit cube."""
    rng = random.Random(seed)
    boxes = []
    for _ in range(n):
        lo, hi = [], []
        for _ in range(d):
            side = rng.uniform(0.05, max_side)
            a = rng.uniform(0.0, 1.0 - side)
            lo.append(round(a, 6))
            hi.append(round(a + side, 6))
        boxes.append(AABB(tuple(lo), tuple(hi)))
    return Environment(HyperRect.unit(d), boxes)


def disk() -> Environment:
    return Environment(HyperRect.unit(2), [Sphere((0.5, 0.5), 0.25)])


def mixed() -> Environment:
    return Environment(
        HyperRect.unit(2),
        [AABB((0.2, 0.2), (0.4, 0.4)), Sphere((0.7, 0.7), 0.1)],
    )


STOCK = {
    "empty": empty,
    "full": full,
    "quarter": quarter,
    "half": half,
    "random4": random_boxes,
    "disk": disk,
    "mixed": mixed,
}
