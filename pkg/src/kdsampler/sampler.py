"""Augmented kd-tree that learns free space and samples from it.

Every node owns a box of the domain and carries a weighted sample count
``m``, a weighted free-sample count ``c`` and an estimated free measure
``mu``. A draw walks from the root, choosing a child with probability
proportional to its ``mu``, samples uniformly inside the reached leaf and
collision-checks the point. A free point splits the leaf; the children
inherit ``m`` and ``c`` scaled by their share of the leaf's volume. On the
way back up every internal node on the path resets ``mu`` to the sum of its
children.

Nodes live in flat ``array.array`` columns indexed by node id (root = 0):
a million draws creates about two million nodes, which would not fit in
memory as individual Python objects. :class:`Node` is a read-only view.
"""

from __future__ import annotations

import math
import random
from array import array
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .env import Environment
from .geometry import HyperRect, Point

# sides shorter than this fraction of the domain side stop splitting
SPLIT_GUARD = 1e-12


class DeadTree(AssertionError):
    """The root is internal but carries no mass; impossible for a valid tree."""


class ZeroTotalMass(ValueError):
    pass


class InvariantViolation(AssertionError):
    pass


class SampleRecord(NamedTuple):
    point: Point
    free: bool
    leaf_path_depth: int
    draw_index: int
    leaf: int


def ratio(c: float, m: float) -> float:
    """Free fraction estimate ``c / m``; optimistic (1) before any sample."""
    return c / m if m > 0.0 else 1.0


class Node:
    """Read-only handle on one node of a :class:`SamplerTree`."""

    __slots__ = ("tree", "index")

    def __init__(self, tree: "SamplerTree", index: int):
        self.tree = tree
        self.index = index

    def __eq__(self, other):
        return isinstance(other, Node) and other.tree is self.tree and other.index == self.index

    def __hash__(self):
        return hash((id(self.tree), self.index))

    def __repr__(self):
        kind = "leaf" if self.is_leaf else "internal"
        return f"Node({self.index}, {kind}, depth={self.depth}, m={self.m:.6g}, c={self.c:.6g}, mu={self.mu:.6g})"

    @property
    def is_leaf(self) -> bool:
        return self.tree._left[self.index] < 0

    @property
    def children(self) -> tuple["Node", "Node"] | None:
        t, i = self.tree, self.index
        if t._left[i] < 0:
            return None
        return Node(t, t._left[i]), Node(t, t._right[i])

    @property
    def parent(self) -> "Node | None":
        p = self.tree._parent[self.index]
        return None if p < 0 else Node(self.tree, p)

    @property
    def x(self) -> Point | None:
        if self.is_leaf:
            return None
        return tuple(col[self.index] for col in self.tree._x)

    @property
    def j(self) -> int:
        return self.tree._axis[self.index]

    @property
    def m(self) -> float:
        return self.tree._m[self.index]

    @property
    def c(self) -> float:
        return self.tree._c[self.index]

    @property
    def mu(self) -> float:
        return self.tree._mu[self.index]

    @property
    def depth(self) -> int:
        return self.tree._depth[self.index]

    @property
    def rect(self) -> HyperRect:
        t, i = self.tree, self.index
        return HyperRect(tuple(col[i] for col in t._lo), tuple(col[i] for col in t._hi))


class SamplerTree:
    """Free-space biased sampler over ``env.domain``.

    All randomness (descent coin flips and leaf draws) comes from one
    ``random.Random(seed)`` stream, so a given (environment, seed, number of
    calls) always yields the same tree and the same samples.
    """

    def __init__(self, env: Environment, seed: int = 0):
        self.env = env
        self.seed = seed
        self.rng = random.Random(seed)
        self.dimension = d = env.dimension
        self.draws = 0
        self._guard = tuple(SPLIT_GUARD * s for s in env.domain.sides)
        self._lo = [array("d") for _ in range(d)]
        self._hi = [array("d") for _ in range(d)]
        self._x = [array("d") for _ in range(d)]
        self._m = array("d")
        self._c = array("d")
        self._mu = array("d")
        self._left = array("q")
        self._right = array("q")
        self._parent = array("q")
        self._axis = array("q")
        self._depth = array("q")
        self._append(env.domain.lo, env.domain.hi, 0, 0.0, 0.0, env.domain.measure(), -1, 1)

    def _append(self, lo, hi, axis, m, c, mu, parent, depth) -> int:
        for k in range(self.dimension):
            self._lo[k].append(lo[k])
            self._hi[k].append(hi[k])
            self._x[k].append(math.nan)
        self._m.append(m)
        self._c.append(c)
        self._mu.append(mu)
        self._left.append(-1)
        self._right.append(-1)
        self._parent.append(parent)
        self._axis.append(axis)
        self._depth.append(depth)
        return len(self._mu) - 1

    # -- public surface -----------------------------------------------------

    @property
    def root(self) -> Node:
        return Node(self, 0)

    @property
    def node_count(self) -> int:
        return len(self._mu)

    def node(self, index: int) -> Node:
        if not 0 <= index < len(self._mu):
            raise IndexError(index)
        return Node(self, index)

    def generate(self) -> SampleRecord:
        rnd = self.rng.random
        mu, left, right = self._mu, self._left, self._right
        d = self.dimension

        i = 0
        depth = 1
        if left[0] >= 0 and not mu[0] > 0.0:
            raise DeadTree("root is internal with zero mass")
        while left[i] >= 0:
            u = rnd() * mu[i]
            a = left[i]
            ma = mu[a]
            # ties go left; a massless child is never entered
            i = a if (u <= ma and ma > 0.0) else right[i]
            depth += 1

        lo = [col[i] for col in self._lo]
        hi = [col[i] for col in self._hi]
        x = []
        for k in range(d):
            a, b = lo[k], hi[k]
            v = a + rnd() * (b - a)
            if v >= b and a < b:
                v = math.nextafter(b, a)
            x.append(v)
        x = tuple(x)
        vol = math.prod(b - a for a, b in zip(lo, hi))

        self._m[i] += 1.0
        free = self.env.collision_free(x)
        if free:
            self._c[i] += 1.0
            if vol > 0.0 and all(b - a >= g for a, b, g in zip(lo, hi, self._guard)):
                self._split(i, x, lo, hi, vol)
            else:
                mu[i] = ratio(self._c[i], self._m[i]) * vol
        else:
            mu[i] = ratio(self._c[i], self._m[i]) * vol

        p = self._parent[i]
        while p >= 0:
            mu[p] = mu[left[p]] + mu[right[p]]
            p = self._parent[p]

        rec = SampleRecord(x, free, depth, self.draws, i)
        self.draws += 1
        return rec

    draw = generate

    def _split(self, i: int, x: Point, lo: list, hi: list, vol: float) -> None:
        j = self._axis[i]
        xj = x[j]
        m, c = self._m[i], self._c[i]
        nxt = (j + 1) % self.dimension
        depth = self._depth[i] + 1
        other = math.prod(b - a for k, (a, b) in enumerate(zip(lo, hi)) if k != j)
        kids = []
        for clo_j, chi_j in ((lo[j], xj), (xj, hi[j])):
            cvol = other * (chi_j - clo_j)
            w = cvol / vol
            cm, cc = w * m, w * c
            clo = list(lo)
            chi = list(hi)
            clo[j], chi[j] = clo_j, chi_j
            kids.append(self._append(clo, chi, nxt, cm, cc, ratio(cc, cm) * cvol, i, depth))
        self._left[i], self._right[i] = kids
        for k in range(self.dimension):
            self._x[k][i] = x[k]
        self._mu[i] = self._mu[kids[0]] + self._mu[kids[1]]

    def leaf_indices(self) -> Iterator[int]:
        """Leaf ids in deterministic pre-order (left child first)."""
        left, right = self._left, self._right
        stack = [0]
        while stack:
            i = stack.pop()
            if left[i] < 0:
                yield i
            else:
                stack.append(right[i])
                stack.append(left[i])

    def leaves(self) -> Iterator[Node]:
        return (Node(self, i) for i in self.leaf_indices())

    def total_leaf_mass(self) -> float:
        mu = self._mu
        return math.fsum(mu[i] for i in self.leaf_indices())

    def descend_probability(self, v: Node | int) -> float:
        """Probability that the next draw lands in ``v``'s box."""
        idx = v.index if isinstance(v, Node) else v
        total = self.total_leaf_mass()
        if not total > 0.0:
            raise ZeroTotalMass("all leaves have zero mass")
        return self._mu[idx] / total

    def descend_only(self, rng: random.Random | int | None = None) -> Node:
        """Run the root-to-leaf walk of :meth:`generate` without mutating anything."""
        if not isinstance(rng, random.Random):
            rng = random.Random(rng)
        if not self._mu[0] > 0.0:
            raise ZeroTotalMass("root carries no mass")
        rnd = rng.random
        mu, left, right = self._mu, self._left, self._right
        i = 0
        while left[i] >= 0:
            u = rnd() * mu[i]
            a = left[i]
            ma = mu[a]
            i = a if (u <= ma and ma > 0.0) else right[i]
        return Node(self, i)

    def tree_stats(self) -> dict:
        left = np.frombuffer(self._left, dtype=np.int64)
        depth = np.frombuffer(self._depth, dtype=np.int64)
        is_leaf = left < 0
        depths, counts = np.unique(depth[is_leaf], return_counts=True)
        return {
            "node_count": int(len(left)),
            "leaf_count": int(is_leaf.sum()),
            "internal_count": int((~is_leaf).sum()),
            "max_depth": int(depth.max()),
            "depth_histogram": {int(k): int(v) for k, v in zip(depths, counts)},
            "leaf_mass": self.total_leaf_mass(),
        }

    def arrays(self) -> dict[str, np.ndarray]:
        """Copies of the node columns as numpy arrays (one row per node id)."""
        f = lambda a, dt: np.frombuffer(a, dtype=dt).copy()  # noqa: E731
        return {
            "lo": np.stack([f(col, np.float64) for col in self._lo], axis=1),
            "hi": np.stack([f(col, np.float64) for col in self._hi], axis=1),
            "m": f(self._m, np.float64),
            "c": f(self._c, np.float64),
            "mu": f(self._mu, np.float64),
            "left": f(self._left, np.int64),
            "right": f(self._right, np.int64),
            "parent": f(self._parent, np.int64),
            "axis": f(self._axis, np.int64),
            "depth": f(self._depth, np.int64),
        }

    def validate(self, tol: float = 1e-9) -> None:
        """Raise :class:`InvariantViolation` on any broken structural invariant."""
        a = self.arrays()
        internal = np.flatnonzero(a["left"] >= 0)
        leaf = np.flatnonzero(a["left"] < 0)
        mu, m, c = a["mu"], a["m"], a["c"]
        sums = mu[a["left"][internal]] + mu[a["right"][internal]]
        bad = np.abs(mu[internal] - sums) > tol * np.maximum(1.0, mu[internal])
        if bad.any():
            raise InvariantViolation(f"mass mismatch at nodes {internal[bad][:10].tolist()}")
        if np.any(c > m):
            raise InvariantViolation(f"c > m at nodes {np.flatnonzero(c > m)[:10].tolist()}")
        vol = np.prod(a["hi"] - a["lo"], axis=1)
        leaf_mass = math.fsum(mu[leaf])
        if abs(mu[0] - leaf_mass) > tol * max(1.0, mu[0]):
            raise InvariantViolation(f"root mass {mu[0]} != leaf mass {leaf_mass}")
        dom = self.env.domain.measure()
        if abs(math.fsum(vol[leaf]) - dom) > tol * dom:
            raise InvariantViolation("leaf boxes do not cover the domain")
        weak = (a["depth"] > 1) & (vol > 0) & ~(c > 0)
        if weak.any():
            raise InvariantViolation(f"zero free weight at nodes {np.flatnonzero(weak)[:10].tolist()}")

    def snapshot(self) -> str:
        """Pre-order text dump: ``depth lo.. hi.. j m c mu leaf`` per line."""
        d = self.dimension
        head = ["depth"] + [f"lo{k}" for k in range(d)] + [f"hi{k}" for k in range(d)]
        lines = ["# " + " ".join(head + ["j", "m", "c", "mu", "leaf"])]
        stack = [0]
        while stack:
            i = stack.pop()
            leaf = self._left[i] < 0
            fields = [str(self._depth[i])]
            fields += [repr(col[i]) for col in self._lo]
            fields += [repr(col[i]) for col in self._hi]
            fields += [str(self._axis[i]), repr(self._m[i]), repr(self._c[i]), repr(self._mu[i])]
            fields.append("1" if leaf else "0")
            lines.append(" ".join(fields))
            if not leaf:
                stack.append(self._right[i])
                stack.append(self._left[i])
        return "\n".join(lines) + "\n"


def new_tree(env: Environment, seed: int = 0) -> SamplerTree:
    return SamplerTree(env, seed)


def frequencies(tree: SamplerTree, trials: int, rng: random.Random | int | None = None) -> dict[int, int]:
    """Leaf hit counts of ``trials`` mutation-free descents."""
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    counts: dict[int, int] = {}
    for _ in range(trials):
        i = tree.descend_only(rng).index
        counts[i] = counts.get(i, 0) + 1
    return counts


def points_of(records: Sequence[SampleRecord]) -> np.ndarray:
    return np.array([r.point for r in records], dtype=float)
