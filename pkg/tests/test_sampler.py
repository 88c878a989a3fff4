import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from kdsampler import worlds
from kdsampler.env import AABB, Environment
from kdsampler.geometry import HyperRect, contains, split
from kdsampler.sampler import ZeroTotalMass, frequencies, new_tree


class Scripted(random.Random):
    """random() replays a fixed script, then falls back to a seeded stream."""

    def __new__(cls, *args, **kwargs):
        return super().__new__(cls)

    def __init__(self, script, seed=0):
        super().__init__(seed)
        self.script = list(script)

    def random(self):
        return self.script.pop(0) if self.script else super().random()


def two_leaf_tree(mu0, mu1):
    tree = new_tree(worlds.empty(), seed=0)
    tree.generate()
    tree._mu[1], tree._mu[2] = mu0, mu1
    tree._mu[0] = mu0 + mu1
    return tree


def test_new_tree():
    tree = new_tree(worlds.empty(), seed=1)
    root = tree.root
    assert root.is_leaf and root.mu == 1.0 and root.m == 0.0 and root.c == 0.0 and root.j == 0
    big = new_tree(Environment(HyperRect((0, 0), (2, 3))))
    assert big.root.mu == 6.0


def test_first_call_on_empty_world():
    tree = new_tree(Environment(HyperRect((0, 0), (2, 3))), seed=4)
    rec = tree.generate()
    assert rec.free and rec.draw_index == 0 and rec.leaf_path_depth == 1
    root = tree.root
    assert not root.is_leaf and root.m == 1.0 and root.c == 1.0
    assert root.x == rec.point
    a, b = root.children
    assert (a.rect, b.rect) == split(HyperRect((0, 0), (2, 3)), rec.point, 0)
    for child in (a, b):
        w = child.rect.measure() / 6.0
        assert child.m == pytest.approx(w) and child.c == pytest.approx(w)
        assert child.mu == pytest.approx(child.rect.measure())
        assert child.j == 1 and child.parent == root and child.depth == 2
    assert root.mu == pytest.approx(6.0)


def test_fully_blocked_world_never_splits(full):
    tree = new_tree(full, seed=2)
    for n in range(1, 51):
        assert not tree.generate().free
        assert tree.root.is_leaf and tree.root.mu == 0.0 and tree.root.m == n
    assert full.query_count == 50


def test_empty_world_every_call_splits(empty):
    tree = new_tree(empty, seed=3)
    for _ in range(1000):
        assert tree.generate().free
    stats = tree.tree_stats()
    assert stats["internal_count"] == 1000 and stats["leaf_count"] == 1001
    assert stats["leaf_mass"] == pytest.approx(1.0, rel=1e-12)
    tree.validate()


def test_leaf_statistics_fresh(empty):
    stats = new_tree(empty).tree_stats()
    assert stats["leaf_count"] == 1 and stats["depth_histogram"] == {1: 1}


def test_descend_probability_examples():
    tree = two_leaf_tree(0.3, 0.1)
    assert tree.descend_probability(tree.root) == 1.0
    a, b = tree.root.children
    assert tree.descend_probability(a) == pytest.approx(0.75)
    zero = two_leaf_tree(0.0, 0.5)
    assert zero.descend_probability(zero.root.children[0]) == 0.0


def test_descend_probability_zero_mass(full):
    tree = new_tree(full)
    tree.generate()
    with pytest.raises(ZeroTotalMass):
        tree.descend_probability(tree.root)
    with pytest.raises(ZeroTotalMass):
        tree.descend_only(0)


def test_descend_only_single_leaf(empty):
    tree = new_tree(empty)
    assert tree.descend_only(0) == tree.root


def test_descend_only_frequencies():
    tree = two_leaf_tree(0.3, 0.1)
    before = tree.snapshot()
    counts = frequencies(tree, 100_000, rng=9)
    assert counts[1] / 100_000 == pytest.approx(0.75, abs=0.01)
    assert tree.snapshot() == before


def test_descend_only_skips_massless_leaf():
    tree = two_leaf_tree(0.0, 0.5)
    counts = frequencies(tree, 100_000, rng=1)
    assert counts == {2: 100_000}


def test_tie_goes_left():
    tree = two_leaf_tree(0.25, 0.25)
    assert tree.descend_only(Scripted([0.5])).index == 1
    assert tree.descend_only(Scripted([0.5 + 2**-52])).index == 2


def test_degenerate_child_is_massless(empty):
    tree = new_tree(empty)
    tree.rng = Scripted([0.0, 0.3])  # x = (0.0, 0.3): split plane on the boundary
    tree.generate()
    a, b = tree.root.children
    assert a.rect.measure() == 0.0 and a.m == 0.0 and a.c == 0.0 and a.mu == 0.0
    assert b.rect == tree.root.rect and b.mu == 1.0
    tree.rng = random.Random(0)
    for _ in range(200):
        rec = tree.generate()
        assert rec.leaf != a.index
    tree.validate()


def test_split_guard(empty):
    tree = new_tree(Environment(HyperRect((0, 0), (1, 1)), [AABB((0.5, 0), (1, 1))]))
    # force a leaf narrower than the guard then land free samples in it
    tree.rng = Scripted([1e-13, 0.5])
    tree.generate()
    narrow = tree.root.children[0]
    assert narrow.rect.sides[0] < 1e-12
    tree.rng = Scripted([0.0, 0.5, 0.5])  # descend left (tie), draw inside the narrow leaf
    rec = tree.generate()
    assert rec.free and rec.leaf == narrow.index and narrow.is_leaf
    assert narrow.mu == pytest.approx(narrow.c / narrow.m * narrow.rect.measure())


def test_determinism():
    a = new_tree(worlds.random_boxes(), seed=123)
    b = new_tree(worlds.random_boxes(), seed=123)
    ra = [a.generate() for _ in range(2000)]
    rb = [b.generate() for _ in range(2000)]
    assert ra == rb
    assert a.snapshot() == b.snapshot()
    assert [r.draw_index for r in ra] == list(range(2000))


def test_samples_lie_in_their_leaf(quarter):
    tree = new_tree(quarter, seed=5)
    for _ in range(500):
        rec = tree.generate()
        assert contains(tree.node(rec.leaf).rect, rec.point)


def test_snapshot_format(empty):
    tree = new_tree(empty, seed=1)
    tree.generate()
    lines = tree.snapshot().splitlines()
    assert lines[0].startswith("# depth lo0 lo1 hi0 hi1 j m c mu leaf")
    assert len(lines) == 4
    depth, *rest = lines[1].split()
    assert depth == "1" and rest[-1] == "0"
    assert [ln.split()[0] for ln in lines[1:]] == ["1", "2", "2"]


def test_blocked_region_mass_non_increasing(quarter):
    """Once a leaf lies inside an obstacle its mass only shrinks."""
    tree = new_tree(quarter, seed=8)
    last = {}
    for _ in range(20_000):
        rec = tree.generate()
        if not rec.free:
            mu = tree.node(rec.leaf).mu
            if rec.leaf in last:
                assert mu <= last[rec.leaf]
            last[rec.leaf] = mu


world_boxes = st.lists(
    st.tuples(st.floats(0, 0.9), st.floats(0, 0.9), st.floats(0.01, 0.5), st.floats(0.01, 0.5)).map(
        lambda t: AABB((t[0], t[1]), (min(1.0, t[0] + t[2]), min(1.0, t[1] + t[3])))
    ),
    max_size=4,
)


@settings(max_examples=30, deadline=None)
@given(world_boxes, st.integers(0, 2**64 - 1), st.integers(1, 400))
def test_invariants_hold(obs, seed, n):
    env = Environment(HyperRect.unit(2), obs)
    tree = new_tree(env, seed)
    for _ in range(n):
        tree.generate()
    tree.validate()
    assert env.query_count == n == tree.draws


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 4), st.integers(0, 1000))
def test_invariants_any_dimension(d, seed):
    env = worlds.random_boxes(3, seed=seed, d=d)
    tree = new_tree(env, seed)
    for _ in range(300):
        tree.generate()
    tree.validate()
    leaf_volume = math.fsum(v.rect.measure() for v in tree.leaves())
    assert leaf_volume == pytest.approx(1.0, rel=1e-9)
    for v in tree.leaves():
        if v.m > 0:
            assert v.mu == pytest.approx(v.c / v.m * v.rect.measure(), rel=1e-12, abs=1e-300)
