import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from kdsampler.geometry import (
    DegenerateRect,
    HyperRect,
    PointOutsideRect,
    contains,
    measure,
    sample_uniform,
    split,
)

UNIT = HyperRect.unit(2)


@pytest.mark.parametrize(
    "lo, hi, expected",
    [((0, 0), (1, 1), 1.0), ((0, 0), (2, 3), 6.0), ((0, 5), (1, 5), 0.0)],
)
def test_measure(lo, hi, expected):
    assert measure(HyperRect(lo, hi)) == expected


def test_invalid_rect_rejected():
    with pytest.raises(ValueError):
        HyperRect((0, 1), (1, 0))
    with pytest.raises(ValueError):
        HyperRect((0, math.inf), (1, 1))


def test_sample_uniform_contained():
    rng = random.Random(3)
    for _ in range(1000):
        assert contains(UNIT, sample_uniform(UNIT, rng))


def test_sample_uniform_ks():
    rng = random.Random(11)
    pts = np.array([sample_uniform(UNIT, rng) for _ in range(100_000)])
    for k in range(2):
        assert stats.kstest(pts[:, k], "uniform").statistic < 0.01


def test_sample_uniform_degenerate():
    r = HyperRect((2, 0), (2, 1))
    with pytest.raises(DegenerateRect) as info:
        sample_uniform(r, random.Random(0))
    assert info.value.point == (2.0, 0.0)


def test_sample_uniform_never_hits_hi():
    class One:
        def random(self):
            return 1.0 - 2**-53

    r = HyperRect((0.1, 0.1), (0.3, 0.7))
    x = sample_uniform(r, One())
    assert all(v < b for v, b in zip(x, r.hi))


def test_split_examples():
    a, b = split(UNIT, (0.25, 0.6), 0)
    assert (a, b) == (HyperRect((0, 0), (0.25, 1)), HyperRect((0.25, 0), (1, 1)))
    a, b = split(UNIT, (0.25, 0.6), 1)
    assert (a, b) == (HyperRect((0, 0), (1, 0.6)), HyperRect((0, 0.6), (1, 1)))


def test_split_on_boundary():
    a, b = split(UNIT, (0.0, 0.3), 0)
    assert measure(a) == 0.0
    assert b == UNIT


def test_split_outside():
    with pytest.raises(PointOutsideRect):
        split(UNIT, (1.5, 0.5), 0)


@pytest.mark.parametrize("x, inside", [((0.5, 0.5), True), ((1.0, 0.5), True), ((1.1, 0.5), False)])
def test_contains(x, inside):
    assert contains(UNIT, x) is inside


coord = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


@st.composite
def rect_and_point(draw, max_dim=4):
    d = draw(st.integers(1, max_dim))
    lo, hi, x = [], [], []
    for _ in range(d):
        a, b = sorted((draw(coord), draw(coord)))
        lo.append(a)
        hi.append(b)
        t = draw(st.floats(0, 1))
        x.append(min(b, max(a, a + t * (b - a))))
    return HyperRect(tuple(lo), tuple(hi)), tuple(x), draw(st.integers(0, d - 1))


@given(rect_and_point())
def test_split_conserves_measure(args):
    r, x, j = args
    a, b = split(r, x, j)
    assert math.isclose(measure(a) + measure(b), measure(r), rel_tol=1e-12, abs_tol=1e-300)
    assert split(r, x, j) == (a, b)


@given(rect_and_point(), st.integers(0, 2**64 - 1))
def test_sample_in_rect(args, seed):
    r, _, _ = args
    try:
        x = sample_uniform(r, random.Random(seed))
    except DegenerateRect as exc:
        x = exc.point
    assert contains(r, x)
