"""Oracle-side checks of the sampler: node classes, histograms and convergence runs."""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .env import Environment
from .geometry import HyperRect, measure
from .sampler import Node, SampleRecord, SamplerTree

DEFAULT_SCHEDULE = (10**4, 10**5, 10**6)
CLASS_TOL = 1e-12


class ZeroFreeSpace(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


class NodeClass(enum.Enum):
    FREE = "free"
    OBSTACLE = "obstacle"
    MIXED = "mixed"


# --- classification ---------------------------------------------------------


def classify_rect(
    env: Environment,
    rect: HyperRect,
    mc_samples: int = 4096,
    rng: np.random.Generator | int | None = 0,
) -> NodeClass:
    """Free / obstacle / mixed class of a box, exact for AABB-only worlds.

    Worlds with spheres fall back to Monte Carlo and answer MIXED whenever
    the estimate is not at least 4 standard errors away from the other class.
    """
    vol = measure(rect)
    if vol <= 0.0:
        # measure-zero boxes may be counted either way; decide by their centre
        centre = tuple((a + b) / 2 for a, b in zip(rect.lo, rect.hi))
        return NodeClass.FREE if env.is_free(centre) else NodeClass.OBSTACLE
    if env.aabb_only:
        free = env.free_measure_exact(rect)
        if free >= vol * (1.0 - CLASS_TOL):
            return NodeClass.FREE
        if free <= vol * CLASS_TOL:
            return NodeClass.OBSTACLE
        return NodeClass.MIXED
    est, se = env.free_measure_mc(rect, mc_samples, rng)
    if est == vol:
        return NodeClass.FREE
    if est == 0.0:
        return NodeClass.OBSTACLE
    near_full = vol - est <= 4 * se
    near_empty = est <= 4 * se
    if near_full and not near_empty:
        return NodeClass.FREE
    if near_empty and not near_full:
        return NodeClass.OBSTACLE
    return NodeClass.MIXED


def classify_node(env: Environment, v: Node, **kw) -> NodeClass:
    return classify_rect(env, v.rect, **kw)


def classify_boxes(env: Environment, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Vectorised exact classification of many boxes in an AABB-only world.

    Returns an object array of :class:`NodeClass`. Boxes touched by a single
    obstacle are decided from that obstacle's overlap; the rest go through
    :meth:`Environment.free_measure_exact`.
    """
    if not env.aabb_only:
        return np.array(
            [classify_rect(env, HyperRect(tuple(a), tuple(b))) for a, b in zip(lo, hi)], dtype=object
        )
    n = len(lo)
    vol = np.prod(hi - lo, axis=1)
    overlaps = np.zeros((n, len(env.obstacles)))
    for k, ob in enumerate(env.obstacles):
        side = np.minimum(hi, ob.hi) - np.maximum(lo, ob.lo)
        overlaps[:, k] = np.prod(np.clip(side, 0.0, None), axis=1)
    touching = (overlaps > 0.0).sum(axis=1)
    covered = overlaps.sum(axis=1)
    out = np.full(n, NodeClass.MIXED, dtype=object)
    out[covered <= vol * CLASS_TOL] = NodeClass.FREE
    if overlaps.shape[1]:
        out[overlaps.max(axis=1) >= vol * (1.0 - CLASS_TOL)] = NodeClass.OBSTACLE
    for i in np.flatnonzero((touching > 1) & (out == NodeClass.MIXED)):
        out[i] = classify_rect(env, HyperRect(tuple(lo[i]), tuple(hi[i])))
    degenerate = vol <= 0.0
    for i in np.flatnonzero(degenerate):
        out[i] = classify_rect(env, HyperRect(tuple(lo[i]), tuple(hi[i])))
    return out


def classify_leaves(tree: SamplerTree, env: Environment | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Leaf ids and their classes."""
    env = tree.env if env is None else env
    a = tree.arrays()
    idx = np.flatnonzero(a["left"] < 0)
    return idx, classify_boxes(env, a["lo"][idx], a["hi"][idx])


@dataclass
class ClassMass:
    """Leaf mass (sum of ``mu``) and volume aggregated per node class."""

    mass: dict[NodeClass, float]
    volume: dict[NodeClass, float]
    count: dict[NodeClass, int]

    @property
    def free(self) -> float:
        return self.mass[NodeClass.FREE]

    @property
    def obstacle(self) -> float:
        return self.mass[NodeClass.OBSTACLE]

    @property
    def mixed(self) -> float:
        return self.mass[NodeClass.MIXED]


def leaf_mass_by_class(tree: SamplerTree, env: Environment | None = None) -> ClassMass:
    env = tree.env if env is None else env
    a = tree.arrays()
    idx = np.flatnonzero(a["left"] < 0)
    lo, hi = a["lo"][idx], a["hi"][idx]
    classes = classify_boxes(env, lo, hi)
    mu = a["mu"][idx]
    vol = np.prod(hi - lo, axis=1)
    mass, volume, count = {}, {}, {}
    for cls in NodeClass:
        sel = classes == cls
        mass[cls] = math.fsum(mu[sel])
        volume[cls] = math.fsum(vol[sel])
        count[cls] = int(sel.sum())
    return ClassMass(mass, volume, count)


def free_node_mu_probe(
    tree: SamplerTree, env: Environment | None = None, max_depth: int = 5, tol: float = 0.05
) -> tuple[float, int]:
    """Share of internal free nodes (depth <= max_depth) whose mu is within
    ``tol`` of their volume, and how many such nodes exist."""
    env = tree.env if env is None else env
    ok = total = 0
    stack = [tree.root]
    while stack:
        v = stack.pop()
        if v.is_leaf or v.depth > max_depth:
            continue
        stack.extend(v.children)
        vol = v.rect.measure()
        if vol > 0 and classify_node(env, v) is NodeClass.FREE:
            total += 1
            ok += abs(v.mu / vol - 1.0) <= tol
    return (ok / total if total else 1.0), total


class LeafMassTracker:
    """Records each leaf's mu right after every colliding draw it produced.

    Feed it the records of a :class:`SamplerTree`; afterwards
    :meth:`violations` lists leaves whose sequence ever increased.
    """

    def __init__(self, tree: SamplerTree):
        self.tree = tree
        self.history: dict[int, list[float]] = {}

    def __call__(self, rec: SampleRecord) -> None:
        if not rec.free:
            self.history.setdefault(rec.leaf, []).append(self.tree._mu[rec.leaf])

    def violations(self, leaves: Iterable[int]) -> list[int]:
        bad = []
        for i in leaves:
            seq = self.history.get(int(i), [])
            if any(b > a for a, b in zip(seq, seq[1:])):
                bad.append(int(i))
        return bad


# --- histograms -------------------------------------------------------------


@dataclass
class HistogramGrid:
    """Counts over a regular grid on the first two axes of the domain.

    ``counts[row, col]``: row indexes axis 1, col indexes axis 0, both from the
    domain's min corner. For d > 2 a cell is the full slab over the other axes.
    For d == 1 there is a single row.
    """

    domain: HyperRect
    resolution: tuple[int, int]
    free_measure: np.ndarray
    counts: np.ndarray = None  # type: ignore[assignment]
    total: int = 0

    def __post_init__(self):
        rx, ry = self.resolution
        if self.counts is None:
            self.counts = np.zeros((ry, rx), dtype=np.int64)
        self._flat = [0] * (rx * ry)
        self._pending = False
        lo, hi = self.domain.lo, self.domain.hi
        self._x0, self._sx = lo[0], rx / (hi[0] - lo[0])
        if self.domain.dim > 1:
            self._y0, self._sy = lo[1], ry / (hi[1] - lo[1])
        else:
            self._y0, self._sy = 0.0, 0.0

    @classmethod
    def for_env(cls, env: Environment, resolution: int | tuple[int, int] = 64, mc_samples: int = 4096):
        if isinstance(resolution, int):
            resolution = (resolution, resolution if env.dimension > 1 else 1)
        rx, ry = resolution
        return cls(env.domain, (rx, ry), cell_free_measures(env, (rx, ry), mc_samples))

    @property
    def free_total(self) -> float:
        return float(math.fsum(self.free_measure.ravel()))

    def cell(self, row: int, col: int) -> HyperRect:
        return _cell_rect(self.domain, self.resolution, row, col)

    def add_point(self, x: Sequence[float]) -> None:
        rx, ry = self.resolution
        ix = int((x[0] - self._x0) * self._sx)
        ix = 0 if ix < 0 else (rx - 1 if ix >= rx else ix)
        iy = int((x[1] - self._y0) * self._sy) if ry > 1 else 0
        iy = 0 if iy < 0 else (ry - 1 if iy >= ry else iy)
        self._flat[iy * rx + ix] += 1
        self.total += 1
        self._pending = True

    def add_points(self, pts: np.ndarray) -> None:
        for x in np.asarray(pts, dtype=float):
            self.add_point(x)

    def sync(self) -> "HistogramGrid":
        """Fold scalar additions into ``counts``."""
        if self._pending:
            rx, ry = self.resolution
            self.counts = self.counts + np.asarray(self._flat, dtype=np.int64).reshape(ry, rx)
            self._flat = [0] * (rx * ry)
            self._pending = False
        return self


def _cell_rect(domain: HyperRect, res: tuple[int, int], row: int, col: int) -> HyperRect:
    rx, ry = res
    lo, hi = list(domain.lo), list(domain.hi)
    w0 = (domain.hi[0] - domain.lo[0]) / rx
    lo[0], hi[0] = domain.lo[0] + col * w0, (domain.hi[0] if col == rx - 1 else domain.lo[0] + (col + 1) * w0)
    if domain.dim > 1:
        w1 = (domain.hi[1] - domain.lo[1]) / ry
        lo[1], hi[1] = domain.lo[1] + row * w1, (domain.hi[1] if row == ry - 1 else domain.lo[1] + (row + 1) * w1)
    return HyperRect(tuple(lo), tuple(hi))


def cell_free_measures(env: Environment, res: tuple[int, int], mc_samples: int = 4096) -> np.ndarray:
    rx, ry = res
    out = np.empty((ry, rx))
    rng = np.random.default_rng(0)
    for row in range(ry):
        for col in range(rx):
            cell = _cell_rect(env.domain, res, row, col)
            if env.aabb_only:
                out[row, col] = env.free_measure_exact(cell)
            else:
                out[row, col] = env.free_measure_mc(cell, mc_samples, rng)[0]
    return out


def tv_distance(h: HistogramGrid) -> float:
    h.sync()
    if h.total <= 0:
        raise InsufficientSamples("empty histogram")
    free_total = h.free_total
    if not free_total > 0:
        raise ZeroFreeSpace("the world has no free space")
    p = h.counts / h.total
    q = h.free_measure / free_total
    return min(1.0, 0.5 * float(np.abs(p - q).sum()))


def forbidden_fraction(h: HistogramGrid) -> float:
    """Share of draws that fell in cells containing no free space at all."""
    h.sync()
    if h.total <= 0:
        return 0.0
    return float(h.counts[h.free_measure <= 0.0].sum()) / h.total


def chi_square(h: HistogramGrid, min_expected: float = 5.0) -> tuple[float, int]:
    """Pearson statistic of the counts against uniform-over-free.

    Cells without free space are left out (see :func:`forbidden_fraction`);
    expected counts use only the draws that fell in the remaining cells.
    Cells expecting fewer than ``min_expected`` draws are pooled.
    """
    h.sync()
    free_total = h.free_total
    if not free_total > 0:
        raise ZeroFreeSpace("the world has no free space")
    allowed = h.free_measure > 0.0
    obs = h.counts[allowed].astype(float)
    n = obs.sum()
    exp = n * h.free_measure[allowed] / free_total
    small = exp < min_expected
    o_bins = list(obs[~small])
    e_bins = list(exp[~small])
    if small.any():
        o_pool, e_pool = float(obs[small].sum()), float(exp[small].sum())
        if e_pool >= min_expected or not e_bins:
            o_bins.append(o_pool)
            e_bins.append(e_pool)
        else:
            k = int(np.argmin(e_bins))
            o_bins[k] += o_pool
            e_bins[k] += e_pool
    if len(e_bins) < 2 or min(e_bins) < min_expected:
        raise InsufficientSamples(f"{int(n)} draws are too few for {allowed.sum()} cells")
    o, e = np.asarray(o_bins), np.asarray(e_bins)
    return float(np.sum((o - e) ** 2 / e)), len(e_bins) - 1


def chi_square_pvalue(statistic: float, df: int) -> float:
    return float(stats.chi2.sf(statistic, df))


def ks_uniform(points: np.ndarray, domain: HyperRect) -> list[float]:
    """Per-axis Kolmogorov-Smirnov statistic against uniform on the domain."""
    pts = np.asarray(points, dtype=float)
    return [
        float(stats.kstest(pts[:, k], "uniform", args=(lo, hi - lo)).statistic)
        for k, (lo, hi) in enumerate(zip(domain.lo, domain.hi))
    ]


# --- convergence runs ---------------------------------------------------------


@dataclass
class Snapshot:
    n: int
    tv: float
    chi2: float
    df: int
    obstacle_hit_fraction: float
    free_mass: float
    obstacle_mass: float
    mixed_mass: float


CSV_COLUMNS = ("n", "tv", "chi2", "df", "obstacle_hit_fraction", "free_mass", "obstacle_mass", "mixed_mass")


@dataclass
class ConvergenceReport:
    snapshots: list[Snapshot] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    histograms: dict[int, np.ndarray] = field(default_factory=dict)
    free_measure: np.ndarray | None = None

    def to_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for s in self.snapshots:
            row = [getattr(s, c) for c in CSV_COLUMNS]
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def column(self, name: str) -> list:
        return [getattr(s, name) for s in self.snapshots]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def run_convergence(
    sampler,
    env: Environment | None = None,
    schedule: Sequence[int] = DEFAULT_SCHEDULE,
    resolution: int | tuple[int, int] = 64,
    leaf_masses: bool = True,
    observer: Callable[[SampleRecord], None] | None = None,
) -> ConvergenceReport:
    """Draw from ``sampler`` up to ``max(schedule)`` and measure at each snapshot.

    ``sampler`` is a :class:`SamplerTree` or any object with a ``draw()``
    method returning :class:`SampleRecord`. TV and chi-square use the
    cumulative histogram of all draws so far; the obstacle-hit fraction
    covers only the draws since the previous snapshot.
    """
    env = sampler.env if env is None else env
    schedule = [int(n) for n in schedule]
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])) or schedule[0] < 1:
        raise ValueError(f"snapshot schedule must be strictly increasing and positive: {schedule}")
    hist = HistogramGrid.for_env(env, resolution)
    report = ConvergenceReport(free_measure=hist.free_measure)
    no_free = not hist.free_total > 0
    if no_free:
        report.flags.append("ZeroFreeSpace")
    exact = env.aabb_only
    track_mass = leaf_masses and isinstance(sampler, SamplerTree)
    if track_mass and not exact:
        report.flags.append("SKIPPED(MC-only)")

    draw = sampler.draw
    add = hist.add_point
    done = 0
    for target in schedule:
        hits = 0
        for _ in range(target - done):
            rec = draw()
            add(rec.point)
            if not rec.free:
                hits += 1
            if observer is not None:
                observer(rec)
        window = target - done
        done = target
        hist.sync()
        report.histograms[target] = hist.counts.copy()

        tv = chi2 = math.nan
        df = 0
        if not no_free:
            tv = tv_distance(hist)
            try:
                chi2, df = chi_square(hist)
            except InsufficientSamples:
                report.flags.append(f"InsufficientSamples@{target}")
        free_m = obst_m = mixed_m = math.nan
        if track_mass and exact:
            cm = leaf_mass_by_class(sampler, env)
            free_m, obst_m, mixed_m = cm.free, cm.obstacle, cm.mixed
        report.snapshots.append(Snapshot(target, tv, chi2, df, hits / window, free_m, obst_m, mixed_m))
    return report


def pgm_image(counts: np.ndarray, comment: str | None = None) -> str:
    """Plain (P2) greyscale image of a count grid; white = low, black = high.

    Rows are written top-down with the highest axis-1 row first so the image
    has the usual orientation (domain min corner at bottom left).
    """
    counts = np.asarray(counts)
    rows, cols = counts.shape
    top = counts.max()
    scaled = np.zeros_like(counts, dtype=np.int64) if top <= 0 else np.rint(255.0 * counts / top).astype(np.int64)
    pixels = 255 - scaled
    lines = ["P2"]
    if comment:
        lines.append(f"# {comment}")
    lines.append(f"{cols} {rows}")
    lines.append("255")
    for r in range(rows - 1, -1, -1):
        lines.append(" ".join(str(int(v)) for v in pixels[r]))
    return "\n".join(lines) + "\n"


def counts_csv(counts: np.ndarray, header: str | None = None) -> str:
    """Row-major counts; first row is the axis-1 row nearest the domain min."""
    lines = [f"# {header}"] if header else []
    lines += [",".join(str(int(v)) for v in row) for row in np.asarray(counts)]
    return "\n".join(lines) + "\n"
