"""Command line: sample streams, density heatmaps, benchmarks and probes.

Exit codes: 0 ok, 2 bad configuration, 3 unreadable environment file,
4 rejection budget exhausted, 5 internal invariant violated.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .analysis import (
    DEFAULT_SCHEDULE,
    LeafMassTracker,
    NodeClass,
    classify_leaves,
    counts_csv,
    free_node_mu_probe,
    pgm_image,
    run_convergence,
)
from .baseline import DEFAULT_BUDGET, BaselineSampler, BudgetExhausted
from .env import Environment, ParseError, file_hash, load_environment
from .sampler import SamplerTree

EXIT_OK, EXIT_CONFIG, EXIT_PARSE, EXIT_BUDGET, EXIT_INVARIANT = 0, 2, 3, 4, 5
SAMPLERS = ("adaptive", "rejection", "uniform")
SEED_MASK = (1 << 64) - 1


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    env_path: Path
    sampler: str
    seed: int
    samples: int
    grid: int
    snapshots: list[int]
    out: Path | None
    budget: int = DEFAULT_BUDGET
    window: int = 10**5

    def validate(self) -> None:
        if self.samples < 1:
            raise ConfigError("--samples must be >= 1")
        if self.grid < 2:
            raise ConfigError("--grid must be >= 2")
        if not 0 <= self.seed <= SEED_MASK:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"--sampler must be one of {', '.join(SAMPLERS)}")
        if not self.snapshots or any(s < 1 or s > self.samples for s in self.snapshots):
            raise ConfigError("--snapshots must lie in [1, --samples]")
        if any(b <= a for a, b in zip(self.snapshots, self.snapshots[1:])):
            raise ConfigError("--snapshots must be strictly increasing")
        if self.window < 1:
            raise ConfigError("--window must be >= 1")


def _snapshots(text: str | None, samples: int) -> list[int]:
    if text is None:
        out = [n for n in DEFAULT_SCHEDULE if n < samples]
        return out + [samples]
    try:
        return [int(float(tok)) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --snapshots value {text!r}") from exc


def _header(cfg: RunConfig, env_hash: str, **extra) -> str:
    sampler = extra.pop("sampler", cfg.sampler)
    fields = [f"kdsampler {__version__}", f"env_sha256={env_hash}", f"seed={cfg.seed}", f"sampler={sampler}"]
    fields += [f"{k}={v}" for k, v in extra.items()]
    return " ".join(fields)


def _make_sampler(kind: str, env: Environment, seed: int, budget: int):
    if kind == "adaptive":
        return SamplerTree(env, seed)
    return BaselineSampler(env, seed, kind=kind, budget=budget)


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")


def cmd_sample(cfg: RunConfig, env: Environment, env_hash: str) -> int:
    sampler = _make_sampler(cfg.sampler, env, cfg.seed, cfg.budget)
    d = env.dimension
    lines = [f"# {_header(cfg, env_hash, samples=cfg.samples)}"]
    lines.append(",".join(["draw_index"] + [f"x{k}" for k in range(d)] + ["free"]))
    for _ in range(cfg.samples):
        rec = sampler.draw()
        lines.append(f"{rec.draw_index}," + ",".join(repr(v) for v in rec.point) + f",{int(rec.free)}")
    _write(cfg.out, "samples.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_density(cfg: RunConfig, env: Environment, env_hash: str) -> int:
    if env.dimension < 2:
        raise ConfigError("density maps need a domain of dimension >= 2")
    sampler = _make_sampler(cfg.sampler, env, cfg.seed, cfg.budget)
    report = run_convergence(sampler, env, cfg.snapshots, cfg.grid, leaf_masses=False)
    for snap in report.snapshots:
        counts = report.histograms[snap.n]
        head = _header(cfg, env_hash, n=snap.n, grid=cfg.grid)
        _write(cfg.out, f"counts_{snap.n}.csv", counts_csv(counts, head))
        _write(cfg.out, f"density_{snap.n}.pgm", pgm_image(counts, head))
        print(f"n={snap.n} tv={snap.tv:.6f} obstacle_hit_fraction={snap.obstacle_hit_fraction:.6f}")
    return EXIT_OK


def _bench_windows(sampler, samples: int, window: int):
    """Yield (end, draws, checks, free) per window of returned samples."""
    env = sampler.env
    done = 0
    while done < samples:
        k = min(window, samples - done)
        checks0 = env.query_count
        free = 0
        for _ in range(k):
            free += sampler.draw().free
        done += k
        yield done, k, env.query_count - checks0, free


def cmd_bench(cfg: RunConfig, env: Environment, env_hash: str) -> int:
    seeds = {"adaptive": cfg.seed, "rejection": (cfg.seed + 1) & SEED_MASK}
    rows = ["sampler,seed,window_end,samples,checks,free,checks_per_free"]
    head = _header(cfg, env_hash, sampler="adaptive,rejection", samples=cfg.samples, window=cfg.window)
    summary = [f"# {head}"]
    for kind, seed in seeds.items():
        world = env.copy()
        sampler = _make_sampler(kind, world, seed, cfg.budget)
        t0 = time.perf_counter()
        last = None
        tot_checks = tot_free = 0
        for end, k, checks, free in _bench_windows(sampler, cfg.samples, cfg.window):
            cpf = checks / free if free else math.inf
            rows.append(f"{kind},{seed},{end},{k},{checks},{free},{cpf!r}")
            tot_checks += checks
            tot_free += free
            last = cpf
        elapsed = time.perf_counter() - t0
        overall = tot_checks / tot_free if tot_free else math.inf
        summary.append(
            f"{kind}: seed={seed} checks_per_free={overall:.6f} final_window_checks_per_free={last:.6f} "
            f"wall_s_per_1e5={elapsed * 1e5 / cfg.samples:.4f}"
        )
    csv = f"# {head}\n" + "\n".join(rows) + "\n"
    text = "\n".join(summary) + "\n"
    if cfg.out is not None:
        _write(cfg.out, "bench.csv", csv)
        _write(cfg.out, "bench.txt", text)
    else:
        sys.stdout.write(csv)
    sys.stdout.write(text)
    return EXIT_OK


def _probe(name: str, ok: bool | None, detail: str) -> str:
    status = "SKIPPED(MC-only)" if ok is None else ("PASS" if ok else "FAIL")
    return f"{status} {name}: {detail}"


def cmd_classify(cfg: RunConfig, env: Environment, env_hash: str) -> int:
    tree = SamplerTree(env, cfg.seed)
    tracker = LeafMassTracker(tree)
    report = run_convergence(tree, env, cfg.snapshots, cfg.grid, observer=tracker)
    _write(cfg.out, "convergence.csv", report.to_csv(_header(cfg, env_hash, grid=cfg.grid)))
    tree.validate()
    lines = [_probe("mass-consistency", True, "every internal mu equals the sum of its children")]

    tvs = report.column("tv")
    tv_ok = all(b < a for a, b in zip(tvs, tvs[1:])) if not any(map(math.isnan, tvs)) else False
    lines.append(_probe("tv-decreasing", tv_ok, " > ".join(f"{v:.5f}" for v in tvs)))
    hits = report.column("obstacle_hit_fraction")
    last_hit = hits[-1]
    decay = last_hit < 0.02 and (len(hits) == 1 or last_hit < hits[0])
    lines.append(_probe("obstacle-hit-decay", decay, f"first window {hits[0]:.5f}, last window {last_hit:.5f} (< 0.02)"))

    total = env.domain.measure()
    if env.aabb_only:
        free_space = env.free_measure()
        last = report.snapshots[-1]
        if free_space > 0:
            rel = abs(last.free_mass - free_space) / free_space
            lines.append(_probe("free-leaf-mass", rel <= 0.05, f"{last.free_mass:.6f} vs free volume {free_space:.6f} (rel {rel:.4f} <= 0.05)"))
        blocked = last.obstacle_mass + last.mixed_mass
        lines.append(_probe("blocked-leaf-mass", blocked < 0.02 * total, f"{blocked:.6f} < {0.02 * total:.6f}"))
        idx, classes = classify_leaves(tree, env)
        bad = tracker.violations(idx[classes == NodeClass.OBSTACLE])
        lines.append(_probe("obstacle-leaf-monotone", not bad, f"{len(bad)} leaves with increasing mu"))
        share, count = free_node_mu_probe(tree, env)
        lines.append(_probe("free-node-mu", share >= 0.95, f"{share:.3f} of {count} free internal nodes within 5% (>= 0.95)"))
    else:
        for name in ("free-leaf-mass", "blocked-leaf-mass", "obstacle-leaf-monotone", "free-node-mu"):
            lines.append(_probe(name, None, "needs an AABB-only world"))
    print("\n".join(lines))
    return EXIT_OK


COMMANDS = {"sample": cmd_sample, "density": cmd_density, "bench": cmd_bench, "classify": cmd_classify}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kdsampler", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kdsampler {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    defaults = {"sample": 1000, "density": 10**6, "bench": 10**6, "classify": 10**6}
    for name, n in defaults.items():
        p = sub.add_parser(name, help=COMMANDS[name].__name__)
        p.add_argument("--env", required=True, type=Path, help="environment JSON file")
        if name in ("sample", "density"):
            p.add_argument("--sampler", default="adaptive", help="adaptive | rejection | uniform")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--samples", type=int, default=n)
        p.add_argument("--grid", type=int, default=64)
        p.add_argument("--snapshots", default=None, help="comma separated draw counts")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="rejection attempts per sample")
        if name == "bench":
            p.add_argument("--window", type=int, default=10**5)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(
            env_path=args.env,
            sampler=getattr(args, "sampler", "adaptive"),
            seed=args.seed,
            samples=args.samples,
            grid=args.grid,
            snapshots=_snapshots(args.snapshots, args.samples),
            out=args.out,
            budget=args.budget,
            window=getattr(args, "window", 10**5),
        )
        cfg.validate()
        if args.budget < 1:
            raise ConfigError("--budget must be >= 1")
        if not cfg.env_path.is_file():
            raise ConfigError(f"environment file not found: {cfg.env_path}")
    except ConfigError as exc:
        print(f"kdsampler: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        env = load_environment(cfg.env_path)
    except (ParseError, ValueError, UnicodeDecodeError) as exc:
        print(f"kdsampler: cannot parse {cfg.env_path}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        return COMMANDS[args.command](cfg, env, file_hash(cfg.env_path))
    except ConfigError as exc:
        print(f"kdsampler: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExhausted as exc:
        print(f"kdsampler: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except AssertionError as exc:
        print(f"kdsampler: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
