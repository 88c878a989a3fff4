"""Reference samplers sharing the adaptive sampler's record format."""

from __future__ import annotations

import math
import random

from .env import Environment
from .sampler import SampleRecord

DEFAULT_BUDGET = 10**6


class BudgetExhausted(RuntimeError):
    def __init__(self, budget: int):
        super().__init__(f"rejection sampling found no free point within budget of {budget} attempts")
        self.budget = budget


class BaselineSampler:
    """Plain uniform sampling over the domain.

    ``kind="rejection"`` redraws until a point is free (the standard approach);
    ``kind="uniform"`` returns every draw with its collision status.
    """

    KINDS = ("rejection", "uniform")

    def __init__(self, env: Environment, seed: int = 0, kind: str = "rejection", budget: int = DEFAULT_BUDGET):
        if kind not in self.KINDS:
            raise ValueError(f"unknown baseline kind {kind!r}")
        if budget < 1:
            raise ValueError("budget must be positive")
        self.env = env
        self.kind = kind
        self.seed = seed
        self.budget = budget
        self.rng = random.Random(seed)
        self.draws = 0
        self._lo = env.domain.lo
        self._hi = env.domain.hi

    def _point(self):
        rnd = self.rng.random
        out = []
        for a, b in zip(self._lo, self._hi):
            v = a + rnd() * (b - a)
            out.append(v if v < b else math.nextafter(b, a))
        return tuple(out)

    def _record(self, x, free) -> SampleRecord:
        rec = SampleRecord(x, free, 1, self.draws, 0)
        self.draws += 1
        return rec

    def uniform_sample(self) -> SampleRecord:
        x = self._point()
        return self._record(x, self.env.collision_free(x))

    def rejection_sample(self) -> SampleRecord:
        for _ in range(self.budget):
            x = self._point()
            if self.env.collision_free(x):
                return self._record(x, True)
        raise BudgetExhausted(self.budget)

    def draw(self) -> SampleRecord:
        if self.kind == "rejection":
            return self.rejection_sample()
        return self.uniform_sample()

    generate = draw
