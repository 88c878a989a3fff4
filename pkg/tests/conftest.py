import pytest

from kdsampler import worlds
from kdsampler.analysis import LeafMassTracker, run_convergence
from kdsampler.baseline import BaselineSampler
from kdsampler.sampler import SamplerTree

ACCEPTANCE_LINES: list[str] = []
SEED = 0
N = 10**6


@pytest.fixture
def quarter():
    return worlds.quarter()


@pytest.fixture
def empty():
    return worlds.empty()


@pytest.fixture
def full():
    return worlds.full()


class WindowHits:
    def __init__(self, windows):
        self.windows = windows
        self.hits = [0] * len(windows)

    def __call__(self, rec):
        if not rec.free:
            n = rec.draw_index + 1
            for k, (a, b) in enumerate(self.windows):
                if a < n <= b:
                    self.hits[k] += 1

    def fraction(self, k):
        a, b = self.windows[k]
        return self.hits[k] / (b - a)


@pytest.fixture(scope="session")
def quarter_run():
    env = worlds.quarter()
    tree = SamplerTree(env, seed=SEED)
    tracker = LeafMassTracker(tree)
    windows = WindowHits([(0, 10**5), (9 * 10**5, N)])

    def observe(rec):
        tracker(rec)
        windows(rec)

    adaptive = run_convergence(tree, env, (10**4, 10**5, N), 64, observer=observe)
    oracle = run_convergence(BaselineSampler(worlds.quarter(), seed=SEED + 1), None, (N,), 64)
    return {"env": env, "tree": tree, "tracker": tracker, "windows": windows, "adaptive": adaptive, "oracle": oracle}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
