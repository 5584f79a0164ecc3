import itertools

import numpy as np
import pytest

from harvester.graph import FullGraph


def graph_from(edges, n=None):
    """Graph from pairs of small ints or single letters ('a' -> 0)."""
    def idx(x):
        return ord(x) - ord("a") if isinstance(x, str) else x
    u = [idx(a) for a, _ in edges]
    v = [idx(b) for _, b in edges]
    return FullGraph.from_edges(u, v, n=n)


def random_graph(rng, n, p):
    pairs = np.array(list(itertools.combinations(range(n), 2)))
    keep = rng.random(len(pairs)) < p
    e = pairs[keep]
    return FullGraph.from_edges(e[:, 0], e[:, 1], n=n)


def random_crawl(rng, g, targets, steps, seed=0):
    from harvester.graph import CrawlState
    st = CrawlState(g, seed)
    for _ in range(steps):
        fr = st.frontier()
        if len(fr) == 0:
            break
        v = int(rng.choice(fr))
        st.crawl(v, bool(targets[v]))
    return st


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def check(number, ok, detail):
        lines.append((number, bool(ok), detail))
        assert ok, f"criterion {number}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for number, ok, detail in sorted(lines):
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {detail}")
