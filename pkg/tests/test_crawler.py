from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from harvester.boosting import BoostConfig
from harvester.crawler import (POLICIES, CrawlerConfig, GraphExhausted, next_retrain_step,
                               retrain_chain, run_crawl, select_next, targets_collected)
from harvester.datasets import generate_type1
from harvester.graph import CrawlState
from harvester.oracle import Oracle, resolve

from conftest import graph_from, random_graph

FAST = {"epochs": 5}


def test_retrain_steps():
    assert next_retrain_step(10) == 11
    assert next_retrain_step(14) == 16
    assert next_retrain_step(20) == 23  # 20 * 1.15 is 22.999... in binary floating point
    assert next_retrain_step(2) == 3
    assert retrain_chain(10, 34) == [10, 11, 12, 13, 14, 16, 18, 20, 23, 26, 29, 33]


def test_select_next(rng):
    assert select_next(np.array([1, 2]), np.array([0.9, 0.2]), rng) == 1
    assert select_next(np.array([7]), np.array([0.0]), rng) == 7
    with pytest.raises(GraphExhausted):
        select_next(np.array([], dtype=int), np.array([]), rng)


def test_select_next_ties_uniform(rng):
    cand = np.array([3, 4, 5])
    counts = Counter(select_next(cand, np.ones(3), rng) for _ in range(3000))
    assert chisquare([counts[c] for c in cand]).pvalue > 0.01


@pytest.mark.parametrize("policy", POLICIES)
def test_budget_one_crawls_seed(policy):
    g = graph_from([("a", "b"), ("b", "c")])
    r = run_crawl(g, Oracle(np.array([True, False, True])), CrawlerConfig(policy, 1), 0)
    assert [x.node for x in r.records] == [0]
    assert targets_collected(r) == 1 and r.oracle_calls == 1


def test_rc_covers_path():
    g = graph_from([(i, i + 1) for i in range(4)])
    for s in range(10):
        r = run_crawl(g, Oracle(np.ones(5, bool)), CrawlerConfig("RC", 5, rng_seed=s), 2)
        assert sorted(x.node for x in r.records) == [0, 1, 2, 3, 4]
        assert not r.exhausted


def test_exhaustion_flagged():
    g = graph_from([("a", "b"), ("b", "c")])
    r = run_crawl(g, Oracle(np.ones(3, bool)), CrawlerConfig("MTN", 10), 0)
    assert len(r.records) == 3 and r.exhausted


def test_errors():
    g = graph_from([("a", "b")])
    with pytest.raises(ValueError, match="not a target"):
        run_crawl(g, Oracle(np.array([False, True])), CrawlerConfig("RC", 2), 0)
    with pytest.raises(ValueError):
        CrawlerConfig("RC", 0)
    with pytest.raises(ValueError):
        CrawlerConfig("XGB", 5)
    with pytest.raises(ValueError):
        CrawlerConfig("RC", 5, retrain_step_exponent=1.0)


def test_mtn_follows_target_neighbors():
    # seed a is a target linked to b (target) and c; b links to d
    g = graph_from([("a", "b"), ("a", "c"), ("b", "d"), ("c", "e")])
    mask = np.array([1, 1, 0, 1, 0], bool)
    r = run_crawl(g, Oracle(mask), CrawlerConfig("MTN", 3, rng_seed=1), 0)
    # after a: b and c both have 1 target neighbor; after b (if chosen) d has 1
    nodes = [x.node for x in r.records]
    assert nodes[0] == 0 and set(nodes[1:]) <= {1, 2, 3}


@pytest.mark.parametrize("policy", ["KNN", "RF", "GCN", "SAGE", "GAT"])
def test_predictor_runs_follow_schedule(policy, rng):
    g = random_graph(rng, 120, 0.05)
    mask = rng.random(120) < 0.3
    seed = int(np.flatnonzero(mask)[0])
    cfg = CrawlerConfig(policy, 40, params=FAST, debug=True, rng_seed=3)
    r = run_crawl(g, Oracle(mask), cfg, seed)
    n = len(r.records)
    assert r.retrain_steps == retrain_chain(10, n)
    assert [x.step for x in r.records if x.retrained] == [s + 1 for s in r.retrain_steps]
    assert r.oracle_calls == n
    cum = [x.cumulative for x in r.records]
    assert cum == list(np.cumsum([x.is_target for x in r.records]))
    assert all(mask[x.node] == x.is_target for x in r.records)


def test_before_training_behaves_like_mtn(rng):
    g, spec = generate_type1(300, 30, 0.3, 0.02, seed=4)
    o = resolve(spec, g)
    seed = int(o.targets[0])
    mtn = run_crawl(g, o, CrawlerConfig("MTN", 10, rng_seed=8), seed)
    knn = run_crawl(g, o, CrawlerConfig("KNN", 10, rng_seed=8), seed)
    assert [x.node for x in mtn.records] == [x.node for x in knn.records]


@pytest.mark.parametrize("policy", ["RC", "RF", "SAGE"])
def test_runs_deterministic(policy, rng):
    g = random_graph(rng, 100, 0.06)
    mask = rng.random(100) < 0.3
    seed = int(np.flatnonzero(mask)[0])
    cfg = CrawlerConfig(policy, 30, params=FAST, rng_seed=11)
    one = run_crawl(g, Oracle(mask), cfg, seed)
    two = run_crawl(g, Oracle(mask), cfg, seed)
    assert [(x.node, x.cumulative) for x in one.records] == [(x.node, x.cumulative) for x in two.records]


def test_final_state_matches_replay(rng):
    g = random_graph(rng, 80, 0.07)
    mask = rng.random(80) < 0.3
    seed = int(np.flatnonzero(mask)[0])
    r = run_crawl(g, Oracle(mask), CrawlerConfig("RF", 30, rng_seed=2, debug=True), seed)
    st = CrawlState(g, seed)
    for x in r.records:
        st.crawl(x.node, x.is_target)
    st.check_invariants()
    assert int(st.observed.sum()) == r.observed


def test_historical_mode_runs(rng):
    g = random_graph(rng, 100, 0.06)
    mask = rng.random(100) < 0.3
    seed = int(np.flatnonzero(mask)[0])
    cfg = CrawlerConfig("KNN", 30, boost=BoostConfig(mode="historical"), rng_seed=1, debug=True)
    r = run_crawl(g, Oracle(mask), cfg, seed)
    assert len(r.records) == 30
