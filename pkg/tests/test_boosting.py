import itertools
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from harvester.boosting import (BoostConfig, boost_sequences, build_samples, is_valid_sequence,
                                reconstruct_snapshot, samples_from_sequence, select_positions,
                                simulate_sequence, tail_length)
from harvester.features import FeatureConfig, feature_vector
from harvester.gnn import extract_ego
from harvester.graph import CrawlState

from conftest import graph_from, random_crawl, random_graph

a, b, c, d = range(4)
FEAT = FeatureConfig()


def crawled(g, order, targets=()):
    st = CrawlState(g, order[0])
    for v in order:
        st.crawl(v, v in targets)
    return st


def test_single_node_sequence(rng):
    g = graph_from([("a", "b")])
    st = crawled(g, [a])
    assert simulate_sequence(st, rng) == [a]


def test_path_has_one_order(rng):
    g = graph_from([("a", "b"), ("b", "c")])
    st = crawled(g, [a, b, c])
    for _ in range(20):
        assert simulate_sequence(st, rng) == [a, b, c]


def test_star_orders_uniform(rng):
    g = graph_from([("a", "b"), ("a", "c"), ("a", "d")])
    st = crawled(g, [a, b, c, d])
    seen = Counter(tuple(simulate_sequence(st, rng)) for _ in range(600))
    perms = [(a, *p) for p in itertools.permutations([b, c, d])]
    assert set(seen) == set(perms)
    assert chisquare([seen[p] for p in perms]).pvalue > 0.01


def test_sequences_valid_on_random_states(rng):
    for _ in range(20):
        g = random_graph(rng, 40, 0.1)
        st = random_crawl(rng, g, rng.random(40) < 0.3, 25)
        for _ in range(5):
            seq = simulate_sequence(st, rng)
            assert is_valid_sequence(st, seq)
    assert not is_valid_sequence(crawled(graph_from([("a", "b"), ("b", "c")]), [a, b, c]), [a, c, b])


def test_reconstruct_snapshot_examples():
    g = graph_from([("a", "b"), ("b", "c"), ("a", "c")])
    st = crawled(g, [a, b])
    init = reconstruct_snapshot(st, [a, b, c], 1)
    assert init.queries_used == 0 and list(init.frontier()) == [a]
    snap = reconstruct_snapshot(st, [a, b, c], 3)
    assert snap.observed[c] and snap.crawled_nbrs[c] == 2
    with pytest.raises(ValueError):
        reconstruct_snapshot(st, [a, b, c], 4)


def test_replay_equality(rng):
    g = random_graph(rng, 30, 0.15)
    targets = rng.random(30) < 0.4
    live = CrawlState(g, 0)
    history = []
    for _ in range(15):
        fr = live.frontier()
        if not len(fr):
            break
        history.append(live.copy())
        v = int(rng.choice(fr))
        live.crawl(v, bool(targets[v]))
    for i, past in enumerate(history, 1):
        snap = reconstruct_snapshot(live, live.order, i)
        assert snap.same_as(past)
        # no leak: every edge known in the snapshot is known now
        now = set(zip(*map(list, live.known_edges())))
        assert set(zip(*map(list, snap.known_edges()))) <= now


def test_tail_length():
    assert tail_length(10, 0.2) == 2
    assert tail_length(15, 0.2) == 3
    assert tail_length(3, 0.2) == 1
    assert tail_length(7, 1.0) == 7


def test_select_positions_balancing(rng):
    cfg = BoostConfig()
    # tail of 2 is all non-target; walk back to find two targets
    labels = np.array([1, 0, 1, 0, 0, 1, 0, 0, 0, 0], dtype=bool)
    assert select_positions(labels, cfg, rng) == [2, 5, 8, 9]
    # tail of 4 has 3 targets and 1 non-target; two earlier non-targets restore balance
    labels = np.array([1] * 6 + [0, 1, 0, 1, 1, 1, 0, 0, 0, 0, 1, 1, 0, 1], dtype=bool)
    assert select_positions(labels, cfg, rng) == [14, 15, 16, 17, 18, 19]
    # no minority anywhere: keep the tail as is
    assert select_positions(np.ones(10, bool), cfg, rng) == [8, 9]
    assert select_positions(labels, BoostConfig(balance=False), rng) == [16, 17, 18, 19]


def test_select_positions_drops_majority_when_minority_runs_out(rng):
    labels = np.array([0, 0, 0, 1, 0, 0, 0, 0, 0, 0], dtype=bool)
    pos = select_positions(labels, BoostConfig(last_boost_steps_fraction=0.5), rng)
    assert len(pos) == 2 and 3 in pos


def test_samples_match_snapshot_computation(rng):
    g = random_graph(rng, 35, 0.12)
    targets = rng.random(35) < 0.4
    st = random_crawl(rng, g, targets, 20)
    seq = simulate_sequence(st, rng)
    positions = [3, 7, len(seq) - 1]
    batch = samples_from_sequence(st, seq, positions, FEAT)
    for k, p in enumerate(positions):
        snap = reconstruct_snapshot(st, seq, p + 1)
        assert np.array_equal(batch.vectors[k], feature_vector(snap, seq[p], FEAT))
        ref = extract_ego(snap, seq[p])
        assert np.array_equal(batch.ego[k].edges, ref.edges)
        assert np.array_equal(batch.ego[k].x, ref.x)
        assert batch.labels[k] == bool(targets[seq[p]])


def test_counts_with_ten_crawled(rng):
    g = graph_from([(i, i + 1) for i in range(12)])
    st = crawled(g, list(range(10)), targets=set(range(10)))
    batch = build_samples(st, BoostConfig(), FEAT, rng)
    assert len(batch) == 40  # 20 iterations x ceil(0.2 * 10)
    assert all(batch.labels)
    assert batch.warnings and "single-class" in batch.warnings[0]
    assert len(batch.classical) == len(batch.ego) == 40


def test_batch_invariants(rng):
    for trial in range(10):
        g = random_graph(rng, 80, 0.06)
        targets = rng.random(80) < 0.3
        st = random_crawl(rng, g, targets, 60)
        cfg = BoostConfig(train_max_samples=int(rng.integers(5, 60)))
        batch = build_samples(st, cfg, FEAT, rng)
        t, f = batch.class_counts()
        assert t + f <= cfg.train_max_samples
        lab = st.label[st.order]
        if lab.any() and not lab.all():
            assert abs(t - f) <= 1


def test_boosted_real_order_equals_historical(rng):
    g = random_graph(rng, 40, 0.1)
    st = random_crawl(rng, g, rng.random(40) < 0.3, 25)
    hist = build_samples(st, BoostConfig(mode="historical"), FEAT, rng)
    cfg = BoostConfig(max_boost_iterations=1, last_boost_steps_fraction=1.0, balance=False)
    boosted = boost_sequences(st, [st.order], cfg, FEAT, rng)
    assert hist.nodes == boosted.nodes == st.order
    assert all(np.array_equal(x, y) for x, y in zip(hist.vectors, boosted.vectors))


def test_historical_takes_last_samples(rng):
    g = graph_from([(i, i + 1) for i in range(30)])
    st = crawled(g, list(range(20)), targets={3, 7})
    hist = build_samples(st, BoostConfig(mode="historical", train_max_samples=5), FEAT, rng)
    assert hist.nodes == [15, 16, 17, 18, 19]


def test_deterministic_given_seed(rng):
    g = random_graph(rng, 50, 0.08)
    st = random_crawl(rng, g, rng.random(50) < 0.3, 30)
    one = build_samples(st, BoostConfig(), FEAT, np.random.default_rng(5))
    two = build_samples(st, BoostConfig(), FEAT, np.random.default_rng(5))
    assert one.nodes == two.nodes and np.array_equal(one.classical.X, two.classical.X)


def test_config_validation():
    with pytest.raises(ValueError):
        BoostConfig(last_boost_steps_fraction=0)
    with pytest.raises(ValueError):
        BoostConfig(mode="replay")
    with pytest.raises(ValueError):
        BoostConfig(train_max_samples=0)
