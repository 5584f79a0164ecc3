import numpy as np
import pytest

from harvester.gnn import (EgoGraph, TrainConfig, attention, collate, ego_batch, extract_ego,
                           forward, gat_forward, gcn_forward, gnn_score, gnn_train, hidden,
                           init_model, load_model, loss_and_grad, node_logits, prepare,
                           sage_forward, save_model, score_frontier, softmax)
from harvester.graph import CrawlError, CrawlState

from conftest import graph_from, random_crawl, random_graph

KINDS = ["GCN", "SAGE", "GAT"]


def random_ego(rng, n=5, label=None):
    """Random connected graph on n nodes with node 0 as candidate (all within 2 hops)."""
    while True:
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.5]
        adj = {i: set() for i in range(n)}
        for i, j in edges:
            adj[i].add(j)
            adj[j].add(i)
        hop1 = adj[0]
        hop2 = set().union(*[adj[u] for u in hop1]) if hop1 else set()
        if hop1 | hop2 | {0} == set(range(n)):
            break
    x = rng.random((n, 5))
    bits = rng.integers(0, 3, n)
    x[:, 3] = bits == 0
    x[:, 4] = bits == 1
    x[0, 3:] = 0
    return EgoGraph(np.arange(n), np.array(edges, dtype=np.int64).reshape(-1, 2), x, 0, label)


def dense_norm(g, kind):
    A = np.zeros((g.size, g.size))
    for i, j in g.edges:
        A[i, j] = A[j, i] = 1
    A += np.eye(g.size)
    d = A.sum(axis=1)
    if kind == "GCN":
        return A / np.sqrt(np.outer(d, d))
    return A / d[:, None]


def dense_gat(model, g):
    """Attention GNN evaluated with explicit per-node loops."""
    p, H = model.params, model.heads
    A = dense_norm(g, "SAGE") > 0

    def layer(X, W, al, ar, b, F):
        Z = (X @ W).reshape(len(X), H, F)
        out = np.zeros((len(X), H, F))
        for v in range(len(X)):
            nb = np.flatnonzero(A[v])
            for h in range(H):
                s = np.array([ar[h] @ Z[v, h] + al[h] @ Z[u, h] for u in nb])
                s = np.where(s > 0, s, 0.2 * s)
                a = np.exp(s - s.max())
                a /= a.sum()
                out[v, h] = (a[:, None] * Z[nb, h]).sum(axis=0)
        return out + b.reshape(H, F)

    h1 = np.maximum(layer(g.x, p["W1"], p["al1"], p["ar1"], p["b1"], 5).reshape(g.size, -1), 0)
    return layer(h1, p["W2"], p["al2"], p["ar2"], p["b2"], 2).mean(axis=1)


def dense_linear(model, g):
    M = dense_norm(g, model.kind)
    p = model.params
    h1 = np.maximum(M @ g.x @ p["W1"] + p["b1"], 0)
    return M @ h1 @ p["W2"] + p["b2"]


@pytest.mark.parametrize("kind", KINDS)
def test_forward_matches_dense_oracle(rng, kind):
    for _ in range(20):
        g = random_ego(rng, int(rng.integers(1, 9)))
        model = init_model(kind, rng)
        want = dense_gat(model, g) if kind == "GAT" else dense_linear(model, g)
        got = node_logits(model, g)
        assert np.allclose(got, want, atol=1e-9, rtol=0)
        # candidate readout path agrees with the all-node path
        cand = forward(model, ego_batch(kind, g, "candidate"))
        assert np.allclose(cand[0], want[g.candidate], atol=1e-12, rtol=0)


def test_single_node_identity_gcn():
    model = init_model("GCN", np.random.default_rng(0))
    model.params["W1"] = np.eye(5)
    model.params["b1"][:] = 0
    x = np.array([[1.0, 0, 0, 0, 0]])
    g = EgoGraph(np.array([0]), np.zeros((0, 2), np.int64), x)
    assert np.array_equal(hidden(model, g), x)


@pytest.mark.parametrize("kind", KINDS)
def test_symmetric_pair_identical_logits(rng, kind):
    model = init_model(kind, rng)
    x = np.tile(rng.random(5), (2, 1))
    g = EgoGraph(np.array([0, 1]), np.array([[0, 1]]), x)
    out = node_logits(model, g)
    assert np.allclose(out[0], out[1], atol=1e-14)


def test_sage_isolated_and_uniform_neighbors(rng):
    model = init_model("SAGE", rng)
    p = model.params
    x = rng.random(5)
    iso = EgoGraph(np.array([0]), np.zeros((0, 2), np.int64), x[None, :])
    h = np.maximum(x @ p["W1"] + p["b1"], 0)
    assert np.allclose(hidden(model, iso)[0], h)
    star = EgoGraph(np.arange(4), np.array([[0, 1], [0, 2], [0, 3]]), np.tile(x, (4, 1)))
    assert np.allclose(node_logits(model, star)[0], node_logits(model, iso)[0])


def test_gat_attention_properties(rng):
    model = init_model("GAT", rng)
    iso = EgoGraph(np.array([0]), np.zeros((0, 2), np.int64), rng.random((1, 5)))
    a1, a2 = attention(model, ego_batch("GAT", iso, "all"))
    assert np.allclose(a1, 1.0) and np.allclose(a2, 1.0)
    x = np.tile(rng.random(5), (4, 1))
    star = EgoGraph(np.arange(4), np.array([[0, 1], [0, 2], [0, 3]]), x)
    b = ego_batch("GAT", star, "all")
    a1, _ = attention(model, b)
    assert np.allclose(a1[b.b1.dst == 0], 0.25)
    for _ in range(10):
        g = random_ego(rng, 7)
        b = ego_batch("GAT", g, "all")
        for blk, a in zip((b.b1, b.b2), attention(model, b)):
            sums = np.add.reduceat(a, blk.starts, axis=0)
            assert np.allclose(sums, 1.0, atol=1e-9)


@pytest.mark.parametrize("kind", KINDS)
def test_permutation_equivariance(rng, kind):
    for _ in range(10):
        g = random_ego(rng, 6)
        model = init_model(kind, rng)
        perm = rng.permutation(g.size)
        inv = np.argsort(perm)
        # node i of g becomes node inv[i] of h
        h = EgoGraph(g.nodes[perm], inv[g.edges], g.x[perm], int(inv[g.candidate]))
        assert np.allclose(node_logits(model, g)[perm], node_logits(model, h), atol=1e-12)


def fd_check(kind, rng, trials=10, h=1e-5, tol=1e-4):
    worst = 0.0
    for _ in range(trials):
        graphs = [random_ego(rng, 5, label=bool(rng.random() < 0.5)) for _ in range(3)]
        batch = collate([prepare(kind, g) for g in graphs])
        model = init_model(kind, rng)
        _, grads = loss_and_grad(model, batch)
        for name, arr in model.params.items():
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + h
                lp, _ = loss_and_grad(model, batch)
                arr[idx] = old - h
                lm, _ = loss_and_grad(model, batch)
                arr[idx] = old
                num = (lp - lm) / (2 * h)
                ana = grads[name][idx]
                scale = max(abs(num), abs(ana))
                if scale > 1e-8:
                    worst = max(worst, abs(num - ana) / scale)
    return worst


@pytest.mark.parametrize("kind", KINDS)
def test_gradient_check(kind):
    assert fd_check(kind, np.random.default_rng(99), trials=3) < 1e-4


def test_gnn_score_conventions(rng):
    model = init_model("GCN", rng)
    g = random_ego(rng, 4)
    for name in model.params:
        model.params[name][:] = 0
    assert gnn_score(model, g) == 0.5
    model.params["b2"][:] = [10.0, -10.0]
    assert abs(gnn_score(model, g) - 1.0) < 1e-8
    model = init_model("GAT", rng)
    p = softmax(forward(model, ego_batch("GAT", g)))[0]
    assert abs(p.sum() - 1) < 1e-12 and 0 < gnn_score(model, g) < 1


def test_kind_mismatch():
    model = init_model("SAGE", np.random.default_rng(0))
    g = EgoGraph(np.array([0]), np.zeros((0, 2), np.int64), np.zeros((1, 5)))
    with pytest.raises(ValueError):
        gcn_forward(model, g)
    assert sage_forward(model, g).shape == (1, 2)
    with pytest.raises(ValueError):
        gat_forward(model, g)


@pytest.mark.parametrize("kind", KINDS)
def test_training_converges_on_copies(kind):
    rng = np.random.default_rng(5)
    g = random_ego(rng, 5, label=True)
    model = gnn_train(kind, [g] * 20, TrainConfig(), rng_seed=1)
    assert model.history[-1] < 0.05


@pytest.mark.parametrize("kind", KINDS)
def test_training_deterministic(kind):
    rng = np.random.default_rng(6)
    data = [random_ego(rng, 5, label=bool(i % 2)) for i in range(130)]
    cfg = TrainConfig(epochs=3)
    a = gnn_train(kind, data, cfg, rng_seed=4)
    b = gnn_train(kind, data, cfg, rng_seed=4)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])


def test_training_rejects_unlabeled():
    g = random_ego(np.random.default_rng(0), 3)
    with pytest.raises(ValueError, match="unlabeled"):
        gnn_train("GCN", [g])


@pytest.mark.parametrize("kind", ["GCN", "SAGE"])
def test_last_layer_only_loss_non_increasing(kind):
    rng = np.random.default_rng(8)
    data = [random_ego(rng, 6, label=bool(rng.random() < 0.4)) for _ in range(60)]
    model = gnn_train(kind, data, TrainConfig(epochs=200, learn_rate=0.001), rng_seed=2,
                      frozen=("W1", "b1"))
    hist = np.array(model.history)
    assert np.all(np.diff(hist) <= 1e-6)


def test_extract_ego_examples():
    g = graph_from([(0, 1)])
    s = CrawlState(g, 0)
    ego = extract_ego(s, 0)
    assert ego.size == 1 and np.array_equal(ego.x, np.zeros((1, 5)))
    # path a-b-c-d-e, everything crawled, c as candidate
    g = graph_from([("a", "b"), ("b", "c"), ("c", "d"), ("d", "e")])
    s2 = CrawlState(g, 2)
    s2.crawl(2, True)
    for v, t in ((1, True), (3, False), (0, True), (4, False)):
        s2.crawl(v, t)
    ego = extract_ego(s2, 2)
    assert ego.nodes[ego.candidate] == 2
    assert sorted(ego.nodes.tolist()) == [0, 1, 2, 3, 4] and len(ego.edges) == 4
    with pytest.raises(CrawlError):
        extract_ego(CrawlState(g, 0), 3)


def test_extract_ego_encoding():
    g = graph_from([(0, 1), (1, 2), (2, 3)])
    s = CrawlState(g, 1)
    s.crawl(1, True)
    s.crawl(2, False)
    ego = extract_ego(s, 0)
    enc = {int(n): tuple(r[3:]) for n, r in zip(ego.nodes, ego.x)}
    assert enc[0] == (0, 0) and enc[1] == (1, 0) and enc[2] == (0, 1)
    assert ego.nodes[ego.candidate] == 0


@pytest.mark.parametrize("kind", KINDS)
def test_frontier_scoring_matches_per_ego(rng, kind):
    for _ in range(8):
        g = random_graph(rng, 40, 0.1)
        state = random_crawl(rng, g, rng.random(g.n) < 0.3, int(rng.integers(1, 20)))
        fr = state.frontier()
        model = init_model(kind, rng)
        got = score_frontier(model, state, fr)
        want = [gnn_score(model, extract_ego(state, v)) for v in fr]
        assert np.allclose(got, want, atol=1e-12, rtol=0)


def test_save_load_roundtrip(tmp_path, rng):
    for kind in KINDS:
        m = init_model(kind, rng)
        save_model(m, tmp_path / f"{kind}.txt")
        back = load_model(tmp_path / f"{kind}.txt")
        assert back.kind == kind and back.heads == m.heads
        for k in m.params:
            assert np.array_equal(back.params[k], m.params[k])
