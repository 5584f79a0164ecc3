"""Ego-graph GNN predictors (GCN, SAGE with 'gcn' aggregator, GAT) in numpy.

Each model has two message-passing layers of sizes 5 -> 5 -> 2 with ReLU
after the first.  A node's prediction only depends on its 2-hop ego graph,
so computation is organised like DGL message-flow blocks: layer 1 is
evaluated only at the rows layer 2 needs, and layer 2 only at the readout
nodes.  All arithmetic is float64 and gradients are written by hand.

Class index 0 is "target", index 1 is "non-target".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

from .features import base_features
from .graph import CrawlError, CrawlState, gather

KINDS = ("GCN", "SAGE", "GAT")
IN_DIM, HIDDEN, OUT_DIM = 5, 5, 2
LEAKY_SLOPE = 0.2


@dataclass
class EgoGraph:
    """Known 2-hop neighborhood of ``nodes[candidate]``.

    ``x`` rows are ``[od, cc, cnf, t0, t1]`` where ``(t0, t1)`` is (1, 0) for a
    crawled target, (0, 1) for a crawled non-target and (0, 0) otherwise;
    the candidate always gets (0, 0).
    """

    nodes: np.ndarray
    edges: np.ndarray
    x: np.ndarray
    candidate: int = 0
    label: bool | None = None

    @property
    def size(self) -> int:
        return len(self.nodes)


def node_inputs(state: CrawlState, nodes) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=np.int64)
    x = np.zeros((len(nodes), IN_DIM))
    x[:, :3] = base_features(state, nodes)[:, :3]
    lab = state.label[nodes]
    x[:, 3] = lab == 1
    x[:, 4] = lab == 0
    return x


def extract_ego(state: CrawlState, v: int, label: bool | None = None) -> EgoGraph:
    if not (0 <= int(v) < state.graph.n) or not state.observed[v]:
        raise CrawlError("node not visible")
    v = int(v)
    hop1 = state.known_neighbors(v)
    _, reach = state.known_adjacency(hop1)
    hop2 = np.setdiff1d(reach, np.append(hop1, v))
    nodes = np.concatenate([[v], hop1, hop2]).astype(np.int64)
    pos, nbr = state.known_adjacency(nodes)
    local = np.full(state.graph.n, -1, dtype=np.int64)
    local[nodes] = np.arange(len(nodes))
    u, w = pos, local[nbr]
    keep = (w >= 0) & (u < w)
    edges = np.stack([u[keep], w[keep]], axis=1)
    x = node_inputs(state, nodes)
    x[0, 3:] = 0.0
    return EgoGraph(nodes, edges, x, 0, label)


# ---------------------------------------------------------------------------
# message-flow blocks


@dataclass
class Block:
    """Bipartite message edges ``src -> dst`` sorted by dst, self-loops included.

    ``dself[i]`` is the src index holding dst i's own representation.
    ``weight`` is the fixed edge coefficient for GCN/SAGE (unused by GAT).
    """

    n_dst: int
    n_src: int
    dst: np.ndarray
    src: np.ndarray
    weight: np.ndarray
    dself: np.ndarray
    @cached_property
    def mat(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.weight, (self.dst, self.src)), shape=(self.n_dst, self.n_src))

    @cached_property
    def starts(self) -> np.ndarray:
        return np.flatnonzero(np.r_[True, self.dst[1:] != self.dst[:-1]])

    @cached_property
    def _layouts(self) -> dict:
        return {}

    def head_layout(self, heads: int):
        """Head-major CSR layout of the per-head attention matrix.

        Row ``k*n_dst + i`` holds head k of dst i; column ``s*heads + k`` is
        head k of src s.  Returns (indices, indptr); the data array is
        ``alpha.T.ravel()``.
        """
        if heads not in self._layouts:
            k = np.arange(heads)[:, None]
            E = len(self.dst)
            indices = (self.src[None, :] * heads + k).ravel()
            indptr = np.append((k * E + self.starts[None, :]).ravel(), heads * E)
            self._layouts[heads] = (indices, indptr)
        return self._layouts[heads]


def _concat_blocks(blocks: list[Block]) -> Block:
    dst_off = np.cumsum([0] + [b.n_dst for b in blocks])
    src_off = np.cumsum([0] + [b.n_src for b in blocks])
    return Block(
        int(dst_off[-1]), int(src_off[-1]),
        np.concatenate([b.dst + o for b, o in zip(blocks, dst_off)]),
        np.concatenate([b.src + o for b, o in zip(blocks, src_off)]),
        np.concatenate([b.weight for b in blocks]),
        np.concatenate([b.dself + o for b, o in zip(blocks, src_off)]),
    )


def _norm_weights(kind: str, dst_deg: np.ndarray, src_deg: np.ndarray) -> np.ndarray:
    """Edge coefficients given (self-loop inclusive) degrees at both ends."""
    if kind == "GCN":
        return 1.0 / np.sqrt(dst_deg * src_deg)
    if kind == "SAGE":
        return 1.0 / dst_deg
    return np.ones_like(dst_deg, dtype=np.float64)


@dataclass
class Batch:
    """Inputs for one forward pass: layer-0 features and two blocks."""

    x0: np.ndarray
    b1: Block
    b2: Block
    y: np.ndarray | None = None  # per readout node, True = target


@dataclass
class LinearBatch:
    """GCN/SAGE form: layer-1 aggregation of the fixed inputs is precomputed."""

    agg1: np.ndarray
    b2: Block
    y: np.ndarray | None = None


def _graph_blocks(kind: str, n: int, edges: np.ndarray, rows1: np.ndarray,
                  rows2: np.ndarray) -> tuple[Block, Block]:
    """Blocks for a whole graph: layer 1 at ``rows1``, readout at ``rows2``."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    u = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
    w = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
    order = np.lexsort((w, u))
    u, w = u[order], w[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(u, minlength=n), out=indptr[1:])
    deg = np.diff(indptr).astype(np.float64)  # includes the self-loop

    pos1, src1 = gather(indptr, w, rows1)
    b1 = Block(len(rows1), n, pos1, src1,
               _norm_weights(kind, deg[rows1][pos1], deg[src1]), rows1.copy())
    where = np.full(n, -1, dtype=np.int64)
    where[rows1] = np.arange(len(rows1))
    pos2, nb2 = gather(indptr, w, rows2)
    src2 = where[nb2]
    if np.any(src2 < 0):
        raise ValueError("layer-1 rows must cover the readout neighborhoods")
    b2 = Block(len(rows2), len(rows1), pos2, src2,
               _norm_weights(kind, deg[rows2][pos2], deg[nb2]), where[rows2])
    return b1, b2


def ego_batch(kind: str, g: EgoGraph, readout: str = "candidate") -> Batch:
    """Blocks over an ego graph, read out at the candidate or at every node."""
    n = g.size
    if readout == "candidate":
        rows2 = np.array([g.candidate])
        nb = g.edges[(g.edges == g.candidate).any(axis=1)].ravel()
        rows1 = np.unique(np.append(nb, g.candidate))
        # candidate first keeps the readout row at a fixed position
        rows1 = np.concatenate([[g.candidate], rows1[rows1 != g.candidate]])
    else:
        rows1 = rows2 = np.arange(n)
    b1, b2 = _graph_blocks(kind, n, g.edges, rows1, rows2)
    y = None if g.label is None or readout != "candidate" else np.array([bool(g.label)])
    return Batch(g.x, b1, b2, y)


def to_linear(batch: Batch) -> LinearBatch:
    return LinearBatch(batch.b1.mat @ batch.x0, batch.b2, batch.y)


def collate(items: list) -> Batch | LinearBatch:
    ys = [it.y for it in items]
    y = None if any(v is None for v in ys) else np.concatenate(ys)
    if isinstance(items[0], LinearBatch):
        return LinearBatch(np.concatenate([it.agg1 for it in items]),
                           _concat_blocks([it.b2 for it in items]), y)
    return Batch(np.concatenate([it.x0 for it in items]),
                 _concat_blocks([it.b1 for it in items]),
                 _concat_blocks([it.b2 for it in items]), y)


def _ranges(starts: np.ndarray, lens: np.ndarray) -> np.ndarray:
    """Concatenation of ``arange(s, s + l)`` over pairs."""
    total = int(lens.sum())
    ends = np.cumsum(lens)
    return np.arange(total) - np.repeat(ends - lens - starts, lens)


class Batcher:
    """Collates samples once, then cuts mini-batches by index arithmetic."""

    def __init__(self, items: list):
        self.linear = isinstance(items[0], LinearBatch)
        self.whole = collate(items)
        b2 = [it.b2 for it in items]
        if self.linear:
            rows0 = [len(it.agg1) for it in items]
            b1 = None
        else:
            rows0 = [len(it.x0) for it in items]
            b1 = [it.b1 for it in items]
        self.n0 = np.array(rows0)
        self.n1 = np.array([b.n_src for b in b2])
        self.n2 = np.array([b.n_dst for b in b2])
        self.e2 = np.array([len(b.dst) for b in b2])
        self.e1 = np.array([len(b.dst) for b in b1]) if b1 else None
        self.s0, self.s1, self.s2, self.se2 = (np.cumsum(a) - a for a in (self.n0, self.n1, self.n2, self.e2))
        self.se1 = np.cumsum(self.e1) - self.e1 if b1 else None

    @staticmethod
    def _shift(n, sel, starts):
        return (np.cumsum(n[sel]) - n[sel]) - starts[sel]

    def take(self, sel: np.ndarray):
        w = self.whole
        sh1 = self._shift(self.n1, sel, self.s1)
        sh2 = self._shift(self.n2, sel, self.s2)
        r2 = _ranges(self.s2[sel], self.n2[sel])
        e2 = _ranges(self.se2[sel], self.e2[sel])
        b2 = Block(int(self.n2[sel].sum()), int(self.n1[sel].sum()),
                   w.b2.dst.take(e2) + np.repeat(sh2, self.e2[sel]),
                   w.b2.src.take(e2) + np.repeat(sh1, self.e2[sel]),
                   w.b2.weight.take(e2), w.b2.dself.take(r2) + np.repeat(sh1, self.n2[sel]))
        y = None if w.y is None else w.y.take(r2)
        if self.linear:
            return LinearBatch(w.agg1.take(_ranges(self.s1[sel], self.n1[sel]), axis=0), b2, y)
        sh0 = self._shift(self.n0, sel, self.s0)
        r1 = _ranges(self.s1[sel], self.n1[sel])
        e1 = _ranges(self.se1[sel], self.e1[sel])
        b1 = Block(b2.n_src, int(self.n0[sel].sum()),
                   w.b1.dst.take(e1) + np.repeat(sh1, self.e1[sel]),
                   w.b1.src.take(e1) + np.repeat(sh0, self.e1[sel]),
                   w.b1.weight.take(e1), w.b1.dself.take(r1) + np.repeat(sh0, self.n1[sel]))
        return Batch(w.x0.take(_ranges(self.s0[sel], self.n0[sel]), axis=0), b1, b2, y)


# ---------------------------------------------------------------------------
# model


@dataclass
class TrainConfig:
    epochs: int = 200
    batch: int = 100
    learn_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if min(self.epochs, self.batch) < 1 or self.learn_rate <= 0:
            raise ValueError("epochs, batch and learn_rate must be positive")


@dataclass
class GnnModel:
    kind: str
    params: dict[str, np.ndarray]
    heads: int = 1
    history: list[float] = field(default_factory=list)

    def copy(self) -> "GnnModel":
        return GnnModel(self.kind, {k: v.copy() for k, v in self.params.items()},
                        self.heads, list(self.history))


def _shapes(kind: str, heads: int) -> dict[str, tuple[int, ...]]:
    if kind == "GAT":
        h = heads
        return {"W1": (IN_DIM, h * HIDDEN), "al1": (h, HIDDEN), "ar1": (h, HIDDEN),
                "b1": (h * HIDDEN,), "W2": (h * HIDDEN, h * OUT_DIM), "al2": (h, OUT_DIM),
                "ar2": (h, OUT_DIM), "b2": (h * OUT_DIM,)}
    return {"W1": (IN_DIM, HIDDEN), "b1": (HIDDEN,), "W2": (HIDDEN, OUT_DIM), "b2": (OUT_DIM,)}


def init_model(kind: str, rng: np.random.Generator, heads: int = 3) -> GnnModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every parameter."""
    if kind not in KINDS:
        raise ValueError(f"unknown GNN kind {kind!r}")
    heads = heads if kind == "GAT" else 1
    shapes = _shapes(kind, heads)
    fan_in = {"W1": IN_DIM, "b1": IN_DIM, "W2": shapes["W2"][0], "b2": shapes["W2"][0],
              "al1": HIDDEN, "ar1": HIDDEN, "al2": OUT_DIM, "ar2": OUT_DIM}
    params = {}
    for name, shape in shapes.items():
        bound = 1.0 / np.sqrt(fan_in[name])
        params[name] = rng.uniform(-bound, bound, size=shape)
    return GnnModel(kind, params, heads)


# ---------------------------------------------------------------------------
# layers


def _attention_matrix(blk: Block, alpha: np.ndarray, S: int) -> sparse.csr_matrix:
    heads = alpha.shape[1]
    indices, indptr = blk.head_layout(heads)
    return sparse.csr_matrix((alpha.T.ravel(), indices, indptr),
                             shape=(heads * blk.n_dst, S * heads))


def _gat_forward(H: np.ndarray, blk: Block, W, al, ar, b, heads: int):
    F = al.shape[1]
    S = len(H)
    Z = (H @ W).reshape(S, heads, F)
    src, dst, starts = blk.src, blk.dst, blk.starts
    el = np.einsum("shf,hf->sh", Z, al)
    er = np.einsum("ihf,hf->ih", np.take(Z, blk.dself, axis=0), ar)
    s = np.take(el, src, axis=0) + np.take(er, dst, axis=0)
    slope = np.where(s > 0, 1.0, LEAKY_SLOPE)
    e = s * slope
    emax = np.maximum.reduceat(e, starts, axis=0)
    ex = np.exp(e - np.take(emax, dst, axis=0))
    den = np.add.reduceat(ex, starts, axis=0)
    # unnormalized weights in the matrix; softmax division happens per node
    A = _attention_matrix(blk, ex, S)
    out = (A @ Z.reshape(S * heads, F)).reshape(heads, blk.n_dst, F).transpose(1, 0, 2)
    out = out / den[:, :, None] + b.reshape(heads, F)
    cache = (H, Z, slope, ex, den, A)
    return out, cache


def _gat_backward(dout: np.ndarray, blk: Block, cache, W, al, ar, need_dH: bool):
    H, Z, slope, ex, den, A = cache
    S, heads, F = Z.shape
    src, dst, starts, dself = blk.src, blk.dst, blk.starts, blk.dself
    g = {"b": dout.sum(axis=0).reshape(-1)}
    c = dout / den[:, :, None]
    # alpha * dL/dalpha, with alpha = ex / den
    adot = ex * np.einsum("ehf,ehf->eh", np.take(c, dst, axis=0), np.take(Z, src, axis=0))
    weighted = np.add.reduceat(adot, starts, axis=0) / den
    ds = (adot - ex * np.take(weighted, dst, axis=0)) * slope
    # score gradient reaches z_src through al and z_dst through ar; z = H W,
    # so both terms collapse to small (in_dim, heads) products
    ds_src = np.bincount(blk.head_layout(heads)[0], weights=ds.T.ravel(),
                         minlength=S * heads).reshape(S, heads)
    ds_self = np.add.reduceat(ds, starts, axis=0)
    Hself = np.take(H, dself, axis=0)
    q_src = H.T @ ds_src
    q_self = Hself.T @ ds_self
    W3 = W.reshape(len(W), heads, F)
    g["al"] = np.einsum("dh,dhf->hf", q_src, W3)
    g["ar"] = np.einsum("dh,dhf->hf", q_self, W3)
    dZ = (A.T @ c.transpose(1, 0, 2).reshape(-1, F)).reshape(S, heads * F)
    g["W"] = H.T @ dZ + (q_src[:, :, None] * al + q_self[:, :, None] * ar).reshape(len(W), -1)
    dH = None
    if need_dH:
        dH = dZ @ W.T + ds_src @ np.einsum("dhf,hf->hd", W3, al)
        dH[dself] += ds_self @ np.einsum("dhf,hf->hd", W3, ar)   # dst nodes are distinct
    return g, dH


def forward(model: GnnModel, batch, return_cache: bool = False):
    """Logits (n_readout, 2) for a Batch or LinearBatch."""
    p = model.params
    if model.kind == "GAT":
        h = model.heads
        out1, c1 = _gat_forward(batch.x0, batch.b1, p["W1"], p["al1"], p["ar1"], p["b1"], h)
        pre1 = out1.reshape(len(out1), -1)
        H1 = np.maximum(pre1, 0)
        out2, c2 = _gat_forward(H1, batch.b2, p["W2"], p["al2"], p["ar2"], p["b2"], h)
        logits = out2.mean(axis=1)
        cache = (pre1, c1, c2)
    else:
        if isinstance(batch, Batch):
            batch = to_linear(batch)
        pre1 = batch.agg1 @ p["W1"] + p["b1"]
        H1 = np.maximum(pre1, 0)
        agg2 = batch.b2.mat @ H1
        logits = agg2 @ p["W2"] + p["b2"]
        cache = (batch, pre1, H1, agg2)
    return (logits, cache) if return_cache else logits


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def loss_and_grad(model: GnnModel, batch, frozen: tuple[str, ...] = ()):
    """Mean cross-entropy over readout nodes and its gradient."""
    if batch.y is None:
        raise ValueError("unlabeled sample")
    logits, cache = forward(model, batch, return_cache=True)
    prob = softmax(logits)
    onehot = np.zeros_like(prob)
    onehot[np.arange(len(prob)), np.where(batch.y, 0, 1)] = 1.0
    B = len(prob)
    loss = -float(np.sum(onehot * np.log(np.clip(prob, 1e-300, None)))) / B
    dlogits = (prob - onehot) / B
    p = model.params
    grads = {}
    if model.kind == "GAT":
        h = model.heads
        pre1, c1, c2 = cache
        dout2 = np.repeat(dlogits[:, None, :] / h, h, axis=1)
        g2, dH1 = _gat_backward(dout2, batch.b2, c2, p["W2"], p["al2"], p["ar2"], True)
        dpre1 = (dH1 * (pre1 > 0)).reshape(len(pre1), h, -1)
        g1, _ = _gat_backward(dpre1, batch.b1, c1, p["W1"], p["al1"], p["ar1"], False)
        for layer, g in (("1", g1), ("2", g2)):
            grads["W" + layer] = g["W"]
            grads["b" + layer] = g["b"]
            grads["al" + layer] = g["al"]
            grads["ar" + layer] = g["ar"]
    else:
        lb, pre1, H1, agg2 = cache
        grads["W2"] = agg2.T @ dlogits
        grads["b2"] = dlogits.sum(axis=0)
        dH1 = lb.b2.mat.T @ (dlogits @ p["W2"].T)
        dpre1 = dH1 * (pre1 > 0)
        grads["W1"] = lb.agg1.T @ dpre1
        grads["b1"] = dpre1.sum(axis=0)
    for name in frozen:
        grads[name] = np.zeros_like(grads[name])
    return loss, grads


class Adam:
    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1 - c.beta1 ** self.t
        bc2 = 1 - c.beta2 ** self.t
        for k in params:
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            params[k] -= c.learn_rate * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)


def prepare(kind: str, g: EgoGraph):
    """Per-sample training input with candidate readout."""
    b = ego_batch(kind, g, "candidate")
    return b if kind == "GAT" else to_linear(b)


def gnn_train(kind: str, data: list[EgoGraph], cfg: TrainConfig | None = None, rng_seed=0,
              heads: int = 3, frozen: tuple[str, ...] = (), init: GnnModel | None = None) -> GnnModel:
    """Mini-batch Adam on candidate cross-entropy; batches reshuffled each epoch."""
    cfg = cfg or TrainConfig()
    if not data:
        raise ValueError("empty training set")
    if any(g.label is None for g in data):
        raise ValueError("unlabeled sample")
    rng = np.random.default_rng(rng_seed)
    model = init.copy() if init is not None else init_model(kind, rng, heads)
    batcher = Batcher([prepare(kind, g) for g in data])
    opt = Adam(model.params, cfg)
    n = len(data)
    whole = batcher.whole if n <= cfg.batch else None
    for _ in range(cfg.epochs):
        if whole is not None:
            batches = [whole]
        else:
            perm = rng.permutation(n)
            batches = [batcher.take(perm[s:s + cfg.batch]) for s in range(0, n, cfg.batch)]
        total = 0.0
        for b in batches:
            loss, grads = loss_and_grad(model, b, frozen)
            opt.step(model.params, grads)
            total += loss * len(b.y)
        model.history.append(total / n)
    return model


# ---------------------------------------------------------------------------
# scoring


def node_logits(model: GnnModel, g: EgoGraph) -> np.ndarray:
    """Per-node logits over the whole ego graph, shape (g.size, 2)."""
    return forward(model, ego_batch(model.kind, g, "all"))


def hidden(model: GnnModel, g: EgoGraph) -> np.ndarray:
    """Layer-1 activations at every ego node."""
    _, cache = forward(model, ego_batch(model.kind, g, "all"), return_cache=True)
    pre1 = cache[0] if model.kind == "GAT" else cache[1]
    return np.maximum(pre1, 0)


def _forward_of(kind: str):
    def fwd(model: GnnModel, g: EgoGraph) -> np.ndarray:
        if model.kind != kind:
            raise ValueError(f"model is {model.kind}, not {kind}")
        return node_logits(model, g)
    fwd.__name__ = f"{kind.lower()}_forward"
    return fwd


gcn_forward = _forward_of("GCN")
sage_forward = _forward_of("SAGE")
gat_forward = _forward_of("GAT")


def gnn_score(model: GnnModel, g: EgoGraph) -> float:
    """Target-class probability at the candidate."""
    logits = forward(model, ego_batch(model.kind, g, "candidate"))
    return float(softmax(logits)[0, 0])


def attention(model: GnnModel, batch: Batch) -> list[np.ndarray]:
    """Attention coefficients (edges x heads) of both GAT layers."""
    p, h = model.params, model.heads
    out1, c1 = _gat_forward(batch.x0, batch.b1, p["W1"], p["al1"], p["ar1"], p["b1"], h)
    H1 = np.maximum(out1.reshape(len(out1), -1), 0)
    _, c2 = _gat_forward(H1, batch.b2, p["W2"], p["al2"], p["ar2"], p["b2"], h)
    return [c[3] / np.take(c[4], b.dst, axis=0) for c, b in ((c1, batch.b1), (c2, batch.b2))]


def frontier_batch(state: CrawlState, kind: str, candidates: np.ndarray):
    """Candidate-readout batch for many frontier nodes at once.

    Equivalent to stacking :func:`prepare` over ``extract_ego`` of every
    candidate.  SAGE and GAT layer-1 outputs at a candidate's neighbors only
    involve those neighbors' full known neighborhoods, which lie inside the
    ego graph, so they are shared across candidates.  GCN normalization uses
    ego-internal degrees of 2-hop nodes and is evaluated per candidate.
    """
    cand = np.asarray(candidates, dtype=np.int64)
    if kind == "GCN":
        return _gcn_frontier(state, cand)
    obs = np.flatnonzero(state.observed)
    n = state.graph.n
    pos, nbr = state.known_adjacency(cand)
    rows1 = np.unique(np.concatenate([cand, nbr]))
    local = np.full(n, -1, dtype=np.int64)
    local[obs] = np.arange(len(obs))
    x = node_inputs(state, obs)
    x[local[cand], 3:] = 0.0  # candidates are uncrawled, kept for clarity
    deg = state.known_degrees(obs).astype(np.float64) + 1
    p1, s1 = state.known_adjacency(rows1)
    # append self loops and sort by dst row
    d1 = np.concatenate([p1, np.arange(len(rows1))])
    s1 = np.concatenate([local[s1], local[rows1]])
    o = np.lexsort((s1, d1))
    d1, s1 = d1[o], s1[o]
    lr = local[rows1]
    b1 = Block(len(rows1), len(obs), d1, s1, _norm_weights(kind, deg[lr][d1], deg[s1]), lr)
    where = np.full(n, -1, dtype=np.int64)
    where[rows1] = np.arange(len(rows1))
    d2 = np.concatenate([pos, np.arange(len(cand))])
    s2 = np.concatenate([where[nbr], where[cand]])
    o = np.lexsort((s2, d2))
    d2, s2 = d2[o], s2[o]
    lc = local[cand]
    src_nodes = rows1[s2]
    b2 = Block(len(cand), len(rows1), d2, s2,
               _norm_weights(kind, deg[lc][d2], deg[local[src_nodes]]), where[cand])
    batch = Batch(x, b1, b2)
    return batch if kind == "GAT" else to_linear(batch)


def _gcn_frontier(state: CrawlState, cand: np.ndarray) -> LinearBatch:
    n = state.graph.n
    u, v = state.known_edges()
    K = sparse.csr_matrix((np.ones(2 * len(u)), (np.r_[u, v], np.r_[v, u])), shape=(n, n))
    KI = (K + sparse.identity(n, format="csr")).tocsr()
    KI.sort_indices()
    C1 = KI[cand]                                   # candidate -> N[c]
    reach = C1 @ KI                                 # candidate -> ego nodes
    reach.data[:] = 1.0
    # entry (c, w) = ego-internal degree of w plus its self-loop, for w in ego(c)
    tilde = (reach @ KI).tocsr()
    tilde.sort_indices()
    keys = np.repeat(np.arange(len(cand)), np.diff(tilde.indptr)) * n + tilde.indices

    def ego_degree(cs, ws):
        return tilde.data[np.searchsorted(keys, cs * n + ws)]

    C1 = C1.tocsr()
    C1.sort_indices()
    row_c = np.repeat(np.arange(len(cand)), np.diff(C1.indptr))
    row_u = C1.indices.astype(np.int64)
    pos, w = gather(KI.indptr, KI.indices.astype(np.int64), row_u)
    deg_u = ego_degree(row_c, row_u)
    coef = 1.0 / np.sqrt(deg_u[pos] * ego_degree(row_c[pos], w))
    x = node_inputs(state, w)
    agg1 = np.zeros((len(row_u), IN_DIM))
    for j in range(IN_DIM):
        agg1[:, j] = np.bincount(pos, weights=coef * x[:, j], minlength=len(row_u))
    deg_c = state.known_degrees(cand).astype(np.float64) + 1
    w2 = 1.0 / np.sqrt(deg_c[row_c] * deg_u)
    dself = np.flatnonzero(row_u == cand[row_c])
    return LinearBatch(agg1, Block(len(cand), len(row_u), row_c, np.arange(len(row_u)), w2, dself))


def score_frontier(model: GnnModel, state: CrawlState, candidates) -> np.ndarray:
    cand = np.asarray(candidates, dtype=np.int64)
    if len(cand) == 0:
        return np.zeros(0)
    return softmax(forward(model, frontier_batch(state, model.kind, cand)))[:, 0]


# ---------------------------------------------------------------------------
# persistence

_HEADER = "# harvester-gnn v1"


def save_model(model: GnnModel, path) -> None:
    """Text format: header, ``kind``, ``heads``, then per parameter a
    ``param <name> <rows> <cols>`` line followed by its row-major rows."""
    lines = [_HEADER, f"kind {model.kind}", f"heads {model.heads}"]
    for name, arr in model.params.items():
        a2 = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(1, -1)
        lines.append(f"param {name} {arr.ndim} " + " ".join(map(str, arr.shape)))
        lines.extend(" ".join(repr(float(x)) for x in row) for row in a2)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> GnnModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != _HEADER:
        raise ValueError("not a harvester GNN model file")
    kind = lines[1].split()[1]
    heads = int(lines[2].split()[1])
    params, i = {}, 3
    while i < len(lines):
        tok = lines[i].split()
        name, ndim = tok[1], int(tok[2])
        shape = tuple(int(t) for t in tok[3:3 + ndim])
        nrows = shape[0] if ndim > 1 else 1
        rows = [list(map(float, lines[i + 1 + r].split())) for r in range(nrows)]
        params[name] = np.array(rows, dtype=np.float64).reshape(shape)
        i += 1 + nrows
    return GnnModel(kind, params, heads)
