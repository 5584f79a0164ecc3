"""Ground-truth graph storage and the crawler's partial view of it."""

from __future__ import annotations

from typing import Hashable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class CrawlError(Exception):
    """Raised on an illegal crawl query."""


def gather(indptr: np.ndarray, indices: np.ndarray, nodes: np.ndarray):
    """Concatenate CSR rows of ``nodes``.

    Returns ``(pos, cols)`` where ``pos[k]`` is the position in ``nodes`` of
    the row that produced ``cols[k]``.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    starts = indptr[nodes]
    lens = indptr[nodes + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    pos = np.repeat(np.arange(len(nodes)), lens)
    offsets = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens) + starts[pos]
    return pos, indices[offsets].astype(np.int64, copy=False)


class FullGraph:
    """Undirected simple graph in CSR form with optional integer node attributes.

    Node ids are dense ``0..n-1``; ``labels[i]`` keeps the external id of node i.
    Instances are treated as immutable once built; the only mutable part is a
    memo of per-node triangle lists, which is safe to share.
    """

    def __init__(self, indptr, indices, labels: Sequence[Hashable] | None = None,
                 attributes: dict[str, dict[int, int]] | None = None):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.n = len(self.indptr) - 1
        self.degree = np.diff(self.indptr)
        self.labels = list(labels) if labels is not None else list(range(self.n))
        self.attributes = attributes or {}
        self._triangles: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._index: dict[Hashable, int] | None = None

    @classmethod
    def from_edges(cls, u, v, n: int | None = None, labels=None, attributes=None) -> "FullGraph":
        """Build from an edge list; symmetrizes, drops self-loops and duplicates."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if n is None:
            n = int(max(u.max(initial=-1), v.max(initial=-1))) + 1
        keep = u != v
        u, v = u[keep], v[keep]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        key = np.unique(rows * n + cols)
        rows, cols = key // n, key % n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return cls(indptr, cols, labels=labels, attributes=attributes)

    @property
    def m(self) -> int:
        return int(self.indptr[-1] // 2)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Each undirected edge once, as (u, v) with u < v."""
        rows = np.repeat(np.arange(self.n), self.degree)
        keep = rows < self.indices
        return rows[keep], self.indices[keep]

    def index_of(self, label: Hashable) -> int:
        if self._index is None:
            self._index = {lab: i for i, lab in enumerate(self.labels)}
        return self._index[label]

    def triangles(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """All triangles through v as neighbor pairs (a, b) with a < b."""
        tri = self._triangles.get(v)
        if tri is None:
            nb = self.neighbors(v)
            pos, other = gather(self.indptr, self.indices, nb)
            a = nb[pos]
            mask = other > a
            a, other = a[mask], other[mask]
            j = np.searchsorted(nb, other)
            j[j == len(nb)] = 0
            mask = nb[j] == other if len(nb) else np.zeros(0, bool)
            tri = (a[mask], other[mask])
            self._triangles[v] = tri
        return tri

    def giant_component(self) -> tuple["FullGraph", np.ndarray]:
        """Largest connected component plus the old->new id map (-1 if dropped)."""
        if self.n == 0:
            raise ValueError("empty graph")
        adj = coo_matrix((np.ones(len(self.indices)), (np.repeat(np.arange(self.n), self.degree),
                                                       self.indices)), shape=(self.n, self.n))
        _, comp = connected_components(adj, directed=False)
        sizes = np.bincount(comp)
        # lowest component id among the largest keeps this deterministic
        keep = comp == int(np.argmax(sizes))
        return self.subgraph(np.flatnonzero(keep))

    def subgraph(self, nodes: np.ndarray) -> tuple["FullGraph", np.ndarray]:
        nodes = np.sort(np.asarray(nodes, dtype=np.int64))
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        u, v = self.edges()
        keep = (remap[u] >= 0) & (remap[v] >= 0)
        attrs = {
            name: {int(remap[k]): val for k, val in table.items() if remap[k] >= 0}
            for name, table in self.attributes.items()
        }
        sub = FullGraph.from_edges(remap[u[keep]], remap[v[keep]], n=len(nodes),
                                   labels=[self.labels[i] for i in nodes], attributes=attrs)
        return sub, remap

    def check(self) -> None:
        """Assert the structural invariants (symmetric, sorted, simple)."""
        rows = np.repeat(np.arange(self.n), self.degree)
        assert not np.any(rows == self.indices), "self-loop"
        for v in range(self.n):
            nb = self.neighbors(v)
            assert np.all(np.diff(nb) > 0), "unsorted or duplicate adjacency"
        fwd = np.sort(rows * self.n + self.indices)
        bwd = np.sort(self.indices * self.n + rows)
        assert np.array_equal(fwd, bwd), "asymmetric adjacency"


class CrawlState:
    """Everything the crawler knows: crawled order, observed set, labels.

    Known edges are not stored explicitly: an edge is known iff at least one
    endpoint is crawled, so they are derived from the ground-truth adjacency
    and the crawled mask.  Per-node counters used by the structural features
    are maintained incrementally on every crawl:

    ``crawled_nbrs``  crawled known neighbors
    ``target_nbrs``   crawled target known neighbors
    ``tri_total``     known triangles through the node
    ``tri_crawled``   known triangles whose two other vertices are both crawled
    """

    def __init__(self, graph: FullGraph, seed: int):
        if not (0 <= int(seed) < graph.n):
            raise CrawlError("seed not in graph")
        n = graph.n
        self.graph = graph
        self.seed = int(seed)
        self.order: list[int] = []
        self.crawled = np.zeros(n, dtype=bool)
        self.observed = np.zeros(n, dtype=bool)
        self.observed[self.seed] = True
        self.label = np.full(n, -1, dtype=np.int8)
        self.crawled_nbrs = np.zeros(n, dtype=np.int64)
        self.target_nbrs = np.zeros(n, dtype=np.int64)
        self.tri_total = np.zeros(n, dtype=np.int64)
        self.tri_crawled = np.zeros(n, dtype=np.int64)

    @property
    def queries_used(self) -> int:
        return len(self.order)

    def crawl(self, v: int, is_target: bool) -> None:
        """Reveal the adjacency of ``v`` and record its label."""
        v = int(v)
        if not (0 <= v < self.graph.n) or not self.observed[v]:
            raise CrawlError("node not visible")
        if self.crawled[v]:
            raise CrawlError("node already crawled")
        g = self.graph
        a, b = g.triangles(v)
        if len(a):
            ca, cb = self.crawled[a], self.crawled[b]
            both = ca & cb
            if both.any():
                # already known; partners move from one to two crawled others
                np.add.at(self.tri_crawled, a[both], 1)
                np.add.at(self.tri_crawled, b[both], 1)
            one = ca ^ cb
            if one.any():
                # edge (v, uncrawled partner) gets revealed and closes the triangle
                cr = np.where(ca, a, b)[one]
                un = np.where(ca, b, a)[one]
                self.tri_total[v] += len(cr)
                np.add.at(self.tri_total, cr, 1)
                np.add.at(self.tri_total, un, 1)
                np.add.at(self.tri_crawled, un, 1)
        nb = g.neighbors(v)
        self.crawled[v] = True
        self.label[v] = 1 if is_target else 0
        self.crawled_nbrs[nb] += 1
        if is_target:
            self.target_nbrs[nb] += 1
        self.observed[nb] = True
        self.order.append(v)

    def frontier(self) -> np.ndarray:
        """Observed but not crawled nodes, ascending."""
        return np.flatnonzero(self.observed & ~self.crawled)

    def known_degrees(self, nodes=None) -> np.ndarray:
        if nodes is None:
            return np.where(self.crawled, self.graph.degree, self.crawled_nbrs)
        nodes = np.asarray(nodes)
        return np.where(self.crawled[nodes], self.graph.degree[nodes], self.crawled_nbrs[nodes])

    def known_degree(self, v: int) -> int:
        if not self.observed[v]:
            raise CrawlError("node not visible")
        return int(self.graph.degree[v] if self.crawled[v] else self.crawled_nbrs[v])

    def known_neighbors(self, v: int) -> np.ndarray:
        if not self.observed[v]:
            raise CrawlError("node not visible")
        nb = self.graph.neighbors(v)
        return nb if self.crawled[v] else nb[self.crawled[nb]]

    def known_adjacency(self, nodes: np.ndarray):
        """Known-edge rows of ``nodes`` as ``(pos, nbr)`` pairs (see :func:`gather`)."""
        nodes = np.asarray(nodes, dtype=np.int64)
        pos, nbr = gather(self.graph.indptr, self.graph.indices, nodes)
        keep = self.crawled[nodes][pos] | self.crawled[nbr]
        return pos[keep], nbr[keep]

    def known_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Each known edge once as (u, v), u < v."""
        crawled = np.flatnonzero(self.crawled)
        pos, nbr = gather(self.graph.indptr, self.graph.indices, crawled)
        src = crawled[pos]
        # drop the second copy of edges between two crawled nodes
        keep = ~self.crawled[nbr] | (src < nbr)
        src, nbr = src[keep], nbr[keep]
        return np.minimum(src, nbr), np.maximum(src, nbr)

    def labels(self) -> dict[int, bool]:
        return {v: bool(self.label[v]) for v in self.order}

    def copy(self) -> "CrawlState":
        new = CrawlState.__new__(CrawlState)
        new.__dict__.update(self.__dict__)
        new.order = list(self.order)
        for name in ("crawled", "observed", "label", "crawled_nbrs", "target_nbrs",
                     "tri_total", "tri_crawled"):
            setattr(new, name, getattr(self, name).copy())
        return new

    def replay_prefix(self, order: Sequence[int]) -> "CrawlState":
        """Fresh state from this seed with ``order`` crawled, labels taken from self."""
        state = CrawlState(self.graph, self.seed)
        for v in order:
            state.crawl(v, bool(self.label[v]))
        return state

    def same_as(self, other: "CrawlState") -> bool:
        return (self.seed == other.seed and self.order == other.order
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("crawled", "observed", "label", "crawled_nbrs",
                                  "target_nbrs", "tri_total", "tri_crawled")))

    def check_invariants(self) -> None:
        g = self.graph
        order = np.asarray(self.order, dtype=np.int64)
        assert len(set(self.order)) == len(self.order)
        assert self.crawled.sum() == len(self.order) == self.queries_used
        assert np.all(self.crawled[order]) and np.all(self.observed[self.crawled])
        assert np.array_equal(self.label >= 0, self.crawled), "labels defined exactly on crawled"
        expect = np.zeros(g.n, dtype=bool)
        expect[self.seed] = True
        expect[order] = True
        _, nbr = gather(g.indptr, g.indices, order)
        expect[nbr] = True
        assert np.array_equal(expect, self.observed), "observed set mismatch"
        u, v = self.known_edges()
        assert np.all(self.crawled[u] | self.crawled[v])
        deg = self.known_degrees()
        assert np.all(deg <= g.degree)
        assert np.all(self.tri_crawled <= self.tri_total)


def init_crawl(full: FullGraph, seed: int) -> CrawlState:
    return CrawlState(full, seed)


def crawl_node(state: CrawlState, oracle, v: int) -> bool:
    """Spend one query on ``v``: ask the oracle and reveal its neighborhood."""
    if not (0 <= int(v) < state.graph.n) or not state.observed[v]:
        raise CrawlError("node not visible")
    if state.crawled[v]:
        raise CrawlError("node already crawled")
    is_target = oracle.is_target(v)
    state.crawl(v, is_target)
    return is_target
