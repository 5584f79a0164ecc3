"""Structural node features computed on the crawler's known graph.

Per node: OD = 1/sqrt(d), clustering coefficient CC, crawled-neighbor fraction
CNF, target-neighbor fraction TNF (d is the known degree, all four are 0 when
d = 0) and Tri0/Tri1/Tri2, the fractions of known triangles through the node
whose two other vertices contain 0/1/2 crawled nodes.

Feature vector layouts, by combination number::

    1  tnf
    2  od cc cnf tnf
    3  od cc cnf tnf | mean over first neighbors of (od cc cnf tnf)
    4  tri0 tri1 tri2
    5  od cc cnf tnf tri0 tri1 tri2
    6  (5) | mean over first neighbors of (od cc cnf tnf)
    7  (5) | histograms over first neighbors of od, cc, cnf, tnf
    8  (7) | histograms over second neighbors of od, cc, cnf, tnf

Histograms have ``bins`` bins each and are laid out feature by feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import CrawlError, CrawlState

BASE = ("od", "cc", "cnf", "tnf")


@dataclass(frozen=True)
class NodeFeatures:
    od: float
    cc: float
    cnf: float
    tnf: float
    tri0: float
    tri1: float
    tri2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.od, self.cc, self.cnf, self.tnf, self.tri0, self.tri1, self.tri2])


@dataclass(frozen=True)
class FeatureConfig:
    combination: int = 7
    bins: int = 5

    def __post_init__(self):
        if self.combination not in range(1, 9):
            raise ValueError("combination must be in 1..8")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")

    @property
    def length(self) -> int:
        b = self.bins
        return {1: 1, 2: 4, 3: 8, 4: 3, 5: 7, 6: 11, 7: 7 + 4 * b, 8: 7 + 8 * b}[self.combination]


def base_features(state: CrawlState, nodes) -> np.ndarray:
    """(len(nodes), 4) array of od, cc, cnf, tnf."""
    nodes = np.asarray(nodes, dtype=np.int64)
    deg = state.known_degrees(nodes).astype(np.float64)
    out = np.zeros((len(nodes), 4))
    has = deg > 0
    out[has, 0] = 1.0 / np.sqrt(deg[has])
    two = deg >= 2
    out[two, 1] = state.tri_total[nodes][two] / (deg[two] * (deg[two] - 1) / 2)
    out[has, 2] = state.crawled_nbrs[nodes][has] / deg[has]
    out[has, 3] = state.target_nbrs[nodes][has] / deg[has]
    return out


def triangle_features(state: CrawlState, nodes) -> np.ndarray:
    """(len(nodes), 3) array of tri0, tri1, tri2.

    Every known edge has a crawled endpoint, so a known triangle has at least
    two crawled vertices and tri0 is always 0 on a valid state.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    total = state.tri_total[nodes].astype(np.float64)
    both = state.tri_crawled[nodes].astype(np.float64)
    out = np.zeros((len(nodes), 3))
    has = total > 0
    out[has, 1] = (total[has] - both[has]) / total[has]
    out[has, 2] = both[has] / total[has]
    return out


def node_features(state: CrawlState, v: int) -> NodeFeatures:
    if not (0 <= int(v) < state.graph.n) or not state.observed[v]:
        raise CrawlError("node not visible")
    b = base_features(state, [v])[0]
    t = triangle_features(state, [v])[0]
    return NodeFeatures(*b, *t)


def histogram(values, bins: int = 5) -> np.ndarray:
    """Normalized histogram on [0, 1]; bins are [k/bins, (k+1)/bins), 1.0 goes last."""
    values = np.asarray(values, dtype=np.float64)
    if np.any((values < 0) | (values > 1)) or np.any(np.isnan(values)):
        raise ValueError("histogram values must lie in [0, 1]")
    out = np.zeros(bins)
    if len(values) == 0:
        return out
    idx = np.minimum((values * bins).astype(np.int64), bins - 1)
    out += np.bincount(idx, minlength=bins)
    return out / len(values)


def _grouped_hist(pos: np.ndarray, feats: np.ndarray, k: int, bins: int) -> np.ndarray:
    """Per-group normalized histograms of each feature column -> (k, ncols*bins)."""
    ncols = feats.shape[1]
    idx = np.minimum((feats * bins).astype(np.int64), bins - 1)
    key = (pos[:, None] * ncols + np.arange(ncols)) * bins + idx
    counts = np.bincount(key.ravel(), minlength=k * ncols * bins).reshape(k, ncols * bins)
    size = np.bincount(pos, minlength=k).astype(np.float64)
    counts = counts.astype(np.float64)
    has = size > 0
    counts[has] /= size[has, None]
    return counts


def _grouped_mean(pos: np.ndarray, feats: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((k, feats.shape[1]))
    for j in range(feats.shape[1]):
        out[:, j] = np.bincount(pos, weights=feats[:, j], minlength=k)
    size = np.bincount(pos, minlength=k)
    has = size > 0
    out[has] /= size[has, None]
    return out


def _second_neighbors(state: CrawlState, nodes: np.ndarray, pos1, nbr1):
    """(pos, node) pairs for nodes at known distance exactly 2."""
    n = state.graph.n
    pos2, nbr2 = state.known_adjacency(nbr1)
    origin = pos1[pos2]
    key = np.unique(origin * n + nbr2)
    near = np.concatenate([pos1 * n + nbr1, np.arange(len(nodes)) * n + nodes])
    key = key[~np.isin(key, near)]
    return key // n, key % n


def feature_matrix(state: CrawlState, nodes, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Feature vectors for many observed nodes at once, one row per node."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) and not np.all(state.observed[nodes]):
        raise CrawlError("node not visible")
    k, c = len(nodes), cfg.combination
    own = base_features(state, nodes)
    if c == 1:
        return own[:, 3:4].copy()
    if c == 2:
        return own
    if c == 4:
        return triangle_features(state, nodes)
    parts = [own]
    if c != 3:
        parts.append(triangle_features(state, nodes))
    if c in (3, 6, 7, 8):
        pos, nbr = state.known_adjacency(nodes)
        nfeat = base_features(state, nbr)
        if c in (3, 6):
            parts.append(_grouped_mean(pos, nfeat, k))
        else:
            parts.append(_grouped_hist(pos, nfeat, k, cfg.bins))
            if c == 8:
                pos2, nbr2 = _second_neighbors(state, nodes, pos, nbr)
                parts.append(_grouped_hist(pos2, base_features(state, nbr2), k, cfg.bins))
    return np.hstack(parts)


def feature_vector(state: CrawlState, v: int, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    return feature_matrix(state, [v], cfg)[0]
