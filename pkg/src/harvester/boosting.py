"""Training samples from re-simulated crawl orders ("sample boosting").

The crawled set could have been collected in many orders, each giving a
different sequence of partial views.  Replaying random valid orders over the
crawled subgraph and harvesting the tail of each one multiplies the training
data available early in a crawl.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .features import FeatureConfig, feature_vector
from .gnn import EgoGraph, extract_ego
from .graph import CrawlState
from .predictors import TrainingSet

log = logging.getLogger(__name__)

MODES = ("boosted", "historical")


@dataclass(frozen=True)
class BoostConfig:
    train_max_samples: int = 300
    max_boost_iterations: int = 20
    last_boost_steps_fraction: float = 0.2
    mode: str = "boosted"
    balance: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0 < self.last_boost_steps_fraction <= 1:
            raise ValueError("last_boost_steps_fraction must be in (0, 1]")
        if self.train_max_samples < 1 or self.max_boost_iterations < 1:
            raise ValueError("sample and iteration counts must be positive")


@dataclass
class SampleBatch:
    nodes: list[int] = field(default_factory=list)
    labels: list[bool] = field(default_factory=list)
    vectors: list[np.ndarray] = field(default_factory=list)
    ego: list[EgoGraph] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    dim: int = 0

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def classical(self) -> TrainingSet:
        X = np.array(self.vectors) if self.vectors else np.zeros((0, self.dim))
        return TrainingSet(X, np.array(self.labels, dtype=bool))

    def class_counts(self) -> tuple[int, int]:
        t = int(sum(self.labels))
        return t, len(self.labels) - t


def tail_length(n: int, fraction: float) -> int:
    # rounding guards against 0.2 * 15 == 3.0000000000000004
    return min(n, max(1, math.ceil(round(fraction * n, 9))))


def simulate_sequence(state: CrawlState, rng: np.random.Generator) -> list[int]:
    """Random crawl order of the crawled set that a crawler could have produced.

    Starts at the real seed; each next node is drawn uniformly from crawled
    nodes adjacent to the prefix.
    """
    if not state.order:
        raise ValueError("nothing crawled")
    g, crawled = state.graph, state.crawled
    first = state.order[0]
    seq = [first]
    seen = {first}
    eligible: list[int] = []

    def expand(v):
        nb = g.neighbors(v)
        for u in nb[crawled[nb]].tolist():
            if u not in seen:
                seen.add(u)
                eligible.append(u)

    expand(first)
    while eligible:
        i = int(rng.integers(len(eligible)))
        v = eligible[i]
        eligible[i] = eligible[-1]
        eligible.pop()
        seq.append(v)
        expand(v)
    return seq


def is_valid_sequence(state: CrawlState, seq: Sequence[int]) -> bool:
    """Prefix-connectivity check: every node after the first touches its prefix."""
    if sorted(seq) != sorted(state.order) or not seq or seq[0] != state.order[0]:
        return False
    done = np.zeros(state.graph.n, dtype=bool)
    done[seq[0]] = True
    for v in seq[1:]:
        if not done[state.graph.neighbors(v)].any():
            return False
        done[v] = True
    return True


def reconstruct_snapshot(state: CrawlState, prefix: Sequence[int], i: int) -> CrawlState:
    """State after crawling ``prefix[:i-1]`` (1-based position i)."""
    if not 1 <= i <= len(prefix):
        raise ValueError("position out of range")
    return state.replay_prefix(prefix[:i - 1])


def select_positions(labels: np.ndarray, cfg: BoostConfig, rng: np.random.Generator) -> list[int]:
    """0-based positions of one sequence to turn into samples.

    Takes the last fraction of the sequence; if balancing, adds minority-class
    positions walking backwards from the cutoff, then drops random majority
    positions until both classes are equally represented.
    """
    n = len(labels)
    cut = n - tail_length(n, cfg.last_boost_steps_fraction)
    pos = list(range(cut, n))
    if not cfg.balance:
        return pos
    t = [p for p in pos if labels[p]]
    f = [p for p in pos if not labels[p]]
    j = cut - 1
    while len(t) != len(f) and j >= 0:
        if labels[j] and len(t) < len(f):
            t.append(j)
        elif not labels[j] and len(f) < len(t):
            f.append(j)
        j -= 1
    if t and f and len(t) != len(f):
        big, small = (t, f) if len(t) > len(f) else (f, t)
        keep = rng.choice(len(big), size=len(small), replace=False)
        big = [big[k] for k in sorted(keep)]
        t, f = (big, small) if len(t) > len(f) else (small, big)
    return sorted(t + f)


def samples_from_sequence(state: CrawlState, seq: Sequence[int], positions: Sequence[int],
                          feat_cfg: FeatureConfig, kinds=("classical", "ego")) -> SampleBatch:
    """Replay ``seq`` once, emitting a sample for seq[p] at each snapshot p."""
    out = SampleBatch(dim=feat_cfg.length)
    wanted = set(positions)
    last = max(wanted, default=-1)
    snap = CrawlState(state.graph, state.seed)
    for p, v in enumerate(seq[:last + 1]):
        if p in wanted:
            lab = bool(state.label[v])
            out.nodes.append(int(v))
            out.labels.append(lab)
            if "classical" in kinds:
                out.vectors.append(feature_vector(snap, v, feat_cfg))
            if "ego" in kinds:
                out.ego.append(extract_ego(snap, v, lab))
        snap.crawl(v, bool(state.label[v]))
    return out


def _extend(dst: SampleBatch, src: SampleBatch, keep=None) -> None:
    idx = range(len(src)) if keep is None else keep
    for i in idx:
        dst.nodes.append(src.nodes[i])
        dst.labels.append(src.labels[i])
        if src.vectors:
            dst.vectors.append(src.vectors[i])
        if src.ego:
            dst.ego.append(src.ego[i])


def _truncate_balanced(batch: SampleBatch, limit: int) -> SampleBatch:
    t, f = batch.class_counts()
    if t + f <= limit:
        return batch
    keep_t = min(t, limit - min(f, limit // 2))
    keep_f = min(f, limit - keep_t)
    out = SampleBatch(dim=batch.dim, warnings=batch.warnings)
    left = {True: keep_t, False: keep_f}
    keep = []
    for i, lab in enumerate(batch.labels):
        if left[lab] > 0:
            left[lab] -= 1
            keep.append(i)
    _extend(out, batch, keep)
    return out


def boost_sequences(state: CrawlState, sequences, cfg: BoostConfig, feat_cfg: FeatureConfig,
                    rng: np.random.Generator, kinds=("classical", "ego")) -> SampleBatch:
    """Harvest balanced tail samples from ``sequences`` until the cap is reached."""
    labels_all = state.label[np.asarray(state.order)].astype(bool)
    batch = SampleBatch(dim=feat_cfg.length)
    if labels_all.all() or not labels_all.any():
        msg = "single-class crawl history; training batch cannot be balanced"
        batch.warnings.append(msg)
        log.debug(msg)
    for seq in sequences:
        if len(batch) >= cfg.train_max_samples:
            break
        positions = select_positions(state.label[np.asarray(seq)].astype(bool), cfg, rng)
        _extend(batch, samples_from_sequence(state, seq, positions, feat_cfg, kinds))
    return _truncate_balanced(batch, cfg.train_max_samples)


def build_samples(state: CrawlState, cfg: BoostConfig, feat_cfg: FeatureConfig,
                  rng: np.random.Generator, kinds=("classical", "ego")) -> SampleBatch:
    n = state.queries_used
    if n < 1:
        raise ValueError("nothing crawled")
    if cfg.mode == "historical":
        positions = list(range(n - min(n, cfg.train_max_samples), n))
        return samples_from_sequence(state, state.order, positions, feat_cfg, kinds)
    sequences = (simulate_sequence(state, rng) for _ in range(cfg.max_boost_iterations))
    return boost_sequences(state, sequences, cfg, feat_cfg, rng, kinds)
