"""The budgeted crawl loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .boosting import BoostConfig, build_samples
from .features import FeatureConfig, feature_matrix
from .gnn import KINDS as GNN_KINDS, TrainConfig, gnn_train, score_frontier
from .graph import CrawlState, FullGraph, crawl_node
from .oracle import Oracle
from .predictors import knn_train, rf_train

log = logging.getLogger(__name__)

BASELINES = ("RC", "MTN")
CLASSICAL = ("KNN", "RF")
POLICIES = BASELINES + CLASSICAL + GNN_KINDS


class GraphExhausted(Exception):
    """No observed uncrawled node is left."""


@dataclass(frozen=True)
class CrawlerConfig:
    policy: str
    budget: int
    train_from_size: int = 10
    retrain_step_exponent: float = 1.15
    boost: BoostConfig = BoostConfig()
    features: FeatureConfig = FeatureConfig()
    params: dict = field(default_factory=dict)
    rng_seed: int = 0
    name: str | None = None
    debug: bool = False

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.train_from_size < 1:
            raise ValueError("train_from_size must be >= 1")
        if self.retrain_step_exponent <= 1:
            raise ValueError("retrain_step_exponent must be > 1")

    @property
    def label(self) -> str:
        return self.name or self.policy


@dataclass
class StepRecord:
    step: int
    node: int
    is_target: bool
    cumulative: int
    retrained: bool = False


@dataclass
class RunResult:
    crawler: str
    seed: int
    records: list[StepRecord]
    retrain_steps: list[int]
    exhausted: bool
    oracle_calls: int
    observed: int
    wall_time: float = 0.0
    warnings: list[str] = field(default_factory=list)

    @property
    def curve(self) -> np.ndarray:
        return np.array([r.cumulative for r in self.records], dtype=np.int64)


def next_retrain_step(s: int, exponent: float = 1.15) -> int:
    """floor(s * exponent) in exact decimal arithmetic, at least s + 1."""
    nxt = math.floor(s * Fraction(str(exponent)))
    return nxt if nxt > s else s + 1


def retrain_chain(start: int, limit: int, exponent: float = 1.15) -> list[int]:
    out, s = [], start
    while s < limit:
        out.append(s)
        s = next_retrain_step(s, exponent)
    return out


def select_next(candidates: np.ndarray, scores: np.ndarray, rng: np.random.Generator) -> int:
    """Highest-scoring candidate, ties broken uniformly at random."""
    if len(candidates) == 0:
        raise GraphExhausted("graph exhausted")
    scores = np.asarray(scores)
    best = np.flatnonzero(scores == scores.max())
    if len(best) == 1:
        return int(candidates[best[0]])
    return int(candidates[best[rng.integers(len(best))]])


def targets_collected(result: RunResult) -> int:
    return result.records[-1].cumulative if result.records else 0


class VectorPredictor:
    """KNN or RF over feature vectors, caching scores of repeated rows."""

    def __init__(self, kind: str, cfg: CrawlerConfig):
        self.kind = kind
        self.cfg = cfg
        self.model = None
        self._cache: dict[bytes, float] = {}

    kinds = ("classical",)

    def fit(self, batch, rng: np.random.Generator) -> None:
        data = batch.classical
        if self.kind == "KNN":
            self.model = knn_train(data, int(self.cfg.params.get("k", 30)))
        else:
            self.model = rf_train(data, int(self.cfg.params.get("n_trees", 100)),
                                  int(rng.integers(2**63 - 1)))
        self._cache.clear()

    def score(self, state: CrawlState, cand: np.ndarray) -> np.ndarray:
        X = feature_matrix(state, cand, self.cfg.features)
        uniq, inverse = np.unique(X, axis=0, return_inverse=True)
        keys = [row.tobytes() for row in uniq]
        todo = [i for i, k in enumerate(keys) if k not in self._cache]
        if todo:
            for i, s in zip(todo, self.model.score(uniq[todo])):
                self._cache[keys[i]] = float(s)
        vals = np.array([self._cache[k] for k in keys])
        return vals[inverse.ravel()]


class GnnPredictor:
    kinds = ("ego",)

    def __init__(self, kind: str, cfg: CrawlerConfig):
        self.kind = kind
        self.cfg = cfg
        self.model = None
        p = cfg.params
        self.train_cfg = TrainConfig(epochs=int(p.get("epochs", 200)), batch=int(p.get("batch", 100)),
                                     learn_rate=float(p.get("learn_rate", 0.01)))
        self.heads = int(p.get("heads", 3))

    def fit(self, batch, rng: np.random.Generator) -> None:
        self.model = gnn_train(self.kind, batch.ego, self.train_cfg,
                               int(rng.integers(2**63 - 1)), heads=self.heads)

    def score(self, state: CrawlState, cand: np.ndarray) -> np.ndarray:
        return score_frontier(self.model, state, cand)


def make_predictor(cfg: CrawlerConfig):
    if cfg.policy in CLASSICAL:
        return VectorPredictor(cfg.policy, cfg)
    if cfg.policy in GNN_KINDS:
        return GnnPredictor(cfg.policy, cfg)
    return None


def run_crawl(full: FullGraph, oracle: Oracle, cfg: CrawlerConfig, seed_node: int) -> RunResult:
    """Crawl ``cfg.budget`` nodes from ``seed_node`` with the configured policy.

    Predictor policies behave as MTN until ``train_from_size`` nodes are
    crawled, then retrain whenever the crawled count hits the schedule.
    """
    if cfg.budget < 1:
        raise ValueError("budget must be >= 1")
    if not oracle.mask[seed_node]:
        raise ValueError("seed node is not a target")
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.rng_seed)
    state = CrawlState(full, seed_node)
    predictor = make_predictor(cfg)
    trained = False
    next_train = cfg.train_from_size
    calls0 = oracle.calls
    records: list[StepRecord] = []
    retrains: list[int] = []
    warnings: list[str] = []
    exhausted = False
    total = 0
    for step in range(1, cfg.budget + 1):
        cand = state.frontier()
        if len(cand) == 0:
            exhausted = True
            log.info("%s: frontier empty after %d steps", cfg.label, step - 1)
            break
        retrained = False
        if predictor is not None and state.queries_used >= next_train:
            batch = build_samples(state, cfg.boost, cfg.features, rng, predictor.kinds)
            warnings.extend(batch.warnings)
            if cfg.debug:
                _check_batch(batch, state, cfg)
            predictor.fit(batch, rng)
            trained = retrained = True
            retrains.append(state.queries_used)
            next_train = next_retrain_step(next_train, cfg.retrain_step_exponent)
        if cfg.policy == "RC":
            v = int(cand[rng.integers(len(cand))])
        elif trained:
            scores = predictor.score(state, cand)
            if cfg.debug:
                assert np.all((scores >= 0) & (scores <= 1)), "score outside [0, 1]"
            v = select_next(cand, scores, rng)
        else:
            v = select_next(cand, state.target_nbrs[cand], rng)
        is_target = crawl_node(state, oracle, v)
        total += is_target
        records.append(StepRecord(step, v, is_target, total, retrained))
        if cfg.debug:
            state.check_invariants()
    if warnings:
        log.info("%s: %d retrains saw a single-class history", cfg.label, len(warnings))
    calls = oracle.calls - calls0
    if cfg.debug:
        assert calls == state.queries_used <= cfg.budget
    return RunResult(cfg.label, int(seed_node), records, retrains, exhausted, calls,
                     int(state.observed.sum()), time.perf_counter() - t0, warnings)


def _check_batch(batch, state: CrawlState, cfg: CrawlerConfig) -> None:
    assert len(batch) <= cfg.boost.train_max_samples
    if cfg.boost.mode == "boosted" and cfg.boost.balance:
        labels = state.label[np.asarray(state.order)]
        if labels.any() and not labels.all():
            t, f = batch.class_counts()
            assert abs(t - f) <= 1, "unbalanced training batch"
