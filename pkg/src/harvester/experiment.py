"""Multi-seed experiments: config parsing, paired runs, medians, result files.

Config is a JSON object::

    {
      "graph": {"generator": "type1", "params": {...}, "seed": 0}
             | {"edge_list": "g.txt", "attributes": "attrs.csv"},
      "targets": {"kind": "community", "blocks": []}
               | {"kind": "attribute", "name": "sex", "value": 1}
               | {"kind": "membership", "file": "targets.txt"},
      "crawlers": [{"policy": "RF", "name": "RF-300", "params": {"n_trees": 100},
                    "features": {"combination": 7, "bins": 5},
                    "boost": {"train_max_samples": 300, "mode": "boosted"},
                    "train_from_size": 10, "retrain_step_exponent": 1.15}],
      "budget": 200, "n_runs": 11, "seed": 0, "output": "results", "debug": false
    }

``targets`` may be omitted for generated graphs.  Relative paths resolve
against the config file's directory.
"""

from __future__ import annotations

import csv
import json
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .boosting import BoostConfig
from .crawler import CrawlerConfig, RunResult, run_crawl
from .datasets import generate, load_attributes, load_edge_list, with_attributes
from .features import FeatureConfig
from .graph import FullGraph
from .oracle import Oracle, TargetSpec, read_membership, resolve

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    graph: dict
    crawlers: list[CrawlerConfig]
    budget: int
    targets: dict | None = None
    n_runs: int = 11
    seed: int = 0
    output: str = "results"
    base_dir: str = "."
    raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        if not self.crawlers:
            raise ConfigError("at least one crawler is required")
        names = [c.label for c in self.crawlers]
        if len(set(names)) != len(names):
            raise ConfigError(f"crawler names must be unique: {names}")


CRAWLER_KEYS = {"policy", "name", "params", "features", "boost", "train_from_size",
                "retrain_step_exponent"}
TOP_KEYS = {"graph", "targets", "crawlers", "budget", "n_runs", "seed", "output", "debug"}


def _crawler(entry, budget: int, debug: bool) -> CrawlerConfig:
    if isinstance(entry, str):
        entry = {"policy": entry}
    unknown = set(entry) - CRAWLER_KEYS
    if unknown:
        raise ConfigError(f"unknown crawler keys: {sorted(unknown)}")
    try:
        return CrawlerConfig(
            policy=entry["policy"], budget=budget,
            train_from_size=int(entry.get("train_from_size", 10)),
            retrain_step_exponent=float(entry.get("retrain_step_exponent", 1.15)),
            boost=BoostConfig(**entry.get("boost", {})),
            features=FeatureConfig(**entry.get("features", {})),
            params=dict(entry.get("params", {})),
            name=entry.get("name"), debug=debug)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad crawler entry {entry!r}: {exc}") from None


def parse_config(data: dict, base_dir=".") -> ExperimentConfig:
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("graph", "crawlers", "budget"):
        if key not in data:
            raise ConfigError(f"missing config key {key!r}")
    budget = int(data["budget"])
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    debug = bool(data.get("debug", False))
    try:
        crawlers = [_crawler(c, budget, debug) for c in data["crawlers"]]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(graph=data["graph"], crawlers=crawlers, budget=budget,
                            targets=data.get("targets"), n_runs=int(data.get("n_runs", 11)),
                            seed=int(data.get("seed", 0)), output=str(data.get("output", "results")),
                            base_dir=str(base_dir), raw=data)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return parse_config(data, path.parent)


def _target_spec(entry: dict, full: FullGraph, base: Path) -> TargetSpec:
    kind = entry.get("kind")
    if kind == "attribute":
        return TargetSpec.attribute(entry["name"], entry["value"])
    if kind == "community":
        return TargetSpec.community(entry.get("blocks", ()))
    if kind == "membership":
        if "file" in entry:
            return read_membership(base / entry["file"], full)
        return TargetSpec.membership(full.index_of(x) for x in entry["nodes"])
    raise ConfigError(f"unknown target kind {kind!r}")


def build_problem(cfg: ExperimentConfig) -> tuple[FullGraph, Oracle]:
    """Materialize the graph and oracle; fails before any crawl runs."""
    base = Path(cfg.base_dir)
    g = cfg.graph
    spec = None
    if "generator" in g:
        full, spec = generate(g["generator"], g.get("params", {}), int(g.get("seed", 0)))
    elif "edge_list" in g:
        full = load_edge_list(base / g["edge_list"])
        if "attributes" in g:
            full = with_attributes(full, load_attributes(base / g["attributes"], full))
    else:
        raise ConfigError("graph needs 'generator' or 'edge_list'")
    if cfg.targets is not None:
        spec = _target_spec(cfg.targets, full, base)
    if spec is None:
        raise ConfigError("targets must be given for file graphs")
    return full, resolve(spec, full)


def run_seed(master: int, run: int, targets: np.ndarray) -> int:
    rng = np.random.default_rng(np.random.SeedSequence([master, run, 0]))
    return int(targets[rng.integers(len(targets))])


def crawler_seed(master: int, run: int) -> int:
    """Shared by all crawlers of one run (common random numbers)."""
    return int(np.random.SeedSequence([master, run, 1]).generate_state(1, np.uint64)[0])


def median(values) -> float:
    values = list(values)
    if not values:
        raise ValueError("median of empty list")
    return float(statistics.median(values))


def median_curve(curves: list[np.ndarray], budget: int) -> np.ndarray:
    """Per-step median; runs that ended early hold their final count."""
    padded = np.zeros((len(curves), budget))
    for i, c in enumerate(curves):
        padded[i, :len(c)] = c
        padded[i, len(c):] = c[-1] if len(c) else 0
    return np.median(padded, axis=0)


def tournament_scores(results: dict[str, dict[str, float]]) -> dict[str, float]:
    """Leader per graph gets 1, runner-up 0.5; ties share the higher score.

    ``results`` maps config -> {graph: metric}; places are dense ranks of
    distinct metric values, higher is better.
    """
    if len(results) < 2:
        raise ValueError("need at least two configs")
    graphs = sorted({g for per in results.values() for g in per})
    if not graphs:
        raise ValueError("need at least one graph")
    total = {c: 0.0 for c in results}
    for g in graphs:
        vals = {c: per[g] for c, per in results.items() if g in per}
        ranked = sorted(set(vals.values()), reverse=True)
        for c, v in vals.items():
            if v == ranked[0]:
                total[c] += 1.0
            elif len(ranked) > 1 and v == ranked[1]:
                total[c] += 0.5
    return total


# worker globals, set once per process
_PROBLEM: tuple[FullGraph, Oracle] | None = None


def _init_worker(full, mask):
    global _PROBLEM
    _PROBLEM = (full, Oracle(mask))


def _run_one(args) -> RunResult:
    cfg, seed_node = args
    full, oracle = _PROBLEM
    return run_crawl(full, oracle, cfg, seed_node)


def _write_run(path: Path, result: RunResult, full: FullGraph) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "node", "is_target", "cumulative"])
        for r in result.records:
            w.writerow([r.step, full.labels[r.node], int(r.is_target), r.cumulative])


def _fmt(x: float) -> str:
    return repr(float(x))


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, out: str | None = None) -> dict:
    """Run every crawler from the same seed node per run index; write results.

    Output directory layout: ``runs/<crawler>/run_<r>.csv``,
    ``curves/<crawler>.csv`` (median cumulative targets per step) and
    ``summary.json``.
    """
    full, oracle = build_problem(cfg)
    out_dir = Path(out or Path(cfg.base_dir) / cfg.output)
    try:
        (out_dir / "curves").mkdir(parents=True, exist_ok=True)
        for c in cfg.crawlers:
            (out_dir / "runs" / c.label).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc}") from None

    targets = oracle.targets
    seeds = [run_seed(cfg.seed, r, targets) for r in range(cfg.n_runs)]
    tasks = []
    for r, s in enumerate(seeds):
        rs = crawler_seed(cfg.seed, r)
        for c in cfg.crawlers:
            tasks.append((replace(c, rng_seed=rs), s))
    log.info("%d runs x %d crawlers on n=%d, m=%d, %d targets", cfg.n_runs, len(cfg.crawlers),
             full.n, full.m, len(targets))
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                 initargs=(full, oracle.mask)) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        _init_worker(full, oracle.mask)
        results = []
        for t in tasks:
            res = _run_one(t)
            log.info("%s seed=%d: %d targets in %.1fs", res.crawler, res.seed,
                     res.records[-1].cumulative, res.wall_time)
            results.append(res)

    per_crawler: dict[str, list[RunResult]] = {c.label: [] for c in cfg.crawlers}
    for res in results:
        per_crawler[res.crawler].append(res)
    summary = {"budget": cfg.budget, "n_runs": cfg.n_runs, "seed": cfg.seed,
               "graph": {"n": full.n, "m": full.m, "targets": int(len(targets))},
               "seed_nodes": [full.labels[s] for s in seeds], "crawlers": {}}
    for c in cfg.crawlers:
        runs = per_crawler[c.label]
        counts = [r.records[-1].cumulative if r.records else 0 for r in runs]
        for r, res in enumerate(runs):
            _write_run(out_dir / "runs" / c.label / f"run_{r}.csv", res, full)
        curve = median_curve([res.curve for res in runs], cfg.budget)
        with open(out_dir / "curves" / f"{c.label}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "median_cumulative"])
            for i, v in enumerate(curve, 1):
                w.writerow([i, _fmt(v)])
        summary["crawlers"][c.label] = {
            "policy": c.policy,
            "median": median(counts),
            "mean": float(np.mean(counts)),
            "std": float(np.std(counts)),
            "targets_collected": counts,
            "exhausted": [r.exhausted for r in runs],
            "retrain_steps": runs[0].retrain_steps if runs else [],
            "config": {"boost": asdict(c.boost), "features": asdict(c.features), "params": c.params,
                       "train_from_size": c.train_from_size,
                       "retrain_step_exponent": c.retrain_step_exponent},
        }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    return summary


def summary_medians_from_runs(out_dir) -> dict[str, float]:
    """Recompute per-crawler medians from the emitted run CSVs."""
    out: dict[str, float] = {}
    for d in sorted((Path(out_dir) / "runs").iterdir()):
        finals = []
        for f in sorted(d.glob("run_*.csv")):
            rows = list(csv.DictReader(f.open(encoding="utf-8")))
            finals.append(int(rows[-1]["cumulative"]) if rows else 0)
        out[d.name] = median(finals)
    return out
