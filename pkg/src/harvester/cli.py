"""Command line entry point: ``harvester run | generate | score``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .datasets import DatasetError, generate, save_attributes, save_edge_list
from .experiment import ConfigError, load_config, run_experiment, tournament_scores
from .graph import CrawlError
from .oracle import TargetError

log = logging.getLogger("harvester")


def parse_params(text: str) -> dict:
    """JSON object or comma-separated ``key=value`` pairs (values parsed as JSON)."""
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {part!r}")
        try:
            out[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            out[key.strip()] = value
    return out


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    summary = run_experiment(cfg, jobs=args.jobs, out=args.out)
    width = max(len(name) for name in summary["crawlers"])
    for name, s in summary["crawlers"].items():
        print(f"{name:<{width}}  median {s['median']:g}  mean {s['mean']:.2f}  std {s['std']:.2f}")
    return 0


def cmd_generate(args) -> int:
    params = parse_params(args.params)
    full, spec = generate(args.generator, params, args.seed)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_edge_list(out, full)
    attrs = out.with_name(out.name + ".attributes.csv")
    save_attributes(attrs, full)
    print(json.dumps({"edges": str(out), "attributes": str(attrs), "n": full.n, "m": full.m,
                      "targets": spec.to_dict()}))
    return 0


def cmd_score(args) -> int:
    results: dict[str, dict[str, float]] = {}
    graphs = []
    for path in args.summaries:
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        graph = path.parent.name if path.name == "summary.json" else path.stem
        if graph in graphs:
            graph = str(path)
        graphs.append(graph)
        for name, s in data["crawlers"].items():
            results.setdefault(name, {})[graph] = s[args.metric]
    totals = tournament_scores(results)
    per_graph = {g: tournament_scores({c: {g: v[g]} for c, v in results.items() if g in v})
                 for g in graphs}
    width = max(len(c) for c in totals)
    print(f"{'config':<{width}}  " + "  ".join(graphs) + "  total")
    for c in sorted(totals, key=lambda c: -totals[c]):
        cells = "  ".join(f"{per_graph[g].get(c, 0.0):>{len(g)}g}" for g in graphs)
        print(f"{c:<{width}}  {cells}  {totals[c]:g}")
    if args.out:
        Path(args.out).write_text(json.dumps({"totals": totals, "per_graph": per_graph},
                                             indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="harvester", description="Budgeted target-harvesting graph crawlers.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="override the master seed")
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("generate", help="write a synthetic graph")
    g.add_argument("generator", choices=["type1", "type2", "type3"])
    g.add_argument("params", help="JSON object or key=value,... e.g. n=1000,community_size=50,p_in=0.3,p_background=0.005")
    g.add_argument("-o", "--output", required=True, help="edge list path; attributes go to <path>.attributes.csv")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("score", help="tournament table over experiment summaries (one per graph)")
    s.add_argument("summaries", nargs="+")
    s.add_argument("--metric", default="median", choices=["median", "mean"])
    s.add_argument("--out", help="write totals as JSON")
    s.set_defaults(func=cmd_score)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DatasetError, TargetError, CrawlError, ValueError, KeyError,
            OSError, json.JSONDecodeError) as exc:
        print(f"harvester: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
