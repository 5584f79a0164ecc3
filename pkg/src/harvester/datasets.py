"""Graph sources: edge-list files and synthetic generators.

Generators cover three target topologies: one dense planted block (type 1),
several planted blocks (type 2) and targets scattered independently over a
preferential-attachment graph (type 3).  Every source is reduced to its giant
component.
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import numpy as np

from .graph import FullGraph
from .oracle import COMMUNITY_ATTR, TargetError, TargetSpec, resolve

log = logging.getLogger(__name__)

TARGET_ATTR = "target"
MAX_RETRIES = 5


class DatasetError(ValueError):
    pass


def _sort_key(label: str):
    try:
        return (0, int(label), "")
    except ValueError:
        return (1, 0, label)


def load_edge_list(path) -> FullGraph:
    """Read "u v" lines ('#' comments allowed) and keep the giant component.

    Dense ids follow the sorted external ids (numeric when they parse as
    integers); ``labels`` maps dense ids back.
    """
    us, vs = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected 'u v', got {line!r}")
            us.append(parts[0])
            vs.append(parts[1])
    if not us:
        raise DatasetError(f"{path}: empty graph")
    names = sorted(set(us) | set(vs), key=_sort_key)
    ids = {s: i for i, s in enumerate(names)}
    labels = [int(s) if _sort_key(s)[0] == 0 else s for s in names]
    full = FullGraph.from_edges([ids[s] for s in us], [ids[s] for s in vs], len(names), labels)
    if full.m == 0:
        raise DatasetError(f"{path}: no edges besides self-loops")
    return full.giant_component()[0]


def load_attributes(path, full: FullGraph) -> dict[str, dict[int, int]]:
    """Read a "node,<attr>,..." CSV and join it to ``full`` by external id.

    Rows for unknown nodes are skipped with a warning; empty cells mean the
    node lacks that attribute.
    """
    by_str = {str(lab): i for i, lab in enumerate(full.labels)}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "node":
            raise DatasetError(f"{path}: header must start with 'node'")
        names = [h.strip() for h in header[1:]]
        table: dict[str, dict[int, int]] = {name: {} for name in names}
        skipped = 0
        for lineno, row in enumerate(reader, 2):
            if not row or not "".join(row).strip():
                continue
            node = by_str.get(row[0].strip())
            if node is None:
                skipped += 1
                continue
            for name, cell in zip(names, row[1:]):
                cell = cell.strip()
                if not cell:
                    continue
                try:
                    table[name][node] = int(cell)
                except ValueError:
                    raise DatasetError(f"{path}:{lineno}: non-integer value {cell!r} for {name}") from None
    if skipped:
        log.warning("%s: %d rows for nodes not in the graph skipped", path, skipped)
    return table


def with_attributes(full: FullGraph, table: dict[str, dict[int, int]]) -> FullGraph:
    attrs = {**full.attributes, **table}
    return FullGraph(full.indptr, full.indices, full.labels, attrs)


def _pair_from_index(k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linear index over pairs j < i enumerated row by row -> (i, j)."""
    i = ((1 + np.sqrt(1 + 8 * k.astype(np.float64))) / 2).astype(np.int64)
    # float rounding can be off by one either way
    i -= (i * (i - 1) // 2) > k
    i += ((i + 1) * i // 2) <= k
    return i, k - i * (i - 1) // 2


def erdos_renyi_edges(n: int, p: float, rng: np.random.Generator):
    """G(n, p) edge list by geometric skipping over the n(n-1)/2 pairs."""
    total = n * (n - 1) // 2
    if p <= 0 or total == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    if p >= 1:
        k = np.arange(total, dtype=np.int64)
    else:
        chunks, pos = [], -1
        batch = int(total * p + 5 * math.sqrt(total * p) + 16)
        while pos < total:
            gaps = rng.geometric(p, size=batch)
            idx = pos + np.cumsum(gaps)
            chunks.append(idx)
            pos = int(idx[-1])
        k = np.concatenate(chunks)
        k = k[k < total]
    return _pair_from_index(k)


def _check_prob(name: str, p: float, allow_zero: bool = False) -> None:
    lo_ok = p >= 0 if allow_zero else p > 0
    if not (lo_ok and p <= 1):
        raise DatasetError(f"{name} must be in {'[0, 1]' if allow_zero else '(0, 1]'}")


def _sub_seed(seed: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), attempt]))


def _with_retries(seed: int, build):
    for attempt in range(MAX_RETRIES + 1):
        full, spec = build(_sub_seed(seed, attempt))
        try:
            resolve(spec, full)
            return full, spec
        except TargetError:
            log.warning("generated graph has no targets in its giant component, retrying")
    raise DatasetError(f"no targets in the giant component after {MAX_RETRIES} retries")


def generate_type2(n: int, sizes, p_in: float, p_background: float, seed: int = 0):
    """Background G(n, p_background) plus disjoint planted blocks of density p_in.

    Targets are the union of the blocks, stored as block indices in the
    ``community`` attribute (-1 for background nodes).
    """
    sizes = [int(s) for s in sizes]
    if not sizes or min(sizes) < 1 or max(sizes) >= n or sum(sizes) > n:
        raise DatasetError("block sizes must be positive, each < n, and fit in n nodes")
    _check_prob("p_in", p_in)
    _check_prob("p_background", p_background, allow_zero=True)
    if p_in <= p_background:
        raise DatasetError("p_in must exceed p_background")

    def build(rng):
        u, v = erdos_renyi_edges(n, p_background, rng)
        members = rng.permutation(n)[:sum(sizes)]
        community = np.full(n, -1, dtype=np.int64)
        us, vs, start = [u], [v], 0
        for b, size in enumerate(sizes):
            block = members[start:start + size]
            start += size
            community[block] = b
            a, c = np.triu_indices(size, 1)
            keep = rng.random(len(a)) < p_in
            us.append(block[a[keep]])
            vs.append(block[c[keep]])
        attrs = {COMMUNITY_ATTR: {i: int(community[i]) for i in range(n)}}
        full = FullGraph.from_edges(np.concatenate(us), np.concatenate(vs), n, attributes=attrs)
        return full.giant_component()[0], TargetSpec.community()

    return _with_retries(seed, build)


def generate_type1(n: int, community_size: int, p_in: float, p_background: float, seed: int = 0):
    """One planted block; see :func:`generate_type2`."""
    return generate_type2(n, [community_size], p_in, p_background, seed)


def preferential_attachment_edges(n: int, m: int, rng: np.random.Generator):
    """Star on m+1 nodes, then each new node links to m distinct nodes drawn
    proportionally to degree."""
    us = list(range(1, m + 1))
    vs = [0] * m
    repeated = us + vs
    for v in range(m + 1, n):
        chosen: set[int] = set()
        while len(chosen) < m:
            chosen.add(repeated[int(rng.integers(len(repeated)))])
        for t in sorted(chosen):
            us.append(v)
            vs.append(t)
            repeated.extend((v, t))
    return np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64)


def generate_type3(n: int, m: int, target_prob: float, seed: int = 0):
    """Preferential attachment with targets drawn independently per node."""
    if m < 1 or n <= m:
        raise DatasetError("need m >= 1 and n > m")
    if not 0 < target_prob < 1:
        raise DatasetError("target_prob must be in (0, 1)")

    def build(rng):
        u, v = preferential_attachment_edges(n, m, rng)
        is_target = rng.random(n) < target_prob
        attrs = {TARGET_ATTR: {i: int(is_target[i]) for i in range(n)}}
        full = FullGraph.from_edges(u, v, n, attributes=attrs)
        return full.giant_component()[0], TargetSpec.attribute(TARGET_ATTR, 1)

    return _with_retries(seed, build)


GENERATORS = {"type1": generate_type1, "type2": generate_type2, "type3": generate_type3}


def generate(kind: str, params: dict, seed: int = 0):
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise DatasetError(f"unknown generator {kind!r}; expected one of {sorted(GENERATORS)}") from None
    try:
        return gen(seed=seed, **params)
    except TypeError as exc:
        raise DatasetError(f"bad parameters for {kind}: {exc}") from None


def save_edge_list(path, full: FullGraph) -> None:
    u, v = full.edges()
    lab = full.labels
    Path(path).write_text("".join(f"{lab[a]} {lab[b]}\n" for a, b in zip(u, v)), encoding="utf-8")


def save_attributes(path, full: FullGraph) -> None:
    names = sorted(full.attributes)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", *names])
        for i in range(full.n):
            w.writerow([full.labels[i], *(full.attributes[a].get(i, "") for a in names)])
