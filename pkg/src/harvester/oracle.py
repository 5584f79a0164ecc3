"""Target sets and the membership oracle."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import FullGraph

log = logging.getLogger(__name__)

COMMUNITY_ATTR = "community"


class TargetError(ValueError):
    pass


@dataclass(frozen=True)
class TargetSpec:
    """How to pick target nodes.

    kind is one of ``attribute`` (``name == value``), ``membership`` (explicit
    internal node ids) or ``community`` (planted block indices stored in the
    ``community`` attribute by the generators).
    """

    kind: str
    name: str | None = None
    value: int | None = None
    nodes: tuple[int, ...] = ()
    blocks: tuple[int, ...] = field(default=())

    @classmethod
    def attribute(cls, name: str, value: int) -> "TargetSpec":
        return cls("attribute", name=name, value=int(value))

    @classmethod
    def membership(cls, nodes) -> "TargetSpec":
        return cls("membership", nodes=tuple(sorted(int(v) for v in nodes)))

    @classmethod
    def community(cls, blocks=()) -> "TargetSpec":
        """Empty ``blocks`` means every planted block."""
        return cls("community", blocks=tuple(int(b) for b in blocks))

    def to_dict(self) -> dict:
        if self.kind == "attribute":
            return {"kind": "attribute", "name": self.name, "value": self.value}
        if self.kind == "membership":
            return {"kind": "membership", "nodes": list(self.nodes)}
        return {"kind": "community", "blocks": list(self.blocks)}


class Oracle:
    """Answers whether a node is a target.  Immutable after construction."""

    def __init__(self, mask: np.ndarray):
        self._mask = np.asarray(mask, dtype=bool).copy()
        self._mask.setflags(write=False)
        self.calls = 0

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def targets(self) -> np.ndarray:
        return np.flatnonzero(self._mask)

    def __len__(self) -> int:
        return int(self._mask.sum())

    def is_target(self, v: int) -> bool:
        if not (0 <= int(v) < len(self._mask)):
            raise IndexError(f"node {v} out of range")
        self.calls += 1
        return bool(self._mask[v])


def resolve(spec: TargetSpec, full: FullGraph) -> Oracle:
    mask = np.zeros(full.n, dtype=bool)
    if spec.kind == "attribute":
        table = full.attributes.get(spec.name)
        if table is None:
            raise TargetError(f"unknown attribute {spec.name!r}")
        for v, val in table.items():
            if val == spec.value:
                mask[v] = True
    elif spec.kind == "membership":
        nodes = np.asarray(spec.nodes, dtype=np.int64)
        if len(nodes) and (nodes.min() < 0 or nodes.max() >= full.n):
            raise TargetError("membership list refers to nodes outside the graph")
        mask[nodes] = True
    elif spec.kind == "community":
        table = full.attributes.get(COMMUNITY_ATTR)
        if table is None:
            raise TargetError(f"unknown attribute {COMMUNITY_ATTR!r}")
        wanted = set(spec.blocks)
        for v, block in table.items():
            if block >= 0 and (not wanted or block in wanted):
                mask[v] = True
    else:
        raise TargetError(f"unknown target kind {spec.kind!r}")
    if not mask.any():
        raise TargetError("empty target set")
    return Oracle(mask)


def read_membership(path, full: FullGraph) -> TargetSpec:
    """Membership list file: one external node label per line, '#' comments.

    Labels are matched as strings against the graph's external labels; labels
    not present in the graph (e.g. dropped with a small component) are skipped.
    """
    by_str = {str(lab): i for i, lab in enumerate(full.labels)}
    nodes, missing = [], 0
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line in by_str:
            nodes.append(by_str[line])
        else:
            missing += 1
    if missing:
        log.warning("%d membership labels not in graph, skipped", missing)
    return TargetSpec.membership(nodes)


def write_membership(path, full: FullGraph, oracle: Oracle) -> None:
    lines = [str(full.labels[v]) for v in oracle.targets]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
