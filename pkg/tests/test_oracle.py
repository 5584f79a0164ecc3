import numpy as np
import pytest

from harvester.datasets import generate_type1
from harvester.graph import FullGraph
from harvester.oracle import (Oracle, TargetError, TargetSpec, read_membership, resolve,
                              write_membership)


@pytest.fixture
def six():
    attrs = {"sex": {0: 1, 1: 2, 2: 1, 3: 2, 4: 1, 5: 2}, "smoking": {0: 3}}
    return FullGraph.from_edges([0, 1, 2, 3, 4], [1, 2, 3, 4, 5], 6, attributes=attrs)


def test_resolve_attribute(six):
    o = resolve(TargetSpec.attribute("sex", 1), six)
    assert list(o.targets) == [0, 2, 4]


def test_resolve_membership(six):
    o = resolve(TargetSpec.membership({2, 5}), six)
    assert list(o.targets) == [2, 5]


def test_resolve_errors(six):
    with pytest.raises(TargetError, match="empty target set"):
        resolve(TargetSpec.attribute("smoking", 9), six)
    with pytest.raises(TargetError, match="unknown attribute"):
        resolve(TargetSpec.attribute("age", 30), six)
    with pytest.raises(TargetError, match="outside"):
        resolve(TargetSpec.membership([6]), six)


def test_is_target_and_range():
    o = Oracle(np.array([True, False]))
    assert o.is_target(0) is True
    assert o.is_target(1) is False
    assert o.is_target(0) is True  # idempotent
    assert o.calls == 3
    with pytest.raises(IndexError):
        o.is_target(2)
    with pytest.raises(ValueError):
        o.mask[0] = False


def test_planted_fraction_is_exact():
    g, spec = generate_type1(200, 20, 1.0, 0.05, seed=3)
    o = resolve(spec, g)
    assert len(o) == 20 and g.n == 200


def test_membership_file_roundtrip(tmp_path, six):
    o = resolve(TargetSpec.membership([1, 4]), six)
    path = tmp_path / "targets.txt"
    write_membership(path, six, o)
    path.write_text("# header\n" + path.read_text() + "77  # not in graph\n")
    spec = read_membership(path, six)
    assert spec.nodes == (1, 4)
