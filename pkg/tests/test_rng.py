import numpy as np
import pytest

from src.utils.rng import RngStream


def test_same_address_same_draws():
    a = RngStream(7, (0, 3)).generator.random(5)
    b = RngStream.replicate(7, 3).generator.random(5)
    assert np.array_equal(a, b)


def test_children_are_distinct():
    parent = RngStream.root(7)
    draws = {tuple(parent.spawn(i).generator.random(3)) for i in range(50)}
    assert len(draws) == 50
    assert not np.array_equal(parent.generator.random(3), parent.spawn(0).generator.random(3))


def test_namespaces_do_not_collide():
    streams = [RngStream.replicate(1, 0), RngStream.series(1), RngStream.dsmc(1), RngStream.checks(1), RngStream.compare(1)]
    assert len({s.stream_id for s in streams}) == len(streams)


def test_stream_id_and_repr():
    stream = RngStream.replicate(42, 9).spawn(2)
    assert stream.stream_id == "42:0/9/2"
    assert "42:0/9/2" in repr(stream)


def test_derived_seed_is_stable():
    assert RngStream.checks(5).derived_seed() == RngStream.checks(5).derived_seed()
    assert 0 <= RngStream.checks(5).derived_seed() < 2**63


def test_negative_index_rejected():
    with pytest.raises(ValueError):
        RngStream.root(1).spawn(-1)


def test_hashable():
    assert len({RngStream(1, (2,)), RngStream(1, (2,)), RngStream(1, (3,))}) == 2
