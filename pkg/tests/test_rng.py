import numpy as np
import pytest

from amsdigital.rng import RngStream, as_generator


def test_same_identifier_same_draws():
    a = RngStream(3, 1, 2, 4).generator().standard_normal(100)
    b = RngStream(3, 1, 2, 4).generator().standard_normal(100)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("other", [RngStream(3, 1, 2, 5), RngStream(3, 1, 3, 4),
                                   RngStream(3, 2, 2, 4), RngStream(4, 1, 2, 4)])
def test_distinct_identifiers_uncorrelated(other):
    a = RngStream(3, 1, 2, 4).generator().standard_normal(20000)
    b = other.generator().standard_normal(20000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(20000)


def test_with_helpers():
    s = RngStream(1)
    assert s.with_branch(7).key == (1, 0, 0, 7)
    assert s.with_replica(2).with_run(5).key == (1, 5, 2, 0)


def test_negative_identifier_rejected():
    with pytest.raises(ValueError):
        RngStream(1, -1)


def test_as_generator():
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    assert isinstance(as_generator(RngStream(0)), np.random.Generator)
    assert isinstance(as_generator(5), np.random.Generator)
    with pytest.raises(TypeError):
        as_generator("seed")
