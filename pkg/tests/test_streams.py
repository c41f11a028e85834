"""Counter-based stream keying: reproducibility and independence."""

import numpy as np
import pytest

from spintop.streams import spawn_seeds, substream


def test_same_path_reproduces_sequence():
    a = substream(42, 3, 7).standard_normal(16)
    b = substream(42, 3, 7).standard_normal(16)
    assert np.array_equal(a, b)


def test_distinct_trailing_index_gives_distinct_draws():
    a = substream(42, 3, 7).standard_normal(16)
    b = substream(42, 3, 8).standard_normal(16)
    assert not np.array_equal(a, b)


def test_distinct_prefix_gives_distinct_draws():
    a = substream(0, 1, 5).standard_normal(8)
    b = substream(0, 2, 5).standard_normal(8)
    assert not np.array_equal(a, b)


def test_path_depth_matters():
    # (1,) and (1, 0) are different streams, not aliases
    a = substream(9, 1).standard_normal(8)
    b = substream(9, 1, 0).standard_normal(8)
    assert not np.array_equal(a, b)


def test_draw_order_does_not_leak_between_streams():
    s1 = substream(7, 0)
    _ = s1.standard_normal(1000)
    fresh = substream(7, 1).standard_normal(4)
    again = substream(7, 1).standard_normal(4)
    assert np.array_equal(fresh, again)


def test_negative_master_seed_rejected():
    with pytest.raises(ValueError):
        substream(-1, 0)


def test_negative_path_component_rejected():
    with pytest.raises(ValueError):
        substream(0, 2, -3)


def test_spawn_seeds_matches_substream():
    gens = spawn_seeds(11, 3, 5)
    for i, g in enumerate(gens):
        want = substream(11, 5, i).standard_normal(4)
        assert np.array_equal(g.standard_normal(4), want)
