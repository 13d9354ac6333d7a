import numpy as np
import pytest

from walksieve.rng import chunk_sizes, fresh_seed, replicate, substream


def test_same_key_same_stream():
    a = substream(7, "walk", 3, 1).random(5)
    b = substream(7, "walk", 3, 1).random(5)
    assert np.array_equal(a, b)


def test_distinct_keys_differ():
    draws = {tuple(substream(7, *k).integers(0, 2**62, 4)) for k in [(), ("a",), ("b",), (0,), (1,), ("a", 0), ("a", 1)]}
    assert len(draws) == 7


def test_seed_is_required():
    with pytest.raises(ValueError):
        substream(None)
    with pytest.raises(ValueError):
        substream(-1)
    with pytest.raises(ValueError):
        substream(1, -2)


def test_fresh_seed_is_an_integer():
    s = fresh_seed()
    assert isinstance(s, int) and 0 <= s < 2**64


def test_chunk_sizes():
    assert chunk_sizes(25_000) == [10_000, 10_000, 5_000]
    assert chunk_sizes(0) == []
    assert sum(chunk_sizes(12_345, 1000)) == 12_345


@pytest.mark.parametrize("threads", [2, 3, 8])
def test_replicate_is_thread_invariant(threads):
    fn = lambda r, n: r.standard_exponential(n)
    one = replicate(fn, 35_000, seed=3, key=("x",), threads=1)
    many = replicate(fn, 35_000, seed=3, key=("x",), threads=threads)
    assert one.shape == (35_000,)
    assert np.array_equal(one, many)


def test_replicate_prefix_stable():
    # the first blocks do not depend on how many replicas follow
    fn = lambda r, n: r.random(n)
    assert np.array_equal(replicate(fn, 20_000, 1)[:20_000], replicate(fn, 30_000, 1)[:20_000])
