import numpy as np
import pytest

from tdcd import rng


def test_keys_differ_by_tag_and_index():
    keys = {rng.stream_key(1, t, i) for t in ("minibatch", "shard", "init") for i in range(50)}
    assert len(keys) == 150


def test_full_64_bit_key_reaches_the_generator():
    key = rng.stream_key(3, "minibatch", 0)
    state = rng.bit_generator(3, "minibatch", 0).state["state"]["key"]
    assert [int(k) for k in state] == list(key)


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        rng.stream_key(-1, "x")


def test_below_is_uniform():
    ints = rng.IntStream(0, "uniform")
    counts = np.bincount([ints.below(6) for _ in range(60000)], minlength=6)
    assert np.all(np.abs(counts - 10000) < 500)
    with pytest.raises(ValueError):
        ints.below(0)


def test_partial_shuffle_prefix_of_full_shuffle():
    full = rng.partial_shuffle(12, 12, rng.IntStream(4, "p"))
    part = rng.partial_shuffle(12, 5, rng.IntStream(4, "p"))
    assert np.array_equal(full[:5], part)
    assert sorted(rng.permutation(12, 4, "p").tolist()) == list(range(12))
    with pytest.raises(ValueError):
        rng.partial_shuffle(3, 4, rng.IntStream(0, "p"))
