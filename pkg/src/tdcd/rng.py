"""Keyed counter-based random streams.

Every random draw in the simulator comes from a Philox4x64-10 stream whose
128-bit key is derived from ``(seed, tag, index)``. Two parties that agree on
the seed reproduce the same stream without exchanging anything, which is how
silos agree on each round's mini-batch.

Bounded integers use rejection on raw 64-bit words and shuffles are written
out here, so the integer draws depend only on the Philox bit stream and not on
numpy's ``Generator`` method implementations.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_word(tag: str, index: int) -> int:
    digest = hashlib.blake2b(f"{tag}:{index}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream_key(seed: int, tag: str, index: int = 0) -> tuple[int, int]:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return seed & _MASK64, _tag_word(tag, index)


def bit_generator(seed: int, tag: str, index: int = 0) -> np.random.Philox:
    # an explicit uint64 array: a list of Python ints goes through float64 and drops low bits
    return np.random.Philox(key=np.array(stream_key(seed, tag, index), dtype=np.uint64))


def generator(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Float-valued stream (initialisation, synthetic data)."""
    return np.random.Generator(bit_generator(seed, tag, index))


class IntStream:
    """Unbiased bounded integers from a keyed Philox stream."""

    def __init__(self, seed: int, tag: str, index: int = 0, block: int = 256):
        self._bg = bit_generator(seed, tag, index)
        self._block = block
        self._buf: list[int] = []

    def next_u64(self) -> int:
        if not self._buf:
            self._buf = [int(v) for v in self._bg.random_raw(self._block)][::-1]
        return self._buf.pop()

    def below(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)``."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        # reject the low 2**64 mod bound words so every residue is equally likely
        threshold = (1 << 64) % bound
        while True:
            r = self.next_u64()
            if r >= threshold:
                return r % bound


def partial_shuffle(n: int, k: int, ints: IntStream) -> np.ndarray:
    """First ``k`` entries of a Fisher-Yates shuffle of ``0..n-1``."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    pool = list(range(n))
    for i in range(k):
        j = i + ints.below(n - i)
        pool[i], pool[j] = pool[j], pool[i]
    return np.asarray(pool[:k], dtype=np.int64)


def permutation(n: int, seed: int, tag: str, index: int = 0) -> np.ndarray:
    return partial_shuffle(n, n, IntStream(seed, tag, index))
