"""Per-round random streams keyed by ``(seed, round index)``.

Each round owns one fixed block of eight 64-bit Philox words, so the
variates of round ``i`` do not depend on how many rounds ran before it, on
shard boundaries, or on worker count.  Words are assigned to named slots
rather than consumed in call order; the per-round state machine and the
vectorized engine read identical values for identical slots.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WORDS_PER_ROUND = 8
# Philox4x64 emits four words per counter step.
_COUNTER_STEPS_PER_ROUND = WORDS_PER_ROUND // 4

# bit positions in word 0
BIT_ALICE = 0
BIT_BOB = 1
BIT_EVE_BASIS = 2
BIT_EVE_GUESS = 3

# uniform slots (word index)
U_LOSS_AB = 1
U_LOSS_BA = 2
U_WHICH_PATH = 3
U_DETECTOR = 4
U_EVE_ACTION = 5
U_CHECK = 6

_INV_2_53 = 2.0 ** -53
MAX_SEED = 2**64 - 1


def round_words(seed: int, start: int, count: int) -> np.ndarray:
    """Raw words for rounds ``start .. start+count-1`` as a ``(count, 8)`` array."""
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    bitgen = np.random.Philox(key=seed, counter=start * _COUNTER_STEPS_PER_ROUND)
    return bitgen.random_raw(count * WORDS_PER_ROUND).reshape(count, WORDS_PER_ROUND)


def to_uniform(words: np.ndarray) -> np.ndarray:
    """Map 64-bit words to doubles in ``[0, 1)`` using the top 53 bits."""
    return (words >> np.uint64(11)).astype(np.float64) * _INV_2_53


def take_bit(words: np.ndarray, position: int) -> np.ndarray:
    return ((words >> np.uint64(position)) & np.uint64(1)).astype(np.int8)


@dataclass(frozen=True)
class RoundStream:
    """Random variates of a single round."""

    index: int
    words: tuple[int, ...]

    @classmethod
    def for_round(cls, seed: int, index: int) -> "RoundStream":
        return cls.from_words(index, round_words(seed, index, 1)[0])

    @classmethod
    def from_words(cls, index: int, row: np.ndarray) -> "RoundStream":
        return cls(index, tuple(int(w) for w in row))

    def bit(self, position: int) -> int:
        return (self.words[0] >> position) & 1

    def uniform(self, slot: int) -> float:
        return (self.words[slot] >> 11) * _INV_2_53


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 64-bit seed for a sub-experiment identified by ``keys``."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1, np.uint64)[0])
