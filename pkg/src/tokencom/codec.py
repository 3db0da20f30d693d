"""Token id <-> bit vector <-> symbol-group arithmetic.

Defines the packet layout every other module relies on: each token id in
[0, V) serializes to a fixed-width MSB-first bit vector of ceil(log2 V)
bits, which is chopped into m-bit groups (the last group zero-padded on
the right) for symbol mapping.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SUPPORTED_BITS_PER_SYMBOL = (2, 4)


class NonVocabularyBitsError(ValueError):
    """A bit pattern decoded to an integer outside the vocabulary.

    V need not be a power of two, so some bit patterns are dead codes
    (e.g. 2^15 - 30522 = 2246 of them for a 30522-token vocabulary).
    Detection over [0, V) never produces these; seeing one means the
    caller fed raw, unvalidated bits.
    """

    def __init__(self, value: int, vocab_size: int):
        super().__init__(
            f"bit pattern decodes to {value}, outside vocabulary of size {vocab_size}"
        )
        self.value = value
        self.vocab_size = vocab_size


@dataclass(frozen=True)
class Vocabulary:
    """Token id space of size `size`, each id encoded in ceil(log2 size) bits.

    mask_token_id is the id reserved for [MASK] by an external model's
    tokenizer; synthetic vocabularies reserve none and leave it None.
    """

    size: int
    mask_token_id: int | None = None
    pad_token_id: int | None = None

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"vocabulary size must be >= 2, got {self.size}")
        if self.mask_token_id is not None and not 0 <= self.mask_token_id < self.size:
            raise ValueError(
                f"mask_token_id {self.mask_token_id} not in [0, {self.size})"
            )
        if self.pad_token_id is not None and not 0 <= self.pad_token_id < self.size:
            raise ValueError(
                f"pad_token_id {self.pad_token_id} not in [0, {self.size})"
            )

    @property
    def bits_per_token(self) -> int:
        return (self.size - 1).bit_length()


def token_to_bits(token_id: int, vocab: Vocabulary) -> np.ndarray:
    """MSB-first binary expansion of a token id, zero-extended on the left."""
    if not 0 <= token_id < vocab.size:
        raise ValueError(f"token id {token_id} not in [0, {vocab.size})")
    width = vocab.bits_per_token
    shifts = np.arange(width - 1, -1, -1)
    return ((int(token_id) >> shifts) & 1).astype(np.uint8)


def bits_to_token(bits: np.ndarray, vocab: Vocabulary) -> int:
    """Integer value of an MSB-first bit vector; rejects non-vocabulary patterns."""
    bits = np.asarray(bits)
    width = vocab.bits_per_token
    if bits.shape != (width,):
        raise ValueError(f"expected {width} bits, got shape {bits.shape}")
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    if value >= vocab.size:
        raise NonVocabularyBitsError(value, vocab.size)
    return value


def pack_bits_to_symbol_groups(bits: np.ndarray, m: int) -> np.ndarray:
    """Chop one token's bit vector into ceil(width/m) groups of m bits.

    The final group is right-padded with 0-bits when width % m != 0. Pad
    bits occupy symbol capacity and are identical for every token, so
    they cancel in likelihood comparisons but are transmitted.
    """
    if m not in SUPPORTED_BITS_PER_SYMBOL:
        raise ValueError(f"bits per symbol must be one of {SUPPORTED_BITS_PER_SYMBOL}")
    bits = np.asarray(bits, dtype=np.uint8)
    n_groups = -(-bits.size // m)
    padded = np.zeros(n_groups * m, dtype=np.uint8)
    padded[: bits.size] = bits
    return padded.reshape(n_groups, m)


def symbols_per_token(vocab: Vocabulary, m: int) -> int:
    """Number of m-bit symbol groups per token: ceil(ceil(log2 V)/m)."""
    if m not in SUPPORTED_BITS_PER_SYMBOL:
        raise ValueError(f"bits per symbol must be one of {SUPPORTED_BITS_PER_SYMBOL}")
    return -(-vocab.bits_per_token // m)


@lru_cache(maxsize=8)
def _symbol_matrix_cached(vocab_size: int, bits_per_token: int, m: int) -> np.ndarray:
    k = -(-bits_per_token // m)
    padded_width = k * m
    ids = np.arange(vocab_size, dtype=np.int64)
    # Pad bits sit at the tail, i.e. in the low bits of the padded word.
    word = ids << (padded_width - bits_per_token)
    shifts = (np.arange(k - 1, -1, -1) * m)[None, :]
    groups = (word[:, None] >> shifts) & ((1 << m) - 1)
    if np.unique(groups, axis=0).shape[0] != vocab_size:
        raise AssertionError("token -> symbol-group encoding is not injective")
    groups.setflags(write=False)
    return groups


def token_symbol_matrix(vocab: Vocabulary, m: int) -> np.ndarray:
    """(V, K) matrix of symbol labels: row v is token v's K group values.

    All V rows are distinct (pads are fixed, ids are distinct); asserted
    at construction. Cached per (V, m).
    """
    if m not in SUPPORTED_BITS_PER_SYMBOL:
        raise ValueError(f"bits per symbol must be one of {SUPPORTED_BITS_PER_SYMBOL}")
    return _symbol_matrix_cached(vocab.size, vocab.bits_per_token, m)
