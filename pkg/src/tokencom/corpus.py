"""Corpus ingestion, packetization, and a synthetic Markov source.

Two on-disk formats are supported: pre-tokenized files (one passage per
line, space-separated decimal token ids) and raw UTF-8 text (one passage
per line) which requires a remote tokenize endpoint. Either way the id
stream is concatenated and chunked into fixed-length packets, dropping
the trailing remainder.

The synthetic source is an order-1 Markov chain where every state has
2^H equally likely successors, giving an exact per-step transition
entropy of H bits. It exists so the whole evaluation pipeline runs with
zero external assets.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class CorpusError(ValueError):
    pass


def generate_markov_corpus(
    vocab_size: int,
    n_tokens: int,
    transition_entropy_bits: float = 2.0,
    seed: int = 0,
) -> np.ndarray:
    """Sample n_tokens from a random chain with ~2^H successors per state."""
    if vocab_size < 2:
        raise ValueError(f"vocab_size must be >= 2, got {vocab_size}")
    if n_tokens < 1:
        raise ValueError(f"n_tokens must be >= 1, got {n_tokens}")
    branch = int(round(2.0**transition_entropy_bits))
    branch = max(1, min(branch, vocab_size))
    rng = np.random.default_rng(seed)
    successors = np.empty((vocab_size, branch), dtype=np.int64)
    for state in range(vocab_size):
        successors[state] = rng.choice(vocab_size, size=branch, replace=False)
    out = np.empty(n_tokens, dtype=np.int64)
    state = int(rng.integers(vocab_size))
    out[0] = state
    picks = rng.integers(branch, size=n_tokens - 1)
    for i in range(1, n_tokens):
        state = successors[state, picks[i - 1]]
        out[i] = state
    return out


def write_token_lines(ids: np.ndarray, path: str | Path, tokens_per_line: int = 128):
    ids = np.asarray(ids)
    with open(path, "w", encoding="utf-8") as fh:
        for start in range(0, ids.size, tokens_per_line):
            fh.write(" ".join(str(int(t)) for t in ids[start : start + tokens_per_line]))
            fh.write("\n")


def _read_pretokenized(path: Path, vocab_size: int) -> np.ndarray:
    chunks = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            try:
                ids = np.array([int(f) for f in fields], dtype=np.int64)
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed token id ({exc})") from exc
            if ids.min() < 0 or ids.max() >= vocab_size:
                bad = ids[(ids < 0) | (ids >= vocab_size)][0]
                raise CorpusError(
                    f"{path}:{lineno}: token id {bad} outside vocabulary of size {vocab_size}"
                )
            chunks.append(ids)
    if not chunks:
        raise CorpusError(f"{path}: no token ids found")
    return np.concatenate(chunks)


def _read_text(path: Path, vocab_size: int, tokenizer) -> np.ndarray:
    chunks = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            ids = np.asarray(tokenizer(text), dtype=np.int64)
            if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
                raise CorpusError(
                    f"{path}:{lineno}: tokenizer produced ids outside vocabulary "
                    f"of size {vocab_size}"
                )
            chunks.append(ids)
    if not chunks or sum(c.size for c in chunks) == 0:
        raise CorpusError(f"{path}: no token ids found")
    return np.concatenate(chunks)


def packetize(ids: np.ndarray, packet_len: int) -> np.ndarray:
    """(N, T) packets from a flat id stream; remainder < T is dropped."""
    ids = np.asarray(ids)
    n_packets = ids.size // packet_len
    if n_packets == 0:
        raise CorpusError(
            f"corpus has {ids.size} ids, fewer than one packet of {packet_len}"
        )
    return ids[: n_packets * packet_len].reshape(n_packets, packet_len).copy()


def load_corpus(
    path: str | Path,
    packet_len: int,
    vocab_size: int,
    tokenizer=None,
) -> np.ndarray:
    """Load packets of exactly packet_len ids.

    tokenizer=None reads the pre-tokenized format; otherwise each line is
    raw text passed through tokenizer(text) -> ids (the sidecar client's
    tokenize endpoint in production).
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    if tokenizer is None:
        stream = _read_pretokenized(path, vocab_size)
    else:
        stream = _read_text(path, vocab_size, tokenizer)
    return packetize(stream, packet_len)
