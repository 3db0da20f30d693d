"""Contextual prior models over masked token sequences.

A context model answers: given a sequence with some positions masked,
what is the categorical distribution over the vocabulary at a masked
position? Three interchangeable implementations exist:

- UniformModel: 1/V everywhere (no context).
- BigramModel: forward x backward Laplace-smoothed bigram product, a
  desk-scale stand-in that makes detection and masking testable without
  a transformer.
- ExternalModel (sidecar_client): a remote masked-language-model service.

Masked positions are marked with the sentinel MASK (-1) so they can never
collide with a real token id. All models return log-probabilities floored
at 1e-12 and renormalized: a finite-sample zero must not be allowed to
veto channel evidence irreversibly.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.special import logsumexp

MASK = -1

PROB_FLOOR = 1e-12


class PriorError(RuntimeError):
    pass


class PriorTransportError(PriorError):
    """The external model could not be reached (after retries)."""


class PriorProtocolError(PriorError):
    """The external model answered with a malformed or invalid response."""


def mask_sequence(ids: np.ndarray, positions) -> np.ndarray:
    """Replace the given positions with MASK; the empty set is the identity."""
    out = np.array(ids, dtype=np.int64, copy=True)
    for pos in positions:
        if not 0 <= pos < out.size:
            raise ValueError(f"mask position {pos} not in [0, {out.size})")
        out[pos] = MASK
    return out


def finalize_log_probs(log_probs: np.ndarray) -> np.ndarray:
    """Normalize, clamp probabilities below PROB_FLOOR, renormalize."""
    log_probs = log_probs - logsumexp(log_probs, axis=-1, keepdims=True)
    probs = np.maximum(np.exp(log_probs), PROB_FLOOR)
    probs /= probs.sum(axis=-1, keepdims=True)
    return np.log(probs)


class ContextModel(ABC):
    """Categorical prior over the vocabulary at masked positions."""

    def __init__(self, vocab_size: int):
        if vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {vocab_size}")
        self.vocab_size = vocab_size

    @abstractmethod
    def _log_probs(self, seq: np.ndarray, positions: np.ndarray) -> np.ndarray:
        """Unnormalized (len(positions), V) log-probabilities."""

    def _validate_seq(self, seq: np.ndarray):
        if seq.size and (seq.min() < MASK or seq.max() >= self.vocab_size):
            raise ValueError("sequence entries must be MASK or ids in [0, vocab_size)")

    def predict(self, seq: np.ndarray, positions: Sequence[int]) -> np.ndarray:
        """(len(positions), V) log-probabilities; every queried position must be MASK."""
        seq = np.asarray(seq, dtype=np.int64)
        self._validate_seq(seq)
        positions = np.asarray(positions, dtype=np.int64)
        for pos in positions:
            if not 0 <= pos < seq.size:
                raise ValueError(f"queried position {pos} not in [0, {seq.size})")
            if seq[pos] != MASK:
                raise ValueError(f"queried position {pos} is not masked")
        if positions.size == 0:
            return np.zeros((0, self.vocab_size))
        return finalize_log_probs(self._log_probs(seq, positions))

    def predict_many(self, queries: Sequence[tuple[np.ndarray, int]]) -> np.ndarray:
        """Batched single-position queries: one (seq, position) pair per row.

        Each pair is an independent model input; implementations may
        batch them into one transport call or one vectorized pass.
        """
        if not queries:
            return np.zeros((0, self.vocab_size))
        return np.vstack([self.predict(seq, [pos]) for seq, pos in queries])

    def predict_leave_one_out(self, seq: np.ndarray, positions) -> np.ndarray:
        """For each position i: the prediction at i with i additionally masked.

        Equivalent to predict_many over leave_one_out_queries(seq, positions);
        implementations may shortcut the sequence copies.
        """
        return self.predict_many(leave_one_out_queries(seq, positions))


def leave_one_out_queries(seq: np.ndarray, positions) -> list[tuple[np.ndarray, int]]:
    """For each position i, the input with i (additionally) masked."""
    seq = np.asarray(seq, dtype=np.int64)
    return [(mask_sequence(seq, [int(i)]), int(i)) for i in positions]


class UniformModel(ContextModel):
    """1/V regardless of context."""

    def _log_probs(self, seq, positions):
        return np.zeros((positions.size, self.vocab_size))

    def predict_leave_one_out(self, seq, positions):
        positions = np.asarray(list(positions), dtype=np.int64)
        seq = np.asarray(seq)
        if positions.size and (positions.min() < 0 or positions.max() >= seq.size):
            raise ValueError("leave-one-out position out of range")
        return np.full((positions.size, self.vocab_size), -np.log(self.vocab_size))


class BigramModel(ContextModel):
    """Forward x backward bigram with Laplace-alpha smoothing.

    predict at position i combines P(w_i | w_{i-1}) and P(w_i | w_{i+1})
    by normalized product, skipping MASK or out-of-range neighbors; with
    both neighbors unavailable the prediction is uniform.
    """

    # Below this size the smoothed log tables are precomputed densely
    # (two V x V float64 arrays); above it rows are built from sparse
    # counts on demand.
    DENSE_LIMIT = 1024

    def __init__(self, counts: sparse.spmatrix, alpha: float):
        if alpha <= 0:
            raise ValueError(f"smoothing alpha must be > 0, got {alpha}")
        vocab_size = counts.shape[0]
        super().__init__(vocab_size)
        self.alpha = float(alpha)
        self._csr = counts.tocsr()
        self._csc = counts.tocsc()
        self._row_sums = np.asarray(self._csr.sum(axis=1)).ravel()
        self._col_sums = np.asarray(self._csr.sum(axis=0)).ravel()
        self._dense_fwd = None
        self._dense_bwd = None
        if vocab_size <= self.DENSE_LIMIT:
            dense = self._csr.toarray().astype(np.float64)
            fwd_denom = self._row_sums + self.alpha * vocab_size
            bwd_denom = self._col_sums + self.alpha * vocab_size
            self._dense_fwd = np.log(dense + self.alpha) - np.log(fwd_denom)[:, None]
            self._dense_bwd = (np.log(dense + self.alpha) - np.log(bwd_denom)[None, :]).T

    def _forward_rows(self, prev_ids: np.ndarray) -> np.ndarray:
        if self._dense_fwd is not None:
            return self._dense_fwd[prev_ids]
        counts = self._csr[prev_ids].toarray()
        denom = self._row_sums[prev_ids] + self.alpha * self.vocab_size
        return np.log(counts + self.alpha) - np.log(denom)[:, None]

    def _backward_rows(self, next_ids: np.ndarray) -> np.ndarray:
        if self._dense_bwd is not None:
            return self._dense_bwd[next_ids]
        counts = self._csc[:, next_ids].toarray().T
        denom = self._col_sums[next_ids] + self.alpha * self.vocab_size
        return np.log(counts + self.alpha) - np.log(denom)[:, None]

    def _pair_log_probs(self, prev_ids: np.ndarray, next_ids: np.ndarray) -> np.ndarray:
        out = np.zeros((prev_ids.size, self.vocab_size))
        has_prev = prev_ids >= 0
        if has_prev.any():
            out[has_prev] += self._forward_rows(prev_ids[has_prev])
        has_next = next_ids >= 0
        if has_next.any():
            out[has_next] += self._backward_rows(next_ids[has_next])
        return out

    @staticmethod
    def _neighbors(seq: np.ndarray, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # Out-of-range and MASK neighbors collapse to -1 (absent).
        prev = np.where(positions > 0, seq[np.maximum(positions - 1, 0)], MASK)
        nxt = np.where(positions < seq.size - 1, seq[np.minimum(positions + 1, seq.size - 1)], MASK)
        return prev, nxt

    def _log_probs(self, seq, positions):
        prev, nxt = self._neighbors(seq, positions)
        return self._pair_log_probs(prev, nxt)

    def predict_many(self, queries):
        if not queries:
            return np.zeros((0, self.vocab_size))
        prevs = np.empty(len(queries), dtype=np.int64)
        nxts = np.empty(len(queries), dtype=np.int64)
        for row, (seq, pos) in enumerate(queries):
            seq = np.asarray(seq, dtype=np.int64)
            self._validate_seq(seq)
            if not 0 <= pos < seq.size:
                raise ValueError(f"queried position {pos} not in [0, {seq.size})")
            if seq[pos] != MASK:
                raise ValueError(f"queried position {pos} is not masked")
            p, n = self._neighbors(seq, np.array([pos]))
            prevs[row], nxts[row] = p[0], n[0]
        return finalize_log_probs(self._pair_log_probs(prevs, nxts))

    def predict_leave_one_out(self, seq, positions):
        # Masking position i never changes its own neighbors, so the
        # leave-one-out inputs need not be materialized.
        seq = np.asarray(seq, dtype=np.int64)
        self._validate_seq(seq)
        positions = np.asarray(list(positions), dtype=np.int64)
        if positions.size == 0:
            return np.zeros((0, self.vocab_size))
        if positions.min() < 0 or positions.max() >= seq.size:
            raise ValueError("leave-one-out position out of range")
        prev, nxt = self._neighbors(seq, positions)
        return finalize_log_probs(self._pair_log_probs(prev, nxt))


def train_ngram(
    corpus: Sequence[np.ndarray],
    vocab_size: int,
    order: int = 2,
    alpha: float = 1.0,
) -> BigramModel:
    """Count adjacent pairs within each corpus sequence, Laplace-smoothed."""
    if order != 2:
        raise ValueError(f"only order-2 (bigram) models are supported, got {order}")
    if alpha <= 0:
        raise ValueError(f"smoothing alpha must be > 0, got {alpha}")
    sequences = [np.asarray(s, dtype=np.int64) for s in corpus]
    if not sequences or all(s.size == 0 for s in sequences):
        raise ValueError("corpus is empty")
    rows, cols = [], []
    for s in sequences:
        if s.size and (s.min() < 0 or s.max() >= vocab_size):
            raise ValueError("corpus contains ids outside [0, vocab_size)")
        rows.append(s[:-1])
        cols.append(s[1:])
    rows = np.concatenate(rows) if rows else np.array([], dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.array([], dtype=np.int64)
    counts = sparse.coo_matrix(
        (np.ones(rows.size), (rows, cols)), shape=(vocab_size, vocab_size)
    )
    return BigramModel(counts, alpha=alpha)
