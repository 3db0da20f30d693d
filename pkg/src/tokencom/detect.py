"""Receiver-side token detection: per-position ML and iterative MAP.

The iterative rule refines a working estimate w_hat by combining the
channel likelihood with a contextual prior conditioned on the previous
iteration's estimate:

    w_hat_i(l) = argmax_v  log P(y_i | v) + log P(v | w_hat_without_i(l-1))

Iteration 1 uses a uniform prior (no context yet): unmasked positions
take the per-position likelihood argmax and transmitter-masked positions
hold the MASK marker with a uniform likelihood row. From iteration 2 on,
every position queries the context model with itself masked out of the
frozen previous estimate (a Jacobi update) and no MASK markers remain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import LogLikTable
from .priors import MASK, ContextModel, PriorTransportError, mask_sequence


@dataclass(frozen=True)
class IterationRecord:
    """One iteration's estimate and winning per-position log-scores.

    Scores are likelihood + prior in the log domain, up to a constant
    per position (rows are max-normalized); comparable within a position
    across candidates, not across positions.
    """

    iteration: int
    estimate: np.ndarray
    scores: np.ndarray


@dataclass(frozen=True)
class DetectionState:
    """Final estimate plus the full per-iteration trace."""

    estimate: np.ndarray
    iterations: int
    converged: bool
    trace: tuple[IterationRecord, ...] = field(default_factory=tuple)


class DetectionAborted(RuntimeError):
    """Context-model transport failed mid-run; partial trace preserved."""

    def __init__(self, cause: Exception, partial: DetectionState):
        super().__init__(f"detection aborted after {partial.iterations} iteration(s): {cause}")
        self.partial = partial
        self.__cause__ = cause


def ml_detect(table: LogLikTable) -> np.ndarray:
    """Per-position likelihood argmax; ties broken toward the lowest id."""
    return np.argmax(table.values, axis=1)


def _argmax_rows(scores: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest token id.
    return np.argmax(scores, axis=1)


def detect(
    table: LogLikTable,
    model: ContextModel,
    masked_positions=(),
    max_iters: int = 6,
    sequential: bool = False,
    prior_weight: float = 1.0,
) -> DetectionState:
    """Iterative MAP detection with early stop at a fixed point.

    sequential=False is the Jacobi update (all positions conditioned on
    the same frozen previous estimate); sequential=True is a Gauss-Seidel
    ablation that folds each new decision into the working estimate
    immediately. prior_weight is an out-of-spec experiment knob: an
    exponent applied to the prior, 1.0 meaning the plain product rule.
    """
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    t, v = table.shape
    if model.vocab_size != v:
        raise ValueError(f"model vocab {model.vocab_size} != table vocab {v}")
    masked = sorted({int(p) for p in masked_positions})
    for pos in masked:
        if not 0 <= pos < t:
            raise ValueError(f"masked position {pos} not in [0, {t})")

    log_uniform = -np.log(v)
    estimate = np.argmax(table.values, axis=1)
    scores = table.values[np.arange(t), estimate] + log_uniform
    if masked:
        estimate[masked] = MASK
        scores[masked] = log_uniform
    trace = [IterationRecord(1, estimate.copy(), scores)]

    prev = estimate
    converged = False
    iterations = 1
    for l in range(2, max_iters + 1):
        try:
            if sequential:
                current, scores = _sequential_update(table, model, prev, prior_weight)
            else:
                log_priors = model.predict_leave_one_out(prev, range(t))
                combined = table.values + prior_weight * log_priors
                current = _argmax_rows(combined)
                scores = combined[np.arange(t), current]
        except PriorTransportError as exc:
            raise DetectionAborted(
                exc, DetectionState(prev, iterations, False, tuple(trace))
            ) from exc
        trace.append(IterationRecord(l, current.copy(), scores))
        iterations = l
        if np.array_equal(current, prev):
            converged = True
            prev = current
            break
        prev = current
    return DetectionState(prev, iterations, converged, tuple(trace))


def _sequential_update(
    table: LogLikTable, model: ContextModel, prev: np.ndarray, prior_weight: float
) -> tuple[np.ndarray, np.ndarray]:
    current = prev.copy()
    scores = np.zeros(prev.size)
    for i in range(prev.size):
        seq = mask_sequence(current, [i])
        combined = table.values[i] + prior_weight * model.predict(seq, [i])[0]
        current[i] = int(np.argmax(combined))
        scores[i] = combined[current[i]]
    return current, scores
