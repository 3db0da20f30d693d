"""Transmitter-side rate adaptation by masking predictable tokens.

The greedy strategy spends a budget of floor(T*r) masks one at a time:
at each step it evaluates, for every still-unmasked position, the
context model's distribution with that position additionally masked,
scores it by Shannon entropy in bits, and masks the argmin (lowest
index on ties). Masking cost is O(T^2 r) model queries; each step's
candidates travel as one batched call.

The random baseline draws the same budget uniformly without replacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .priors import MASK, ContextModel


@dataclass(frozen=True)
class EntropyRecord:
    """One candidate's entropy at one greedy step (1-based step index)."""

    step: int
    position: int
    entropy_bits: float
    chosen: bool


@dataclass(frozen=True)
class MaskSet:
    """Masked positions with the order they were picked in.

    entropy_records holds every candidate evaluation of every greedy
    step, enough to replay and audit each argmin decision.
    """

    positions: frozenset[int]
    ratio: float
    selection_order: tuple[int, ...]
    entropy_records: tuple[EntropyRecord, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(set(self.selection_order)) != len(self.selection_order):
            raise ValueError("selection_order contains duplicates")
        if set(self.selection_order) != set(self.positions):
            raise ValueError("selection_order inconsistent with positions")


def mask_budget(packet_len: int, ratio: float) -> int:
    """floor(T * r) positions."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"masking ratio must be in [0, 1], got {ratio}")
    return math.floor(packet_len * ratio)


def entropy_bits(log_probs: np.ndarray) -> np.ndarray | float:
    """Shannon entropy in bits of a categorical given as log-probs; 0*log0 = 0."""
    log_probs = np.asarray(log_probs)
    probs = np.exp(log_probs)
    terms = np.where(probs > 0.0, probs * log_probs, 0.0)
    h = -terms.sum(axis=-1) / math.log(2.0)
    return float(h) if h.ndim == 0 else h


def context_aware_mask(
    seq: np.ndarray,
    ratio: float,
    model: ContextModel,
    one_shot: bool = False,
) -> MaskSet:
    """Greedily mask the floor(T*r) most predictable positions.

    one_shot=True is a cheaper ablation: rank all positions once by
    entropy on the unmasked sequence and take the lowest floor(T*r);
    its records all carry step 1 and are not a greedy audit trail.
    """
    seq = np.asarray(seq, dtype=np.int64)
    budget = mask_budget(seq.size, ratio)
    if budget == 0:
        return MaskSet(frozenset(), ratio, ())
    if one_shot:
        return _one_shot_mask(seq, ratio, budget, model)

    working = seq.copy()
    chosen: list[int] = []
    records: list[EntropyRecord] = []
    for step in range(1, budget + 1):
        candidates = [i for i in range(seq.size) if working[i] != MASK]
        log_priors = model.predict_leave_one_out(working, candidates)
        entropies = entropy_bits(log_priors)
        best = candidates[int(np.argmin(entropies))]
        records.extend(
            EntropyRecord(step, pos, float(h), pos == best)
            for pos, h in zip(candidates, entropies)
        )
        chosen.append(best)
        working[best] = MASK
    return MaskSet(frozenset(chosen), ratio, tuple(chosen), tuple(records))


def _one_shot_mask(seq: np.ndarray, ratio: float, budget: int, model: ContextModel) -> MaskSet:
    candidates = list(range(seq.size))
    log_priors = model.predict_leave_one_out(seq, candidates)
    entropies = entropy_bits(log_priors)
    order = sorted(candidates, key=lambda i: (entropies[i], i))[:budget]
    records = tuple(
        EntropyRecord(1, pos, float(entropies[pos]), pos in set(order))
        for pos in candidates
    )
    return MaskSet(frozenset(order), ratio, tuple(order), records)


def random_mask(seq: np.ndarray, ratio: float, rng: np.random.Generator) -> MaskSet:
    """floor(T*r) positions drawn uniformly without replacement."""
    seq = np.asarray(seq)
    budget = mask_budget(seq.size, ratio)
    drawn = rng.choice(seq.size, size=budget, replace=False)
    return MaskSet(frozenset(int(i) for i in drawn), ratio, tuple(int(i) for i in drawn))


def audit_greedy_records(mask_set: MaskSet) -> bool:
    """Replay EntropyRecords: every chosen pick must be a tie-lowest argmin."""
    by_step: dict[int, list[EntropyRecord]] = {}
    for rec in mask_set.entropy_records:
        by_step.setdefault(rec.step, []).append(rec)
    for step, recs in sorted(by_step.items()):
        chosen = [r for r in recs if r.chosen]
        if len(chosen) != 1:
            return False
        best = chosen[0]
        for r in recs:
            if r.entropy_bits < best.entropy_bits:
                return False
            if r.entropy_bits == best.entropy_bits and r.position < best.position:
                return False
    return True
