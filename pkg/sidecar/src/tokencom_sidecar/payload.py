"""Binary payload helpers for full-vocabulary probability vectors.

Full-vocab log-probabilities (30522 floats for BERT-base) travel as
base64-encoded little-endian float32 rather than JSON numbers.
"""

from __future__ import annotations

import base64

import numpy as np


def encode_log_probs(log_probs: np.ndarray) -> str:
    return base64.b64encode(np.asarray(log_probs, dtype="<f4").tobytes()).decode("ascii")


def decode_log_probs(payload: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(payload.encode("ascii")), dtype="<f4").astype(
        np.float64
    )
