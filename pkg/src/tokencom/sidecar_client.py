"""HTTP client for the model sidecar and the context model backed by it.

Wire format (versioned under /v1, JSON bodies):

- POST /v1/mlm, NDJSON batch: one request object per line,
  {"v": 1, "ids": [...], "positions": [...], "top_k": 0}, where masked
  positions hold the model's mask token id. One response object per line
  in the same order. Full-vocabulary responses ship log-probabilities as
  base64-encoded little-endian float32 to avoid JSON-number bloat; top-k
  responses carry explicit (ids, log_probs) plus a residual log-mass.
- POST /v1/tokenize {"text": ...} -> {"ids": [...]}
- POST /v1/detokenize {"ids": [...]} -> {"text": ...}
- POST /v1/embed_sim {"text_a": ..., "text_b": ...} -> {"sim": ...}
- GET  /v1/health -> {"status": "ok", "vocab_size": ..., "mask_token_id": ...}

Transport failures (connection errors, timeouts, 5xx) are retried with
backoff and then surface as PriorTransportError; malformed or
non-normalized responses surface as PriorProtocolError immediately.
"""

from __future__ import annotations

import base64
import json
import math
import time
from typing import Sequence

import numpy as np
import requests
from scipy.special import logsumexp

from .priors import (
    MASK,
    ContextModel,
    PriorProtocolError,
    PriorTransportError,
    finalize_log_probs,
)

PROTOCOL_VERSION = 1
NORMALIZATION_TOL = 1e-4


def encode_log_probs(log_probs: np.ndarray) -> str:
    """Length-V float32 little-endian vector as base64 text."""
    return base64.b64encode(np.asarray(log_probs, dtype="<f4").tobytes()).decode("ascii")


def decode_log_probs(payload: str, vocab_size: int) -> np.ndarray:
    try:
        raw = base64.b64decode(payload.encode("ascii"), validate=True)
        vec = np.frombuffer(raw, dtype="<f4")
    except (ValueError, UnicodeEncodeError) as exc:
        raise PriorProtocolError(f"undecodable log-prob payload: {exc}") from exc
    if vec.size != vocab_size:
        raise PriorProtocolError(
            f"log-prob payload has {vec.size} entries, expected {vocab_size}"
        )
    return vec.astype(np.float64)


class SidecarClient:
    """Blocking JSON/NDJSON client with bounded retries."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = session or requests.Session()

    def _request(self, method: str, path: str, *, data=None, headers=None) -> requests.Response:
        url = f"{self.base_url}{path}"
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._session.request(
                    method, url, data=data, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_exc = exc
            else:
                if resp.status_code >= 500:
                    last_exc = PriorTransportError(
                        f"{method} {path} -> {resp.status_code}: {resp.text[:200]}"
                    )
                elif resp.status_code >= 400:
                    raise PriorProtocolError(
                        f"{method} {path} -> {resp.status_code}: {resp.text[:200]}"
                    )
                else:
                    return resp
            if attempt < self.retries:
                time.sleep(min(self.backoff * (2**attempt), 5.0))
        raise PriorTransportError(f"{method} {path} failed after {self.retries + 1} attempts") from last_exc

    def _post_json(self, path: str, payload: dict) -> dict:
        resp = self._request(
            "POST",
            path,
            data=json.dumps(payload),
            headers={"Content-Type": "application/json"},
        )
        try:
            return resp.json()
        except ValueError as exc:
            raise PriorProtocolError(f"{path}: response is not JSON") from exc

    def health(self) -> dict:
        return self._request("GET", "/v1/health").json()

    def mlm_batch(self, batch: Sequence[dict]) -> list[dict]:
        """One NDJSON round trip; responses in request order."""
        body = "\n".join(json.dumps(req) for req in batch) + "\n"
        resp = self._request(
            "POST",
            "/v1/mlm",
            data=body.encode("utf-8"),
            headers={"Content-Type": "application/x-ndjson"},
        )
        lines = [ln for ln in resp.text.splitlines() if ln.strip()]
        if len(lines) != len(batch):
            raise PriorProtocolError(
                f"/v1/mlm: sent {len(batch)} requests, got {len(lines)} responses"
            )
        try:
            return [json.loads(ln) for ln in lines]
        except ValueError as exc:
            raise PriorProtocolError("/v1/mlm: malformed NDJSON response") from exc

    def tokenize(self, text: str) -> list[int]:
        out = self._post_json("/v1/tokenize", {"v": PROTOCOL_VERSION, "text": text})
        if "ids" not in out or not isinstance(out["ids"], list):
            raise PriorProtocolError("/v1/tokenize: missing ids")
        return [int(i) for i in out["ids"]]

    def detokenize(self, ids: Sequence[int]) -> str:
        out = self._post_json(
            "/v1/detokenize", {"v": PROTOCOL_VERSION, "ids": [int(i) for i in ids]}
        )
        if "text" not in out or not isinstance(out["text"], str):
            raise PriorProtocolError("/v1/detokenize: missing text")
        return out["text"]

    def embed_sim(self, text_a: str, text_b: str) -> float:
        out = self._post_json(
            "/v1/embed_sim", {"v": PROTOCOL_VERSION, "text_a": text_a, "text_b": text_b}
        )
        if "sim" not in out:
            raise PriorProtocolError("/v1/embed_sim: missing sim")
        sim = float(out["sim"])
        if not -1.0 - 1e-6 <= sim <= 1.0 + 1e-6:
            raise PriorProtocolError(f"/v1/embed_sim: similarity {sim} outside [-1, 1]")
        return sim


def response_to_log_probs(response: dict, vocab_size: int) -> np.ndarray:
    """(n_positions, V) log-probs from one MLM response; validates normalization."""
    mode = response.get("mode")
    if response.get("vocab_size") != vocab_size:
        raise PriorProtocolError(
            f"server vocab {response.get('vocab_size')} != expected {vocab_size}"
        )
    if mode == "full":
        payloads = response.get("log_probs", [])
        rows = np.stack([decode_log_probs(p, vocab_size) for p in payloads])
    elif mode == "top_k":
        rows_list = []
        for entry in response.get("entries", []):
            ids = np.asarray(entry["ids"], dtype=np.int64)
            lps = np.asarray(entry["log_probs"], dtype=np.float64)
            residual = float(entry["residual_log_mass"])
            if ids.size >= vocab_size or ids.size != lps.size:
                raise PriorProtocolError("malformed top-k entry")
            row = np.full(vocab_size, residual - math.log(vocab_size - ids.size))
            row[ids] = lps
            rows_list.append(row)
        rows = np.stack(rows_list)
    else:
        raise PriorProtocolError(f"unknown MLM response mode: {mode!r}")
    norms = logsumexp(rows, axis=-1)
    if np.any(np.abs(norms) > NORMALIZATION_TOL):
        raise PriorProtocolError(
            f"MLM response not normalized: |logsumexp| up to {np.abs(norms).max():.3g}"
        )
    return rows


class ExternalModel(ContextModel):
    """Contextual prior served by the sidecar's MLM endpoint."""

    def __init__(self, client: SidecarClient, vocab_size: int, mask_token_id: int, top_k: int = 0):
        super().__init__(vocab_size)
        if not 0 <= mask_token_id < vocab_size:
            raise ValueError(f"mask_token_id {mask_token_id} not in [0, {vocab_size})")
        if top_k < 0:
            raise ValueError(f"top_k must be >= 0, got {top_k}")
        self.client = client
        self.mask_token_id = mask_token_id
        self.top_k = top_k

    def _wire_ids(self, seq: np.ndarray) -> list[int]:
        return [self.mask_token_id if t == MASK else int(t) for t in seq]

    def _wire_request(self, seq: np.ndarray, positions: Sequence[int]) -> dict:
        return {
            "v": PROTOCOL_VERSION,
            "ids": self._wire_ids(seq),
            "positions": [int(p) for p in positions],
            "top_k": self.top_k,
        }

    def _log_probs(self, seq, positions):
        responses = self.client.mlm_batch([self._wire_request(seq, list(positions))])
        return response_to_log_probs(responses[0], self.vocab_size)

    def predict_many(self, queries):
        if not queries:
            return np.zeros((0, self.vocab_size))
        batch = []
        for seq, pos in queries:
            seq = np.asarray(seq, dtype=np.int64)
            self._validate_seq(seq)
            if not 0 <= pos < seq.size:
                raise ValueError(f"queried position {pos} not in [0, {seq.size})")
            if seq[pos] != MASK:
                raise ValueError(f"queried position {pos} is not masked")
            batch.append(self._wire_request(seq, [pos]))
        responses = self.client.mlm_batch(batch)
        rows = [response_to_log_probs(r, self.vocab_size)[0] for r in responses]
        return finalize_log_probs(np.stack(rows))
