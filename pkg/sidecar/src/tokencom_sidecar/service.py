"""HTTP service exposing a masked language model to the link simulator.

Endpoints (versioned under /v1):

- POST /v1/mlm        NDJSON batch of {"v", "ids", "positions", "top_k"};
                      one response line per request line, in order. Masked
                      positions hold the tokenizer's mask id. Responses are
                      log-softmax distributions, full-vocabulary (base64
                      float32) or top-k with a residual log-mass.
- POST /v1/tokenize   {"text"} -> {"ids"}
- POST /v1/detokenize {"ids"} -> {"text"}
- POST /v1/embed_sim  {"text_a", "text_b"} -> {"sim"} (sentence-embedding cosine)
- GET  /v1/health     model identities, vocab size, mask id

Model loading happens at startup from local snapshot directories; a load
failure kills the process before it ever accepts a request.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .payload import encode_log_probs

PROTOCOL_VERSION = 1

ENV_PORT = "SIDECAR_PORT"
ENV_MLM_DIR = "SIDECAR_MLM_DIR"
ENV_EMBED_DIR = "SIDECAR_EMBED_DIR"
ENV_DEVICE = "SIDECAR_DEVICE"


class ProtocolError(ValueError):
    """Client-side mistake: malformed or out-of-contract request (4xx)."""


@dataclass
class SidecarSettings:
    mlm_dir: str
    embed_dir: str | None = None
    device: str = "cpu"
    max_batch_lines: int = 1024

    @classmethod
    def from_env(cls) -> "SidecarSettings":
        mlm_dir = os.environ.get(ENV_MLM_DIR)
        if not mlm_dir:
            raise RuntimeError(f"{ENV_MLM_DIR} must point at a model snapshot directory")
        return cls(
            mlm_dir=mlm_dir,
            embed_dir=os.environ.get(ENV_EMBED_DIR) or None,
            device=os.environ.get(ENV_DEVICE, "cpu"),
        )


class ModelRuntime:
    """Loaded models plus the inference paths behind every endpoint."""

    def __init__(self, settings: SidecarSettings):
        from transformers import AutoModelForMaskedLM, AutoTokenizer

        self.settings = settings
        mlm_dir = str(Path(settings.mlm_dir).resolve())
        if not Path(mlm_dir).is_dir():
            raise RuntimeError(f"model snapshot directory not found: {settings.mlm_dir}")
        self.tokenizer = AutoTokenizer.from_pretrained(mlm_dir)
        self.model = AutoModelForMaskedLM.from_pretrained(mlm_dir)
        self.model.eval()
        self.device = torch.device(settings.device)
        self.model.to(self.device)
        self.vocab_size = int(self.model.config.vocab_size)
        if self.tokenizer.mask_token_id is None:
            raise RuntimeError("tokenizer defines no mask token")
        self.mask_token_id = int(self.tokenizer.mask_token_id)
        self.max_len = int(getattr(self.model.config, "max_position_embeddings", 512))
        self.pad_token_id = int(self.tokenizer.pad_token_id or 0)

        self.embedder = None
        if settings.embed_dir:
            from sentence_transformers import SentenceTransformer

            embed_dir = str(Path(settings.embed_dir).resolve())
            if not Path(embed_dir).is_dir():
                raise RuntimeError(
                    f"embedding snapshot directory not found: {settings.embed_dir}"
                )
            self.embedder = SentenceTransformer(embed_dir, device=settings.device)

    # ------------------------------------------------------------------ MLM

    def _validate_request(self, req: dict) -> tuple[list[int], list[int], int]:
        if not isinstance(req, dict):
            raise ProtocolError("each request line must be a JSON object")
        if req.get("v") != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version: {req.get('v')!r}")
        ids = req.get("ids")
        positions = req.get("positions")
        top_k = req.get("top_k", 0)
        if not isinstance(ids, list) or not ids:
            raise ProtocolError("ids must be a non-empty list")
        if not all(isinstance(i, int) and 0 <= i < self.vocab_size for i in ids):
            raise ProtocolError("ids must be integers in [0, vocab_size)")
        if len(ids) > self.max_len:
            raise ProtocolError(
                f"sequence length {len(ids)} exceeds model context limit {self.max_len}"
            )
        if not isinstance(positions, list) or not positions:
            raise ProtocolError("positions must be a non-empty list")
        if not all(isinstance(p, int) and 0 <= p < len(ids) for p in positions):
            raise ProtocolError("positions must be integers in [0, len(ids))")
        for p in positions:
            if ids[p] != self.mask_token_id:
                raise ProtocolError(f"queried position {p} does not hold the mask id")
        if not isinstance(top_k, int) or top_k < 0 or top_k >= self.vocab_size:
            raise ProtocolError("top_k must be an integer in [0, vocab_size)")
        return ids, positions, top_k

    @torch.no_grad()
    def mlm_batch(self, requests: list[dict]) -> list[dict]:
        parsed = [self._validate_request(req) for req in requests]
        # One padded forward pass per group of lines; attention masks keep
        # padding out of the result.
        max_len = max(len(ids) for ids, _, _ in parsed)
        input_ids = torch.full(
            (len(parsed), max_len), self.pad_token_id, dtype=torch.long
        )
        attention = torch.zeros((len(parsed), max_len), dtype=torch.long)
        for row, (ids, _, _) in enumerate(parsed):
            input_ids[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
            attention[row, : len(ids)] = 1
        logits = self.model(
            input_ids=input_ids.to(self.device), attention_mask=attention.to(self.device)
        ).logits
        log_probs = torch.log_softmax(logits.double(), dim=-1).cpu().numpy()

        responses = []
        for row, (_, positions, top_k) in enumerate(parsed):
            rows = log_probs[row, positions]
            if top_k == 0:
                responses.append(
                    {
                        "v": PROTOCOL_VERSION,
                        "mode": "full",
                        "vocab_size": self.vocab_size,
                        "positions": positions,
                        "log_probs": [encode_log_probs(r) for r in rows],
                    }
                )
            else:
                entries = []
                for r in rows:
                    order = np.argsort(r)[::-1][:top_k]
                    top_mass = float(np.exp(r[order]).sum())
                    residual = float(np.log(max(1.0 - top_mass, 1e-300)))
                    entries.append(
                        {
                            "ids": [int(i) for i in order],
                            "log_probs": [float(r[i]) for i in order],
                            "residual_log_mass": residual,
                        }
                    )
                responses.append(
                    {
                        "v": PROTOCOL_VERSION,
                        "mode": "top_k",
                        "vocab_size": self.vocab_size,
                        "positions": positions,
                        "entries": entries,
                    }
                )
        return responses

    # ------------------------------------------------------------ text paths

    def tokenize(self, text: str) -> list[int]:
        return [int(i) for i in self.tokenizer.encode(text, add_special_tokens=False)]

    def detokenize(self, ids: list[int]) -> str:
        if not all(isinstance(i, int) and 0 <= i < self.vocab_size for i in ids):
            raise ProtocolError("ids must be integers in [0, vocab_size)")
        return self.tokenizer.decode(ids, skip_special_tokens=False)

    def embed_sim(self, text_a: str, text_b: str) -> float:
        if self.embedder is None:
            raise RuntimeError("no embedding model configured")
        if not text_a or not text_b:
            raise ProtocolError("embed_sim requires two non-empty texts")
        vecs = self.embedder.encode([text_a, text_b], convert_to_numpy=True)
        a, b = vecs[0].astype(np.float64), vecs[1].astype(np.float64)
        denom = float(np.linalg.norm(a) * np.linalg.norm(b))
        if denom == 0.0:
            return 0.0
        return float(np.clip(np.dot(a, b) / denom, -1.0, 1.0))


class TokenizeBody(BaseModel):
    text: str
    v: int = PROTOCOL_VERSION


class DetokenizeBody(BaseModel):
    ids: list[int]
    v: int = PROTOCOL_VERSION


class EmbedSimBody(BaseModel):
    text_a: str
    text_b: str
    v: int = PROTOCOL_VERSION


def create_app(runtime: ModelRuntime) -> FastAPI:
    app = FastAPI(title="tokencom-sidecar")

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse({"error": message}, status_code=status)

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "vocab_size": runtime.vocab_size,
            "mask_token_id": runtime.mask_token_id,
            "max_len": runtime.max_len,
            "mlm_model": str(runtime.settings.mlm_dir),
            "embed_model": str(runtime.settings.embed_dir or ""),
        }

    @app.post("/v1/mlm")
    async def mlm(request: Request):
        body = (await request.body()).decode("utf-8")
        lines = [ln for ln in body.splitlines() if ln.strip()]
        if not lines:
            return error(400, "empty request body")
        if len(lines) > runtime.settings.max_batch_lines:
            return error(400, f"batch exceeds {runtime.settings.max_batch_lines} lines")
        try:
            reqs = [json.loads(ln) for ln in lines]
        except ValueError as exc:
            return error(400, f"malformed JSON line: {exc}")
        try:
            responses = runtime.mlm_batch(reqs)
        except ProtocolError as exc:
            return error(400, str(exc))
        payload = "\n".join(json.dumps(r) for r in responses) + "\n"
        return PlainTextResponse(payload, media_type="application/x-ndjson")

    @app.post("/v1/tokenize")
    def tokenize(body: TokenizeBody):
        return {"v": PROTOCOL_VERSION, "ids": runtime.tokenize(body.text)}

    @app.post("/v1/detokenize")
    def detokenize(body: DetokenizeBody):
        try:
            return {"v": PROTOCOL_VERSION, "text": runtime.detokenize(body.ids)}
        except ProtocolError as exc:
            return error(400, str(exc))

    @app.post("/v1/embed_sim")
    def embed_sim(body: EmbedSimBody):
        try:
            return {"v": PROTOCOL_VERSION, "sim": runtime.embed_sim(body.text_a, body.text_b)}
        except ProtocolError as exc:
            return error(400, str(exc))
        except RuntimeError as exc:
            return error(503, str(exc))

    return app
