#!/usr/bin/env python3
"""Record contract fixtures against the pinned tiny snapshot.

Captures canonical request/response pairs for every endpoint into
sidecar/contract_fixtures/fixtures.json, tagged with the snapshot lock
hash. Both the simulator's client tests and the sidecar's server tests
replay these; regenerate only when model.lock changes.

    python sidecar/scripts/make_fixtures.py
"""

import hashlib
import json
import sys
from pathlib import Path

SIDECAR_ROOT = Path(__file__).resolve().parents[1]


def main():
    from fastapi.testclient import TestClient

    from tokencom_sidecar import ModelRuntime, SidecarSettings, create_app

    snapshot = SIDECAR_ROOT / "tests" / "tiny_snapshot"
    lock_path = snapshot / "model.lock"
    if not lock_path.exists():
        sys.exit("tiny snapshot missing; run make_tiny_snapshot.py first")
    lock_sha = hashlib.sha256(lock_path.read_bytes()).hexdigest()

    runtime = ModelRuntime(
        SidecarSettings(mlm_dir=str(snapshot / "mlm"), embed_dir=str(snapshot / "embed"))
    )
    client = TestClient(create_app(runtime))
    mask = runtime.mask_token_id

    texts = [
        "the cat sat on the mat",
        "a dog ran fast",
        "the sun was big and red",
    ]
    mlm_cases = []
    for text, positions, top_k in (
        (texts[0], [1], 0),
        (texts[1], [0, 2], 0),
        (texts[2], [3], 5),
    ):
        ids = runtime.tokenize(text)
        wire = list(ids)
        for p in positions:
            wire[p] = mask
        request = {"v": 1, "ids": wire, "positions": positions, "top_k": top_k}
        resp = client.post(
            "/v1/mlm",
            content=json.dumps(request) + "\n",
            headers={"Content-Type": "application/x-ndjson"},
        )
        assert resp.status_code == 200, resp.text
        response = json.loads(resp.text.splitlines()[0])
        mlm_cases.append({"request": request, "response": response})

    tokenize_cases = [{"text": t, "ids": runtime.tokenize(t)} for t in texts + [""]]
    detok_cases = [
        {"ids": runtime.tokenize(t), "text": runtime.detokenize(runtime.tokenize(t))}
        for t in texts
    ]
    embed_cases = []
    for a, b in ((texts[0], texts[0]), (texts[0], texts[1])):
        sim = client.post("/v1/embed_sim", json={"text_a": a, "text_b": b}).json()["sim"]
        embed_cases.append({"text_a": a, "text_b": b, "sim": sim})

    health = client.get("/v1/health").json()
    fixtures = {
        "protocol": 1,
        "snapshot_lock_sha256": lock_sha,
        "vocab_size": health["vocab_size"],
        "mask_token_id": health["mask_token_id"],
        "mlm": mlm_cases,
        "tokenize": tokenize_cases,
        "detokenize": detok_cases,
        "embed_sim": embed_cases,
    }
    out = SIDECAR_ROOT / "contract_fixtures" / "fixtures.json"
    out.parent.mkdir(exist_ok=True)
    out.write_text(json.dumps(fixtures, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out} ({len(mlm_cases)} mlm cases)")


if __name__ == "__main__":
    main()
