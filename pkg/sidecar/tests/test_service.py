import json

import numpy as np
import pytest
from scipy.special import logsumexp

from tokencom_sidecar.payload import decode_log_probs, encode_log_probs


def post_mlm(client, requests):
    body = "\n".join(json.dumps(r) for r in requests) + "\n"
    return client.post(
        "/v1/mlm", content=body, headers={"Content-Type": "application/x-ndjson"}
    )


def mlm_request(runtime, text, positions, top_k=0):
    ids = runtime.tokenize(text)
    wire = list(ids)
    for p in positions:
        wire[p] = runtime.mask_token_id
    return {"v": 1, "ids": wire, "positions": positions, "top_k": top_k}


# -------------------------------------------------------------------- health

def test_health(client, runtime):
    health = client.get("/v1/health").json()
    assert health["status"] == "ok"
    assert health["vocab_size"] == runtime.vocab_size == 64
    assert health["mask_token_id"] == runtime.mask_token_id


# ----------------------------------------------------------------- tokenizer

def test_tokenize_roundtrip_preserves_words(client):
    text = "the cat sat on the mat"
    ids = client.post("/v1/tokenize", json={"text": text}).json()["ids"]
    out = client.post("/v1/detokenize", json={"ids": ids}).json()["text"]
    assert out == text


def test_tokenize_empty_is_empty(client):
    assert client.post("/v1/tokenize", json={"text": ""}).json()["ids"] == []


def test_detokenize_rejects_bad_ids(client):
    resp = client.post("/v1/detokenize", json={"ids": [0, 999]})
    assert resp.status_code == 400
    assert "error" in resp.json()


# ----------------------------------------------------------------------- mlm

def test_mlm_full_vocab_normalized(client, runtime):
    req = mlm_request(runtime, "the cat sat on the mat", [1])
    resp = post_mlm(client, [req])
    assert resp.status_code == 200
    line = json.loads(resp.text.splitlines()[0])
    assert line["mode"] == "full"
    assert line["vocab_size"] == 64
    vec = decode_log_probs(line["log_probs"][0])
    assert vec.size == 64
    assert abs(logsumexp(vec)) < 1e-4


def test_mlm_multiple_positions_one_request(client, runtime):
    req = mlm_request(runtime, "a dog ran fast", [0, 2])
    line = json.loads(post_mlm(client, [req]).text.splitlines()[0])
    assert line["positions"] == [0, 2]
    assert len(line["log_probs"]) == 2


def test_mlm_ndjson_batch_order(client, runtime):
    reqs = [
        mlm_request(runtime, "the cat sat on the mat", [i]) for i in range(4)
    ]
    resp = post_mlm(client, reqs)
    lines = [json.loads(ln) for ln in resp.text.splitlines() if ln.strip()]
    assert len(lines) == 4
    for i, line in enumerate(lines):
        assert line["positions"] == [i]


def test_mlm_batch_matches_single(client, runtime):
    # padding + attention masking in the batched pass must not change results
    reqs = [
        mlm_request(runtime, "the cat sat on the mat", [2]),
        mlm_request(runtime, "a dog ran", [1]),
    ]
    batched = [
        decode_log_probs(json.loads(ln)["log_probs"][0])
        for ln in post_mlm(client, reqs).text.splitlines()
    ]
    singles = [
        decode_log_probs(json.loads(post_mlm(client, [r]).text.splitlines()[0])["log_probs"][0])
        for r in reqs
    ]
    for b, s in zip(batched, singles):
        assert np.allclose(b, s, atol=1e-4)


def test_mlm_deterministic(client, runtime):
    req = mlm_request(runtime, "the sun was big and red", [3])
    a = post_mlm(client, [req]).text
    b = post_mlm(client, [req]).text
    assert a == b


def test_mlm_top_k_mode(client, runtime):
    req = mlm_request(runtime, "the cat sat on the mat", [1], top_k=5)
    line = json.loads(post_mlm(client, [req]).text.splitlines()[0])
    assert line["mode"] == "top_k"
    entry = line["entries"][0]
    assert len(entry["ids"]) == 5
    assert abs(logsumexp(entry["log_probs"] + [entry["residual_log_mass"]])) < 1e-4
    # top-k log-probs are sorted descending and dominate the residual-complement
    assert entry["log_probs"] == sorted(entry["log_probs"], reverse=True)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda r, rt: r.update(v=2),
        lambda r, rt: r.update(ids=[]),
        lambda r, rt: r.update(ids=[0, 999], positions=[0]),
        lambda r, rt: r.update(positions=[]),
        lambda r, rt: r.update(positions=[50]),
        lambda r, rt: r.update(positions=[0]),  # not masked
        lambda r, rt: r.update(top_k=-1),
        lambda r, rt: r.update(ids=[rt.mask_token_id] * 500, positions=[0]),  # oversized
    ],
)
def test_mlm_rejects_bad_requests(client, runtime, mutate):
    req = mlm_request(runtime, "the cat sat", [1])
    mutate(req, runtime)
    resp = post_mlm(client, [req])
    assert resp.status_code == 400
    assert "error" in resp.json()


def test_mlm_rejects_malformed_line(client):
    resp = client.post("/v1/mlm", content="{not json\n")
    assert resp.status_code == 400


def test_mlm_rejects_empty_body(client):
    assert client.post("/v1/mlm", content="").status_code == 400


# ----------------------------------------------------------------- embedding

def test_embed_sim_identical_texts(client):
    sim = client.post(
        "/v1/embed_sim", json={"text_a": "the cat sat", "text_b": "the cat sat"}
    ).json()["sim"]
    assert sim == pytest.approx(1.0, abs=1e-6)


def test_embed_sim_symmetric(client):
    a = client.post("/v1/embed_sim", json={"text_a": "the cat sat", "text_b": "a dog ran"})
    b = client.post("/v1/embed_sim", json={"text_a": "a dog ran", "text_b": "the cat sat"})
    assert a.json()["sim"] == pytest.approx(b.json()["sim"], abs=1e-6)
    assert -1.0 <= a.json()["sim"] <= 1.0


def test_embed_sim_rejects_empty(client):
    resp = client.post("/v1/embed_sim", json={"text_a": "", "text_b": "x"})
    assert resp.status_code == 400


def test_payload_roundtrip():
    vec = np.linspace(-20, 0, 64)
    assert np.allclose(decode_log_probs(encode_log_probs(vec)), vec, atol=1e-5)
