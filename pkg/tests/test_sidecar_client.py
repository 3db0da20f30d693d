import numpy as np
import pytest

from tokencom import (
    MASK,
    UniformModel,
    context_aware_mask,
    detect,
    ml_detect,
    train_ngram,
)
from tokencom.detect import DetectionAborted
from tokencom.priors import PriorProtocolError, PriorTransportError, mask_sequence
from tokencom.sidecar_client import (
    ExternalModel,
    SidecarClient,
    decode_log_probs,
    encode_log_probs,
    response_to_log_probs,
)

from .stub_sidecar import StubSidecar
from .test_detect import random_table

V = 16
MASK_ID = 15  # reserved: corpus below only uses ids 0..14


@pytest.fixture(scope="module")
def backing_model():
    rng = np.random.default_rng(0)
    return train_ngram([rng.integers(0, 15, 500)], V, alpha=0.4)


@pytest.fixture()
def stub(backing_model):
    with StubSidecar(backing_model, MASK_ID, V) as server:
        yield server


def make_external(stub, retries=1, backoff=0.01):
    client = SidecarClient(stub.url, timeout=5.0, retries=retries, backoff=backoff)
    return ExternalModel(client, V, MASK_ID)


# ----------------------------------------------------------------- wire layer

def test_encode_decode_roundtrip():
    rng = np.random.default_rng(1)
    vec = rng.normal(size=V)
    decoded = decode_log_probs(encode_log_probs(vec), V)
    assert np.allclose(decoded, vec, atol=1e-6)  # float32 on the wire


def test_health(stub):
    client = SidecarClient(stub.url)
    health = client.health()
    assert health["status"] == "ok"
    assert health["vocab_size"] == V
    assert health["mask_token_id"] == MASK_ID


def test_external_matches_backing_model(stub, backing_model):
    model = make_external(stub)
    rng = np.random.default_rng(2)
    for _ in range(5):
        seq = mask_sequence(rng.integers(0, 15, size=10), [3, 7])
        remote = model.predict(seq, [3, 7])
        local = backing_model.predict(seq, [3, 7])
        assert np.allclose(remote, local, atol=1e-5)  # float32 wire precision


def test_predict_many_single_batch(stub, backing_model):
    model = make_external(stub)
    rng = np.random.default_rng(3)
    base = rng.integers(0, 15, size=12)
    queries = []
    for i in range(12):
        queries.append((mask_sequence(base, [i]), i))
    before = len(stub.requests_seen)
    remote = model.predict_many(queries)
    assert len(stub.requests_seen) == before + 12  # 12 NDJSON lines...
    local = backing_model.predict_many(queries)
    assert np.allclose(remote, local, atol=1e-5)


def test_interchangeable_in_detector(stub, backing_model):
    # same decisions through the wire as in-process: no behavioral branch
    model = make_external(stub)
    rng = np.random.default_rng(4)
    table = random_table(rng, 6, V, masked=[2])
    remote_state = detect(table, model, [2], max_iters=3)
    local_state = detect(table, backing_model, [2], max_iters=3)
    assert np.array_equal(remote_state.estimate, local_state.estimate)
    for ra, rb in zip(remote_state.trace, local_state.trace):
        assert np.array_equal(ra.estimate, rb.estimate)


def test_interchangeable_in_masker(stub, backing_model):
    model = make_external(stub)
    rng = np.random.default_rng(5)
    seq = rng.integers(0, 15, size=12)
    remote = context_aware_mask(seq, 0.25, model)
    local = context_aware_mask(seq, 0.25, backing_model)
    assert remote.selection_order == local.selection_order


def test_tokenize_detokenize_embed(stub):
    client = SidecarClient(stub.url)
    ids = client.tokenize("abc")
    assert len(ids) == 3
    assert client.detokenize([1, 2]) == "1 2"
    assert client.embed_sim("x", "x") == pytest.approx(1.0)
    assert client.embed_sim("x", "y") == pytest.approx(0.5)


# -------------------------------------------------------------- failure modes

def test_unreachable_raises_transport_error():
    client = SidecarClient("http://127.0.0.1:9", timeout=0.2, retries=1, backoff=0.01)
    model = ExternalModel(client, V, MASK_ID)
    with pytest.raises(PriorTransportError):
        model.predict(mask_sequence(np.arange(4), [0]), [0])


def test_5xx_retried_then_succeeds(stub, backing_model):
    stub.fail_next = 1
    model = make_external(stub, retries=2)
    seq = mask_sequence(np.arange(4), [1])
    remote = model.predict(seq, [1])
    assert np.allclose(remote, backing_model.predict(seq, [1]), atol=1e-5)


def test_5xx_exhausted_raises_transport(stub):
    stub.fail_next = 10
    model = make_external(stub, retries=1)
    with pytest.raises(PriorTransportError):
        model.predict(mask_sequence(np.arange(4), [1]), [1])


def test_malformed_payload_raises_protocol(stub):
    stub.corrupt_mode = "short"
    model = make_external(stub)
    with pytest.raises(PriorProtocolError):
        model.predict(mask_sequence(np.arange(4), [1]), [1])


def test_unnormalized_response_rejected(stub):
    stub.corrupt_mode = "unnormalized"
    model = make_external(stub)
    with pytest.raises(PriorProtocolError, match="normalized"):
        model.predict(mask_sequence(np.arange(4), [1]), [1])


def test_non_json_response_rejected(stub):
    stub.corrupt_mode = "not-json"
    model = make_external(stub)
    with pytest.raises(PriorProtocolError):
        model.predict(mask_sequence(np.arange(4), [1]), [1])


def test_missing_response_line_rejected(stub):
    stub.corrupt_mode = "missing-line"
    model = make_external(stub)
    queries = [(mask_sequence(np.arange(6), [i]), i) for i in range(3)]
    with pytest.raises(PriorProtocolError, match="responses"):
        model.predict_many(queries)


def test_detector_aborts_cleanly_on_midrun_failure(stub, backing_model):
    model = make_external(stub, retries=0)
    rng = np.random.default_rng(6)
    table = random_table(rng, 5, V)
    stub.fail_next = 100
    with pytest.raises(DetectionAborted) as exc:
        detect(table, model, [], max_iters=4)
    assert exc.value.partial.iterations == 1


# ----------------------------------------------------------------- top-k mode

def test_top_k_response_expansion():
    # residual mass spread evenly over the V - k unlisted tokens
    ids = [3, 1]
    probs = np.array([0.6, 0.3])
    residual = 0.1
    response = {
        "v": 1,
        "mode": "top_k",
        "vocab_size": 8,
        "positions": [0],
        "entries": [
            {
                "ids": ids,
                "log_probs": np.log(probs).tolist(),
                "residual_log_mass": float(np.log(residual)),
            }
        ],
    }
    rows = response_to_log_probs(response, 8)
    p = np.exp(rows[0])
    assert p[3] == pytest.approx(0.6, rel=1e-6)
    assert p[1] == pytest.approx(0.3, rel=1e-6)
    unlisted = [i for i in range(8) if i not in ids]
    assert np.allclose(p[unlisted], 0.1 / 6, rtol=1e-6)
    assert p.sum() == pytest.approx(1.0, abs=1e-4)


def test_top_k_rejects_bad_entry():
    response = {
        "v": 1,
        "mode": "top_k",
        "vocab_size": 4,
        "positions": [0],
        "entries": [{"ids": [0, 1], "log_probs": [0.0], "residual_log_mass": -30.0}],
    }
    with pytest.raises(PriorProtocolError):
        response_to_log_probs(response, 4)


def test_vocab_size_mismatch_rejected():
    response = {"v": 1, "mode": "full", "vocab_size": 5, "positions": [0], "log_probs": []}
    with pytest.raises(PriorProtocolError, match="vocab"):
        response_to_log_probs(response, 8)
