import json
from pathlib import Path

import pytest

SIDECAR_ROOT = Path(__file__).resolve().parents[1]
SNAPSHOT = SIDECAR_ROOT / "tests" / "tiny_snapshot"
FIXTURES = SIDECAR_ROOT / "contract_fixtures" / "fixtures.json"


@pytest.fixture(scope="session")
def runtime():
    if not SNAPSHOT.exists():
        pytest.skip("tiny snapshot missing; run scripts/make_tiny_snapshot.py")
    from tokencom_sidecar import ModelRuntime, SidecarSettings

    return ModelRuntime(
        SidecarSettings(mlm_dir=str(SNAPSHOT / "mlm"), embed_dir=str(SNAPSHOT / "embed"))
    )


@pytest.fixture(scope="session")
def client(runtime):
    from fastapi.testclient import TestClient

    from tokencom_sidecar import create_app

    return TestClient(create_app(runtime))


@pytest.fixture(scope="session")
def fixtures():
    if not FIXTURES.exists():
        pytest.skip("contract fixtures missing; run scripts/make_fixtures.py")
    return json.loads(FIXTURES.read_text())
