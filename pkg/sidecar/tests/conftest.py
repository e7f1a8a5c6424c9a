from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from vidtext_sidecar import SidecarConfig, create_app


@pytest.fixture
def mock_app():
    return create_app(SidecarConfig(mode="mock", embedding_dim=16))


@pytest.fixture
def client(mock_app):
    with TestClient(mock_app) as test_client:
        yield test_client
