import pytest
from fastapi.testclient import TestClient

from services.grading.schemas import VolumeProfile
from services.grading.service import PROFILES
from services.main import app


@pytest.fixture
def biopsy():
    return PROFILES["biopsy"]


@pytest.fixture
def tma():
    return PROFILES["tma"]


@pytest.fixture
def profile_of():
    def make(benign: float, g3: float, g4: float, g5: float) -> VolumeProfile:
        return VolumeProfile(pct_benign=benign, pct_g3=g3, pct_g4=g4, pct_g5=g5)

    return make


@pytest.fixture
def client():
    with TestClient(app) as c:
        yield c
