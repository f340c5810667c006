from pathlib import Path
from typing import Optional

import pytest
from fastapi.testclient import TestClient
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from services.config import get_settings
from services.consensus import models  # noqa: F401
from services.consensus.schemas import Read, ReadFlag
from services.database import Base, get_db
from services.grading.schemas import Verdict
from services.main import app

FIXTURES = Path(__file__).parent


@pytest.fixture
def read():
    """
    Returns a factory for reads: ``read("C1", "r1", 3, 4)`` is a 3+4 read,
    ``read("C1", "r1")`` a benign one.
    """

    def make(
        case_id: str,
        reader_id: str,
        primary: Optional[int] = None,
        secondary: Optional[int] = None,
        round: int = 1,
        ungradeable: bool = False,
    ) -> Read:
        if ungradeable:
            return Read(
                case_id=case_id,
                reader_id=reader_id,
                round=round,
                flags=frozenset({ReadFlag.UNGRADEABLE}),
            )
        verdict = Verdict.benign() if primary is None else Verdict.of(primary, secondary)
        return Read(case_id=case_id, reader_id=reader_id, round=round, verdict=verdict)

    return make


@pytest.fixture
def reads_fixture():
    return FIXTURES / "reads_ten_cases.csv"


@pytest.fixture
def ihc_fixture():
    return FIXTURES / "ihc_ten_cases.csv"


@pytest.fixture
def db_session():
    """Returns a session on a fresh in-memory database."""
    engine = create_engine(
        "sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool
    )
    Base.metadata.create_all(bind=engine)
    session = sessionmaker(bind=engine, autocommit=False, autoflush=False)()
    try:
        yield session
    finally:
        session.close()
        engine.dispose()


@pytest.fixture
def api_headers():
    return {"x-api-key": get_settings().API_KEY}


@pytest.fixture
def client(db_session):
    """
    Returns a TestClient whose requests share the test's database session.
    """

    def override_get_db():
        try:
            yield db_session
        finally:
            pass

    app.dependency_overrides[get_db] = override_get_db

    with TestClient(app) as c:
        yield c

    app.dependency_overrides.clear()
