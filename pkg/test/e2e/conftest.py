import pytest
import os
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool
from fastapi.testclient import TestClient

from app.api import app
from app.db import get_db, Base
from app.infrastructure.dependencies import get_db_session
from app.infrastructure.models.artifact_model import ArtifactModel  # noqa: F401

TEST_DATABASE_URL = os.getenv("TEST_DATABASE_URL", "sqlite://")

PRODUCTION_DATABASE_URL = os.getenv("DATABASE_URL", "sqlite:///./switchabs.db")

if TEST_DATABASE_URL == PRODUCTION_DATABASE_URL:
    raise ValueError(
        f"E2E tests cannot use the production registry '{PRODUCTION_DATABASE_URL}'!\n"
        f"Set TEST_DATABASE_URL to a different database."
    )


@pytest.fixture
def test_engine():
    """In-memory registry shared by every session of one test"""
    engine = create_engine(
        TEST_DATABASE_URL,
        connect_args={"check_same_thread": False},
        poolclass=StaticPool,
    )
    Base.metadata.create_all(bind=engine)
    yield engine
    Base.metadata.drop_all(bind=engine)
    engine.dispose()


@pytest.fixture
def session_factory(test_engine):
    return sessionmaker(autocommit=False, autoflush=False, bind=test_engine)


@pytest.fixture(autouse=True)
def override_database_dependency(session_factory):
    """Point both database dependencies at the test registry"""

    def override_get_db():
        db = session_factory()
        try:
            yield db
        finally:
            db.close()

    app.dependency_overrides[get_db] = override_get_db
    app.dependency_overrides[get_db_session] = lambda: session_factory()

    yield

    app.dependency_overrides.clear()


@pytest.fixture
def client():
    return TestClient(app)
