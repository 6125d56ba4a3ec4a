from sqlalchemy import Column, Integer, String, DateTime
from datetime import datetime
from app.db import Base


class ArtifactModel(Base):
    """SQLAlchemy model for the Artifact entity"""

    __tablename__ = "artifacts"

    id = Column(Integer, primary_key=True, index=True, autoincrement=True)
    run_name = Column(String(200), nullable=False, index=True)
    stage = Column(String(50), nullable=False)
    kind = Column(String(50), nullable=False)
    subsystem = Column(Integer, nullable=True)
    path = Column(String(1000), nullable=False)
    sha256 = Column(String(64), nullable=False)
    created_at = Column(DateTime, nullable=False, default=datetime.now)
