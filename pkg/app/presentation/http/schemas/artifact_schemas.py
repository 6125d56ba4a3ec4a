from pydantic import BaseModel
from typing import Optional
from datetime import datetime


class ArtifactResponse(BaseModel):
    """One registered stage output"""

    id: int
    run_name: str
    stage: str
    kind: str
    subsystem: Optional[int]
    path: str
    sha256: str
    created_at: Optional[datetime]
