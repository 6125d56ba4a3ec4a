from datetime import datetime
from enum import Enum
from typing import Optional

MAX_RUN_NAME_LENGTH = 200


class Stage(Enum):
    ABSTRACT = "abstract"
    CERTIFY = "certify"
    COMPOSE = "compose"
    BOUND = "bound"
    SYNTHESIZE = "synthesize"
    SIMULATE = "simulate"
    REPORT = "report"


class ArtifactKind(Enum):
    MDP = "mdp"
    CERTIFICATE = "certificate"
    COMPOSITION = "composition"
    VALIDATION = "validation"
    CLOSENESS = "closeness"
    MEMORY = "memory"
    BOUND = "bound"
    POLICY = "policy"
    VALUES = "values"
    TRAJECTORIES = "trajectories"
    MONTE_CARLO = "monte_carlo"
    SUMMARY = "summary"


class Artifact:
    """One file written by a pipeline stage, as recorded in the registry"""

    def __init__(
        self,
        id: Optional[int],
        run_name: str,
        stage: Stage,
        kind: ArtifactKind,
        path: str,
        sha256: str,
        subsystem: Optional[int] = None,
        created_at: Optional[datetime] = None,
    ):
        self.id = id
        self.run_name = run_name
        self.stage = stage
        self.kind = kind
        self.path = path
        self.sha256 = sha256
        self.subsystem = subsystem
        self.created_at = created_at

        self._validate()

    def _validate(self):
        if not self.run_name or len(self.run_name) > MAX_RUN_NAME_LENGTH:
            raise ValueError(f"Run name must be 1-{MAX_RUN_NAME_LENGTH} characters")
        if not self.path:
            raise ValueError("Artifact path must not be empty")
        if len(self.sha256) != 64:
            raise ValueError("Artifact digest must be a sha256 hex string")
        if self.subsystem is not None and self.subsystem < 0:
            raise ValueError("Subsystem index must be non-negative")
