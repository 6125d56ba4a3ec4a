from typing import Optional

from sqlalchemy.orm import Session
from fastapi import Depends
from ..infrastructure.repositories.artifact_repository import ArtifactRepository
from ..infrastructure.repositories.mdp_repository import MdpRepository
from ..infrastructure.repositories.policy_repository import PolicyRepository
from ..domain.services.abstraction_service import AbstractionService
from ..domain.services.bound_service import BoundService
from ..domain.services.certificate_service import CertificateService
from ..domain.services.composition_service import CompositionService
from ..domain.services.dynamics_service import DynamicsService
from ..domain.services.grid_service import GridService
from ..domain.services.pipeline_service import PipelineService
from ..domain.services.simulation_service import SimulationService
from ..domain.services.synthesis_service import SynthesisService
from ..db import get_db
from ..settings import memory_cap_gb


def get_db_session() -> Session:
    """Get database session"""
    return next(get_db())


def get_artifact_repository(
    db: Session = Depends(get_db_session),
) -> ArtifactRepository:
    """Get artifact registry with database session"""
    return ArtifactRepository(db)


def get_dynamics_service() -> DynamicsService:
    return DynamicsService()


def get_grid_service() -> GridService:
    return GridService()


def get_certificate_service(
    dynamics: DynamicsService = Depends(get_dynamics_service),
    grids: GridService = Depends(get_grid_service),
) -> CertificateService:
    """Get certificate service with dynamics and quantizers"""
    return CertificateService(dynamics, grids)


def get_composition_service() -> CompositionService:
    return CompositionService()


def get_bound_service() -> BoundService:
    return BoundService()


def build_pipeline_service(
    db: Session, threads: int = 1, memory_cap: Optional[float] = None
) -> PipelineService:
    """Wire the pipeline outside a request, e.g. from the command line"""
    dynamics = DynamicsService()
    grids = GridService()
    abstraction = AbstractionService(
        dynamics,
        memory_cap_gb=memory_cap_gb() if memory_cap is None else memory_cap,
        threads=threads,
    )
    return PipelineService(
        artifacts=ArtifactRepository(db),
        mdps=MdpRepository(),
        policies=PolicyRepository(),
        grids=grids,
        abstraction=abstraction,
        certificates=CertificateService(dynamics, grids),
        composition=CompositionService(),
        bounds=BoundService(),
        synthesis=SynthesisService(),
        simulation=SimulationService(dynamics, abstraction),
    )
