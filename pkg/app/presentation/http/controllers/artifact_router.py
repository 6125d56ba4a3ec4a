from typing import List

from fastapi import APIRouter, Depends, HTTPException, status
from app.infrastructure.dependencies import get_artifact_repository
from app.infrastructure.repositories.artifact_repository import ArtifactRepository
from app.presentation.http.schemas.artifact_schemas import ArtifactResponse

router = APIRouter(prefix="/artifacts", tags=["artifacts"])


@router.get(
    "/{run_name}",
    response_model=List[ArtifactResponse],
    status_code=status.HTTP_200_OK,
    summary="List the artifacts of a pipeline run",
)
def get_run_artifacts(
    run_name: str,
    repository: ArtifactRepository = Depends(get_artifact_repository),
):
    try:
        artifacts = repository.get_by_run(run_name)
        if not artifacts:
            raise HTTPException(
                status_code=status.HTTP_404_NOT_FOUND,
                detail=f"Run '{run_name}' has no artifacts",
            )
        return [
            ArtifactResponse(
                id=artifact.id,
                run_name=artifact.run_name,
                stage=artifact.stage.value,
                kind=artifact.kind.value,
                subsystem=artifact.subsystem,
                path=artifact.path,
                sha256=artifact.sha256,
                created_at=artifact.created_at,
            )
            for artifact in artifacts
        ]
    except HTTPException:
        raise
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Internal server error: {str(e)}",
        )
