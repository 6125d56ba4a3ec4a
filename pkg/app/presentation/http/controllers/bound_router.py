from typing import List

from fastapi import APIRouter, Depends, HTTPException, status
from app.domain.entities.bound import BoundQuery
from app.domain.entities.kinf import KInfFn
from app.domain.services.bound_service import BoundService
from app.infrastructure.dependencies import get_bound_service
from app.presentation.http.schemas.bound_schemas import (
    ClosenessRequest,
    ClosenessResponse,
    ClosenessRowResponse,
    ClosenessTableRequest,
    MemoryRowResponse,
    MemoryTableRequest,
)

router = APIRouter(prefix="/bounds", tags=["bounds"])


@router.post(
    "/closeness",
    response_model=ClosenessResponse,
    status_code=status.HTTP_200_OK,
    summary="Probabilistic closeness guarantee",
)
def closeness(
    request: ClosenessRequest,
    service: BoundService = Depends(get_bound_service),
):
    """Finite-horizon closeness guarantee for given network certificate constants."""
    try:
        alpha = KInfFn(request.alpha.coefficient, request.alpha.exponent)
        query = BoundQuery(
            alpha, request.kappa, request.psi, request.epsilon, request.horizon, request.v0
        )
        failure, branch = service.kushner_branch(
            request.v0, alpha(request.epsilon), request.kappa, request.psi, request.horizon
        )
        return ClosenessResponse(
            guarantee=service.closeness_probability(query),
            failure_bound=failure,
            branch=branch,
        )
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Internal server error: {str(e)}",
        )


@router.post(
    "/closeness-table",
    response_model=List[ClosenessRowResponse],
    status_code=status.HTTP_200_OK,
    summary="Closeness guarantee over a sweep of δ̄",
)
def closeness_table(
    request: ClosenessTableRequest,
    service: BoundService = Depends(get_bound_service),
):
    try:
        rows = service.closeness_table(
            KInfFn(request.alpha.coefficient, request.alpha.exponent),
            request.kappa,
            request.psi_coefficient,
            request.deltas,
            request.epsilon,
            request.horizon,
            request.v0,
            service.paper_closeness_reference() if request.include_reference else None,
        )
        return [
            ClosenessRowResponse(
                delta=row.delta,
                psi=row.psi,
                branch=row.branch,
                guarantee=row.guarantee,
                reference=row.reference,
            )
            for row in rows
        ]
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Internal server error: {str(e)}",
        )


@router.post(
    "/memory",
    response_model=List[MemoryRowResponse],
    status_code=status.HTTP_200_OK,
    summary="Memory needed by compositional and monolithic abstractions",
)
def memory_table(
    request: MemoryTableRequest,
    service: BoundService = Depends(get_bound_service),
):
    try:
        rows = service.memory_table(request.width, request.deltas, request.modes, request.subsystems)
        return [MemoryRowResponse(**row.__dict__) for row in rows]
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Internal server error: {str(e)}",
        )
