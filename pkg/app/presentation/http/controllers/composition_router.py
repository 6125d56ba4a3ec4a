from fastapi import APIRouter, Depends, HTTPException, status
from app.domain.entities.gain_graph import GainGraph
from app.domain.services.composition_service import CompositionService
from app.infrastructure.dependencies import get_composition_service
from app.presentation.http.schemas.composition_schemas import (
    SmallGainRequest,
    SmallGainResponse,
)

router = APIRouter(prefix="/composition", tags=["composition"])


@router.post(
    "/small-gain",
    response_model=SmallGainResponse,
    status_code=status.HTTP_200_OK,
    summary="Decide the small-gain condition of an interconnection",
    description="""
    Feasible when every cycle of the gain graph has a gain product below one.
    Infeasible answers carry a witness cycle and its product; feasible ones
    carry the scalings σ.
    """,
)
def check_small_gain(
    request: SmallGainRequest,
    service: CompositionService = Depends(get_composition_service),
):
    try:
        result = service.check_small_gain(GainGraph(kappa=request.kappa, gains=request.gains))
        return SmallGainResponse(**result.to_dict())
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Internal server error: {str(e)}",
        )
