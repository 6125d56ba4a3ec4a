import math

import numpy as np
from fastapi import APIRouter, Depends, HTTPException, status
from app.domain.entities.switched_system import ModeDynamics
from app.domain.services.certificate_service import CertificateService
from app.infrastructure.dependencies import get_certificate_service
from app.presentation.http.schemas.certificate_schemas import (
    DwellTimeRequest,
    DwellTimeResponse,
    LmiCheckRequest,
    LmiCheckResponse,
    ModeMatricesSchema,
    MuRequest,
    MuResponse,
)

router = APIRouter(prefix="/certificates", tags=["certificates"])


def _mode(schema: ModeMatricesSchema) -> ModeDynamics:
    A = np.array(schema.A, dtype=float, ndmin=2)
    n = A.shape[0]
    return ModeDynamics(
        A=A,
        B=np.zeros(n),
        D=np.zeros((n, 0)),
        E=np.zeros((n, 1)) if schema.E is None else schema.E,
        F=np.zeros((1, n)) if schema.F is None else schema.F,
        R=np.eye(n),
        slope_bound=math.inf if schema.slope_bound is None else schema.slope_bound,
    )


@router.post(
    "/lmi",
    response_model=LmiCheckResponse,
    status_code=status.HTTP_200_OK,
    summary="Check the δ-ISS matrix inequality of one mode",
)
def check_lmi(
    request: LmiCheckRequest,
    service: CertificateService = Depends(get_certificate_service),
):
    """Eigenvalue check of the inequality plus the smallest feasible κ̄."""
    try:
        mode = _mode(request.mode)
        minimal = service.minimal_kappa(mode, request.M, request.pi)
        if request.kappa_bar is None:
            return LmiCheckResponse(
                holds=None, min_eigenvalue=None, max_eigenvalue=None, minimal_kappa=minimal
            )
        report = service.check_lmi(mode, request.M, request.kappa_bar, request.pi)
        return LmiCheckResponse(
            holds=report.holds,
            min_eigenvalue=report.min_eigenvalue,
            max_eigenvalue=report.max_eigenvalue,
            minimal_kappa=minimal,
        )
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Internal server error: {str(e)}",
        )


@router.post(
    "/mu",
    response_model=MuResponse,
    status_code=status.HTTP_200_OK,
    summary="Switching constant μ of a set of Lyapunov matrices",
)
def compute_mu(
    request: MuRequest,
    service: CertificateService = Depends(get_certificate_service),
):
    try:
        return MuResponse(mu=service.compute_mu(request.matrices, request.method))
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Internal server error: {str(e)}",
        )


@router.post(
    "/dwell-time",
    response_model=DwellTimeResponse,
    status_code=status.HTTP_200_OK,
    summary="Minimal admissible dwell time",
)
def min_dwell_time(
    request: DwellTimeRequest,
    service: CertificateService = Depends(get_certificate_service),
):
    try:
        return DwellTimeResponse(
            dwell_time=service.min_dwell_time(request.epsilon, request.mu, request.kappa_bars)
        )
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Internal server error: {str(e)}",
        )
