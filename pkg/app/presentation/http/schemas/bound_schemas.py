from pydantic import BaseModel, ConfigDict, Field
from typing import List, Optional


class KInfSchema(BaseModel):
    """Power-law K-infinity function s ↦ coefficient·s^exponent"""

    coefficient: float = Field(..., gt=0, examples=[1.0])
    exponent: float = Field(..., gt=0, examples=[2.0])


class ClosenessRequest(BaseModel):
    """
    Lower bound on the probability that network and abstraction outputs stay
    ε-close over the whole horizon.
    """

    model_config = ConfigDict(
        json_schema_extra={
            "examples": [
                {
                    "alpha": {"coefficient": 0.2, "exponent": 2},
                    "kappa": 0.99,
                    "psi": 0.002266,
                    "epsilon": 1.0,
                    "horizon": 10,
                    "v0": 0.0,
                }
            ]
        }
    )

    alpha: KInfSchema
    kappa: float = Field(..., gt=0, lt=1, description="Contraction of the network certificate")
    psi: float = Field(..., ge=0, description="Additive offset of the network certificate")
    epsilon: float = Field(..., gt=0, description="Output closeness threshold")
    horizon: int = Field(..., ge=0, description="Number of steps T_d")
    v0: float = Field(0.0, ge=0, description="Certificate value at the initial states")


class ClosenessResponse(BaseModel):
    guarantee: float
    failure_bound: float
    branch: int


class ClosenessTableRequest(BaseModel):
    """Closeness guarantee for a sweep of state discretization parameters δ̄"""

    model_config = ConfigDict(
        json_schema_extra={
            "examples": [
                {
                    "alpha": {"coefficient": 1.0, "exponent": 2},
                    "kappa": 0.99,
                    "psi_coefficient": 84.96,
                    "deltas": [0.01, 0.02, 0.03],
                    "epsilon": 1.0,
                    "horizon": 15,
                    "include_reference": True,
                }
            ]
        }
    )

    alpha: KInfSchema
    kappa: float = Field(..., gt=0, lt=1)
    psi_coefficient: float = Field(..., ge=0, description="ψ = psi_coefficient·δ̄²")
    deltas: List[float] = Field(..., min_length=1)
    epsilon: float = Field(..., gt=0)
    horizon: int = Field(..., ge=0)
    v0: float = Field(0.0, ge=0)
    include_reference: bool = Field(
        False, description="Attach the published traffic-ring closeness column where δ̄ matches"
    )


class ClosenessRowResponse(BaseModel):
    delta: float
    psi: float
    branch: int
    guarantee: float
    reference: Optional[float] = None


class MemoryTableRequest(BaseModel):
    """Storage needed by per-subsystem and monolithic abstractions"""

    model_config = ConfigDict(
        json_schema_extra={
            "examples": [{"width": 20.0, "deltas": [0.02, 0.04], "modes": 2, "subsystems": 200}]
        }
    )

    width: float = Field(..., gt=0, description="Width of the state box, n_x = n_w = ceil(width/δ̄)")
    deltas: List[float] = Field(..., min_length=1)
    modes: int = Field(..., ge=1)
    subsystems: int = Field(..., ge=1)


class MemoryRowResponse(BaseModel):
    delta: Optional[float]
    n_x: int
    n_w: int
    modes: int
    subsystems: int
    per_subsystem_gb: float
    monolithic_log10_gb: float
