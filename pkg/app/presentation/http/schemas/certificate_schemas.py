from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import List, Optional


class ModeMatricesSchema(BaseModel):
    """The parts of a mode x⁺ = A x + E φ(F x) + ... that enter the matrix inequality"""

    A: List[List[float]]
    E: Optional[List[List[float]]] = Field(None, description="Defaults to an n×1 zero column")
    F: Optional[List[List[float]]] = Field(None, description="Defaults to a 1×n zero row")
    slope_bound: Optional[float] = Field(
        None, gt=0, description="Slope bound ā of the nonlinearity; omitted means infinite"
    )


class LmiCheckRequest(BaseModel):
    """
    Check the δ-ISS matrix inequality for one mode.

    When `kappa_bar` is omitted only the minimal feasible κ̄ is reported.
    """

    model_config = ConfigDict(
        json_schema_extra={
            "examples": [
                {
                    "mode": {
                        "A": [[0.05, 0.0], [0.9, 0.03]],
                        "E": [[0.1], [0.1]],
                        "F": [[0.1, 0.1]],
                        "slope_bound": 1.0,
                    },
                    "M": [[1.311, 0.001], [0.001, 0.492]],
                    "kappa_bar": 0.7,
                    "pi": 0.5,
                }
            ]
        }
    )

    mode: ModeMatricesSchema
    M: List[List[float]]
    kappa_bar: Optional[float] = Field(None, gt=0, lt=1)
    pi: float = Field(..., gt=0)


class LmiCheckResponse(BaseModel):
    holds: Optional[bool]
    min_eigenvalue: Optional[float]
    max_eigenvalue: Optional[float]
    minimal_kappa: Optional[float]


class MuRequest(BaseModel):
    matrices: List[List[List[float]]] = Field(..., min_length=1)
    method: str = Field("pairwise", description="'pairwise' or 'generalized'")

    @field_validator("method")
    @classmethod
    def validate_method(cls, method: str) -> str:
        if method not in ("pairwise", "generalized"):
            raise ValueError("method must be 'pairwise' or 'generalized'")
        return method


class MuResponse(BaseModel):
    mu: float


class DwellTimeRequest(BaseModel):
    model_config = ConfigDict(
        json_schema_extra={"examples": [{"epsilon": 1.75, "mu": 3.27, "kappa_bars": [0.7, 0.7]}]}
    )

    epsilon: float = Field(..., gt=1)
    mu: float = Field(..., ge=1)
    kappa_bars: List[float] = Field(..., min_length=1)


class DwellTimeResponse(BaseModel):
    dwell_time: int
