from pydantic import BaseModel, ConfigDict, Field
from typing import List, Optional


class SmallGainRequest(BaseModel):
    """
    Gain matrix of an interconnection: `kappa[i]` is the contraction of
    subsystem i, `gains[i][j]` the linear gain from subsystem j into i.
    """

    model_config = ConfigDict(
        json_schema_extra={
            "examples": [
                {"kappa": [0.5, 0.5], "gains": [[0.0, 1.2], [1.2, 0.0]]},
            ]
        }
    )

    kappa: List[float] = Field(..., min_length=1)
    gains: List[List[float]]


class SmallGainResponse(BaseModel):
    feasible: bool
    max_cycle_mean: float
    max_cycle_gain: float
    sigma: List[float]
    identity_sigma: bool
    scaled_max: Optional[float]
    witness_cycle: List[int]
    witness_product: Optional[float]
