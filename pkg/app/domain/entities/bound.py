import math
from dataclasses import dataclass
from typing import Optional

from app.domain.entities.kinf import KInfFn
from app.domain.errors import InvalidInputError


@dataclass(frozen=True)
class BoundQuery:
    alpha: KInfFn
    kappa: float
    psi: float
    epsilon: float
    horizon: int
    v0: float = 0.0

    def __post_init__(self):
        self._validate()

    def _validate(self):
        if not 0 < self.kappa < 1:
            raise InvalidInputError(f"κ must lie in (0, 1), got {self.kappa}")
        if self.psi < 0 or not math.isfinite(self.psi):
            raise InvalidInputError(f"ψ must be non-negative, got {self.psi}")
        if not self.epsilon > 0:
            raise InvalidInputError(f"ε must be positive, got {self.epsilon}")
        if self.horizon < 0 or int(self.horizon) != self.horizon:
            raise InvalidInputError(f"horizon must be a non-negative integer, got {self.horizon}")
        if self.v0 < 0:
            raise InvalidInputError(f"V₀ must be non-negative, got {self.v0}")


@dataclass(frozen=True)
class ClosenessRow:
    delta: float
    psi: float
    branch: int
    guarantee: float
    reference: Optional[float] = None


@dataclass(frozen=True)
class MemoryRow:
    delta: Optional[float]
    n_x: int
    n_w: int
    modes: int
    subsystems: int
    per_subsystem_gb: float
    monolithic_log10_gb: float
