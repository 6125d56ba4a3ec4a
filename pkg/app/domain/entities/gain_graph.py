from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from app.domain.entities.kinf import KInfFn
from app.domain.errors import InvalidInputError


@dataclass(frozen=True, eq=False)
class GainGraph:
    """Interconnection gains: kappa[i] on the diagonal, gains[i, j] = slope of κ_ij.

    gains[i, j] > 0 iff subsystem j feeds subsystem i.
    """

    kappa: np.ndarray
    gains: np.ndarray
    functions: Dict[Tuple[int, int], KInfFn] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kappa", np.array(self.kappa, dtype=float, ndmin=1))
        object.__setattr__(self, "gains", np.array(self.gains, dtype=float, ndmin=2))
        self._validate()

    def _validate(self):
        N = self.kappa.size
        if self.gains.shape != (N, N):
            raise InvalidInputError(f"gain matrix must be {N}x{N}, got {self.gains.shape}")
        if np.any(self.kappa <= 0) or np.any(self.kappa >= 1):
            raise InvalidInputError("diagonal slopes must lie in (0, 1)")
        if np.any(self.gains < 0):
            raise InvalidInputError("gains must be non-negative")
        if np.any(np.diag(self.gains) != 0):
            raise InvalidInputError("self-gains belong in kappa, not in the gain matrix")

    @property
    def size(self) -> int:
        return self.kappa.size

    def full_matrix(self) -> np.ndarray:
        """κ_ij with κ_i on the diagonal"""
        return self.gains + np.diag(self.kappa)

    def to_dict(self) -> dict:
        return {"kappa": self.kappa.tolist(), "gains": self.gains.tolist()}


@dataclass(frozen=True, eq=False)
class SmallGainResult:
    feasible: bool
    max_cycle_mean: float
    sigma: np.ndarray
    witness_cycle: List[int] = field(default_factory=list)
    witness_product: Optional[float] = None
    scaled_max: Optional[float] = None
    identity_sigma: bool = False

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "max_cycle_mean": self.max_cycle_mean,
            "max_cycle_gain": float(np.exp(self.max_cycle_mean)),
            "sigma": self.sigma.tolist(),
            "identity_sigma": self.identity_sigma,
            "scaled_max": self.scaled_max,
            "witness_cycle": list(self.witness_cycle),
            "witness_product": self.witness_product,
        }


@dataclass(frozen=True, eq=False)
class ComposedSsf:
    """Network-level simulation function constants"""

    kappa: float
    psi: float
    alpha: KInfFn
    sigma: np.ndarray
    matched_io: bool
    evaluator: Optional[Callable] = field(default=None, repr=False)

    def initial_value(self, a, a_hat, p0) -> float:
        """V₀ at l₀ = 0 for per-subsystem initial states a_i, â_i and modes p0_i"""
        if self.evaluator is None:
            raise InvalidInputError("composed function has no initial-value evaluator")
        return float(self.evaluator(a, a_hat, p0))

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "psi": self.psi,
            "alpha": self.alpha.to_dict(),
            "sigma": self.sigma.tolist(),
            "matched_io": self.matched_io,
        }
