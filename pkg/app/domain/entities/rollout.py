from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from app.domain.errors import InvalidInputError


@dataclass(frozen=True, eq=False)
class RolloutConfig:
    runs: int
    horizon: int
    seed: int
    initial_states: Sequence[np.ndarray]
    initial_modes: Sequence[int]
    initial_abstract_states: Optional[Sequence[np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(
            self, "initial_states", tuple(np.asarray(a, dtype=float) for a in self.initial_states)
        )
        if self.initial_abstract_states is not None:
            object.__setattr__(
                self,
                "initial_abstract_states",
                tuple(np.asarray(a, dtype=float) for a in self.initial_abstract_states),
            )
        object.__setattr__(self, "initial_modes", tuple(int(p) for p in self.initial_modes))
        self._validate()

    def _validate(self):
        if self.runs < 1:
            raise InvalidInputError("at least one run is required")
        if self.horizon < 0:
            raise InvalidInputError("horizon must be non-negative")
        if len(self.initial_states) != len(self.initial_modes):
            raise InvalidInputError("one initial mode per subsystem is required")
        if self.initial_abstract_states is not None and len(self.initial_abstract_states) != len(
            self.initial_states
        ):
            raise InvalidInputError("one abstract initial state per subsystem is required")


@dataclass(frozen=True, eq=False)
class Trajectories:
    """Paired rollouts; arrays are indexed (run, k, stacked coordinate) with the
    subsystems' outputs (or states) concatenated in index order.

    Abstract outputs are NaN after the abstraction left its box.
    """

    concrete: np.ndarray
    abstract: np.ndarray
    modes: np.ndarray
    counters: np.ndarray
    states: np.ndarray = field(repr=False, default=None)
    abstract_states: np.ndarray = field(repr=False, default=None)

    @property
    def runs(self) -> int:
        return self.concrete.shape[0]

    @property
    def horizon(self) -> int:
        return self.concrete.shape[1] - 1

    def sup_deviation(self) -> np.ndarray:
        """sup_k ‖y(k) - ŷ(k)‖∞ per run; inf when the abstraction was absorbed"""
        diff = np.abs(self.concrete - self.abstract)
        diff = np.where(np.isnan(diff), np.inf, diff)
        return diff.reshape(self.runs, -1).max(axis=1)


@dataclass(frozen=True)
class EmpiricalEstimate:
    fraction: float
    standard_error: float
    runs: int

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "standard_error": self.standard_error,
            "runs": self.runs,
        }
