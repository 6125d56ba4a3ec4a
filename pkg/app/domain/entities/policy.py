from dataclasses import dataclass

import numpy as np

from app.domain.entities.grid import UniformGrid
from app.domain.entities.switched_system import Box
from app.domain.errors import InvalidInputError


@dataclass(frozen=True, eq=False)
class SafetySpec:
    safe_box: Box
    horizon: int

    def __post_init__(self):
        if self.horizon < 0:
            raise InvalidInputError("horizon must be non-negative")

    def validate_against(self, state_box: Box) -> None:
        if not state_box.contains_box(self.safe_box):
            raise InvalidInputError("safe box must lie inside the state box")

    def safe_cells(self, grid: UniformGrid) -> np.ndarray:
        """Indicator of cells whose representative lies in the safe box"""
        centers = grid.centers()
        inside = (centers >= self.safe_box.lower) & (centers <= self.safe_box.upper)
        return np.all(inside, axis=-1).astype(float)


@dataclass(frozen=True, eq=False)
class Policy:
    """Time-varying switching policy.

    choice[k, x̂, p, l] is the mode requested at step k; value[k, x̂, p, l] the
    max-min safety probability from step k.
    """

    choice: np.ndarray
    value: np.ndarray
    grid: UniformGrid
    dwell_time: int
    fingerprint: str = ""

    def __post_init__(self):
        object.__setattr__(self, "choice", np.asarray(self.choice, dtype=np.int8))
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float))
        self._validate()

    def _validate(self):
        if self.choice.ndim != 4:
            raise InvalidInputError("choice table must be indexed by (k, x̂, p, l)")
        horizon, n_x, m, k_d = self.choice.shape
        if n_x != self.grid.size or k_d != self.dwell_time:
            raise InvalidInputError("choice table does not match grid or dwell time")
        if self.value.shape != (horizon + 1, n_x, m, k_d):
            raise InvalidInputError(
                f"value table has shape {self.value.shape}, expected {(horizon + 1, n_x, m, k_d)}"
            )
        # a switch is only admissible once the counter reached k_d - 1
        if k_d > 1 and horizon:
            held = self.choice[:, :, :, : k_d - 1]
            modes = np.arange(m).reshape(1, 1, m, 1)
            if np.any(held != modes):
                raise InvalidInputError("policy requests a switch before the dwell time elapsed")

    @property
    def horizon(self) -> int:
        return self.choice.shape[0]

    @property
    def mode_count(self) -> int:
        return self.choice.shape[2]

    def initial_value(self, x_cell: int, mode: int, counter: int = 0) -> float:
        return float(self.value[0, x_cell, mode, counter])
