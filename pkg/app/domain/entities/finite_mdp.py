from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from app.domain.entities.grid import UniformGrid
from app.domain.errors import InvalidInputError

ROW_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Finite abstraction of one subsystem.

    Row (x̂·m + p)·n_w + ŵ of `transitions` holds T̂(·|x̂, p, ŵ) over the
    state cells; `absorbing` holds the mass leaving the state box.
    """

    state_grid: UniformGrid
    input_grid: UniformGrid
    mode_count: int
    transitions: sparse.csr_matrix
    absorbing: np.ndarray
    dwell_time: int = 1
    fingerprint: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "transitions", sparse.csr_matrix(self.transitions))
        object.__setattr__(self, "absorbing", np.asarray(self.absorbing, dtype=float))
        self._validate()

    def _validate(self):
        if self.mode_count < 1:
            raise InvalidInputError("an abstraction needs at least one mode")
        if self.dwell_time < 1:
            raise InvalidInputError("dwell time must be at least 1")
        expected = (self.row_count, self.state_grid.size)
        if self.transitions.shape != expected:
            raise InvalidInputError(
                f"transition matrix has shape {self.transitions.shape}, expected {expected}"
            )
        if self.absorbing.shape != (self.row_count,):
            raise InvalidInputError("absorbing mass must have one entry per row")

    @property
    def n_states(self) -> int:
        return self.state_grid.size

    @property
    def n_inputs(self) -> int:
        return self.input_grid.size

    @property
    def row_count(self) -> int:
        return self.state_grid.size * self.mode_count * self.input_grid.size

    @property
    def nnz(self) -> int:
        return int(self.transitions.nnz)

    def row_index(self, x_cell, mode, w_cell):
        return (np.asarray(x_cell) * self.mode_count + mode) * self.n_inputs + w_cell

    def row_coordinates(self, row: int):
        """Inverse of row_index: (x̂, p, ŵ)"""
        x_cell, rest = divmod(int(row), self.mode_count * self.n_inputs)
        mode, w_cell = divmod(rest, self.n_inputs)
        return x_cell, mode, w_cell

    def row(self, x_cell: int, mode: int, w_cell: int):
        """(targets, probabilities, absorbing mass) of one row"""
        r = int(self.row_index(x_cell, mode, w_cell))
        start, end = self.transitions.indptr[r], self.transitions.indptr[r + 1]
        return (
            self.transitions.indices[start:end].copy(),
            self.transitions.data[start:end].copy(),
            float(self.absorbing[r]),
        )

    def row_sum_error(self) -> float:
        """max over rows of |sum + absorbing - 1|"""
        sums = np.asarray(self.transitions.sum(axis=1)).ravel()
        return float(np.max(np.abs(sums + self.absorbing - 1.0))) if self.row_count else 0.0

    def is_stochastic(self, tol: float = ROW_SUM_TOLERANCE) -> bool:
        return (
            self.row_sum_error() <= tol
            and bool(np.all(self.transitions.data >= 0))
            and bool(np.all(self.absorbing >= -tol))
        )
