import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from app.domain.entities.grid import ABSORBING, UniformGrid
from app.domain.entities.switched_system import Box
from app.domain.errors import InvalidInputError


class GridService:
    """Uniform partitions and the quantizers Π_x, Π_w"""

    def build_grid(
        self,
        box: Box,
        delta: Optional[Union[float, Sequence[float]]] = None,
        counts: Optional[Sequence[int]] = None,
    ) -> UniformGrid:
        """Partition `box` so that every cell width is at most `delta` (or use explicit counts)"""
        if box.dim and box.is_degenerate():
            raise InvalidInputError("cannot partition a box with zero measure")
        if counts is None:
            if delta is None:
                raise InvalidInputError("either a target δ̄ or per-dimension counts is required")
            target = np.broadcast_to(np.asarray(delta, dtype=float), (box.dim,))
            if np.any(target <= 0):
                raise InvalidInputError(f"target δ̄ must be positive, got {delta}")
            # round before the ceiling so 20/0.02 stays 1000
            counts = [
                max(1, math.ceil(round(width / step, 9))) for width, step in zip(box.widths, target)
            ]
        return UniformGrid(box.lower, box.upper, counts)

    def quantize(self, grid: UniformGrid, x) -> Tuple[int, Optional[np.ndarray]]:
        """(cell index, representative) of x, or (ABSORBING, None) outside the box"""
        cell = int(grid.cell_index(np.asarray(x, dtype=float)))
        if cell == ABSORBING:
            return ABSORBING, None
        return cell, grid.center(cell)

    def quantize_lattice(self, grid: UniformGrid, x) -> np.ndarray:
        """Π_x on the unbounded lattice; error stays within δ̄/2 everywhere"""
        return grid.lattice_center(x)

    def cell_center(self, grid: UniformGrid, index: int) -> np.ndarray:
        return grid.center(index)

    def representatives(self, grid: UniformGrid) -> np.ndarray:
        return grid.centers()
