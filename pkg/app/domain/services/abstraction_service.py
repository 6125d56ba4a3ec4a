import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.special import ndtr

from app.domain.entities.finite_mdp import FiniteMdp
from app.domain.entities.grid import ABSORBING, UniformGrid
from app.domain.entities.switched_system import SubsystemSpec
from app.domain.errors import InvalidInputError, MemoryCapError
from app.domain.services.dynamics_service import DynamicsService

logger = logging.getLogger(__name__)

SPARSITY_FLOOR = 1e-12
WINDOW_SIGMAS = 8.0
CHUNK_ENTRIES = 4_000_000
BYTES_PER_ENTRY = 16
BYTES_PER_ROW = 8


class AbstractionService:
    """Finite MDP abstraction with exact Gaussian cell probabilities"""

    def __init__(
        self,
        dynamics: DynamicsService,
        memory_cap_gb: float = 4.0,
        threads: int = 1,
        sparsity_floor: float = SPARSITY_FLOOR,
        window_sigmas: float = WINDOW_SIGMAS,
    ):
        self.dynamics = dynamics
        self.memory_cap_gb = memory_cap_gb
        self.threads = max(1, int(threads))
        self.sparsity_floor = sparsity_floor
        self.window_sigmas = window_sigmas

    def _dimension_probabilities(
        self, grid: UniformGrid, d: int, means: np.ndarray, sigma: float
    ) -> np.ndarray:
        count = int(grid.counts[d])
        lo, hi, width = grid.lower[d], grid.upper[d], grid.widths[d]
        if sigma == 0:
            k = np.floor((means - lo) / width).astype(np.int64)
            k = np.where((k == count) & (means <= hi), count - 1, k)
            inside = (means >= lo) & (means <= hi)
            probs = np.zeros((means.size, count))
            probs[np.nonzero(inside)[0], k[inside]] = 1.0
            return probs
        edges = lo + np.arange(count + 1) * width
        edges[-1] = hi
        cdf = ndtr((edges[None, :] - means[:, None]) / sigma)
        probs = np.diff(cdf, axis=1)
        reach = self.window_sigmas * sigma
        outside = (edges[None, 1:] < means[:, None] - reach) | (edges[None, :-1] > means[:, None] + reach)
        probs[outside] = 0.0
        return probs

    def _cell_probabilities(
        self, spec: SubsystemSpec, grid: UniformGrid, x_hat: np.ndarray, p: int, w_hat: np.ndarray
    ) -> np.ndarray:
        """Dense (B, n_x) cell probabilities for a batch of representatives, floored"""
        zero = np.zeros(spec.n)
        means = self.dynamics.step_concrete(spec, x_hat, p, w_hat, zero)
        sigma = spec.noise_std(p)
        probs = self._dimension_probabilities(grid, 0, means[:, 0], sigma[0])
        for d in range(1, grid.ndim):
            factor = self._dimension_probabilities(grid, d, means[:, d], sigma[d])
            probs = (probs[:, :, None] * factor[:, None, :]).reshape(means.shape[0], -1)
        probs[probs < self.sparsity_floor] = 0.0
        return probs

    def transition_row(
        self, spec: SubsystemSpec, grid: UniformGrid, x_hat, p: int, w_hat
    ) -> Tuple[np.ndarray, np.ndarray, float]:
        """T̂(·|x̂, p, ŵ) as (target cells, probabilities, absorbing mass)"""
        x_hat = np.asarray(x_hat, dtype=float).reshape(1, spec.n)
        w_hat = np.asarray(w_hat, dtype=float).reshape(1, spec.internal_dim)
        if grid.ndim != spec.n:
            raise InvalidInputError("state grid dimension does not match the subsystem")
        probs = self._cell_probabilities(spec, grid, x_hat, p, w_hat)[0]
        targets = np.nonzero(probs)[0]
        kept = probs[targets]
        return targets, kept, max(0.0, 1.0 - float(kept.sum()))

    def estimate_memory_gb(
        self, spec: SubsystemSpec, state_grid: UniformGrid, input_grid: UniformGrid
    ) -> float:
        """Upper estimate of the sparse storage: entries within the ±window per row"""
        rows = state_grid.size * spec.mode_count * input_grid.size
        sigma = np.max([spec.noise_std(p) for p in range(spec.mode_count)], axis=0)
        per_row = 1
        for d in range(state_grid.ndim):
            span = 1 if sigma[d] == 0 else math.ceil(2 * self.window_sigmas * sigma[d] / state_grid.widths[d]) + 2
            per_row *= min(int(state_grid.counts[d]), span)
        return (rows * per_row * BYTES_PER_ENTRY + rows * BYTES_PER_ROW) / 1e9

    def _build_block(self, spec, state_grid, centers, p, w_hat, w_cell, mode_count, n_inputs):
        rows: List[np.ndarray] = []
        cols: List[np.ndarray] = []
        data: List[np.ndarray] = []
        absorbing = np.empty(state_grid.size)
        chunk = max(1, CHUNK_ENTRIES // state_grid.size)
        w_batch = np.broadcast_to(w_hat, (1, w_hat.size))
        for start in range(0, state_grid.size, chunk):
            stop = min(start + chunk, state_grid.size)
            probs = self._cell_probabilities(spec, state_grid, centers[start:stop], p, w_batch)
            local, target = np.nonzero(probs)
            x_cells = start + local
            rows.append((x_cells * mode_count + p) * n_inputs + w_cell)
            cols.append(target)
            data.append(probs[local, target])
            absorbing[start:stop] = np.maximum(0.0, 1.0 - probs.sum(axis=1))
        return rows, cols, data, absorbing

    def build_finite_mdp(
        self, spec: SubsystemSpec, state_grid: UniformGrid, input_grid: UniformGrid
    ) -> FiniteMdp:
        """All rows (x̂, p, ŵ) of the abstraction; output is independent of the thread count"""
        if state_grid.ndim != spec.n or input_grid.ndim != spec.internal_dim:
            raise InvalidInputError(f"grids do not match the dimensions of '{spec.name}'")
        estimate = self.estimate_memory_gb(spec, state_grid, input_grid)
        if estimate > self.memory_cap_gb:
            raise MemoryCapError(
                f"abstraction of '{spec.name}' needs about {estimate:.3g} GB, "
                f"cap is {self.memory_cap_gb:g} GB",
                estimate,
            )
        started = time.perf_counter()
        m, n_w = spec.mode_count, input_grid.size
        centers = state_grid.centers()
        input_centers = input_grid.centers()
        tasks = [(p, w_cell) for p in range(m) for w_cell in range(n_w)]

        def run(task):
            p, w_cell = task
            return self._build_block(
                spec, state_grid, centers, p, input_centers[w_cell], w_cell, m, n_w
            )

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                blocks = list(pool.map(run, tasks))
        else:
            blocks = [run(task) for task in tasks]

        row_count = state_grid.size * m * n_w
        absorbing = np.empty(row_count)
        all_rows, all_cols, all_data = [], [], []
        x_cells = np.arange(state_grid.size)
        for (p, w_cell), (rows, cols, data, block_absorbing) in zip(tasks, blocks):
            all_rows.extend(rows)
            all_cols.extend(cols)
            all_data.extend(data)
            absorbing[(x_cells * m + p) * n_w + w_cell] = block_absorbing
        coo = sparse.coo_matrix(
            (
                np.concatenate(all_data) if all_data else np.zeros(0),
                (
                    np.concatenate(all_rows) if all_rows else np.zeros(0, dtype=np.int64),
                    np.concatenate(all_cols) if all_cols else np.zeros(0, dtype=np.int64),
                ),
            ),
            shape=(row_count, state_grid.size),
        )
        transitions = coo.tocsr()
        transitions.sort_indices()
        mdp = FiniteMdp(
            state_grid=state_grid,
            input_grid=input_grid,
            mode_count=m,
            transitions=transitions,
            absorbing=absorbing,
            dwell_time=spec.dwell_time,
            fingerprint=spec.fingerprint(),
        )
        logger.info(
            "abstraction of '%s': %d rows, %d entries, %.2fs",
            spec.name,
            row_count,
            mdp.nnz,
            time.perf_counter() - started,
        )
        return mdp

    def abstract_step(
        self, grid: UniformGrid, spec: SubsystemSpec, x_hat, p: int, w_hat, noise
    ) -> Tuple[int, Optional[np.ndarray]]:
        """f̂_p(x̂, ŵ, ς) = Π_x(f_p(x̂, ŵ, ς)); (ABSORBING, None) outside the box"""
        successor = self.dynamics.step_concrete(spec, x_hat, p, w_hat, noise)
        cell = int(grid.cell_index(successor))
        if cell == ABSORBING:
            return ABSORBING, None
        return cell, grid.center(cell)

    def abstract_step_batch(
        self, grid: UniformGrid, spec: SubsystemSpec, x_hat, p, w_hat, noise
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Batched abstract_step with per-row modes; absorbed rows get NaN representatives"""
        x_hat = np.asarray(x_hat, dtype=float)
        p = np.broadcast_to(np.asarray(p, dtype=int), x_hat.shape[:-1])
        successor = np.full(x_hat.shape, np.nan)
        for mode in np.unique(p):
            rows = p == mode
            successor[rows] = self.dynamics.step_concrete(
                spec, x_hat[rows], int(mode), np.asarray(w_hat)[rows], np.asarray(noise)[rows]
            )
        cells = grid.cell_index(successor)
        reps = np.full(x_hat.shape, np.nan)
        inside = cells != ABSORBING
        if np.any(inside):
            reps[inside] = grid.center(cells[inside])
        return cells, reps
