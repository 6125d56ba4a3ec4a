import logging
import math
import time
from typing import List, Optional, Sequence

import numpy as np

from app.domain.entities.finite_mdp import FiniteMdp
from app.domain.entities.grid import ABSORBING
from app.domain.entities.rollout import EmpiricalEstimate, RolloutConfig, Trajectories
from app.domain.entities.switched_system import Box, NetworkSpec, SubsystemSpec
from app.domain.errors import DwellViolationError, InvalidInputError
from app.domain.services.abstraction_service import AbstractionService
from app.domain.services.dynamics_service import DynamicsService
from app.domain.services.synthesis_service import RefinedController

logger = logging.getLogger(__name__)


def run_generators(seed: int, runs: int) -> List[np.random.Generator]:
    """One counter-based stream per run, independent of how runs are scheduled"""
    children = np.random.SeedSequence(seed).spawn(runs)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def _binomial(hits: int, runs: int) -> EmpiricalEstimate:
    fraction = hits / runs
    return EmpiricalEstimate(
        fraction=fraction,
        standard_error=math.sqrt(fraction * (1.0 - fraction) / runs),
        runs=runs,
    )


class SimulationService:
    """Paired Monte Carlo rollouts of the concrete network and its abstraction"""

    def __init__(self, dynamics: DynamicsService, abstraction: AbstractionService):
        self.dynamics = dynamics
        self.abstraction = abstraction

    def _step_concrete(self, spec: SubsystemSpec, x, modes, w, noise) -> np.ndarray:
        out = np.empty_like(x)
        for mode in np.unique(modes):
            rows = modes == mode
            out[rows] = self.dynamics.step_concrete(spec, x[rows], int(mode), w[rows], noise[rows])
        return out

    def _quantize_inputs(self, mdp: FiniteMdp, w: np.ndarray) -> np.ndarray:
        if mdp.input_grid.ndim == 0:
            return w
        cells = mdp.input_grid.cell_index(w)
        out = np.full(w.shape, np.nan)
        inside = cells != ABSORBING
        if np.any(inside):
            out[inside] = mdp.input_grid.center(cells[inside])
        return out

    def rollout_pair(
        self,
        net: NetworkSpec,
        abstractions: Sequence[FiniteMdp],
        controllers: Optional[Sequence[Optional[RefinedController]]],
        config: RolloutConfig,
    ) -> Trajectories:
        """Drive network and abstraction with the same switching signal and noise draws.

        Switching requests come from the refined controllers evaluated on the
        abstract states; absorbed abstract states are NaN and keep their mode.
        """
        N = net.size
        if len(abstractions) != N or len(config.initial_states) != N:
            raise InvalidInputError(f"need an abstraction and an initial state for each of {N} subsystems")
        if controllers is None:
            controllers = [None] * N
        started = time.perf_counter()
        R, T = config.runs, config.horizon
        dims = [spec.n for spec in net.subsystems]
        offsets = np.concatenate([[0], np.cumsum(dims)])
        q_dims = [spec.output_dim for spec in net.subsystems]
        q_offsets = np.concatenate([[0], np.cumsum(q_dims)])

        draws = np.stack([g.standard_normal((T, offsets[-1])) for g in run_generators(config.seed, R)])
        stds = [spec.noise.std(spec.n) for spec in net.subsystems]

        x = [np.tile(a, (R, 1)) for a in config.initial_states]
        if config.initial_abstract_states is not None:
            x_hat = [np.tile(a, (R, 1)) for a in config.initial_abstract_states]
        else:
            x_hat = []
            for mdp, a in zip(abstractions, config.initial_states):
                cell = int(mdp.state_grid.cell_index(a))
                rep = np.full(a.shape, np.nan) if cell == ABSORBING else mdp.state_grid.center(cell)
                x_hat.append(np.tile(rep, (R, 1)))
        modes = np.tile(np.asarray(config.initial_modes, dtype=int), (R, 1))
        counters = np.zeros((R, N), dtype=int)

        states = np.empty((R, T + 1, offsets[-1]))
        abstract_states = np.empty_like(states)
        concrete = np.empty((R, T + 1, q_offsets[-1]))
        abstract = np.empty((R, T + 1, q_offsets[-1]))
        mode_log = np.empty((R, T + 1, N), dtype=int)
        counter_log = np.empty((R, T + 1, N), dtype=int)

        def record(k: int):
            for i, spec in enumerate(net.subsystems):
                states[:, k, offsets[i] : offsets[i + 1]] = x[i]
                abstract_states[:, k, offsets[i] : offsets[i + 1]] = x_hat[i]
                concrete[:, k, q_offsets[i] : q_offsets[i + 1]] = x[i] @ spec.C.T
                abstract[:, k, q_offsets[i] : q_offsets[i + 1]] = x_hat[i] @ spec.C.T
            mode_log[:, k] = modes
            counter_log[:, k] = counters

        record(0)
        for k in range(T):
            w = self.dynamics.interconnect(net, x, clamp=False)
            w_hat = self.dynamics.interconnect(net, [np.nan_to_num(a, nan=0.0) for a in x_hat], clamp=False)
            requests = modes.copy()
            for i, (spec, mdp, controller) in enumerate(zip(net.subsystems, abstractions, controllers)):
                if controller is not None:
                    requests[:, i] = controller.choose(x_hat[i], modes[:, i], counters[:, i], k)
            for i, (spec, mdp) in enumerate(zip(net.subsystems, abstractions)):
                noise = draws[:, k, offsets[i] : offsets[i + 1]] * stds[i]
                alive = ~np.isnan(x_hat[i]).any(axis=1)
                x_next = self._step_concrete(spec, x[i], modes[:, i], w[i], noise)
                x_hat_next = np.full_like(x_hat[i], np.nan)
                if np.any(alive):
                    w_abs = self._quantize_inputs(mdp, w_hat[i][alive])
                    _, reps = self.abstraction.abstract_step_batch(
                        mdp.state_grid, spec, x_hat[i][alive], modes[alive, i], w_abs, noise[alive]
                    )
                    x_hat_next[alive] = reps
                x[i], x_hat[i] = x_next, x_hat_next
            for i, spec in enumerate(net.subsystems):
                switch = requests[:, i] != modes[:, i]
                if np.any(switch & (counters[:, i] < spec.dwell_time - 1)):
                    raise DwellViolationError(f"controller of '{spec.name}' switched too early at step {k}")
                counters[:, i] = np.where(switch, 0, np.minimum(counters[:, i] + 1, spec.dwell_time - 1))
                modes[:, i] = requests[:, i]
            record(k + 1)
        logger.info("%d paired rollouts over %d steps in %.2fs", R, T, time.perf_counter() - started)
        return Trajectories(
            concrete=concrete,
            abstract=abstract,
            modes=mode_log,
            counters=counter_log,
            states=states,
            abstract_states=abstract_states,
        )

    def empirical_deviation_probability(self, trajectories: Trajectories, epsilon: float) -> EmpiricalEstimate:
        """Fraction of runs with sup_k ‖y(k) - ŷ(k)‖∞ >= ε"""
        if epsilon <= 0:
            raise InvalidInputError(f"ε must be positive, got {epsilon}")
        hits = int(np.count_nonzero(trajectories.sup_deviation() >= epsilon))
        return _binomial(hits, trajectories.runs)

    def empirical_safety(
        self,
        trajectories: Trajectories,
        safe_boxes: Sequence[Box],
        subsystem: Optional[int] = None,
        abstract: bool = False,
    ) -> EmpiricalEstimate:
        """Fraction of runs whose states never leave the safe boxes.

        With abstract=True the abstraction's states are checked; an absorbed
        abstraction counts as unsafe.
        """
        states = trajectories.abstract_states if abstract else trajectories.states
        if states is None:
            raise InvalidInputError(f"trajectories carry no {'abstract' if abstract else 'concrete'} states")
        dims = [box.dim for box in safe_boxes]
        offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
        if offsets[-1] != states.shape[2]:
            raise InvalidInputError("safe boxes do not match the state dimension")
        chosen = range(len(safe_boxes)) if subsystem is None else [subsystem]
        safe = np.ones(trajectories.runs, dtype=bool)
        for i in chosen:
            block = states[:, :, offsets[i] : offsets[i + 1]]
            inside = (block >= safe_boxes[i].lower) & (block <= safe_boxes[i].upper)
            safe &= inside.all(axis=(1, 2))
        return _binomial(int(np.count_nonzero(safe)), trajectories.runs)
