import logging
import time

import numpy as np

from app.domain.entities.finite_mdp import FiniteMdp
from app.domain.entities.grid import ABSORBING, UniformGrid
from app.domain.entities.policy import Policy, SafetySpec
from app.domain.errors import InvalidInputError

logger = logging.getLogger(__name__)


class RefinedController:
    """Concrete switching controller: the abstract policy looked up through Π_x"""

    def __init__(self, policy: Policy, grid: UniformGrid):
        if not policy.grid.same_as(grid):
            raise InvalidInputError("policy was synthesized on a different grid")
        self.policy = policy
        self.grid = grid

    def __call__(self, x, p: int, l: int, k: int) -> int:
        return int(self.choose(np.asarray(x, dtype=float)[None, :], np.array([p]), np.array([l]), k)[0])

    def choose(self, x: np.ndarray, p: np.ndarray, l: np.ndarray, k: int) -> np.ndarray:
        """Batched lookup; out-of-box points and steps past the horizon keep their mode"""
        p = np.asarray(p, dtype=int)
        l = np.asarray(l, dtype=int)
        if not 0 <= k < self.policy.horizon:
            return p.copy()
        cells = self.grid.cell_index(x)
        inside = cells != ABSORBING
        choice = p.copy()
        choice[inside] = self.policy.choice[k, cells[inside], p[inside], l[inside]]
        return choice


class SynthesisService:
    """Max-min safety value iteration over the dwell-time augmented abstraction"""

    def safety_value_iteration(
        self,
        mdp: FiniteMdp,
        safety: SafetySpec,
        dwell_time: int,
        cooperative: bool = False,
    ) -> Policy:
        """V_k(x̂,p,l) = 1{safe}·max_ν min_ŵ Σ T̂(x̂'|x̂,p,ŵ)·V_{k+1}(x̂', dwell_step(p,l,ν)).

        The absorbing state is unsafe. Ties go to the lowest mode index.
        """
        if mdp.dwell_time != dwell_time:
            raise InvalidInputError(
                f"abstraction was built for dwell time {mdp.dwell_time}, got {dwell_time}"
            )
        started = time.perf_counter()
        n_x, m, n_w, k_d = mdp.n_states, mdp.mode_count, mdp.n_inputs, dwell_time
        T = safety.horizon
        safe = safety.safe_cells(mdp.state_grid)
        value = np.empty((T + 1, n_x, m, k_d))
        choice = np.empty((T, n_x, m, k_d), dtype=np.int8)
        value[T] = safe[:, None, None]
        modes = np.arange(m)
        for k in range(T - 1, -1, -1):
            expected = mdp.transitions @ value[k + 1].reshape(n_x, m * k_d)
            expected = np.asarray(expected).reshape(n_x, m, n_w, m, k_d)
            # worst (or best) internal input per (x̂, p, p', l')
            q = expected.max(axis=2) if cooperative else expected.min(axis=2)
            step_value = np.empty((n_x, m, k_d))
            step_choice = np.empty((n_x, m, k_d), dtype=np.int8)
            for l in range(k_d - 1):
                step_value[:, :, l] = q[:, modes, modes, l + 1]
                step_choice[:, :, l] = modes[None, :]
            # counter saturated: staying keeps k_d - 1, switching resets to 0
            candidates = q[:, :, :, 0].copy()
            candidates[:, modes, modes] = q[:, modes, modes, k_d - 1]
            best = np.argmax(candidates, axis=2)
            step_choice[:, :, k_d - 1] = best
            step_value[:, :, k_d - 1] = np.take_along_axis(candidates, best[:, :, None], axis=2)[:, :, 0]
            value[k] = safe[:, None, None] * step_value
            choice[k] = step_choice
        policy = Policy(
            choice=choice,
            value=value,
            grid=mdp.state_grid,
            dwell_time=dwell_time,
            fingerprint=mdp.fingerprint or "",
        )
        logger.info(
            "value iteration: %d states x %d modes x %d counters, horizon %d, %.2fs",
            n_x,
            m,
            k_d,
            T,
            time.perf_counter() - started,
        )
        return policy

    def refine_policy(self, policy: Policy, grid: UniformGrid) -> RefinedController:
        return RefinedController(policy, grid)

    def stationary_choice(self, policy: Policy) -> np.ndarray:
        """Choice table at k = 0, indexed (x̂, p, l)"""
        if policy.horizon == 0:
            raise InvalidInputError("a zero-horizon policy has no choices")
        return policy.choice[0].copy()
