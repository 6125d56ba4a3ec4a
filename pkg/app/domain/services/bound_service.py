import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

from app.domain.entities.bound import BoundQuery, ClosenessRow, MemoryRow
from app.domain.entities.kinf import KInfFn
from app.domain.errors import InvalidInputError

logger = logging.getLogger(__name__)

BYTES_PER_PROBABILITY = 8

# Closeness column published for the 200-cell traffic ring (T_d = 15, ε = 1).
TRAFFIC_CLOSENESS_REFERENCE: Dict[float, float] = {
    0.01: 0.97,
    0.02: 0.88,
    0.03: 0.75,
    0.04: 0.60,
    0.05: 0.44,
    0.06: 0.30,
    0.07: 0.19,
    0.08: 0.11,
    0.09: 0.05,
    0.1: 0.02,
}


def _power(base: float, exponent: int) -> float:
    """base**exponent for base in [0, 1], in log space"""
    if base <= 0:
        return 0.0 if exponent > 0 else 1.0
    return math.exp(exponent * math.log(base))


class BoundService:
    """Probabilistic closeness guarantees and memory estimates"""

    def kushner_branch(
        self, v0: float, epsilon: float, kappa: float, psi: float, horizon: int
    ) -> Tuple[float, int]:
        """(δ, branch) of the finite-horizon supermartingale bound, δ clamped to [0, 1]"""
        if epsilon <= 0:
            raise InvalidInputError(f"ε must be positive, got {epsilon}")
        if not 0 < kappa < 1:
            raise InvalidInputError(f"κ must lie in (0, 1), got {kappa}")
        if psi < 0 or v0 < 0:
            raise InvalidInputError("ψ and V₀ must be non-negative")
        if epsilon >= psi / kappa:
            delta = 1.0 - (1.0 - v0 / epsilon) * _power(1.0 - psi / epsilon, horizon)
            branch = 1
        else:
            decay = _power(1.0 - kappa, horizon)
            delta = (v0 / epsilon) * decay + psi / (kappa * epsilon) * (1.0 - decay)
            branch = 2
        return min(1.0, max(0.0, delta)), branch

    def kushner_delta(self, v0: float, epsilon: float, kappa: float, psi: float, horizon: int) -> float:
        return self.kushner_branch(v0, epsilon, kappa, psi, horizon)[0]

    def closeness_probability(self, query: BoundQuery) -> float:
        """Lower bound on P(sup_k ‖y - ŷ‖ < ε) over the horizon"""
        level = query.alpha(query.epsilon)
        return 1.0 - self.kushner_delta(query.v0, level, query.kappa, query.psi, query.horizon)

    def closeness_table(
        self,
        alpha: KInfFn,
        kappa: float,
        psi_coefficient: float,
        deltas: Sequence[float],
        epsilon: float,
        horizon: int,
        v0: float = 0.0,
        reference: Optional[Dict[float, float]] = None,
        psi_values: Optional[Sequence[float]] = None,
    ) -> List[ClosenessRow]:
        """One row per δ̄ with ψ = psi_coefficient·δ̄², or the given psi_values"""
        if psi_values is not None and len(psi_values) != len(deltas):
            raise InvalidInputError("one ψ per δ̄ is required")
        rows = []
        level = alpha(epsilon)
        for k, delta in enumerate(deltas):
            if delta < 0:
                raise InvalidInputError(f"δ̄ must be non-negative, got {delta}")
            psi = psi_coefficient * delta**2 if psi_values is None else float(psi_values[k])
            BoundQuery(alpha, kappa, psi, epsilon, horizon, v0)  # range checks
            failure, branch = self.kushner_branch(v0, level, kappa, psi, horizon)
            rows.append(
                ClosenessRow(
                    delta=float(delta),
                    psi=psi,
                    branch=branch,
                    guarantee=1.0 - failure,
                    reference=None if reference is None else reference.get(round(delta, 6)),
                )
            )
        return rows

    def paper_closeness_reference(self) -> Dict[float, float]:
        return dict(TRAFFIC_CLOSENESS_REFERENCE)

    def memory_estimate(self, n_x: int, n_w: int, modes: int, subsystems: int) -> Tuple[float, float]:
        """(per-subsystem GB, log10 of monolithic GB) at 8 bytes per probability"""
        for name, value in (("n_x", n_x), ("n_w", n_w), ("modes", modes), ("subsystems", subsystems)):
            if int(value) != value or value < 1:
                raise InvalidInputError(f"{name} must be a positive integer, got {value}")
        per_subsystem = BYTES_PER_PROBABILITY * n_x * modes * n_w * n_x / 1e9
        monolithic = (
            subsystems * (2 * math.log10(n_x) + math.log10(modes))
            + math.log10(BYTES_PER_PROBABILITY)
            - 9
        )
        return per_subsystem, monolithic

    def memory_table(
        self, width: float, deltas: Sequence[float], modes: int, subsystems: int
    ) -> List[MemoryRow]:
        """Memory rows for a box of the given width, with n_x = n_w = ceil(width/δ̄)"""
        rows = []
        for delta in deltas:
            if delta <= 0:
                raise InvalidInputError(f"δ̄ must be positive, got {delta}")
            cells = max(1, math.ceil(round(width / delta, 9)))
            per_subsystem, monolithic = self.memory_estimate(cells, cells, modes, subsystems)
            rows.append(
                MemoryRow(
                    delta=float(delta),
                    n_x=cells,
                    n_w=cells,
                    modes=modes,
                    subsystems=subsystems,
                    per_subsystem_gb=per_subsystem,
                    monolithic_log10_gb=monolithic,
                )
            )
        return rows
