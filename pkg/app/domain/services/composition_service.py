import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.domain.entities.certificate import SpsfCertificate
from app.domain.entities.gain_graph import ComposedSsf, GainGraph, SmallGainResult
from app.domain.entities.grid import UniformGrid
from app.domain.entities.kinf import KInfFn
from app.domain.entities.switched_system import NetworkSpec
from app.domain.errors import CompositionError, InvalidInputError, UnsupportedGainError

logger = logging.getLogger(__name__)

FEASIBILITY_MARGIN = 1e-12


def _decompose_cycles(walk: List[int]) -> List[List[int]]:
    """Split a vertex walk into the simple cycles it closes"""
    cycles = []
    stack: List[int] = []
    position = {}
    for v in walk:
        if v in position:
            start = position[v]
            cycles.append(stack[start:])
            for u in stack[start:]:
                del position[u]
            stack = stack[:start]
        position[v] = len(stack)
        stack.append(v)
    return cycles


class CompositionService:
    """Small-gain composition of subsystem certificates into a network certificate"""

    def assemble_gains(
        self,
        certificates: Sequence[SpsfCertificate],
        net: NetworkSpec,
        lambda_bar: KInfFn,
        delta_f: KInfFn,
    ) -> GainGraph:
        """κ_ij = (I + δ̃_f)∘ρ_i∘λ̄∘α_j⁻¹ on every edge j → i"""
        if len(certificates) != net.size:
            raise InvalidInputError(f"expected {net.size} certificates, got {len(certificates)}")
        if not lambda_bar.is_linear() or lambda_bar.slope <= 1:
            raise UnsupportedGainError("λ̄ must be linear with slope greater than 1")
        if not delta_f.is_linear():
            raise UnsupportedGainError("δ̃_f must be linear so that I + δ̃_f stays a power law")
        outer = KInfFn.linear(1.0 + delta_f.slope)
        N = net.size
        gains = np.zeros((N, N))
        functions = {}
        adjacency = net.adjacency()
        for i in range(N):
            rho = certificates[i].rho_int
            for j in range(N):
                if i == j or not adjacency[i, j] or rho is None:
                    continue
                gain = outer.compose(rho).compose(lambda_bar).compose(certificates[j].alpha.inverse())
                if not gain.is_linear(1e-9):
                    raise UnsupportedGainError(
                        f"gain {j}->{i} is {gain.coefficient:.4g}·s^{gain.exponent:.4g}, not linear"
                    )
                gains[i, j] = gain.coefficient
                functions[(i, j)] = gain
        kappa = np.array([c.kappa for c in certificates])
        return GainGraph(kappa=kappa, gains=gains, functions=functions)

    def max_cycle_mean(self, weights: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        """Karp's maximum cycle mean on log-weights (-inf = no edge).

        weights[i, j] is the weight of edge j → i. Returns (λ*, walk table, predecessor table).
        """
        N = weights.shape[0]
        table = np.full((N + 1, N), -np.inf)
        pred = np.full((N + 1, N), -1, dtype=int)
        table[0] = 0.0
        for k in range(1, N + 1):
            candidates = weights + table[k - 1][None, :]
            pred[k] = np.argmax(candidates, axis=1)
            table[k] = candidates[np.arange(N), pred[k]]
        best = -np.inf
        for v in range(N):
            if not np.isfinite(table[N, v]):
                continue
            with np.errstate(invalid="ignore"):
                ratios = [
                    (table[N, v] - table[k, v]) / (N - k)
                    for k in range(N)
                    if np.isfinite(table[k, v])
                ]
            if ratios:
                best = max(best, min(ratios))
        return float(best), table, pred

    def _witness(self, weights: np.ndarray, pred: np.ndarray) -> Tuple[List[int], float]:
        N = weights.shape[0]
        best_cycle: List[int] = []
        best_mean = -np.inf
        for end in range(N):
            walk = [end]
            v = end
            for k in range(N, 0, -1):
                v = int(pred[k, v])
                if v < 0:
                    break
                walk.append(v)
            walk.reverse()
            for cycle in _decompose_cycles(walk):
                edges = zip(cycle, cycle[1:] + cycle[:1])
                total = sum(weights[b, a] for a, b in edges)
                mean = total / len(cycle)
                if np.isfinite(mean) and mean > best_mean:
                    best_cycle, best_mean = cycle, mean
        return best_cycle, float(best_mean)

    def check_small_gain(self, graph: GainGraph) -> SmallGainResult:
        """Every cycle gain below 1, decided by the maximum cycle mean of log-gains"""
        full = graph.full_matrix()
        with np.errstate(divide="ignore"):
            weights = np.where(full > 0, np.log(np.where(full > 0, full, 1.0)), -np.inf)
        mean, _, pred = self.max_cycle_mean(weights)
        feasible = mean < -FEASIBILITY_MARGIN
        N = graph.size
        if not feasible:
            cycle, cycle_mean = self._witness(weights, pred)
            product = float(np.exp(cycle_mean * len(cycle))) if cycle else None
            logger.info("small-gain condition fails, witness cycle %s with gain %s", cycle, product)
            return SmallGainResult(
                feasible=False,
                max_cycle_mean=mean,
                sigma=np.ones(N),
                witness_cycle=cycle,
                witness_product=product,
            )

        sigma = np.ones(N)
        scaled = float(full.max())
        identity = scaled < 1.0
        if not identity:
            # longest-path potentials on weights shifted by half the cycle-mean margin
            shifted = weights - mean / 2.0
            potential = np.zeros(N)
            for _ in range(N):
                potential = np.maximum(potential, np.max(shifted + potential[None, :], axis=1))
            sigma = np.exp(potential - potential.min())
            scaled = float(self.scaled_max(full, sigma))
        if scaled >= 1.0:
            raise CompositionError(f"σ-scaling failed: scaled gain {scaled:.6f} is not below 1")
        logger.info(
            "small-gain condition holds: max cycle gain %.4f, scaled gain %.4f",
            math.exp(mean),
            scaled,
        )
        return SmallGainResult(
            feasible=True,
            max_cycle_mean=mean,
            sigma=sigma,
            scaled_max=scaled,
            identity_sigma=identity,
        )

    def scaled_max(self, full: np.ndarray, sigma: np.ndarray) -> float:
        """max_{i,j} s_i⁻¹·κ_ij·s_j"""
        return float((full * sigma[None, :] / sigma[:, None]).max())

    def quantization_matrix(self, net: NetworkSpec, input_grids: Sequence[UniformGrid]) -> np.ndarray:
        """mu_bar[i, j]: infinity-norm quantization error of the block j feeds into w_i"""
        mu_bar = np.zeros((net.size, net.size))
        for conn in net.connections:
            widths = input_grids[conn.target].widths[conn.offset : conn.offset + conn.width]
            mu_bar[conn.target, conn.source] = float(widths.max()) if widths.size else 0.0
        return mu_bar

    def mismatched_interfaces(
        self,
        net: NetworkSpec,
        state_grids: Sequence[UniformGrid],
        input_grids: Sequence[UniformGrid],
        tol: float = 1e-9,
    ) -> List[Tuple[int, int]]:
        """(source, target) pairs whose quantized outputs are not input-grid centers"""
        mismatched = []
        for conn in net.connections:
            if conn.width == 0:
                continue
            block = slice(conn.offset, conn.offset + conn.width)
            target = input_grids[conn.target]
            lower, widths, counts = target.lower[block], target.widths[block], target.counts[block]
            route = conn.selection @ net.subsystems[conn.source].C
            outputs = state_grids[conn.source].centers() @ route.T
            position = (outputs - lower) / widths - 0.5
            nearest = np.rint(position)
            scale = max(1.0, float(np.abs(outputs).max(initial=0.0)))
            on_center = np.abs(position - nearest) * widths <= tol * scale
            in_range = (nearest >= 0) & (nearest <= counts - 1)
            if not np.all(on_center & in_range):
                mismatched.append((conn.source, conn.target))
        return mismatched

    def compose_ssf(
        self,
        certificates: Sequence[SpsfCertificate],
        graph: GainGraph,
        result: SmallGainResult,
        deltas: Sequence[float],
        matched_io: bool = True,
        mu_bar: Optional[np.ndarray] = None,
        lambda_bar: Optional[KInfFn] = None,
        delta_f: Optional[KInfFn] = None,
    ) -> ComposedSsf:
        """Network constants (κ, ψ, α) of V = max_i σ_i⁻¹(V_i)"""
        if not result.feasible:
            raise CompositionError("small-gain condition does not hold")
        N = graph.size
        if len(certificates) != N or len(deltas) != N:
            raise InvalidInputError("one certificate and one δ̄ per subsystem are required")
        sigma = np.asarray(result.sigma, dtype=float)
        kappa = self.scaled_max(graph.full_matrix(), sigma)
        psi_i = np.array([c.psi(d) for c, d in zip(certificates, deltas)])

        if matched_io or N == 1:
            psi = float(np.max(psi_i / sigma))
        else:
            if mu_bar is None or lambda_bar is None or delta_f is None:
                raise CompositionError("unmatched interfaces need μ̄, λ̄ and δ̃_f")
            psi = self.unmatched_psi(certificates, sigma, deltas, mu_bar, lambda_bar, delta_f)

        exponents = {round(c.alpha.exponent, 12) for c in certificates}
        if len(exponents) != 1:
            raise CompositionError("lower bounds α_i with different exponents cannot be combined")
        beta = max(
            (c.alpha.inverse().compose(KInfFn.linear(s)) for c, s in zip(certificates, sigma)),
            key=lambda fn: fn.coefficient,
        )
        alpha = beta.inverse()

        composed = ComposedSsf(
            kappa=kappa,
            psi=psi,
            alpha=alpha,
            sigma=sigma,
            matched_io=matched_io,
            evaluator=lambda a, a_hat, p0: self.initial_value(certificates, sigma, a, a_hat, p0),
        )
        logger.info("composed certificate: κ=%.4f ψ=%.4g α=%.4g·s^%g", kappa, psi, alpha.coefficient, alpha.exponent)
        return composed

    def unmatched_psi(
        self,
        certificates: Sequence[SpsfCertificate],
        sigma: Sequence[float],
        deltas: Sequence[float],
        mu_bar: np.ndarray,
        lambda_bar: KInfFn,
        delta_f: KInfFn,
    ) -> float:
        """ψ when neighbor outputs are re-quantized onto the input grids"""
        sigma = np.asarray(sigma, dtype=float)
        mu_bar = np.asarray(mu_bar, dtype=float)
        stretch = lambda_bar.slope / (lambda_bar.slope - 1.0)
        lam = np.empty(len(certificates))
        for i, (c, d) in enumerate(zip(certificates, deltas)):
            others = np.delete(mu_bar[i], i)
            worst = float(others.max()) if others.size else 0.0
            lam[i] = (1.0 + 1.0 / delta_f.slope) * (c.rho(stretch * worst) + c.psi(d))
        return float(np.max(lam / sigma))

    def matched_psi_coefficient(
        self, certificates: Sequence[SpsfCertificate], sigma: Sequence[float]
    ) -> float:
        """c with ψ = c·δ̄² for matched interfaces and a common δ̄"""
        return float(max(c.psi_coefficient / s for c, s in zip(certificates, sigma)))

    def initial_value(
        self,
        certificates: Sequence[SpsfCertificate],
        sigma: Sequence[float],
        a: Sequence,
        a_hat: Sequence,
        p0: Sequence[int],
    ) -> float:
        """V(a, â) = max_i σ_i⁻¹·V_i(a_i, â_i) at counter l = 0"""
        if not (len(certificates) == len(sigma) == len(a) == len(a_hat) == len(p0)):
            raise InvalidInputError("one initial state, abstract state and mode per subsystem")
        return max(
            c.value(x, x_hat, int(p), 0) / float(s)
            for c, s, x, x_hat, p in zip(certificates, sigma, a, a_hat, p0)
        )
