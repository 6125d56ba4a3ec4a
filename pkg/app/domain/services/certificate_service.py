import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import brentq

from app.domain.entities.certificate import (
    PSD_TOLERANCE,
    LmiReport,
    Provenance,
    SpsfCertificate,
)
from app.domain.entities.finite_mdp import FiniteMdp
from app.domain.entities.kinf import KInfFn
from app.domain.entities.switched_system import GlobalState, ModeDynamics, SubsystemSpec
from app.domain.errors import CertificateError
from app.domain.services.dynamics_service import DynamicsService
from app.domain.services.grid_service import GridService

logger = logging.getLogger(__name__)

PI_TILDE_GRID = np.linspace(0.01, 0.99, 99)
DELTA_C_GRID = np.logspace(-2, 2, 41)


@dataclass(frozen=True)
class FreeParameters:
    pi_tilde: float
    delta_c: float
    kappa: float
    rho_coefficient: float
    psi_coefficient: float


@dataclass(frozen=True)
class SpsfValidationReport:
    tuples: int
    inner_samples: int
    pass_fraction: float
    lower_bound_fraction: float
    worst_margin: float

    def to_dict(self) -> dict:
        return {
            "tuples": self.tuples,
            "inner_samples": self.inner_samples,
            "pass_fraction": self.pass_fraction,
            "lower_bound_fraction": self.lower_bound_fraction,
            "worst_margin": self.worst_margin,
        }


def _symmetric(M, name: str = "M") -> np.ndarray:
    M = np.array(M, dtype=float, ndmin=2)
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-12):
        raise CertificateError(f"{name} must be a symmetric square matrix")
    return M


def _positive_definite(M, name: str = "M") -> np.ndarray:
    M = _symmetric(M, name)
    if np.linalg.eigvalsh(M).min() <= 0:
        raise CertificateError(f"{name} is not positive definite")
    return M


class CertificateService:
    """δ-ISS matrix inequality checks and the SPSF constant pipeline"""

    def __init__(self, dynamics: DynamicsService, grids: GridService):
        self.dynamics = dynamics
        self.grids = grids

    def lmi_residual(self, mode: ModeDynamics, M, kappa_bar: float, pi: float) -> np.ndarray:
        """Right-hand block matrix minus left-hand block matrix of the δ-ISS inequality"""
        M = _symmetric(M)
        A, E, F = mode.A, mode.E, mode.F
        r = E.shape[1]
        inv_slope = 0.0 if math.isinf(mode.slope_bound) else 2.0 / mode.slope_bound
        top_left = kappa_bar * M - (1 + 2 * pi) * A.T @ M @ A
        top_right = -F.T - A.T @ M @ E
        bottom_right = inv_slope * np.eye(r) - (1 + 2 * pi) * E.T @ M @ E
        residual = np.block([[top_left, top_right], [top_right.T, bottom_right]])
        return (residual + residual.T) / 2.0

    def check_lmi(self, mode: ModeDynamics, M, kappa_bar: float, pi: float) -> LmiReport:
        if not 0 < kappa_bar < 1:
            raise CertificateError(f"κ̄ must lie in (0, 1), got {kappa_bar}")
        if pi <= 0:
            raise CertificateError(f"π must be positive, got {pi}")
        eigenvalues = np.linalg.eigvalsh(self.lmi_residual(mode, M, kappa_bar, pi))
        smallest = float(eigenvalues.min())
        return LmiReport(
            holds=smallest >= -PSD_TOLERANCE,
            min_eigenvalue=smallest,
            max_eigenvalue=float(eigenvalues.max()),
        )

    def minimal_kappa(self, mode: ModeDynamics, M, pi: float) -> Optional[float]:
        """Smallest κ̄ in (0, 1) for which the inequality holds, None if there is none"""
        M = _positive_definite(M)
        if not np.any(mode.E) and not np.any(mode.F):
            lhs = (1 + 2 * pi) * mode.A.T @ M @ mode.A
            kappa = float(linalg.eigh(lhs, M, eigvals_only=True).max())
            return kappa if kappa < 1 else None

        def smallest(kappa: float) -> float:
            residual = self.lmi_residual(mode, M, kappa, pi)
            return float(np.linalg.eigvalsh(residual).min()) + PSD_TOLERANCE

        hi = 1.0 - 1e-12
        if smallest(hi) < 0:
            return None
        lo = 1e-12
        if smallest(lo) >= 0:
            return lo
        return float(brentq(smallest, lo, hi, xtol=1e-12))

    def compute_mu(self, matrices: Sequence, method: str = "pairwise") -> float:
        """μ ≥ 1 with V_p <= μ·V_p' for all mode pairs"""
        Ms = [_positive_definite(M, f"M_{index}") for index, M in enumerate(matrices)]
        mu = 1.0
        for p, Mp in enumerate(Ms):
            for q, Mq in enumerate(Ms):
                if p == q or np.allclose(Mp, Mq):
                    continue
                if method == "pairwise":
                    ratio = np.linalg.eigvalsh(Mp).max() / np.linalg.eigvalsh(Mq).min()
                elif method == "generalized":
                    ratio = linalg.eigh(Mp, Mq, eigvals_only=True).max()
                else:
                    raise CertificateError(f"unknown μ method '{method}'")
                mu = max(mu, float(ratio))
        return mu

    def min_dwell_time(self, epsilon: float, mu: float, kappa_bars: Sequence[float]) -> int:
        if not epsilon > 1:
            raise CertificateError(f"ε must exceed 1, got {epsilon}")
        if mu < 1:
            raise CertificateError(f"μ must be at least 1, got {mu}")
        if any(not 0 < k < 1 for k in kappa_bars):
            raise CertificateError("every κ̄_p must lie in (0, 1)")
        if mu == 1:
            return 1
        bound = max(epsilon * math.log(mu) / math.log(1.0 / k) + 1.0 for k in kappa_bars)
        return max(1, math.ceil(bound - 1e-9))

    def max_form(
        self,
        kappa_base: float,
        rho_bar: Optional[KInfFn],
        gamma_bar: float,
        pi_tilde: float,
        delta_c: float,
    ) -> Tuple[float, Optional[KInfFn], float]:
        """(κ, ρ_int, ψ coefficient) from the additive constants"""
        if not 0 < pi_tilde < 1:
            raise CertificateError(f"π̃ must lie in (0, 1), got {pi_tilde}")
        if delta_c <= 0:
            raise CertificateError(f"δ̃_c must be positive, got {delta_c}")
        gap = (1.0 - kappa_base) * pi_tilde
        kappa = 1.0 - (1.0 - pi_tilde) * (1.0 - kappa_base)
        rho = None if rho_bar is None else rho_bar.scale((1.0 + delta_c) / gap)
        psi = (1.0 + 1.0 / delta_c) / gap * gamma_bar
        return kappa, rho, psi

    def tune_free_parameters(
        self,
        kappa_base: float,
        rho_bar: Optional[KInfFn],
        gamma_bar: float,
        kappa_ceiling: float = 0.99,
        rho_ceiling: Optional[float] = None,
    ) -> FreeParameters:
        """Coarse grid search for (π̃, δ̃_c) minimizing ψ subject to κ and ρ ceilings"""
        best: Optional[FreeParameters] = None
        for pi_tilde in PI_TILDE_GRID:
            for delta_c in DELTA_C_GRID:
                kappa, rho, psi = self.max_form(kappa_base, rho_bar, gamma_bar, pi_tilde, delta_c)
                rho_coefficient = 0.0 if rho is None else rho.coefficient
                if kappa > kappa_ceiling:
                    continue
                if rho_ceiling is not None and rho_coefficient > rho_ceiling:
                    continue
                if best is None or psi < best.psi_coefficient:
                    best = FreeParameters(
                        float(pi_tilde), float(delta_c), kappa, rho_coefficient, psi
                    )
        if best is None:
            raise CertificateError(
                f"no free parameters satisfy κ <= {kappa_ceiling}"
                + ("" if rho_ceiling is None else f" and ρ <= {rho_ceiling}")
            )
        return best

    def derive_spsf_constants(
        self,
        spec: SubsystemSpec,
        matrices: Sequence,
        kappa_bars: Sequence[float],
        pis: Sequence[float],
        epsilon: float,
        dwell_time: Optional[int] = None,
        pi_tilde: Optional[float] = None,
        delta_c: Optional[float] = None,
        common_lyapunov: bool = False,
        kappa_ceiling: float = 0.99,
        rho_ceiling: Optional[float] = None,
    ) -> SpsfCertificate:
        """Additive constants per mode, then the max form used for composition"""
        Ms = [_positive_definite(M, f"M_{index}") for index, M in enumerate(matrices)]
        if not (len(Ms) == len(kappa_bars) == len(pis) == spec.mode_count):
            raise CertificateError(f"need one (M, κ̄, π) triple per mode of '{spec.name}'")
        for p, (mode, M, kappa_bar, pi) in enumerate(zip(spec.modes, Ms, kappa_bars, pis)):
            report = self.check_lmi(mode, M, kappa_bar, pi)
            if not report.holds:
                raise CertificateError(
                    f"'{spec.name}' mode {p}: matrix inequality fails "
                    f"(min eigenvalue {report.min_eigenvalue:.3e})"
                )
        if common_lyapunov and any(not np.allclose(M, Ms[0]) for M in Ms):
            raise CertificateError("a common Lyapunov function needs identical matrices")
        mu = 1.0 if common_lyapunov else self.compute_mu(Ms)
        required = self.min_dwell_time(epsilon, mu, kappa_bars)
        if dwell_time is None:
            dwell_time = spec.dwell_time
        if dwell_time < required:
            raise CertificateError(
                f"dwell time {dwell_time} is infeasible, at least {required} is required"
            )

        n, p_bar = spec.n, spec.internal_dim
        if common_lyapunov:
            factors = [1.0] * len(Ms)
            kappa_base = max(kappa_bars)
        else:
            factors = [k ** (-dwell_time / epsilon) for k in kappa_bars]
            kappa_base = max(k ** ((epsilon - 1) / epsilon) for k in kappa_bars)
        rho_slope = 0.0
        gamma_bar = 0.0
        for mode, M, pi, factor in zip(spec.modes, Ms, pis, factors):
            if p_bar and np.any(mode.D):
                gain = float(np.linalg.eigvalsh(mode.D.T @ M @ mode.D).max())
                rho_slope = max(rho_slope, factor * p_bar * (1 + pi + 2 / pi) * gain)
            gamma_bar = max(
                gamma_bar, factor * n * (1 + 3 / pi) * float(np.linalg.eigvalsh(M).max())
            )
        rho_bar = KInfFn.quadratic(rho_slope) if rho_slope > 0 else None

        if pi_tilde is None or delta_c is None:
            tuned = self.tune_free_parameters(
                kappa_base, rho_bar, gamma_bar, kappa_ceiling, rho_ceiling
            )
            pi_tilde = tuned.pi_tilde if pi_tilde is None else pi_tilde
            delta_c = tuned.delta_c if delta_c is None else delta_c
        kappa, rho_int, psi_coefficient = self.max_form(
            kappa_base, rho_bar, gamma_bar, pi_tilde, delta_c
        )

        output = spec.C.T @ spec.C
        out_gain = float(np.linalg.eigvalsh(output).max()) if output.size else 0.0
        lowest = min(float(np.linalg.eigvalsh(M).min()) for M in Ms)
        alpha = KInfFn.quadratic(lowest / (n * out_gain)) if out_gain > 0 else KInfFn.quadratic(lowest)

        certificate = SpsfCertificate(
            M=tuple(Ms),
            kappa_bar=tuple(kappa_bars),
            pi=tuple(pis),
            mu=mu,
            epsilon=epsilon,
            dwell_time=dwell_time,
            kappa=kappa,
            rho_int=rho_int,
            psi_coefficient=psi_coefficient,
            alpha=alpha,
            provenance=Provenance.DERIVED,
            common_lyapunov=common_lyapunov,
            kappa_base=kappa_base,
            rho_bar=rho_bar,
            gamma_bar=gamma_bar,
            pi_tilde=pi_tilde,
            delta_c=delta_c,
            subsystem=spec.name,
        )
        logger.info(
            "certificate for '%s': μ=%.4f k_d=%d κ=%.4f ψ=%.4g·δ̄²",
            spec.name,
            mu,
            dwell_time,
            kappa,
            psi_coefficient,
        )
        return certificate

    def verify_certificate(self, certificate: SpsfCertificate, spec: SubsystemSpec) -> List[LmiReport]:
        """LMI-check every mode; paper-provenance failures are logged, derived ones raise"""
        if certificate.mode_count != spec.mode_count or certificate.n != spec.n:
            raise CertificateError(f"certificate does not match subsystem '{spec.name}'")
        reports = []
        for p, mode in enumerate(spec.modes):
            report = self.check_lmi(
                mode, certificate.M[p], certificate.kappa_bar[p], certificate.pi[p]
            )
            reports.append(report)
            if report.holds:
                continue
            message = (
                f"'{spec.name}' mode {p}: matrix inequality fails with κ̄={certificate.kappa_bar[p]} "
                f"(min eigenvalue {report.min_eigenvalue:.3e})"
            )
            if certificate.provenance == Provenance.PAPER:
                logger.warning("%s; keeping published certificate", message)
            else:
                raise CertificateError(message)
        return reports

    def validate_spsf_empirical(
        self,
        certificate: SpsfCertificate,
        spec: SubsystemSpec,
        mdp: FiniteMdp,
        tuples: int = 1000,
        inner_samples: int = 1000,
        seed: int = 0,
    ) -> SpsfValidationReport:
        """Sampled check of the SPSF lower bound and the expected-decrease condition"""
        if mdp.state_grid.ndim != spec.n or mdp.mode_count != spec.mode_count:
            raise CertificateError("abstraction and subsystem do not match")
        rng = np.random.Generator(np.random.Philox(seed))
        delta = mdp.state_grid.delta
        psi = certificate.psi(delta)
        k_d = certificate.dwell_time
        box, w_box = spec.state_box, spec.input_box
        passed = 0
        lower_ok = 0
        worst = -math.inf
        std = spec.noise.std(spec.n)
        for _ in range(tuples):
            x = rng.uniform(box.lower, box.upper)
            x_hat = mdp.state_grid.center(int(rng.integers(mdp.n_states)))
            w = rng.uniform(w_box.lower, w_box.upper)
            w_hat = mdp.input_grid.center(int(rng.integers(mdp.n_inputs)))
            p = int(rng.integers(spec.mode_count))
            l = int(rng.integers(k_d))
            request = p if l < k_d - 1 else int(rng.integers(spec.mode_count))
            p_next, l_next = self.dynamics.dwell_step(GlobalState(x, p, l), request, k_d)

            noise = rng.standard_normal((inner_samples, spec.n)) * std
            x_next = self.dynamics.step_concrete(spec, x, p, w, noise)
            x_hat_next = self.grids.quantize_lattice(
                mdp.state_grid, self.dynamics.step_concrete(spec, x_hat, p, w_hat, noise)
            )
            error = x_next - x_hat_next
            scale = (
                1.0
                if certificate.common_lyapunov
                else certificate.kappa_bar[p_next] ** (-l_next / certificate.epsilon)
            )
            values = scale * np.einsum("si,ij,sj->s", error, certificate.M[p_next], error)
            mean = float(values.mean())
            margin = 3.0 * float(values.std(ddof=1)) / math.sqrt(inner_samples) if inner_samples > 1 else 0.0

            current = certificate.value(x, x_hat, p, l)
            gap = float(np.max(np.abs(w - w_hat))) if w.size else 0.0
            bound = max(certificate.kappa * current, certificate.rho(gap), psi)
            worst = max(worst, mean - bound - margin)
            if mean <= bound + margin:
                passed += 1
            output_gap = float(np.max(np.abs(spec.output(x) - spec.output(x_hat))))
            if certificate.alpha(output_gap) <= current + 1e-12:
                lower_ok += 1
        report = SpsfValidationReport(
            tuples=tuples,
            inner_samples=inner_samples,
            pass_fraction=passed / tuples,
            lower_bound_fraction=lower_ok / tuples,
            worst_margin=worst,
        )
        logger.info(
            "empirical check of '%s': %.3f of %d tuples pass, lower bound %.3f",
            spec.name,
            report.pass_fraction,
            tuples,
            report.lower_bound_fraction,
        )
        return report
