import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from app.domain.entities.kinf import KInfFn
from app.domain.errors import CertificateError

PSD_TOLERANCE = 1e-9


class Provenance(Enum):
    PAPER = "paper"
    DERIVED = "derived"


@dataclass(frozen=True)
class LmiReport:
    holds: bool
    min_eigenvalue: float
    max_eigenvalue: float


@dataclass(frozen=True, eq=False)
class SpsfCertificate:
    """Quadratic multiple-Lyapunov certificate V_p(x, x̂) = (x-x̂)ᵀM_p(x-x̂) and its constants.

    `rho_int` is None when the subsystem has no internal input (ρ ≡ 0).
    ψ = psi_coefficient·δ̄².
    """

    M: Tuple[np.ndarray, ...]
    kappa_bar: Tuple[float, ...]
    pi: Tuple[float, ...]
    mu: float
    epsilon: float
    dwell_time: int
    kappa: float
    rho_int: Optional[KInfFn]
    psi_coefficient: float
    alpha: KInfFn
    provenance: Provenance = Provenance.DERIVED
    common_lyapunov: bool = False
    kappa_base: Optional[float] = None
    rho_bar: Optional[KInfFn] = None
    gamma_bar: Optional[float] = None
    pi_tilde: Optional[float] = None
    delta_c: Optional[float] = None
    subsystem: Optional[str] = None
    gamma: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        matrices = []
        for M in self.M:
            arr = np.array(M, dtype=float, ndmin=2)
            arr.setflags(write=False)
            matrices.append(arr)
        object.__setattr__(self, "M", tuple(matrices))
        object.__setattr__(self, "kappa_bar", tuple(float(k) for k in self.kappa_bar))
        object.__setattr__(self, "pi", tuple(float(p) for p in self.pi))
        if not self.gamma:
            object.__setattr__(
                self,
                "gamma",
                tuple(math.sqrt(float(np.linalg.eigvalsh(M).max())) for M in self.M),
            )
        self._validate()

    def _validate(self):
        m = len(self.M)
        if m == 0:
            raise CertificateError("certificate has no Lyapunov matrices")
        if len(self.kappa_bar) != m or len(self.pi) != m:
            raise CertificateError("per-mode constants must match the number of matrices")
        for index, M in enumerate(self.M):
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-12):
                raise CertificateError(f"M_{index} must be symmetric")
            if np.linalg.eigvalsh(M).min() <= 0:
                raise CertificateError(f"M_{index} is not positive definite")
        if any(not 0 < k < 1 for k in self.kappa_bar):
            raise CertificateError("every decay rate must lie in (0, 1)")
        if any(p <= 0 for p in self.pi):
            raise CertificateError("every π_p must be positive")
        if self.mu < 1:
            raise CertificateError(f"μ must be at least 1, got {self.mu}")
        if not self.epsilon > 1:
            raise CertificateError(f"ε must exceed 1, got {self.epsilon}")
        if not 0 < self.kappa < 1:
            raise CertificateError(f"κ must lie in (0, 1), got {self.kappa}")
        if self.psi_coefficient < 0:
            raise CertificateError("ψ coefficient must be non-negative")
        if self.dwell_time < 1:
            raise CertificateError("dwell time must be at least 1")
        if self.mu > 1:
            for k in self.kappa_bar:
                needed = self.epsilon * math.log(self.mu) / math.log(1.0 / k) + 1.0
                if self.dwell_time < needed - 1e-6:
                    raise CertificateError(
                        f"dwell time {self.dwell_time} below required {needed:.4f}"
                    )

    @property
    def mode_count(self) -> int:
        return len(self.M)

    @property
    def n(self) -> int:
        return self.M[0].shape[0]

    def psi(self, delta: float) -> float:
        return self.psi_coefficient * delta**2

    def rho(self, s) -> float:
        return 0.0 if self.rho_int is None else self.rho_int(s)

    def value(self, x, x_hat, mode: int, counter: int = 0) -> float:
        """V(x, x̂, p, l) = κ̄_p^{-l/ε}·eᵀM_p e"""
        e = np.asarray(x, dtype=float) - np.asarray(x_hat, dtype=float)
        scale = 1.0 if self.common_lyapunov else self.kappa_bar[mode] ** (-counter / self.epsilon)
        return float(scale * e @ self.M[mode] @ e)

    def to_dict(self) -> dict:
        def fn(value: Optional[KInfFn]):
            return None if value is None else value.to_dict()

        return {
            "subsystem": self.subsystem,
            "provenance": self.provenance.value,
            "common_lyapunov": self.common_lyapunov,
            "M": [M.tolist() for M in self.M],
            "kappa_bar": list(self.kappa_bar),
            "pi": list(self.pi),
            "gamma": list(self.gamma),
            "mu": self.mu,
            "epsilon": self.epsilon,
            "dwell_time": self.dwell_time,
            "kappa_base": self.kappa_base,
            "rho_bar": fn(self.rho_bar),
            "gamma_bar": self.gamma_bar,
            "pi_tilde": self.pi_tilde,
            "delta_c": self.delta_c,
            "kappa": self.kappa,
            "rho_int": fn(self.rho_int),
            "psi_coefficient": self.psi_coefficient,
            "alpha": self.alpha.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpsfCertificate":
        def fn(value):
            return None if value is None else KInfFn.from_dict(value)

        try:
            return cls(
                M=tuple(np.array(M, dtype=float) for M in data["M"]),
                kappa_bar=tuple(data["kappa_bar"]),
                pi=tuple(data["pi"]),
                mu=float(data["mu"]),
                epsilon=float(data["epsilon"]),
                dwell_time=int(data["dwell_time"]),
                kappa=float(data["kappa"]),
                rho_int=fn(data.get("rho_int")),
                psi_coefficient=float(data["psi_coefficient"]),
                alpha=KInfFn.from_dict(data["alpha"]),
                provenance=Provenance(data.get("provenance", "derived")),
                common_lyapunov=bool(data.get("common_lyapunov", False)),
                kappa_base=data.get("kappa_base"),
                rho_bar=fn(data.get("rho_bar")),
                gamma_bar=data.get("gamma_bar"),
                pi_tilde=data.get("pi_tilde"),
                delta_c=data.get("delta_c"),
                subsystem=data.get("subsystem"),
                gamma=tuple(data.get("gamma", ())),
            )
        except KeyError as e:
            raise CertificateError(f"certificate is missing field {e.args[0]}")
