from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from app.domain.entities.switched_system import Box, NetworkSpec
from app.domain.errors import InvalidInputError


class CertificateSourceKind(Enum):
    FILE = "file"
    DERIVE = "derive"


@dataclass(frozen=True, eq=False)
class GridPlan:
    """Target cell width (or explicit counts) for the state and internal-input grids.

    An input grid without delta or counts reuses the state δ̄.
    """

    state_delta: Optional[float] = None
    state_counts: Optional[Tuple[int, ...]] = None
    input_delta: Optional[float] = None
    input_counts: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.state_delta is None and self.state_counts is None:
            raise InvalidInputError("a grid needs a state δ̄ or state counts")


@dataclass(frozen=True, eq=False)
class CertificatePlan:
    source: CertificateSourceKind
    path: Optional[Path] = None
    matrices: Tuple[np.ndarray, ...] = ()
    kappa_bars: Tuple[float, ...] = ()
    pis: Tuple[float, ...] = ()
    epsilon: float = 2.0
    pi_tilde: Optional[float] = None
    delta_c: Optional[float] = None
    common_lyapunov: bool = False
    rho_ceiling: Optional[float] = None

    def __post_init__(self):
        if self.source == CertificateSourceKind.FILE and self.path is None:
            raise InvalidInputError("a certificate file source needs a path")
        if self.source == CertificateSourceKind.DERIVE and not self.matrices:
            raise InvalidInputError("deriving a certificate needs the matrices M_p")


@dataclass(frozen=True, eq=False)
class BoundPlan:
    epsilon: float
    horizon: int
    deltas: Tuple[float, ...] = ()
    reference: bool = False
    initial_states: Optional[Tuple[np.ndarray, ...]] = None
    initial_modes: Optional[Tuple[int, ...]] = None
    memory_width: Optional[float] = None
    memory_deltas: Tuple[float, ...] = ()
    memory_subsystems: Optional[int] = None


@dataclass(frozen=True, eq=False)
class SynthesisPlan:
    safe_boxes: Tuple[Box, ...]
    horizon: int
    cooperative: bool = False


@dataclass(frozen=True, eq=False)
class SimulationPlan:
    runs: int
    seed: int
    initial_states: Tuple[np.ndarray, ...]
    initial_modes: Tuple[int, ...]
    horizon: Optional[int] = None
    use_policy: bool = True
    recorded_runs: int = 100


@dataclass(frozen=True, eq=False)
class ValidationPlan:
    tuples: int = 0
    inner_samples: int = 1000
    seed: int = 0


@dataclass(frozen=True, eq=False)
class Project:
    """Everything one pipeline run needs, after configuration has been resolved"""

    name: str
    network: NetworkSpec
    grids: Tuple[GridPlan, ...]
    certificates: Tuple[CertificatePlan, ...]
    bound: BoundPlan
    out_dir: Path
    lambda_bar: float = 1.1
    delta_f: float = 0.05
    matched_io: bool = True
    kappa_ceiling: float = 0.99
    synthesis: Optional[SynthesisPlan] = None
    simulation: Optional[SimulationPlan] = None
    validation: ValidationPlan = field(default_factory=ValidationPlan)
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "grids", tuple(self.grids))
        object.__setattr__(self, "certificates", tuple(self.certificates))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        self._validate()

    def _validate(self):
        N = self.network.size
        if not self.name:
            raise InvalidInputError("a run needs a name")
        if len(self.grids) != N or len(self.certificates) != N:
            raise InvalidInputError(f"need one grid and one certificate source for each of {N} subsystems")
        if self.synthesis is not None and len(self.synthesis.safe_boxes) != N:
            raise InvalidInputError("need one safe box per subsystem")
        for states in (
            self.bound.initial_states,
            None if self.simulation is None else self.simulation.initial_states,
        ):
            if states is not None and len(states) != N:
                raise InvalidInputError("need one initial state per subsystem")
