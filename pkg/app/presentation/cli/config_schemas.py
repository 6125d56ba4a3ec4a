import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Sequence, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.domain.entities.project import (
    BoundPlan,
    CertificatePlan,
    CertificateSourceKind,
    GridPlan,
    Project,
    SimulationPlan,
    SynthesisPlan,
    ValidationPlan,
)
from app.domain.entities.switched_system import (
    Box,
    Connection,
    ModeDynamics,
    NetworkSpec,
    NoiseKind,
    NoiseModel,
    NonlinearityKind,
    SubsystemSpec,
)
from app.domain.errors import ConfigError, SwitchAbsError
from app.settings import DEFAULT_DELTA_F, DEFAULT_KAPPA_CEILING, DEFAULT_LAMBDA_BAR

Matrix = List[List[float]]
T = TypeVar("T")


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BoxSchema(StrictModel):
    lower: List[float]
    upper: List[float]


class NoiseSchema(StrictModel):
    kind: Literal["standard-normal", "scaled-normal", "none"] = "standard-normal"
    sigma: Optional[List[float]] = None


class ModeSchema(StrictModel):
    """x⁺ = A x + E φ(F x) + B + D w + R ς; omitted parts are zero (R: identity)"""

    A: Matrix
    B: Optional[List[float]] = None
    D: Optional[Matrix] = None
    D_per_neighbor: Optional[Matrix] = Field(
        None, description="Block repeated once per incoming connection to form D"
    )
    E: Optional[Matrix] = None
    F: Optional[Matrix] = None
    R: Optional[Matrix] = None
    slope_bound: Optional[float] = Field(None, gt=0)
    nonlinearity: Literal["none", "sine", "custom"] = "none"
    custom_name: Optional[str] = None


class SubsystemSchema(StrictModel):
    name: str = Field(..., min_length=1)
    modes: List[ModeSchema] = Field(..., min_length=1)
    C: Optional[Matrix] = None
    state_box: BoxSchema
    input_box: Optional[BoxSchema] = Field(
        None, description="Defaults to the stacked output ranges of the incoming subsystems"
    )
    dwell_time: int = Field(1, ge=1)
    noise: NoiseSchema = NoiseSchema()


class ConnectionSchema(StrictModel):
    source: int = Field(..., ge=0)
    target: int = Field(..., ge=0)
    selection: Optional[Matrix] = None
    offset: int = Field(0, ge=0)


class NetworkSchema(StrictModel):
    topology: Literal["ring", "fully_connected", "explicit"] = "ring"
    size: Optional[int] = Field(None, ge=1)
    subsystem: Optional[SubsystemSchema] = None
    subsystems: Optional[List[SubsystemSchema]] = None
    connections: List[ConnectionSchema] = Field(default_factory=list)


class GridSchema(StrictModel):
    state_delta: Optional[float] = Field(None, gt=0)
    state_counts: Optional[List[int]] = None
    input_delta: Optional[float] = Field(None, gt=0)
    input_counts: Optional[List[int]] = None


class CertificateSchema(StrictModel):
    source: Literal["file", "derive"]
    path: Optional[str] = None
    matrices: Optional[List[Matrix]] = None
    kappa_bars: Optional[List[float]] = None
    pis: Optional[List[float]] = None
    epsilon: float = Field(2.0, gt=1)
    pi_tilde: Optional[float] = Field(None, gt=0, lt=1)
    delta_c: Optional[float] = Field(None, gt=0)
    common_lyapunov: bool = False
    rho_ceiling: Optional[float] = Field(None, gt=0)


class CompositionSchema(StrictModel):
    lambda_bar: float = Field(DEFAULT_LAMBDA_BAR, gt=1)
    delta_f: float = Field(DEFAULT_DELTA_F, gt=0)
    matched_io: bool = True
    kappa_ceiling: float = Field(DEFAULT_KAPPA_CEILING, gt=0, lt=1)


class MemorySchema(StrictModel):
    width: float = Field(..., gt=0)
    deltas: List[float] = Field(..., min_length=1)
    subsystems: Optional[int] = Field(None, ge=1)


class BoundSchema(StrictModel):
    epsilon: float = Field(1.0, gt=0)
    horizon: int = Field(10, ge=0)
    deltas: List[float] = Field(default_factory=list)
    reference: bool = False
    initial_state: Optional[List[float]] = None
    initial_states: Optional[List[List[float]]] = None
    initial_modes: Optional[List[int]] = None
    memory: Optional[MemorySchema] = None

    @field_validator("deltas")
    @classmethod
    def validate_deltas(cls, deltas: List[float]) -> List[float]:
        if any(d <= 0 for d in deltas):
            raise ValueError("every δ̄ must be positive")
        return deltas


class SynthesisSchema(StrictModel):
    safe_box: Optional[BoxSchema] = None
    safe_boxes: Optional[List[BoxSchema]] = None
    horizon: int = Field(10, ge=0)
    cooperative: bool = False


class SimulationSchema(StrictModel):
    runs: int = Field(1000, ge=1)
    seed: int = Field(0, ge=0)
    horizon: Optional[int] = Field(None, ge=0)
    initial_state: Optional[List[float]] = None
    initial_states: Optional[List[List[float]]] = None
    initial_mode: int = Field(0, ge=0)
    initial_modes: Optional[List[int]] = None
    use_policy: bool = True
    recorded_runs: int = Field(100, ge=0)


class ValidationSchema(StrictModel):
    tuples: int = Field(0, ge=0)
    inner_samples: int = Field(1000, ge=2)
    seed: int = Field(0, ge=0)


class ProjectConfig(StrictModel):
    """Top-level JSON configuration of one pipeline run"""

    name: str = Field(..., min_length=1, max_length=200)
    output_dir: str = "runs"
    threads: int = Field(1, ge=1)
    network: NetworkSchema
    grid: Union[GridSchema, List[GridSchema]]
    certificate: Union[CertificateSchema, List[CertificateSchema]]
    composition: CompositionSchema = CompositionSchema()
    bound: BoundSchema = BoundSchema()
    synthesis: Optional[SynthesisSchema] = None
    simulation: Optional[SimulationSchema] = None
    validation: ValidationSchema = ValidationSchema()


def _dotted(loc: Sequence) -> str:
    return ".".join(str(part) for part in loc)


def parse_config(data: dict) -> ProjectConfig:
    """Validate raw JSON, naming the first offending key on failure"""
    try:
        return ProjectConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = _dotted(first["loc"])
        raise ConfigError(f"{key}: {first['msg']}", key=key)


def read_config(path: Path) -> dict:
    """Raw JSON object of a configuration file"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def load_config(path: Path) -> ProjectConfig:
    return parse_config(read_config(path))


def _broadcast(value: Union[T, List[T]], N: int, key: str) -> List[T]:
    if isinstance(value, list):
        if len(value) == 1:
            return list(value) * N
        if len(value) != N:
            raise ConfigError(f"{key}: expected {N} entries, got {len(value)}", key=key)
        return list(value)
    return [value] * N


def _states(single, many, N: int, key: str) -> Optional[tuple]:
    if many is not None:
        return tuple(np.asarray(s, dtype=float) for s in _broadcast(many, N, key))
    if single is not None:
        return tuple(np.asarray(single, dtype=float) for _ in range(N))
    return None


def _box(schema: BoxSchema) -> Box:
    return Box(schema.lower, schema.upper)


class ProjectBuilder:
    """Turns a validated ProjectConfig into domain objects"""

    def __init__(self, base_dir: Path = Path(".")):
        self.base_dir = Path(base_dir)

    def _subsystem_schemas(self, network: NetworkSchema) -> List[SubsystemSchema]:
        if network.subsystems is not None:
            if network.size is not None and network.size != len(network.subsystems):
                raise ConfigError("network.size does not match network.subsystems", key="network.size")
            return list(network.subsystems)
        if network.subsystem is None:
            raise ConfigError("network needs 'subsystem' or 'subsystems'", key="network.subsystem")
        return [network.subsystem] * (network.size or 1)

    def _connections(self, network: NetworkSchema, outputs: List[int]) -> List[Connection]:
        N = len(outputs)
        if network.topology == "explicit":
            return [
                Connection(
                    c.source,
                    c.target,
                    np.eye(outputs[c.source]) if c.selection is None else np.asarray(c.selection, dtype=float),
                    c.offset,
                )
                for c in network.connections
            ]
        if network.connections:
            raise ConfigError(
                "explicit connections need topology 'explicit'", key="network.connections"
            )
        conns = []
        for i in range(N):
            if network.topology == "ring":
                sources = [(i - 1) % N] if N > 1 else []
            else:
                sources = [j for j in range(N) if j != i]
            offset = 0
            for j in sources:
                conns.append(Connection(j, i, np.eye(outputs[j]), offset))
                offset += outputs[j]
        return conns

    def _mode(self, schema: ModeSchema, n: int, p_bar: int, blocks: int, key: str) -> ModeDynamics:
        A = np.asarray(schema.A, dtype=float)
        if schema.D is not None and schema.D_per_neighbor is not None:
            raise ConfigError(f"{key}: give D or D_per_neighbor, not both", key=key)
        if schema.D_per_neighbor is not None and blocks:
            D = np.hstack([np.asarray(schema.D_per_neighbor, dtype=float)] * blocks)
        elif schema.D is not None:
            D = np.array(schema.D, dtype=float, ndmin=2)
        else:
            D = np.zeros((n, p_bar))
        return ModeDynamics(
            A=A,
            B=np.zeros(n) if schema.B is None else schema.B,
            D=D,
            E=np.zeros((n, 1)) if schema.E is None else schema.E,
            F=np.zeros((1, n)) if schema.F is None else schema.F,
            R=np.eye(n) if schema.R is None else schema.R,
            slope_bound=math.inf if schema.slope_bound is None else schema.slope_bound,
            nonlinearity=NonlinearityKind(schema.nonlinearity),
            custom_name=schema.custom_name,
        )

    def build_network(self, network: NetworkSchema) -> NetworkSpec:
        schemas = self._subsystem_schemas(network)
        templated = network.subsystems is None
        N = len(schemas)
        dims = [len(schema.modes[0].A) for schema in schemas]
        outputs = [
            np.eye(n) if schema.C is None else np.asarray(schema.C, dtype=float)
            for schema, n in zip(schemas, dims)
        ]
        try:
            connections = self._connections(network, [C.shape[0] for C in outputs])
            state_boxes = [_box(s.state_box) for s in schemas]
            subsystems = []
            for i, schema in enumerate(schemas):
                key = "network.subsystem" if templated else f"network.subsystems.{i}"
                incoming = sorted((c for c in connections if c.target == i), key=lambda c: c.offset)
                if schema.input_box is not None:
                    input_box = _box(schema.input_box)
                else:
                    # stacked output ranges of the feeding subsystems
                    images = [
                        state_boxes[c.source].image(c.selection @ outputs[c.source]) for c in incoming
                    ]
                    input_box = Box(
                        np.concatenate([b.lower for b in images]) if images else np.zeros(0),
                        np.concatenate([b.upper for b in images]) if images else np.zeros(0),
                    )
                modes = [
                    self._mode(mode, dims[i], input_box.dim, len(incoming), f"{key}.modes.{p}")
                    for p, mode in enumerate(schema.modes)
                ]
                subsystems.append(
                    SubsystemSpec(
                        name=f"{schema.name}-{i}" if templated and N > 1 else schema.name,
                        modes=modes,
                        C=outputs[i],
                        state_box=state_boxes[i],
                        input_box=input_box,
                        dwell_time=schema.dwell_time,
                        noise=NoiseModel(NoiseKind(schema.noise.kind), schema.noise.sigma),
                    )
                )
            return NetworkSpec(subsystems, connections)
        except ConfigError:
            raise
        except SwitchAbsError as e:
            raise ConfigError(str(e), key="network")

    def _certificate(self, schema: CertificateSchema, key: str) -> CertificatePlan:
        if schema.source == "file":
            if schema.path is None:
                raise ConfigError(f"{key}.path is required for file certificates", key=f"{key}.path")
            path = Path(schema.path)
            if not path.is_absolute():
                path = self.base_dir / path
            if not path.exists():
                raise ConfigError(f"certificate file {path} does not exist", key=f"{key}.path")
            return CertificatePlan(CertificateSourceKind.FILE, path=path)
        for field in ("matrices", "kappa_bars", "pis"):
            if getattr(schema, field) is None:
                raise ConfigError(
                    f"{key}.{field} is required to derive a certificate", key=f"{key}.{field}"
                )
        return CertificatePlan(
            CertificateSourceKind.DERIVE,
            matrices=tuple(np.asarray(M, dtype=float) for M in schema.matrices),
            kappa_bars=tuple(schema.kappa_bars),
            pis=tuple(schema.pis),
            epsilon=schema.epsilon,
            pi_tilde=schema.pi_tilde,
            delta_c=schema.delta_c,
            common_lyapunov=schema.common_lyapunov,
            rho_ceiling=schema.rho_ceiling,
        )

    def build_project(self, config: ProjectConfig) -> Project:
        network = self.build_network(config.network)
        N = network.size
        try:
            grids = [
                GridPlan(
                    state_delta=g.state_delta,
                    state_counts=None if g.state_counts is None else tuple(g.state_counts),
                    input_delta=g.input_delta,
                    input_counts=None if g.input_counts is None else tuple(g.input_counts),
                )
                for g in _broadcast(config.grid, N, "grid")
            ]
        except ConfigError:
            raise
        except SwitchAbsError as e:
            raise ConfigError(str(e), key="grid")
        certificates = [
            self._certificate(c, "certificate" if not isinstance(config.certificate, list) else f"certificate.{i}")
            for i, c in enumerate(_broadcast(config.certificate, N, "certificate"))
        ]
        b = config.bound
        bound = BoundPlan(
            epsilon=b.epsilon,
            horizon=b.horizon,
            deltas=tuple(b.deltas),
            reference=b.reference,
            initial_states=_states(b.initial_state, b.initial_states, N, "bound.initial_states"),
            initial_modes=None if b.initial_modes is None else tuple(_broadcast(b.initial_modes, N, "bound.initial_modes")),
            memory_width=None if b.memory is None else b.memory.width,
            memory_deltas=() if b.memory is None else tuple(b.memory.deltas),
            memory_subsystems=None if b.memory is None else b.memory.subsystems,
        )
        synthesis = None
        if config.synthesis is not None:
            s = config.synthesis
            if s.safe_boxes is not None:
                boxes = [_box(box) for box in _broadcast(s.safe_boxes, N, "synthesis.safe_boxes")]
            elif s.safe_box is not None:
                boxes = [_box(s.safe_box)] * N
            else:
                boxes = [spec.state_box for spec in network.subsystems]
            synthesis = SynthesisPlan(tuple(boxes), s.horizon, s.cooperative)
        simulation = None
        if config.simulation is not None:
            s = config.simulation
            states = _states(s.initial_state, s.initial_states, N, "simulation.initial_states")
            if states is None:
                states = tuple(
                    (spec.state_box.lower + spec.state_box.upper) / 2.0 for spec in network.subsystems
                )
            modes = (
                tuple(_broadcast(s.initial_modes, N, "simulation.initial_modes"))
                if s.initial_modes is not None
                else tuple([s.initial_mode] * N)
            )
            simulation = SimulationPlan(
                runs=s.runs,
                seed=s.seed,
                initial_states=states,
                initial_modes=modes,
                horizon=s.horizon,
                use_policy=s.use_policy,
                recorded_runs=s.recorded_runs,
            )
        out_dir = Path(config.output_dir)
        try:
            return Project(
                name=config.name,
                network=network,
                grids=grids,
                certificates=certificates,
                bound=bound,
                out_dir=out_dir,
                lambda_bar=config.composition.lambda_bar,
                delta_f=config.composition.delta_f,
                matched_io=config.composition.matched_io,
                kappa_ceiling=config.composition.kappa_ceiling,
                synthesis=synthesis,
                simulation=simulation,
                validation=ValidationPlan(
                    config.validation.tuples, config.validation.inner_samples, config.validation.seed
                ),
                threads=config.threads,
            )
        except ConfigError:
            raise
        except SwitchAbsError as e:
            raise ConfigError(str(e))
