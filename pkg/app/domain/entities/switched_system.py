import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.domain.entities.kinf import KInfFn
from app.domain.errors import InvalidInputError

SLOPE_SPOT_CHECK_PAIRS = 256
SLOPE_TOLERANCE = 1e-9


def _frozen(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, ndmin=ndim)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class NonlinearityKind(Enum):
    NONE = "none"
    SINE = "sine"
    CUSTOM = "custom"


# Scalar maps a config file may reference by name; each entry declares its slope bound.
NONLINEARITY_CATALOG: Dict[str, Tuple[Callable[[np.ndarray], np.ndarray], float]] = {
    "tanh": (np.tanh, 1.0),
    "saturation": (lambda c: np.clip(c, -1.0, 1.0), 1.0),
    "relu": (lambda c: np.maximum(c, 0.0), 1.0),
}


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box [lower, upper] in R^d"""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen(self.lower, 1, "box lower bound"))
        object.__setattr__(self, "upper", _frozen(self.upper, 1, "box upper bound"))
        self._validate()

    def _validate(self):
        if self.lower.shape != self.upper.shape:
            raise InvalidInputError("box bounds have different dimensions")
        if np.any(self.upper < self.lower):
            raise InvalidInputError("box is empty: upper bound below lower bound")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def is_degenerate(self) -> bool:
        return bool(np.any(self.widths <= 0))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clamp(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def image(self, matrix: np.ndarray) -> "Box":
        """Tight interval image of the box under a linear map"""
        center = (self.lower + self.upper) / 2.0
        radius = self.widths / 2.0
        mid = matrix @ center
        rad = np.abs(matrix) @ radius
        return Box(mid - rad, mid + rad)

    def contains_box(self, other: "Box", tol: float = 1e-9) -> bool:
        return bool(
            np.all(other.lower >= self.lower - tol) and np.all(other.upper <= self.upper + tol)
        )

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


class NoiseKind(Enum):
    STANDARD_NORMAL = "standard-normal"
    SCALED_NORMAL = "scaled-normal"
    NONE = "none"


@dataclass(frozen=True, eq=False)
class NoiseModel:
    kind: NoiseKind
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.sigma is not None:
            object.__setattr__(self, "sigma", _frozen(self.sigma, 1, "noise sigma"))
        self._validate()

    def _validate(self):
        if self.kind == NoiseKind.SCALED_NORMAL:
            if self.sigma is None or np.any(self.sigma <= 0):
                raise InvalidInputError("scaled-normal noise requires positive sigma entries")

    def std(self, n: int) -> np.ndarray:
        """Per-dimension standard deviation of the noise vector fed to R_p"""
        if self.kind == NoiseKind.NONE:
            return np.zeros(n)
        if self.kind == NoiseKind.STANDARD_NORMAL:
            return np.ones(n)
        if self.sigma.size == 1:
            return np.full(n, float(self.sigma[0]))
        if self.sigma.size != n:
            raise InvalidInputError(f"noise sigma has {self.sigma.size} entries, expected {n}")
        return np.array(self.sigma)

    def to_dict(self) -> dict:
        data = {"kind": self.kind.value}
        if self.sigma is not None:
            data["sigma"] = self.sigma.tolist()
        return data


@dataclass(frozen=True, eq=False)
class ModeDynamics:
    """One mode of x⁺ = A x + E φ(F x) + B + D w + R ς"""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray
    R: np.ndarray
    slope_bound: float = math.inf
    nonlinearity: NonlinearityKind = NonlinearityKind.NONE
    custom_name: Optional[str] = None
    custom_map: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        for name, ndim in (("A", 2), ("B", 1), ("D", 2), ("E", 2), ("F", 2), ("R", 2)):
            object.__setattr__(self, name, _frozen(getattr(self, name), ndim, name))
        if self.nonlinearity == NonlinearityKind.CUSTOM and self.custom_map is None:
            if self.custom_name not in NONLINEARITY_CATALOG:
                raise InvalidInputError(f"unknown nonlinearity '{self.custom_name}'")
            fn, declared = NONLINEARITY_CATALOG[self.custom_name]
            object.__setattr__(self, "custom_map", fn)
            if math.isinf(self.slope_bound):
                object.__setattr__(self, "slope_bound", declared)
        self._validate()

    def _validate(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise InvalidInputError(f"A must be square, got {self.A.shape}")
        if self.B.shape != (n,):
            raise InvalidInputError(f"B must have {n} entries, got {self.B.shape}")
        if self.D.shape[0] != n:
            raise InvalidInputError(f"D must have {n} rows, got {self.D.shape}")
        if self.E.shape[0] != n or self.F.shape[1] != n or self.E.shape[1] != self.F.shape[0]:
            raise InvalidInputError(
                f"E {self.E.shape} and F {self.F.shape} are inconsistent with n={n}"
            )
        if self.R.shape != (n, n):
            raise InvalidInputError(f"R must be {n}x{n}, got {self.R.shape}")
        if not self.slope_bound > 0:
            raise InvalidInputError("slope bound must be positive or infinite")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def internal_dim(self) -> int:
        return self.D.shape[1]

    def phi(self, c: np.ndarray) -> np.ndarray:
        if self.nonlinearity == NonlinearityKind.NONE:
            return np.zeros_like(c)
        if self.nonlinearity == NonlinearityKind.SINE:
            return np.sin(c)
        return np.asarray(self.custom_map(c), dtype=float)

    def has_nonlinearity(self) -> bool:
        return self.nonlinearity != NonlinearityKind.NONE and bool(np.any(self.E))

    def check_slope(self, lo: float, hi: float, seed: int = 0) -> bool:
        """Spot-check 0 <= (φ(c)-φ(d))/(c-d) <= ā on pairs drawn from [lo, hi]"""
        if self.nonlinearity == NonlinearityKind.NONE:
            return True
        if hi <= lo:
            hi = lo + 1.0
        rng = np.random.default_rng(seed)
        c = rng.uniform(lo, hi, SLOPE_SPOT_CHECK_PAIRS)
        d = rng.uniform(lo, hi, SLOPE_SPOT_CHECK_PAIRS)
        keep = np.abs(c - d) > 1e-9
        ratio = (self.phi(c[keep]) - self.phi(d[keep])) / (c[keep] - d[keep])
        return bool(
            np.all(ratio >= -SLOPE_TOLERANCE) and np.all(ratio <= self.slope_bound + SLOPE_TOLERANCE)
        )

    def to_dict(self) -> dict:
        data = {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "D": self.D.tolist(),
            "E": self.E.tolist(),
            "F": self.F.tolist(),
            "R": self.R.tolist(),
            "slope_bound": None if math.isinf(self.slope_bound) else self.slope_bound,
            "nonlinearity": self.nonlinearity.value,
        }
        if self.custom_name:
            data["custom_name"] = self.custom_name
        return data


@dataclass(frozen=True, eq=False)
class SubsystemSpec:
    name: str
    modes: Tuple[ModeDynamics, ...]
    C: np.ndarray
    state_box: Box
    input_box: Box
    dwell_time: int
    noise: NoiseModel

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "C", _frozen(self.C, 2, "C"))
        self._validate()

    def _validate(self):
        if not self.modes:
            raise InvalidInputError(f"subsystem '{self.name}' has no modes")
        n, p_bar = self.modes[0].n, self.modes[0].internal_dim
        for index, mode in enumerate(self.modes):
            if mode.n != n or mode.internal_dim != p_bar:
                raise InvalidInputError(
                    f"subsystem '{self.name}' mode {index} has inconsistent dimensions"
                )
        if self.C.shape[1] != n:
            raise InvalidInputError(f"C must have {n} columns, got {self.C.shape}")
        if self.state_box.dim != n:
            raise InvalidInputError(f"state box must be {n}-dimensional")
        if self.input_box.dim != p_bar:
            raise InvalidInputError(f"internal input box must be {p_bar}-dimensional")
        if int(self.dwell_time) != self.dwell_time or self.dwell_time < 1:
            raise InvalidInputError("dwell time must be a positive integer")
        self.noise.std(n)
        for index, mode in enumerate(self.modes):
            if mode.nonlinearity == NonlinearityKind.NONE:
                continue
            argument = self.state_box.image(mode.F)
            lo, hi = float(argument.lower.min()), float(argument.upper.max())
            if not mode.check_slope(lo, hi):
                raise InvalidInputError(
                    f"subsystem '{self.name}' mode {index}: nonlinearity violates "
                    f"slope restriction [0, {mode.slope_bound}] on [{lo:.4g}, {hi:.4g}]"
                )

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def internal_dim(self) -> int:
        return self.modes[0].internal_dim

    @property
    def mode_count(self) -> int:
        return len(self.modes)

    @property
    def output_dim(self) -> int:
        return self.C.shape[0]

    def output(self, x) -> np.ndarray:
        return self.C @ np.asarray(x, dtype=float)

    def output_gain(self) -> KInfFn:
        """Output bound ‖Cx - Cx'‖ <= ‖C‖∞·‖x - x'‖"""
        norm = float(np.abs(self.C).sum(axis=1).max()) if self.C.size else 0.0
        return KInfFn.linear(max(norm, 1e-300))

    def noise_std(self, mode: int) -> np.ndarray:
        """Per-dimension std of R_p ς, requiring a diagonal covariance"""
        R = self.modes[mode].R
        sigma = self.noise.std(self.n)
        cov = R @ np.diag(sigma**2) @ R.T
        off = cov - np.diag(np.diag(cov))
        if np.any(np.abs(off) > 1e-12):
            raise InvalidInputError(
                f"subsystem '{self.name}' mode {mode}: noise covariance is not diagonal"
            )
        return np.sqrt(np.diag(cov))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "modes": [mode.to_dict() for mode in self.modes],
            "C": self.C.tolist(),
            "state_box": self.state_box.to_dict(),
            "input_box": self.input_box.to_dict(),
            "dwell_time": int(self.dwell_time),
            "noise": self.noise.to_dict(),
        }

    def fingerprint(self) -> str:
        """Stable digest of the dynamics; identical subsystems share artifacts"""
        payload = self.to_dict()
        payload.pop("name")
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class GlobalState:
    """State (x, p, l) of the dwell-time global MDP"""

    x: np.ndarray
    p: int
    l: int

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x, 1, "x"))
        if self.p < 0 or self.l < 0:
            raise InvalidInputError("mode and counter must be non-negative")

    @classmethod
    def initial(cls, x, p0: int) -> "GlobalState":
        return cls(x, p0, 0)

    def validate_for(self, spec: SubsystemSpec) -> None:
        if self.p >= spec.mode_count:
            raise InvalidInputError(f"mode {self.p} out of range for '{spec.name}'")
        if self.l > spec.dwell_time - 1:
            raise InvalidInputError(
                f"counter {self.l} outside 0..{spec.dwell_time - 1} for '{spec.name}'"
            )
        if self.x.shape != (spec.n,):
            raise InvalidInputError(f"state must have {spec.n} entries")


@dataclass(frozen=True, eq=False)
class Connection:
    """Routes y_ij = S·(C_i x_i) of subsystem `source` into w_j[offset:offset+rows]"""

    source: int
    target: int
    selection: np.ndarray
    offset: int

    def __post_init__(self):
        object.__setattr__(self, "selection", _frozen(self.selection, 2, "selection"))
        if self.source == self.target:
            raise InvalidInputError("a subsystem cannot feed its own internal input")

    @property
    def width(self) -> int:
        return self.selection.shape[0]


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    subsystems: Tuple[SubsystemSpec, ...]
    connections: Tuple[Connection, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        object.__setattr__(self, "connections", tuple(self.connections))
        self._validate()

    def _validate(self):
        N = len(self.subsystems)
        occupied: Dict[int, List[Tuple[int, int]]] = {}
        for conn in self.connections:
            if not (0 <= conn.source < N and 0 <= conn.target < N):
                raise InvalidInputError(f"connection {conn.source}->{conn.target} out of range")
            src, dst = self.subsystems[conn.source], self.subsystems[conn.target]
            if conn.selection.shape[1] != src.output_dim:
                raise InvalidInputError(
                    f"selection for {conn.source}->{conn.target} must have "
                    f"{src.output_dim} columns"
                )
            lo, hi = conn.offset, conn.offset + conn.width
            if lo < 0 or hi > dst.internal_dim:
                raise InvalidInputError(
                    f"connection {conn.source}->{conn.target} exceeds internal input of "
                    f"'{dst.name}'"
                )
            for a, b in occupied.get(conn.target, []):
                if lo < b and a < hi:
                    raise InvalidInputError(
                        f"overlapping internal input blocks on subsystem {conn.target}"
                    )
            occupied.setdefault(conn.target, []).append((lo, hi))
            produced = src.state_box.image(conn.selection @ src.C)
            accepted = Box(dst.input_box.lower[lo:hi], dst.input_box.upper[lo:hi])
            if not accepted.contains_box(produced):
                raise InvalidInputError(
                    f"output range of '{src.name}' does not fit internal input box of "
                    f"'{dst.name}' (Y_ij must be contained in W_ji)"
                )

    @property
    def size(self) -> int:
        return len(self.subsystems)

    def incoming(self, target: int) -> List[Connection]:
        return [c for c in self.connections if c.target == target]

    def adjacency(self) -> np.ndarray:
        """adj[i, j] is True when subsystem j feeds subsystem i"""
        adj = np.zeros((self.size, self.size), dtype=bool)
        for conn in self.connections:
            adj[conn.target, conn.source] = True
        return adj

    @classmethod
    def ring(cls, subsystems: Sequence[SubsystemSpec]) -> "NetworkSpec":
        """w_i = y_{i-1} with y_0 = y_N"""
        N = len(subsystems)
        conns = []
        if N > 1:
            for i in range(N):
                src = (i - 1) % N
                q = subsystems[src].output_dim
                conns.append(Connection(src, i, np.eye(q), 0))
        return cls(tuple(subsystems), tuple(conns))

    @classmethod
    def fully_connected(cls, subsystems: Sequence[SubsystemSpec]) -> "NetworkSpec":
        """w_i stacks the outputs of every other subsystem in index order"""
        N = len(subsystems)
        conns = []
        for i in range(N):
            offset = 0
            for j in range(N):
                if j == i:
                    continue
                q = subsystems[j].output_dim
                conns.append(Connection(j, i, np.eye(q), offset))
                offset += q
        return cls(tuple(subsystems), tuple(conns))
