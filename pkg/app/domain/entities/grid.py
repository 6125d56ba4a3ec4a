from dataclasses import dataclass

import numpy as np

from app.domain.errors import InvalidInputError

ABSORBING = -1


@dataclass(frozen=True, eq=False)
class UniformGrid:
    """Uniform hyper-interval partition of a box, cells indexed in C order.

    Cells are half-open [lb, ub) except that the upper face of the box
    belongs to the last cell. Representatives are cell centers.
    """

    lower: np.ndarray
    upper: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float, ndmin=1)
        upper = np.array(self.upper, dtype=float, ndmin=1)
        counts = np.array(self.counts, dtype=np.int64, ndmin=1)
        for arr in (lower, upper, counts):
            arr.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)
        self._validate()

    def _validate(self):
        if not (self.lower.shape == self.upper.shape == self.counts.shape):
            raise InvalidInputError("grid bounds and counts have different dimensions")
        if np.any(self.counts < 1):
            raise InvalidInputError("every dimension needs at least one cell")
        if np.any(self.upper <= self.lower):
            raise InvalidInputError("grid box has zero measure")

    @property
    def ndim(self) -> int:
        return self.counts.size

    @property
    def size(self) -> int:
        return int(np.prod(self.counts)) if self.ndim else 1

    @property
    def widths(self) -> np.ndarray:
        return (self.upper - self.lower) / self.counts

    @property
    def delta(self) -> float:
        """Infinity-norm cell diameter"""
        return float(self.widths.max()) if self.ndim else 0.0

    @property
    def strides(self) -> np.ndarray:
        if not self.ndim:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.cumprod(self.counts[::-1])[::-1][1:], [1]]).astype(np.int64)

    def cell_index(self, x) -> np.ndarray:
        """Flat cell index of each point in x (shape (..., d)); ABSORBING when outside"""
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.ndim,):
            raise InvalidInputError(f"points must have {self.ndim} coordinates")
        scaled = np.where(np.isfinite(x), (x - self.lower) / self.widths, -1.0)
        k = np.floor(scaled).astype(np.int64)
        k = np.where((k == self.counts) & (x <= self.upper), self.counts - 1, k)
        inside = np.all((x >= self.lower) & (x <= self.upper), axis=-1)
        flat = (k * self.strides).sum(axis=-1)
        return np.where(inside, flat, ABSORBING)

    def multi_index(self, flat) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        if np.any((flat < 0) | (flat >= self.size)):
            raise InvalidInputError(f"cell index out of range 0..{self.size - 1}")
        return (flat[..., None] // self.strides) % self.counts

    def center(self, flat) -> np.ndarray:
        return self.lower + (self.multi_index(flat) + 0.5) * self.widths

    def centers(self) -> np.ndarray:
        return self.center(np.arange(self.size))

    def cell_bounds(self, flat):
        k = self.multi_index(flat)
        lb = self.lower + k * self.widths
        return lb, lb + self.widths

    def lattice_center(self, x) -> np.ndarray:
        """Nearest center on the unbounded extension of the lattice"""
        x = np.asarray(x, dtype=float)
        k = np.floor((x - self.lower) / self.widths)
        return self.lower + (k + 0.5) * self.widths

    def to_dict(self) -> dict:
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UniformGrid":
        return cls(data["lower"], data["upper"], data["counts"])

    def same_as(self, other: "UniformGrid") -> bool:
        return (
            self.ndim == other.ndim
            and np.array_equal(self.counts, other.counts)
            and np.allclose(self.lower, other.lower)
            and np.allclose(self.upper, other.upper)
        )
