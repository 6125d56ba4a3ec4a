import math
from dataclasses import dataclass

import numpy as np

from app.domain.errors import InvalidInputError


@dataclass(frozen=True)
class KInfFn:
    """Power-law class-K∞ function s ↦ c·s^q.

    The family is closed under composition and inversion, which is all the
    gain algebra of the small-gain check needs.
    """

    coefficient: float
    exponent: float

    def __post_init__(self):
        self._validate()

    def _validate(self):
        if not (self.coefficient > 0 and math.isfinite(self.coefficient)):
            raise InvalidInputError(
                f"K-infinity coefficient must be positive, got {self.coefficient}"
            )
        if not (self.exponent > 0 and math.isfinite(self.exponent)):
            raise InvalidInputError(
                f"K-infinity exponent must be positive, got {self.exponent}"
            )

    @classmethod
    def identity(cls) -> "KInfFn":
        return cls(1.0, 1.0)

    @classmethod
    def linear(cls, slope: float) -> "KInfFn":
        return cls(float(slope), 1.0)

    @classmethod
    def quadratic(cls, coefficient: float) -> "KInfFn":
        return cls(float(coefficient), 2.0)

    def __call__(self, s):
        return self.evaluate(s)

    def evaluate(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise InvalidInputError("K-infinity functions are defined on s >= 0")
        out = self.coefficient * np.power(s, self.exponent)
        return float(out) if out.ndim == 0 else out

    def compose(self, inner: "KInfFn") -> "KInfFn":
        """self ∘ inner"""
        return KInfFn(
            self.coefficient * inner.coefficient**self.exponent,
            self.exponent * inner.exponent,
        )

    def inverse(self) -> "KInfFn":
        return KInfFn(self.coefficient ** (-1.0 / self.exponent), 1.0 / self.exponent)

    def scale(self, factor: float) -> "KInfFn":
        """factor·self, still in the family for factor > 0"""
        return KInfFn(self.coefficient * factor, self.exponent)

    def is_linear(self, tol: float = 1e-12) -> bool:
        return abs(self.exponent - 1.0) <= tol

    @property
    def slope(self) -> float:
        if not self.is_linear():
            raise InvalidInputError(
                f"function {self.coefficient}*s^{self.exponent} has no slope"
            )
        return self.coefficient

    def to_dict(self) -> dict:
        return {"coefficient": self.coefficient, "exponent": self.exponent}

    @classmethod
    def from_dict(cls, data: dict) -> "KInfFn":
        return cls(float(data["coefficient"]), float(data["exponent"]))
