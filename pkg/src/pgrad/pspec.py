"""Laurent polynomials ``P(a) = sum_k c_k a^k`` selecting a P-gradient method."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = ["PSpec", "LABELS"]

LABELS = ("steepest_descent", "minimal_residues", "power", "custom")

POSITIVITY_GRID = 10_000


@dataclass(frozen=True)
class PSpec:
    """Finitely supported Laurent coefficients ``{exponent: c_k}``.

    ``P(A) = A^-1`` is steepest descent and ``P(A) = I`` minimal residues.
    Positivity on ``[m, M]`` depends on the spectrum, so it is checked by
    :meth:`check_positive` rather than at construction.
    """

    coefficients: Mapping[int, float]
    label: str = "custom"
    q: int | None = field(default=None, compare=False)

    def __post_init__(self):
        coeffs = {int(k): float(c) for k, c in dict(self.coefficients).items() if c != 0}
        if not coeffs:
            raise ValueError("P must have at least one nonzero coefficient")
        if not all(np.isfinite(c) for c in coeffs.values()):
            raise ValueError("coefficients must be finite")
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}, expected one of {LABELS}")
        object.__setattr__(self, "coefficients", dict(sorted(coeffs.items())))

    @classmethod
    def steepest_descent(cls) -> "PSpec":
        return cls({-1: 1.0}, "steepest_descent", q=-1)

    @classmethod
    def minimal_residues(cls) -> "PSpec":
        return cls({0: 1.0}, "minimal_residues", q=0)

    @classmethod
    def power(cls, q: int) -> "PSpec":
        """``P(A) = A^q``; q = -1 and q = 0 map to the two named methods."""
        q = int(q)
        if q == -1:
            return cls.steepest_descent()
        if q == 0:
            return cls.minimal_residues()
        return cls({q: 1.0}, "power", q=q)

    @property
    def min_exponent(self) -> int:
        return min(self.coefficients)

    @property
    def max_exponent(self) -> int:
        return max(self.coefficients)

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        out = np.zeros_like(a)
        for k, c in self.coefficients.items():
            out = out + c * a**k
        return out

    def scaled(self, alpha: float) -> "PSpec":
        return PSpec({k: alpha * c for k, c in self.coefficients.items()}, self.label, self.q)

    def check_positive(self, m: float, M: float, n: int = POSITIVITY_GRID) -> None:
        """Raise ``ValueError`` unless ``0 < P(a) < inf`` on an n-point grid of [m, M]."""
        vals = self(np.linspace(m, M, n))
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            bad = float(np.min(vals)) if np.all(np.isfinite(vals)) else float("nan")
            raise ValueError(f"P is not positive on [{m}, {M}] (min value {bad})")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "coefficients": {str(k): c for k, c in self.coefficients.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PSpec":
        label = data.get("label", "custom")
        coeffs = {int(k): float(c) for k, c in data["coefficients"].items()}
        q = None
        if len(coeffs) == 1 and label != "custom":
            q = next(iter(coeffs))
        return cls(coeffs, label, q=q)

    @classmethod
    def parse(cls, text: str) -> "PSpec":
        """Parse ``steepest_descent``, ``minimal_residues``, ``sd``, ``mr`` or ``power:q``."""
        text = text.strip().lower()
        if text in ("steepest_descent", "sd"):
            return cls.steepest_descent()
        if text in ("minimal_residues", "mr"):
            return cls.minimal_residues()
        if text.startswith("power:"):
            return cls.power(int(text.split(":", 1)[1]))
        raise ValueError(f"cannot parse P specification {text!r}")
