"""Quadratic problems stored in the eigenbasis of their operator.

Everything here works on coordinates with respect to the eigenvectors of
``A``, so the operator is just its (sorted) eigenvalue array and
``f(x) = 1/2 (Ax, x) - (x, y)`` with ``y = A x_star``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Spectrum",
    "QuadraticProblem",
    "gradient",
    "objective",
    "apply_power",
    "condition_number",
]


@dataclass(frozen=True)
class Spectrum:
    """Sorted positive eigenvalues with ``0 < m < M``."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size < 2:
            raise ValueError("a spectrum needs at least two eigenvalues")
        if not np.all(np.isfinite(lam)):
            raise ValueError("eigenvalues must be finite")
        lam = np.sort(lam)
        if lam[0] <= 0:
            raise ValueError(f"eigenvalues must be positive, got m={lam[0]}")
        if not lam[0] < lam[-1]:
            raise ValueError("degenerate spectrum: m == M")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def m(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def M(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def d(self) -> int:
        return self.eigenvalues.size


@dataclass(frozen=True)
class QuadraticProblem:
    spectrum: Spectrum
    x_star: np.ndarray

    def __post_init__(self):
        if not isinstance(self.spectrum, Spectrum):
            object.__setattr__(self, "spectrum", Spectrum(self.spectrum))
        xs = np.array(self.x_star, dtype=float)
        if xs.shape != (self.spectrum.d,):
            raise ValueError(
                f"x_star has shape {xs.shape}, expected ({self.spectrum.d},)"
            )
        xs.setflags(write=False)
        object.__setattr__(self, "x_star", xs)

    @classmethod
    def from_eigenvalues(cls, eigenvalues, x_star=None) -> "QuadraticProblem":
        spectrum = Spectrum(eigenvalues)
        if x_star is None:
            x_star = np.zeros(spectrum.d)
        return cls(spectrum, x_star)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectrum.eigenvalues

    @property
    def d(self) -> int:
        return self.spectrum.d

    @property
    def y(self) -> np.ndarray:
        return self.eigenvalues * self.x_star

    @property
    def f_star(self) -> float:
        return -0.5 * float(np.dot(self.eigenvalues * self.x_star, self.x_star))


def _check_dim(problem: QuadraticProblem, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (problem.d,):
        raise ValueError(f"vector has shape {v.shape}, expected ({problem.d},)")
    return v


def gradient(problem: QuadraticProblem, x) -> np.ndarray:
    """``g = A x - y``, i.e. ``lambda_i (x_i - x*_i)`` in eigen-coordinates."""
    x = _check_dim(problem, x)
    return problem.eigenvalues * (x - problem.x_star)


def objective(problem: QuadraticProblem, x) -> float:
    x = _check_dim(problem, x)
    lam = problem.eigenvalues
    return 0.5 * float(np.dot(lam * x, x)) - float(np.dot(x, problem.y))


def apply_power(problem: QuadraticProblem, v, k: int) -> np.ndarray:
    v = _check_dim(problem, v)
    return problem.eigenvalues ** int(k) * v


def condition_number(problem: QuadraticProblem) -> float:
    return problem.spectrum.M / problem.spectrum.m
