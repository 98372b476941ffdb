"""Renormalized gradient dynamics on spectral measures.

A unit renormalized gradient ``z`` puts mass ``[z]_i^2`` on eigenvalue
``lambda_i``.  One P-gradient step acts on that measure through

    nu'(d lambda) = (lambda - mu_1)^2 / D * nu(d lambda),   D = mu_2 - mu_1^2,

which no longer depends on P.  Moments, the monotone quantities ``L`` and
``D`` and the Hankel determinants ``det M``/``det N`` are computed here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .pspec import PSpec
from .quadratic import QuadraticProblem, gradient

__all__ = [
    "FiniteConvergence",
    "SpectralMeasure",
    "MomentVector",
    "Diagnostics",
    "DensitySpec",
    "renormalize",
    "moments",
    "transform",
    "moment_update",
    "diagnostics",
    "discretize_continuous",
    "orbit",
    "MASS_FLOOR",
    "MOMENT_ORDERS",
]

MASS_FLOOR = 1e-300
MOMENT_ORDERS = (-1, 0, 1, 2, 3, 4)


class FiniteConvergence(ArithmeticError):
    """The measure is a point mass, i.e. the iteration has reached x*."""


def _clamp_normalize(w: np.ndarray) -> np.ndarray:
    w = np.where(w < MASS_FLOOR, 0.0, w)
    total = w.sum()
    if not total > 0:
        raise ValueError("measure has no positive mass")
    return w / total


@dataclass(frozen=True)
class SpectralMeasure:
    """Probability measure on finitely many sorted, distinct atoms.

    ``amplitudes`` optionally carries the signed ``[z]_i`` with
    ``[z]_i**2 == masses[i]``.
    """

    lambdas: np.ndarray
    masses: np.ndarray
    amplitudes: np.ndarray | None = None

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=float)
        w = np.array(self.masses, dtype=float)
        if lam.ndim != 1 or lam.shape != w.shape or lam.size == 0:
            raise ValueError("lambdas and masses must be 1-d arrays of equal length")
        if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
            raise ValueError("atoms must be positive and finite")
        if np.any(np.diff(lam) <= 0):
            raise ValueError("atoms must be sorted and distinct; use from_atoms")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("masses must be non-negative and finite")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"masses sum to {w.sum()!r}, expected 1")
        for a in (lam, w):
            a.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "masses", w)
        if self.amplitudes is not None:
            z = np.array(self.amplitudes, dtype=float)
            if z.shape != w.shape:
                raise ValueError("amplitudes must match atoms")
            z.setflags(write=False)
            object.__setattr__(self, "amplitudes", z)

    @classmethod
    def from_atoms(cls, lambdas, masses, amplitudes=None) -> "SpectralMeasure":
        """Sort, merge equal atoms (summing masses), clamp and normalize."""
        lam = np.asarray(lambdas, dtype=float)
        w = np.asarray(masses, dtype=float)
        if np.any(w < 0):
            raise ValueError("masses must be non-negative")
        order = np.argsort(lam, kind="stable")
        lam, w = lam[order], w[order]
        uniq, inverse = np.unique(lam, return_inverse=True)
        if uniq.size < lam.size:
            merged = np.zeros(uniq.size)
            np.add.at(merged, inverse, w)
            lam, w, amplitudes = uniq, merged, None
        elif amplitudes is not None:
            amplitudes = np.asarray(amplitudes, dtype=float)[order]
        w = _clamp_normalize(w)
        if amplitudes is not None:
            amplitudes = np.sign(amplitudes) * np.sqrt(w)
        return cls(lam, w, amplitudes)

    @classmethod
    def two_point(cls, p: float, m: float, M: float) -> "SpectralMeasure":
        """The cycle measure with mass p at m and 1 - p at M."""
        return cls(np.array([m, M]), np.array([p, 1.0 - p]))

    @property
    def active(self) -> np.ndarray:
        return self.masses > 0

    @property
    def support_bounds(self) -> tuple[float, float]:
        lam = self.lambdas[self.active]
        return float(lam[0]), float(lam[-1])

    def moment(self, j: int) -> float:
        return float(np.dot(self.masses, self.lambdas**j))

    def mass_at(self, lam: float) -> float:
        idx = np.searchsorted(self.lambdas, lam)
        if idx < self.lambdas.size and self.lambdas[idx] == lam:
            return float(self.masses[idx])
        return 0.0

    def cdf(self, x: float) -> float:
        return float(self.masses[self.lambdas <= x].sum())


@dataclass(frozen=True)
class MomentVector:
    """``mu_j`` for ``j = -1..4`` (indexable by j)."""

    values: np.ndarray

    def __getitem__(self, j: int) -> float:
        if j not in MOMENT_ORDERS:
            raise KeyError(j)
        return float(self.values[j + 1])

    @property
    def L(self) -> float:
        return self[1] * self[-1]

    @property
    def D(self) -> float:
        return self[2] - self[1] ** 2


@dataclass(frozen=True)
class Diagnostics:
    L: float
    D: float
    detM: float
    detN: float
    r: float


def _hankel_det3(lam: np.ndarray, v: np.ndarray) -> float:
    """det of the 3x3 Hankel matrix of moments 0..4 of the weights ``v``.

    Evaluated as ``h0*h1*h2``, the squared norms of the first three monic
    orthogonal polynomials (Stieltjes procedure).  Each factor is a sum of
    non-negative terms, so the result is never negative and stays
    relatively accurate when the measure is close to two atoms.
    """
    h0 = v.sum()
    if h0 <= 0:
        return 0.0
    a0 = np.dot(v, lam) / h0
    pi1 = lam - a0
    h1 = np.dot(v, pi1 * pi1)
    if h1 <= 0:
        return 0.0
    a1 = np.dot(v, lam * pi1 * pi1) / h1
    pi2 = (lam - a1) * pi1 - h1 / h0
    h2 = np.dot(v, pi2 * pi2)
    return float(h0 * h1 * h2)


def _moment_array(lam: np.ndarray, w: np.ndarray) -> np.ndarray:
    l2 = lam * lam
    return np.array([
        np.dot(w, 1.0 / lam),
        w.sum(),
        np.dot(w, lam),
        np.dot(w, l2),
        np.dot(w, l2 * lam),
        np.dot(w, l2 * l2),
    ])


def _deviations(lam: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``lambda - mu_1`` computed from offsets to the heaviest atom.

    Measuring from the atom carrying the most mass avoids cancellation
    when nearly all mass sits on one atom, or when the atoms cluster far
    from zero.
    """
    delta = lam - lam[int(np.argmax(w))]
    return delta - np.dot(w, delta)


def _diagnostics(lam: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float, float, float, float]:
    """(moments, L, D, detM, detN) for normalized masses ``w`` on ``lam``."""
    mu = _moment_array(lam, w)
    mu1 = mu[2]
    dev = _deviations(lam, w)
    dev2 = dev * dev
    D = float(np.dot(w, dev2))
    # L - 1 = sum w (lambda - mu_1)^2 / (lambda mu_1): non-negative terms
    L = 1.0 + float(np.dot(w, dev2 / lam)) / mu1
    detM = _hankel_det3(lam, w / lam)
    detN = _hankel_det3(lam, w)
    return mu, L, D, detM, detN


def renormalize(problem: QuadraticProblem, pspec: PSpec, x) -> SpectralMeasure:
    """Spectral measure of ``z(x) = B g / ||B g||`` with ``B = [P(A) A]^(1/2)``."""
    g = gradient(problem, x)
    lam = problem.eigenvalues
    bg = np.sqrt(pspec(lam) * lam) * g
    norm = np.linalg.norm(bg)
    if norm == 0:
        raise FiniteConvergence("zero gradient: x is the minimizer")
    z = bg / norm
    return SpectralMeasure.from_atoms(lam, z * z, amplitudes=z)


def moments(nu: SpectralMeasure) -> MomentVector:
    return MomentVector(_moment_array(nu.lambdas, nu.masses))


def transform(nu: SpectralMeasure) -> SpectralMeasure:
    """One step of ``T``: reweight masses by ``(lambda - mu_1)^2 / D``."""
    lam, w = nu.lambdas, nu.masses
    if np.count_nonzero(w) < 2:
        raise FiniteConvergence("point mass: the iteration has converged")
    dev = -_deviations(lam, w)
    w_new = w * dev * dev
    D = w_new.sum()
    if not D > 0:
        raise FiniteConvergence("zero variance")
    w_new = _clamp_normalize(w_new / D)
    amps = None
    if nu.amplitudes is not None:
        amps = np.sign(dev) * np.sign(nu.amplitudes) * np.sqrt(w_new)
    return SpectralMeasure(lam, w_new, amps)


def moment_update(mu: MomentVector, mu5: float, mu6: float) -> MomentVector:
    """Moments after one step of ``T``, from moments up to order 6."""
    ext = np.concatenate((mu.values, [mu5, mu6]))
    mu1, mu2 = mu[1], mu[2]
    denom = mu2 / mu1**2 - 1.0
    if not denom > 0:
        raise FiniteConvergence("zero variance")
    j = np.arange(6)  # index of mu_{j-1}
    new = (ext[j] - 2.0 * ext[j + 1] / mu1 + ext[j + 2] / mu1**2) / denom
    return MomentVector(new)


def diagnostics(nu: SpectralMeasure) -> Diagnostics:
    _, L, D, detM, detN = _diagnostics(nu.lambdas, nu.masses)
    return Diagnostics(L=L, D=D, detM=detM, detN=detN, r=1.0 - 1.0 / L)


def uniform_density(lam):
    return np.ones_like(np.asarray(lam, dtype=float))


@dataclass(frozen=True)
class DensitySpec:
    """A continuous density on ``[a, b]`` within ``[m, M]`` plus optional point masses.

    ``continuous_mass`` is the share of total mass carried by the density;
    point masses in ``atoms`` are ``(lambda, mass)`` pairs and are scaled so
    that everything sums to one.
    """

    m: float
    M: float
    density: Callable = uniform_density
    support: tuple[float, float] | None = None
    atoms: tuple[tuple[float, float], ...] = ()
    continuous_mass: float = 1.0

    def interval(self) -> tuple[float, float]:
        return self.support if self.support is not None else (self.m, self.M)


def discretize_continuous(spec: DensitySpec, n_atoms: int) -> SpectralMeasure:
    """Midpoint rule on a uniform grid; point masses pass through unchanged."""
    if n_atoms < 2:
        raise ValueError("need at least two atoms")
    a, b = spec.interval()
    if not (spec.m <= a < b <= spec.M):
        raise ValueError("density support must be a subinterval of [m, M]")
    h = (b - a) / n_atoms
    grid = a + h * (np.arange(n_atoms) + 0.5)
    dens = np.asarray(spec.density(grid), dtype=float)
    if np.any(dens <= 0) or not np.all(np.isfinite(dens)):
        raise ValueError("density must be positive on its support")
    cont = spec.continuous_mass * dens / dens.sum()
    lam = grid
    w = cont
    if spec.atoms:
        pl = np.array([lm for lm, _ in spec.atoms], dtype=float)
        pw = np.array([ms for _, ms in spec.atoms], dtype=float)
        if np.any(pl < spec.m) or np.any(pl > spec.M):
            raise ValueError("point masses must lie in [m, M]")
        lam = np.concatenate((grid, pl))
        w = np.concatenate((cont, pw))
    return SpectralMeasure.from_atoms(lam, w)


def orbit(nu: SpectralMeasure, n_steps: int) -> Iterator[SpectralMeasure]:
    """Yield ``nu, T nu, ..., T^n nu``; stops early on finite convergence."""
    yield nu
    for _ in range(n_steps):
        try:
            nu = transform(nu)
        except FiniteConvergence:
            return
        yield nu


def orbit_rows(measures: Sequence[SpectralMeasure]) -> list[tuple]:
    """Rows ``k, mu_m1, mu_1, mu_2, L, D, r, detM, detN`` for an orbit log."""
    rows = []
    for k, nu in enumerate(measures):
        mu, L, D, detM, detN = _diagnostics(nu.lambdas, nu.masses)
        rows.append((k, mu[0], mu[2], mu[3], L, D, 1.0 - 1.0 / L, detM, detN))
    return rows


ORBIT_HEADER = ("k", "mu_m1", "mu_1", "mu_2", "L", "D", "r", "detM", "detN")
