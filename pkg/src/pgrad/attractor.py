"""Two-point attractors of the measure dynamics and their stability.

Orbits of ``T`` settle on a 2-cycle ``{p@m, (1-p)@M} <-> {(1-p)@m, p@M}``.
Whether the cycle with parameter p is stable is decided by

    H(nu_p*, lambda) = [M(1-p) + mp - lambda]^2 [Mp + m(1-p) - lambda]^2
                       / (p^2 (1-p)^2 (M-m)^4),

the factor by which two steps of ``T`` multiply mass sitting at lambda.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

from .renorm import (
    FiniteConvergence,
    SpectralMeasure,
    _diagnostics,
    transform,
)

__all__ = [
    "AttractorEstimate",
    "StabilityReport",
    "extract_p",
    "run_to_attractor",
    "p_from_L",
    "s_of_lambda",
    "stability_intervals",
    "H_fixed_point",
    "phi_density",
    "phi_normalization",
    "stability_probe",
    "levy_distance_to_cycle",
    "DEFAULT_THRESHOLD",
]

DEFAULT_THRESHOLD = 1e-10
L_STALL = 1e-12


@dataclass
class AttractorEstimate:
    p: float
    L_limit: float
    interior_residual: float
    converged: bool
    support: tuple[float, float]
    projections: np.ndarray = field(repr=False)
    n_steps: int = 0
    finite_convergence: bool = False

    @property
    def rho(self) -> float:
        return self.support[1] / self.support[0]


def _extremes(nu: SpectralMeasure) -> tuple[int, int]:
    idx = np.flatnonzero(nu.masses > 0)
    return int(idx[0]), int(idx[-1])


def _estimate(measures: Sequence[SpectralMeasure], threshold: float, finite: bool = False) -> AttractorEstimate:
    nu0 = measures[0]
    lo, hi = _extremes(nu0)
    proj = np.array([(nu.masses[lo], nu.masses[hi]) for nu in measures])
    last = len(measures) - 1
    even = last if last % 2 == 0 else last - 1
    nu_e = measures[even]
    residual = float(nu_e.masses[lo + 1:hi].sum())
    _, L, *_ = _diagnostics(nu_e.lambdas, nu_e.masses)
    stalled = True
    if even + 1 < len(measures):
        nxt = measures[even + 1]
        _, L_next, *_ = _diagnostics(nxt.lambdas, nxt.masses)
        stalled = abs(L_next - L) <= L_STALL * max(1.0, L)
    elif even >= 1:
        prv = measures[even - 1]
        _, L_prev, *_ = _diagnostics(prv.lambdas, prv.masses)
        stalled = abs(L - L_prev) <= L_STALL * max(1.0, L)
    converged = (not finite) and residual <= threshold and stalled
    return AttractorEstimate(
        p=float(nu_e.masses[lo]),
        L_limit=L,
        interior_residual=residual,
        converged=converged,
        support=(float(nu0.lambdas[lo]), float(nu0.lambdas[hi])),
        projections=proj,
        n_steps=last,
        finite_convergence=finite,
    )


def extract_p(orbit: Sequence[SpectralMeasure], threshold: float = DEFAULT_THRESHOLD) -> AttractorEstimate:
    """Attractor parameter p from an orbit of ``T``.

    p is the mass at the lowest active atom on the last even iterate.  The
    extremes are the smallest and largest atoms carrying mass in the first
    measure, so an orbit missing ``M`` settles on the next atom down.
    """
    measures = list(orbit)
    if not measures:
        raise ValueError("empty orbit")
    return _estimate(measures, threshold)


def run_to_attractor(
    nu0: SpectralMeasure,
    max_steps: int = 5000,
    threshold: float = DEFAULT_THRESHOLD,
) -> AttractorEstimate:
    """Transform ``nu0`` until the even-iterate interior mass drops below ``threshold``."""
    lo, hi = _extremes(nu0)
    if lo == hi:
        return _estimate([nu0], threshold, finite=True)
    measures = [nu0]
    nu = nu0
    for k in range(1, max_steps + 1):
        try:
            nu = transform(nu)
        except FiniteConvergence:
            return _estimate(measures, threshold, finite=True)
        measures.append(nu)
        if k % 2 == 1 and measures[k - 1].masses[lo + 1:hi].sum() <= threshold:
            est = _estimate(measures, threshold)
            if est.converged:
                return est
    return _estimate(measures, threshold)


def p_from_L(L: float, rho: float) -> tuple[float, float]:
    """The two cycle parameters ``{p, 1-p}`` with ``mu_1 mu_-1 = L``."""
    if rho <= 1:
        raise ValueError("rho must exceed 1")
    L_star = (rho + 1) ** 2 / (4 * rho)
    if L < 1 - 1e-14 or L > L_star * (1 + 1e-14):
        raise ValueError(f"L={L} outside [1, {L_star}]")
    disc = 0.25 - rho * L / (rho + 1) ** 2
    if disc < 0:
        if disc < -1e-14:
            raise ValueError(f"negative discriminant {disc}")
        disc = 0.0
    half_width = (rho + 1) / (rho - 1) * math.sqrt(disc)
    p_minus, p_plus = 0.5 - half_width, 0.5 + half_width
    if p_minus <= 0:
        warnings.warn("L = 1: cycle parameter is degenerate (p in {0, 1})", RuntimeWarning, stacklevel=2)
    return p_minus, p_plus


def s_of_lambda(lam, m: float, M: float):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < m) or np.any(lam > M):
        raise ValueError("lambda must lie in [m, M]")
    out = np.sqrt((M - lam) ** 2 + (lam - m) ** 2) / (2 * (M - m))
    return float(out) if out.ndim == 0 else out


@dataclass
class StabilityReport:
    s_values: list[tuple[float, float]]
    lambda_star: float
    s_star: float
    I_s: tuple[float, float]
    I_u: list[tuple[float, float]]
    m: float
    M: float
    H_profile: list[tuple[float, float]] = field(default_factory=list)

    def is_stable(self, p: float) -> bool:
        return self.I_s[0] < p < self.I_s[1]

    def with_H_profile(self, p: float, lambdas: Iterable[float]) -> "StabilityReport":
        self.H_profile = [(float(lm), H_fixed_point(p, lm, self.m, self.M)) for lm in lambdas]
        return self


def stability_intervals(spectrum_points, m: float | None = None, M: float | None = None) -> StabilityReport:
    pts = np.unique(np.asarray(spectrum_points, dtype=float))
    if pts.size == 0:
        raise ValueError("empty spectrum")
    m = float(pts[0]) if m is None else float(m)
    M = float(pts[-1]) if M is None else float(M)
    if not m < M:
        raise ValueError("need m < M")
    s = s_of_lambda(pts, m, M)
    s = np.atleast_1d(s)
    i = int(np.argmin(s))
    s_star = float(s[i])
    I_s = (0.5 - s_star, 0.5 + s_star)
    I_u = [] if s_star >= 0.5 else [(0.0, I_s[0]), (I_s[1], 1.0)]
    return StabilityReport(
        s_values=list(zip(pts.tolist(), s.tolist())),
        lambda_star=float(pts[i]),
        s_star=s_star,
        I_s=I_s,
        I_u=I_u,
        m=m,
        M=M,
    )


def H_fixed_point(p, lam, m: float, M: float):
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValueError("p must lie in (0, 1)")
    span = M - m
    # M(1-p) + mp - lambda and Mp + m(1-p) - lambda, written so that both
    # endpoints lambda = m, M are exact
    a = (M - lam) - p * span
    b = p * span - (lam - m)
    out = (a * b) ** 2 / (p * (1 - p)) ** 2 / span**4
    return float(out) if out.ndim == 0 else out


def _phi_raw(p, m, lam, M):
    p = np.atleast_1d(np.asarray(p, dtype=float))
    out = np.zeros_like(p)
    inside = (p > 0) & (p < 1)
    H = H_fixed_point(p[inside], lam, m, M)
    out[inside] = -np.log(np.minimum(1.0, H))
    return out


def phi_normalization(m: float, lam: float, M: float) -> float:
    """``C`` such that ``C |log min(1, H)|`` integrates to one over (0, 1)."""
    rep = stability_intervals([m, lam, M])
    a, b = rep.I_s
    # log H has integrable singularities where H vanishes
    roots = sorted({(M - lam) / (M - m), (lam - m) / (M - m)})
    pts = [x for x in roots if a < x < b]
    total, _ = integrate.quad(lambda t: _phi_raw(t, m, lam, M)[0], a, b, points=pts or None, limit=200)
    return 1.0 / total


def phi_density(p, m: float, interior_lambda: float, M: float, C: float | None = None):
    """Attractor density model for a three-point spectrum.

    Returns ``C |log min(1, H(nu_p*, lambda))|``: zero outside the stability
    interval, non-negative inside it.
    """
    if C is None:
        C = phi_normalization(m, interior_lambda, M)
    out = C * _phi_raw(p, m, interior_lambda, M)
    return float(out[0]) if np.ndim(p) == 0 else out


def stability_probe(
    p: float,
    interior_atoms: Sequence[float],
    alpha: float,
    n_steps: int,
    m: float,
    M: float,
) -> np.ndarray:
    """Interior mass of a perturbed cycle measure after each double step.

    Starts from mass p at m, ``1 - p - alpha`` at M and alpha spread evenly
    over ``interior_atoms``; entry j is the interior mass after ``T^(2j)``.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if alpha < 0 or alpha >= min(p, 1 - p):
        raise ValueError("alpha must lie in [0, min(p, 1-p))")
    inner = np.asarray(interior_atoms, dtype=float)
    if inner.size == 0 or np.any(inner <= m) or np.any(inner >= M):
        raise ValueError("interior atoms must lie strictly inside (m, M)")
    if alpha == 0:
        return np.zeros(n_steps + 1)
    lam = np.concatenate(([m], inner, [M]))
    w = np.concatenate(([p], np.full(inner.size, alpha / inner.size), [1 - p - alpha]))
    nu = SpectralMeasure.from_atoms(lam, w)
    interior = (nu.lambdas > m) & (nu.lambdas < M)
    trace = [float(nu.masses[interior].sum())]
    for _ in range(n_steps):
        nu = transform(transform(nu))
        trace.append(float(nu.masses[interior].sum()))
    return np.array(trace)


def levy_distance_to_cycle(nu: SpectralMeasure, p: float, m: float, M: float, tol: float = 1e-13) -> float:
    """Levy distance between ``nu`` and ``{p@m, (1-p)@M}``.

    Smallest eps with ``F(x) <= p + eps`` for ``x < M - eps`` and
    ``F(x) >= p - eps`` for ``x >= m + eps``, found by bisection over the
    atoms' cumulative masses.
    """
    lam = nu.lambdas
    F = np.cumsum(nu.masses)

    def ok(eps):
        upper = lam < M - eps
        if np.any(F[upper] > p + eps):
            return False
        lower = lam >= m + eps
        # F is right-continuous and steps only at atoms; check at atoms and at m + eps
        if np.any(F[lower] < p - eps):
            return False
        F_at = float(nu.masses[lam <= m + eps].sum())
        return F_at >= p - eps or m + eps >= M

    lo, hi = 0.0, 1.0
    if ok(0.0):
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
