"""Convergence rates of P-gradient methods on quadratics.

On the attractor with parameter p every method converges at

    r(p) = p (1-p) (rho-1)^2 / ([p + rho(1-p)] [(1-p) + rho p])

per step, whatever weight is used to measure progress.  The worst case
is ``R_max = ((rho-1)/(rho+1))^2`` at p = 1/2; stable attractors cannot
do better than ``R_min* = (rho-1)^2 / ((rho+1)^2 + 4 rho)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pgradient import TrajectoryRecord
from .pspec import PSpec
from .renorm import MomentVector

__all__ = [
    "RateSummary",
    "per_step_rate",
    "geometric_mean_rate",
    "trajectory_rate",
    "r_of_p",
    "rate_bounds",
    "delta_N",
    "D_of_p",
    "summarize",
    "RHO_WIDEST",
]

# rho at which R_max - R_min* is largest (value 3 - 2 sqrt 2)
RHO_WIDEST = 1 + 2 * math.sqrt(2) + 2 * math.sqrt(2 + math.sqrt(2))


def per_step_rate(mu: MomentVector) -> float:
    L = mu.L
    if L < 1 - 1e-12:
        raise ValueError(f"L = {L} < 1")
    return max(0.0, 1.0 - 1.0 / L)


def geometric_mean_rate(
    eigenvalues,
    weight: PSpec,
    gradients,
    log_norms=None,
    n: int | None = None,
) -> float:
    """``V_n = [(W g_n, g_n) / (W g_0, g_0)]^(1/n)``, evaluated in log space.

    ``gradients`` may be unit directions with ``log_norms`` holding
    ``log ||g_k||``.  A zero gradient after a nonzero start means finite
    convergence and gives 0.
    """
    g = np.atleast_2d(np.asarray(gradients, dtype=float))
    if g.shape[0] == 0:
        raise ValueError("empty gradient sequence")
    if n is None:
        n = g.shape[0] - 1
    if n < 1 or n >= g.shape[0]:
        raise ValueError(f"n={n} out of range for {g.shape[0]} gradients")
    lam = np.asarray(eigenvalues, dtype=float)
    W = weight(lam)
    lognorm = np.zeros(g.shape[0]) if log_norms is None else np.asarray(log_norms, dtype=float)
    q0 = float(np.dot(W, g[0] ** 2))
    if not q0 > 0 or not math.isfinite(lognorm[0]):
        raise ValueError("initial gradient is zero")
    for k in range(1, n + 1):
        if not np.any(g[k]) or lognorm[k] == -math.inf:
            return 0.0
    qn = float(np.dot(W, g[n] ** 2))
    log_ratio = math.log(qn) - math.log(q0) + 2.0 * (lognorm[n] - lognorm[0])
    return math.exp(log_ratio / n)


def trajectory_rate(problem_eigenvalues, record: TrajectoryRecord, weight: PSpec, n: int | None = None) -> float:
    """``V_n`` for a logged trajectory."""
    if record.finite_convergence and (n is None or n >= record.g_dir.shape[0] - 1):
        return 0.0
    return geometric_mean_rate(problem_eigenvalues, weight, record.g_dir, record.log_gnorm, n)


def r_of_p(p, rho: float):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p must lie in [0, 1]")
    if rho <= 1:
        raise ValueError("rho must exceed 1")
    q = 1.0 - p
    out = p * q * (rho - 1) ** 2 / ((p + rho * q) * (q + rho * p))
    return float(out) if out.ndim == 0 else out


def rate_bounds(rho: float) -> tuple[float, float]:
    """``(R_max, R_min*)`` for condition number rho."""
    if rho <= 1:
        raise ValueError("rho must exceed 1")
    R_max = ((rho - 1) / (rho + 1)) ** 2
    R_min_star = (rho - 1) ** 2 / ((rho + 1) ** 2 + 4 * rho)
    return R_max, R_min_star


def delta_N(R_max: float, R_min: float) -> float:
    """Spread of iteration counts: ``log(R_max/R_min) / (log R_max log R_min)``."""
    if not (0 < R_min <= R_max < 1):
        raise ValueError("need 0 < R_min <= R_max < 1")
    return math.log(R_max / R_min) / (math.log(R_max) * math.log(R_min))


def D_of_p(p, m: float, M: float):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p must lie in [0, 1]")
    out = p * (1 - p) * (M - m) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass
class RateSummary:
    r_sequence: np.ndarray
    V_n: float
    r_of_p: float
    R_max: float
    R_min_star: float
    delta_N: float

    def as_dict(self) -> dict:
        return {
            "n": int(self.r_sequence.size),
            "V_n": self.V_n,
            "r_of_p": self.r_of_p,
            "R_max": self.R_max,
            "R_min_star": self.R_min_star,
            "delta_N": self.delta_N,
            "r_first": float(self.r_sequence[0]) if self.r_sequence.size else None,
            "r_last": float(self.r_sequence[-1]) if self.r_sequence.size else None,
        }


def summarize(eigenvalues, record: TrajectoryRecord, pspec: PSpec, p: float | None = None) -> RateSummary:
    lam = np.asarray(eigenvalues, dtype=float)
    rho = float(lam[-1] / lam[0])
    R_max, R_min_star = rate_bounds(rho)
    V = trajectory_rate(lam, record, pspec) if record.n_steps else float("nan")
    return RateSummary(
        r_sequence=record.r,
        V_n=V,
        r_of_p=r_of_p(p, rho) if p is not None else float("nan"),
        R_max=R_max,
        R_min_star=R_min_star,
        delta_N=delta_N(R_max, R_min_star),
    )
