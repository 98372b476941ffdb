"""P-gradient iterations ``x_{k+1} = x_k - gamma_k g_k``.

The step ``gamma_k = (P(A) A g, g) / (P(A) A^2 g, g)`` minimizes
``(P(A) g_{k+1}, g_{k+1})`` along the gradient.  :func:`iterate` runs the
method on a :class:`~pgrad.quadratic.QuadraticProblem` and logs the
renormalized diagnostics at every iterate.  :func:`estimate_inner_products`
and :func:`oracle_step_length` rebuild the same step from a black-box
gradient oracle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .pspec import PSpec
from .quadratic import QuadraticProblem, gradient
from .renorm import FiniteConvergence, _deviations, _diagnostics

__all__ = [
    "RunConfig",
    "TrajectoryRecord",
    "step_length",
    "iterate",
    "estimate_inner_products",
    "gradient_eval_count",
    "oracle_step_length",
    "oracle_iterate",
    "CountingOracle",
]

# stop once the criterion has grown by this many e-folds
DIVERGENCE_LOG_GROWTH = 700.0


@dataclass(frozen=True)
class RunConfig:
    max_iters: int = 100
    gradient_stop: float = 0.0
    relaxation: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.gradient_stop < 0:
            raise ValueError("gradient_stop must be non-negative")
        if not 0 < self.relaxation <= 2:
            if self.relaxation > 2:
                warnings.warn(
                    f"relaxation {self.relaxation} > 2: the iteration may diverge",
                    RuntimeWarning,
                    stacklevel=2,
                )
            else:
                raise ValueError("relaxation must be positive")
        elif self.relaxation == 2:
            warnings.warn(
                "relaxation = 2: the iteration may fail to converge",
                RuntimeWarning,
                stacklevel=2,
            )


@dataclass
class TrajectoryRecord:
    """Per-iterate log of a P-gradient run.

    Iterates are indexed ``k = 0..K-1``.  Gradients are kept as unit
    directions ``g_dir`` plus ``log_gnorm`` so that long runs do not
    underflow; ``gradients`` rebuilds them.  Step quantities (``gamma``,
    ``r``) have one entry per step taken, diagnostics one entry per iterate
    with nonzero gradient.
    """

    x: np.ndarray
    g_dir: np.ndarray
    log_gnorm: np.ndarray
    f: np.ndarray
    log_criterion: np.ndarray
    gamma: np.ndarray
    r: np.ndarray
    moments: np.ndarray
    L: np.ndarray
    D: np.ndarray
    detM: np.ndarray
    detN: np.ndarray
    reason: str
    relaxation: float = 1.0
    diverged_at: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.gamma.size

    @property
    def finite_convergence(self) -> bool:
        return self.reason == "finite_convergence"

    @property
    def gradients(self) -> np.ndarray:
        with np.errstate(under="ignore"):
            return self.g_dir * np.exp(self.log_gnorm)[:, None]

    @property
    def r_moment(self) -> np.ndarray:
        """``1 - 1/L_k``; equals ``r`` when relaxation is 1."""
        return 1.0 - 1.0 / self.L


def _active_single(lam: np.ndarray, w: np.ndarray) -> float | None:
    """The eigenvalue carrying all the mass, if there is only one."""
    support = lam[w > 0]
    if support.size and support[0] == support[-1]:
        return float(support[0])
    return None


def step_length(problem: QuadraticProblem, pspec: PSpec, g) -> float:
    g = np.asarray(g, dtype=float)
    lam = problem.eigenvalues
    w = pspec(lam) * lam * g * g
    total = w.sum()
    if not total > 0:
        raise FiniteConvergence("zero gradient")
    single = _active_single(lam, w)
    if single is not None:
        return 1.0 / single
    return float(total / np.dot(w, lam))


def iterate(problem: QuadraticProblem, pspec: PSpec, x0, config: RunConfig | None = None) -> TrajectoryRecord:
    """Run ``x_{k+1} = x_k - relaxation * gamma_k * g_k`` and log every iterate.

    Stops on ``max_iters`` steps, when ``||g_k|| < gradient_stop``, on exact
    convergence (a step lands on x*) or on divergence.
    """
    config = config or RunConfig()
    lam = problem.eigenvalues
    pspec.check_positive(problem.spectrum.m, problem.spectrum.M)
    P = pspec(lam)
    x0 = np.asarray(x0, dtype=float)
    e = x0 - problem.x_star
    if e.shape != (problem.d,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({problem.d},)")
    relax = float(config.relaxation)

    # true error is exp(log_scale) * e; e is renormalized every step
    log_scale = 0.0
    xs, gdirs, lgn, fs, lcrit = [], [], [], [], []
    gammas, rs = [], []
    mus, Ls, Ds, dMs, dNs = [], [], [], [], []
    reason = "max_iters"
    diverged_at = None

    x_star, f_star = problem.x_star, problem.f_star

    def record_point(e, log_scale):
        if log_scale < -300 or log_scale > 300:
            with np.errstate(under="ignore", over="ignore"):
                scale = math.exp(log_scale) if log_scale < 709 else math.inf
                xs.append(x_star + scale * e)
                fs.append(f_star + 0.5 * scale * scale * float(np.dot(lam * e, e)))
        else:
            scale = math.exp(log_scale)
            xs.append(x_star + scale * e)
            fs.append(f_star + 0.5 * scale * scale * float(np.dot(lam * e, e)))

    for k in range(config.max_iters + 1):
        g = lam * e
        gn = math.sqrt(float(np.dot(g, g)))
        record_point(e, log_scale)
        if gn == 0.0:
            gdirs.append(np.zeros_like(g))
            lgn.append(-math.inf)
            lcrit.append(-math.inf)
            reason = "finite_convergence"
            break
        gd = g / gn
        gdirs.append(gd)
        lgn.append(log_scale + math.log(gn))
        crit = float(np.dot(P, gd * gd))
        lcrit.append(2.0 * lgn[-1] + math.log(crit))

        w = P * lam * gd * gd
        w = w / w.sum()
        mu, L, D, dM, dN = _diagnostics(lam, w)
        mus.append(mu)
        Ls.append(L)
        Ds.append(D)
        dMs.append(dM)
        dNs.append(dN)

        if not all(map(math.isfinite, (lcrit[-1], L, D))):
            reason, diverged_at = "diverged", k
            break
        if lcrit[-1] - lcrit[0] > DIVERGENCE_LOG_GROWTH:
            reason, diverged_at = "diverged", k
            break
        if k == config.max_iters:
            break
        if config.gradient_stop > 0 and lgn[-1] < math.log(config.gradient_stop):
            reason = "gradient_stop"
            break

        single = _active_single(lam, w)
        if single is not None:
            gamma = 1.0 / single
        else:
            gamma = 1.0 / float(mu[2])
        if single is not None:
            factor = 1.0 - relax * gamma * lam
            if relax == 1.0:
                factor = np.where(lam == single, 0.0, factor)
        elif relax == 1.0:
            # 1 - gamma lambda = (mu_1 - lambda) / mu_1 without cancellation
            factor = -gamma * _deviations(lam, w)
        else:
            factor = 1.0 - relax * gamma * lam
        e_new = factor * e
        gammas.append(gamma)
        rs.append(float(np.dot(P, (gd * factor) ** 2)) / crit)
        ne = math.sqrt(float(np.dot(e_new, e_new)))
        if ne == 0.0:
            e = e_new
        elif not math.isfinite(ne):
            reason, diverged_at = "diverged", k + 1
            break
        else:
            log_scale += math.log(ne)
            e = e_new / ne

    d = problem.d
    return TrajectoryRecord(
        x=np.array(xs).reshape(-1, d),
        g_dir=np.array(gdirs).reshape(-1, d),
        log_gnorm=np.array(lgn),
        f=np.array(fs),
        log_criterion=np.array(lcrit),
        gamma=np.array(gammas),
        r=np.array(rs),
        moments=np.array(mus).reshape(-1, 6),
        L=np.array(Ls),
        D=np.array(Ds),
        detM=np.array(dMs),
        detN=np.array(dNs),
        reason=reason,
        relaxation=relax,
        diverged_at=diverged_at,
    )


class CountingOracle:
    """Wrap a gradient oracle and count its calls."""

    def __init__(self, func: Callable):
        self.func = func
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return np.asarray(self.func(x), dtype=float)


def _pascal_inverse_apply(P: np.ndarray) -> np.ndarray:
    """Solve ``Pascal @ H = P`` for the unit lower-triangular binomial matrix."""
    n = P.size
    H = np.empty(n)
    for i in range(n):
        H[i] = sum((-1) ** (i - l) * math.comb(i, l) * P[l] for l in range(i + 1))
    return H


def estimate_inner_products(gradient_oracle: Callable, x, n_max: int, beta: float, g0=None) -> np.ndarray:
    """``(A^n g, g)`` for ``n = 0..n_max`` using only gradient evaluations.

    Builds ``x^(i+1) = x^(i) - beta g(x^(i))`` so that
    ``g^(i) = (I - beta A)^i g`` and recovers the inner products from
    ``P_i = (g, g^(i))``, pairing ``P_2j = (g^(j), g^(j))`` and
    ``P_2j+1 = (g^(j+1), g^(j))``.  Makes ``ceil(n_max/2) + 1`` oracle
    calls in total, ``g(x)`` included (one fewer when ``g0 = g(x)`` is
    supplied).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    xi = np.asarray(x, dtype=float)
    gs = [np.asarray(gradient_oracle(xi) if g0 is None else g0, dtype=float)]
    for _ in range(math.ceil(n_max / 2)):
        xi = xi - beta * gs[-1]
        gs.append(np.asarray(gradient_oracle(xi), dtype=float))
    P = np.empty(n_max + 1)
    for i in range(n_max + 1):
        j, odd = divmod(i, 2)
        P[i] = np.dot(gs[j + odd], gs[j])
    # Q_n = Pascal @ diag((-beta)^i)
    with np.errstate(all="ignore"):
        G = _pascal_inverse_apply(P) / (-beta) ** np.arange(n_max + 1)
    if not np.all(np.isfinite(G)):
        raise OverflowError(f"ill-conditioned inner-product estimate for beta={beta}")
    return G


def gradient_eval_count(q: int) -> int:
    """Gradient evaluations per step for ``P(A) = A^q``: ``ceil(q/2) + 2``.

    For q = -1 (steepest descent) this returns 1: only ``g_k`` is needed
    when ``(A g, g)`` is taken from function values along the line.
    """
    if q < -1:
        raise ValueError("q must be >= -1")
    if q == -1:
        return 1
    return math.ceil(q / 2) + 2


def oracle_step_length(gradient_oracle: Callable, x, pspec: PSpec, beta: float, g0=None) -> float:
    """Step length from gradient evaluations only (exponents of P must be >= -1)."""
    if pspec.min_exponent < -1:
        raise ValueError("gradient-only construction needs exponents >= -1")
    n_max = pspec.max_exponent + 2
    G = estimate_inner_products(gradient_oracle, x, n_max, beta, g0=g0)
    num = sum(c * G[k + 1] for k, c in pspec.coefficients.items())
    den = sum(c * G[k + 2] for k, c in pspec.coefficients.items())
    if not den > 0:
        raise FiniteConvergence("zero gradient")
    return float(num / den)


def oracle_iterate(gradient_oracle: Callable, x0, pspec: PSpec, n_steps: int, beta0: float):
    """P-gradient run driven by a gradient oracle; ``beta`` is the previous step."""
    x = np.asarray(x0, dtype=float)
    beta = beta0
    xs, gammas = [x], []
    for _ in range(n_steps):
        g = np.asarray(gradient_oracle(x), dtype=float)
        gamma = oracle_step_length(gradient_oracle, x, pspec, beta, g0=g)
        x = x - gamma * g
        xs.append(x)
        gammas.append(gamma)
        beta = gamma
    return np.array(xs), np.array(gammas)


def problem_oracle(problem: QuadraticProblem) -> CountingOracle:
    return CountingOracle(lambda x: gradient(problem, x))
