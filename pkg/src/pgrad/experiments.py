"""Seeded experiments producing plot-ready CSV files.

Each ``run_*`` function takes an :class:`ExperimentConfig`, writes its CSV
outputs plus a ``<name>.json`` sidecar into ``config.out`` and returns the
summary dictionary.  Trials use per-trial generators keyed by
``(seed, trial)``, so results do not depend on the number of workers.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .attractor import (
    H_fixed_point,
    extract_p,
    phi_density,
    phi_normalization,
    run_to_attractor,
    stability_intervals,
    stability_probe,
)
from .io import load_toml, read_measure, write_csv, write_json
from .pgradient import RunConfig, TrajectoryRecord, iterate
from .pspec import PSpec
from .quadratic import QuadraticProblem
from .rates import r_of_p, rate_bounds, summarize
from .renorm import (
    ORBIT_HEADER,
    DensitySpec,
    FiniteConvergence,
    SpectralMeasure,
    _diagnostics,
    discretize_continuous,
    orbit,
    orbit_rows,
    renormalize,
)

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "Histogram",
    "load_config",
    "sample_x0",
    "trajectory_checks",
    "trajectory_measures",
    "run_density",
    "run_rate_curves",
    "run_rate_range",
    "run_trajectory",
    "run_measure_orbit",
    "run_stability_probe",
    "run_hilbert",
    "run_experiment",
]

EXPERIMENTS = ("density", "rate_curves", "rate_range", "trajectory", "measure_orbit", "stability_probe", "hilbert")

DENSITIES: dict[str, Callable] = {
    "uniform": lambda lam: np.ones_like(lam),
    "linear": lambda lam: np.asarray(lam, dtype=float),
}

# transforms for orbits, double steps for the stability probe
N_STEPS_DEFAULT = {"measure_orbit": 500, "stability_probe": 50, "hilbert": 300}
N_STEPS_DEFAULT.update({name: 0 for name in EXPERIMENTS if name not in N_STEPS_DEFAULT})

# fields that do not change results and are left out of the sidecar
_RUNTIME_ONLY = ("out", "workers")


@dataclass
class ExperimentConfig:
    experiment: str
    eigenvalues: list[float] | None = None
    x_star: list[float] | None = None
    x0: list[float] | None = None
    z0: list[float] | None = None
    masses: list[float] | None = None
    measure: str | None = None
    pspec: str = "steepest_descent"
    coefficients: dict[str, float] | None = None
    trials: int = 1
    seed: int = 0
    out: str = "out"
    workers: int = 1
    max_iters: int = 100
    gradient_stop: float = 0.0
    relaxation: float = 1.0
    threshold: float = 1e-10
    max_transforms: int = 5000
    bins: int = 100
    rho_list: list[float] = field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
    n_p: int = 1001
    n_rho: int = 1000
    p_step: float = 0.01
    alpha: float = 1e-8
    n_steps: int | None = None
    interior: list[float] | None = None
    density: str = "uniform"
    m: float = 1.0
    M: float = 10.0
    n_atoms: int = 10_000
    atoms: list[list[float]] = field(default_factory=list)
    support: list[float] | None = None
    continuous_mass: float = 1.0

    def __post_init__(self):
        self.experiment = self.experiment.replace("-", "_")
        if self.experiment == "orbit":
            self.experiment = "measure_orbit"
        if self.experiment == "stability":
            self.experiment = "stability_probe"
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.density not in DENSITIES:
            raise ValueError(f"unknown density {self.density!r}, expected one of {sorted(DENSITIES)}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**dict(data))

    def to_dict(self, runtime: bool = False) -> dict:
        d = dataclasses.asdict(self)
        if not runtime:
            for key in _RUNTIME_ONLY:
                d.pop(key)
        return d

    def steps(self) -> int:
        """``n_steps`` or the experiment's default."""
        if self.n_steps is not None:
            return self.n_steps
        return N_STEPS_DEFAULT[self.experiment]

    def problem(self) -> QuadraticProblem:
        if self.eigenvalues is None:
            raise ValueError(f"experiment {self.experiment!r} needs 'eigenvalues'")
        return QuadraticProblem.from_eigenvalues(self.eigenvalues, self.x_star)

    def make_pspec(self) -> PSpec:
        if self.coefficients is not None:
            return PSpec.from_dict({"label": "custom", "coefficients": self.coefficients})
        return PSpec.parse(self.pspec)

    def run_config(self) -> RunConfig:
        return RunConfig(
            max_iters=self.max_iters,
            gradient_stop=self.gradient_stop,
            relaxation=self.relaxation,
            seed=self.seed,
        )


def load_config(path=None, **overrides) -> ExperimentConfig:
    data = load_toml(path) if path is not None else {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_mapping(data)


def _out(config: ExperimentConfig, name: str) -> Path:
    return Path(config.out) / name


def _sidecar(config: ExperimentConfig, name: str, summary: dict) -> dict:
    payload = {"config": config.to_dict(), "seed": config.seed, "version": __version__, "summary": summary}
    write_json(_out(config, f"{name}.json"), payload)
    return summary


def _map(func: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=chunk))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(trial)])


def sample_z0(rng: np.random.Generator, d: int) -> np.ndarray:
    """Uniform point on the unit sphere of R^d."""
    while True:
        z = rng.standard_normal(d)
        n = np.linalg.norm(z)
        if n > 0:
            return z / n


def x0_from_z0(problem: QuadraticProblem, pspec: PSpec, z0) -> np.ndarray:
    """A starting point whose renormalized gradient is ``z0``."""
    lam = problem.eigenvalues
    g0 = np.asarray(z0, dtype=float) / np.sqrt(pspec(lam) * lam)
    return problem.x_star + g0 / lam


def sample_x0(problem: QuadraticProblem, pspec: PSpec, rng: np.random.Generator) -> np.ndarray:
    return x0_from_z0(problem, pspec, sample_z0(rng, problem.d))


# ---------------------------------------------------------------- density


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def density(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            return np.zeros(self.counts.shape)
        return self.counts / (total * np.diff(self.edges))


def _density_trial(args) -> tuple:
    eigenvalues, x_star, pspec_dict, seed, trial, z0, threshold, max_transforms = args
    problem = QuadraticProblem.from_eigenvalues(eigenvalues, x_star)
    pspec = PSpec.from_dict(pspec_dict)
    if z0 is None:
        z0 = sample_z0(trial_rng(seed, trial), problem.d)
    x0 = x0_from_z0(problem, pspec, z0)
    try:
        nu0 = renormalize(problem, pspec, x0)
    except FiniteConvergence:
        return (trial, "finite_convergence", math.nan, math.nan, math.nan, 0)
    est = run_to_attractor(nu0, max_steps=max_transforms, threshold=threshold)
    if est.finite_convergence:
        status = "finite_convergence"
    elif est.converged:
        status = "converged"
    else:
        status = "non_converged"
    return (trial, status, est.p, est.L_limit, est.interior_residual, est.n_steps)


def run_density(config: ExperimentConfig) -> dict:
    """Empirical density of attractor parameters p over random starts."""
    problem = config.problem()
    pspec = config.make_pspec()
    pspec.check_positive(problem.spectrum.m, problem.spectrum.M)
    lam = problem.eigenvalues
    items = [
        (lam.tolist(), problem.x_star.tolist(), pspec.to_dict(), config.seed, t, config.z0,
         config.threshold, config.max_transforms)
        for t in range(config.trials)
    ]
    results = _map(_density_trial, items, config.workers)
    write_csv(
        _out(config, "density_trials.csv"),
        ("trial", "status", "p", "L_limit", "interior_residual", "n_steps"),
        results,
    )
    p_conv = np.array([r[2] for r in results if r[1] == "converged"])
    edges = np.linspace(0.0, 1.0, config.bins + 1)
    hist = Histogram(edges, np.histogram(p_conv, bins=edges)[0])
    rep = stability_intervals(lam)
    a, b = rep.I_s
    dens = hist.density
    write_csv(
        _out(config, "density_hist.csv"),
        ("bin_left", "bin_right", "count", "density"),
        zip(edges[:-1], edges[1:], hist.counts, dens),
    )
    summary = {
        "trials": config.trials,
        "converged": int(sum(r[1] == "converged" for r in results)),
        "finite_convergence": int(sum(r[1] == "finite_convergence" for r in results)),
        "non_converged": int(sum(r[1] == "non_converged" for r in results)),
        "I_s": list(rep.I_s),
        "lambda_star": rep.lambda_star,
        "fraction_outside_I_s": float(np.mean((p_conv <= a) | (p_conv >= b))) if p_conv.size else math.nan,
        "fraction_inside_I_s_widened": (
            float(np.mean((p_conv > a - 0.01) & (p_conv < b + 0.01))) if p_conv.size else math.nan
        ),
    }
    if p_conv.size:
        rates = r_of_p(p_conv, problem.spectrum.M / problem.spectrum.m)
        R_max, R_min_star = rate_bounds(problem.spectrum.M / problem.spectrum.m)
        summary.update(r_empirical_min=float(rates.min()), r_empirical_max=float(rates.max()),
                       R_max=R_max, R_min_star=R_min_star)
    if problem.d == 3:
        grid = np.linspace(0.0, 1.0, 1001)
        C = phi_normalization(lam[0], lam[1], lam[2])
        phi = phi_density(grid, lam[0], lam[1], lam[2], C=C)
        write_csv(_out(config, "density_phi.csv"), ("p", "phi"), zip(grid, phi))
        summary["phi_C"] = C
    return _sidecar(config, "density", summary)


# ---------------------------------------------------------------- rate curves


def run_rate_curves(config: ExperimentConfig) -> dict:
    grid = np.linspace(0.0, 1.0, config.n_p)
    rows = []
    peaks = {}
    for rho in config.rho_list:
        r = r_of_p(grid, float(rho))
        rows.extend((rho, p, v) for p, v in zip(grid, r))
        peaks[str(rho)] = float(r.max())
    write_csv(_out(config, "rate_curves.csv"), ("rho", "p", "r"), rows)
    return _sidecar(config, "rate_curves", {"peaks": peaks})


def run_rate_range(config: ExperimentConfig) -> dict:
    inv = np.linspace(0.0, 1.0, config.n_rho + 2)[1:-1]
    rows = []
    gaps = []
    for x in inv:
        R_max, R_min = rate_bounds(1.0 / x)
        rows.append((x, R_min, R_max))
        gaps.append(R_max - R_min)
    write_csv(_out(config, "rate_range.csv"), ("inv_rho", "R_min_star", "R_max"), rows)
    i = int(np.argmax(gaps))
    return _sidecar(config, "rate_range", {"max_gap": gaps[i], "rho_at_max_gap": 1.0 / inv[i]})


# ---------------------------------------------------------------- trajectory


def trajectory_measures(problem: QuadraticProblem, pspec: PSpec, record: TrajectoryRecord) -> list[SpectralMeasure]:
    """Spectral measures of the renormalized gradients along a run."""
    lam = problem.eigenvalues
    P = pspec(lam)
    out = []
    for gd in record.g_dir:
        w = P * lam * gd * gd
        if not w.sum() > 0:
            break
        out.append(SpectralMeasure.from_atoms(lam, w))
    return out


def trajectory_checks(problem: QuadraticProblem, record: TrajectoryRecord, tol: float = 1e-12) -> dict:
    """Kantorovich bounds, monotonicity and the det M identity along a run."""
    m, M = problem.spectrum.m, problem.spectrum.M
    L, D = record.L, record.D
    L_star = (M + m) ** 2 / (4 * m * M)
    D_star = (M - m) ** 2 / 4
    checks: dict[str, Any] = {
        "L_max": float(L.max()) if L.size else math.nan,
        "L_star": L_star,
        "D_max": float(D.max()) if D.size else math.nan,
        "D_star": D_star,
        "L_bounded": bool(np.all(L <= L_star + 1e-10)),
        "D_bounded": bool(np.all(D <= D_star + 1e-10)),
        "det_nonnegative": bool(np.all(record.detM >= 0) and np.all(record.detN >= 0)),
    }
    if record.relaxation == 1.0 and record.gamma.size:
        checks["gamma_in_bounds"] = bool(
            np.all(record.gamma >= 1 / M - tol) and np.all(record.gamma <= 1 / m + tol)
        )
        n = min(L.size, record.gamma.size + 1)
        dL = np.diff(L[:n])
        checks["L_monotone"] = bool(np.all(dL >= -tol * np.maximum(1.0, L[: n - 1])))
        checks["D_monotone"] = bool(np.all(np.diff(D[:n]) >= -tol * np.maximum(1.0, D[: n - 1])))
        checks["r_monotone"] = bool(np.all(np.diff(record.r) >= -tol))
        if n > 1:
            mu1 = record.moments[: n - 1, 2]
            scale = D[: n - 1] ** 2 / mu1
            err = np.abs(record.detM[: n - 1] - dL * scale) / (L[1:n] * scale)
            checks["det_identity_max_rel_error"] = float(err.max())
    return checks


def run_trajectory(config: ExperimentConfig) -> dict:
    problem = config.problem()
    pspec = config.make_pspec()
    if config.x0 is not None:
        x0 = np.asarray(config.x0, dtype=float)
    else:
        x0 = sample_x0(problem, pspec, trial_rng(config.seed, 0))
    record = iterate(problem, pspec, x0, config.run_config())
    d = problem.d
    header = (
        ("k",) + tuple(f"x_{i}" for i in range(d))
        + ("gamma", "f", "log_criterion", "mu_m1", "mu_0", "mu_1", "mu_2", "mu_3", "mu_4",
           "L", "D", "r", "detM", "detN")
    )
    rows = []
    for k in range(record.x.shape[0]):
        has_diag = k < record.L.size
        diag = (
            tuple(record.moments[k]) + (record.L[k], record.D[k])
            if has_diag else (math.nan,) * 8
        )
        r = record.r[k] if k < record.r.size else math.nan
        gamma = record.gamma[k] if k < record.gamma.size else math.nan
        dets = (record.detM[k], record.detN[k]) if has_diag else (math.nan, math.nan)
        rows.append((k, *record.x[k], gamma, record.f[k], record.log_criterion[k], *diag, r, *dets))
    write_csv(_out(config, "trajectory.csv"), header, rows)

    summary: dict[str, Any] = {
        "reason": record.reason,
        "n_steps": record.n_steps,
        "diverged_at": record.diverged_at,
        "checks": trajectory_checks(problem, record),
    }
    measures = trajectory_measures(problem, pspec, record)
    if len(measures) >= 2 and record.reason != "diverged":
        est = extract_p(measures, config.threshold)
        summary["attractor"] = {
            "p": est.p,
            "L_limit": est.L_limit,
            "interior_residual": est.interior_residual,
            "converged": est.converged,
            "support": list(est.support),
        }
        rates = summarize(problem.eigenvalues, record, pspec, p=est.p if est.converged else None)
        summary["rates"] = rates.as_dict()
    return _sidecar(config, "trajectory", summary)


# ---------------------------------------------------------------- measure orbit


def _initial_measure(config: ExperimentConfig) -> SpectralMeasure:
    if config.measure is not None:
        return read_measure(config.measure)
    if config.eigenvalues is None or config.masses is None:
        raise ValueError("measure_orbit needs 'measure' or both 'eigenvalues' and 'masses'")
    return SpectralMeasure.from_atoms(config.eigenvalues, config.masses)


def run_measure_orbit(config: ExperimentConfig) -> dict:
    nu0 = _initial_measure(config)
    measures = list(orbit(nu0, config.steps()))
    write_csv(_out(config, "orbit.csv"), ORBIT_HEADER, orbit_rows(measures))
    write_csv(_out(config, "orbit_final.csv"), ("lambda", "mass"), zip(measures[-1].lambdas, measures[-1].masses))
    summary: dict[str, Any] = {"n_steps": len(measures) - 1, "finite_convergence": len(measures) - 1 < config.steps()}
    if np.count_nonzero(nu0.masses) >= 2:
        est = extract_p(measures, config.threshold)
        summary["attractor"] = {
            "p": est.p,
            "L_limit": est.L_limit,
            "interior_residual": est.interior_residual,
            "converged": est.converged,
            "support": list(est.support),
        }
    return _sidecar(config, "orbit", summary)


# ---------------------------------------------------------------- stability


def probe_grid(step: float) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.arange(1, n) * step


def run_stability_probe(config: ExperimentConfig) -> dict:
    if config.eigenvalues is None:
        raise ValueError("stability_probe needs 'eigenvalues'")
    lam = np.unique(np.asarray(config.eigenvalues, dtype=float))
    m, M = float(lam[0]), float(lam[-1])
    interior = np.asarray(config.interior if config.interior is not None else lam[1:-1], dtype=float)
    rep = stability_intervals(np.concatenate(([m], interior, [M])), m, M)
    write_csv(_out(config, "stability_s.csv"), ("lambda", "s"), rep.s_values)

    grid = probe_grid(config.p_step)
    H_star = H_fixed_point(grid, rep.lambda_star, m, M)
    if interior.size == 1:
        phi = phi_density(grid, m, float(interior[0]), M)
    else:
        phi = np.full(grid.shape, math.nan)
    write_csv(_out(config, "stability_H.csv"), ("p", "H", "phi"), zip(grid, H_star, phi))

    probe_rows, trace_rows = [], []
    classes = []
    for p in grid:
        alpha = min(config.alpha, 0.5 * min(p, 1 - p))
        trace = stability_probe(p, interior, alpha, config.steps(), m, M)
        multiplier = trace[1] / trace[0]
        H_pred = float(np.mean(H_fixed_point(p, interior, m, M)))
        cls = "growth" if multiplier > 1 else "decay"
        classes.append(cls)
        predicted = "decay" if rep.is_stable(p) else "growth"
        probe_rows.append((p, multiplier, H_pred, cls, predicted))
        trace_rows.extend((p, j, v) for j, v in enumerate(trace))
    write_csv(_out(config, "stability_probe.csv"), ("p", "multiplier", "H_pred", "measured", "predicted"), probe_rows)
    write_csv(_out(config, "probe_traces.csv"), ("p", "step", "interior_mass"), trace_rows)

    flips = [
        0.5 * (grid[i] + grid[i + 1]) for i in range(len(grid) - 1) if classes[i] != classes[i + 1]
    ]
    summary = {
        "I_s": list(rep.I_s),
        "lambda_star": rep.lambda_star,
        "s_star": rep.s_star,
        "flip_points": flips,
        "mismatches": int(sum(r[3] != r[4] for r in probe_rows)),
    }
    return _sidecar(config, "stability", summary)


# ---------------------------------------------------------------- hilbert


def run_hilbert(config: ExperimentConfig) -> dict:
    """Orbit of a finely discretized continuous spectral measure."""
    spec = DensitySpec(
        m=config.m,
        M=config.M,
        density=DENSITIES[config.density],
        support=tuple(config.support) if config.support is not None else None,
        atoms=tuple((float(a), float(w)) for a, w in config.atoms),
        continuous_mass=config.continuous_mass,
    )
    nu = discretize_continuous(spec, config.n_atoms)
    mid = 0.5 * (config.m + config.M)
    below = nu.lambdas < mid
    active = np.flatnonzero(nu.masses > 0)
    lo, hi = int(active[0]), int(active[-1])
    rows = []
    masses = []
    for k, mu_k in enumerate(orbit(nu, config.steps())):
        mu, L, D, _, _ = _diagnostics(mu_k.lambdas, mu_k.masses)
        mass = float(mu_k.masses[below].sum())
        masses.append(mass)
        interior = float(mu_k.masses[lo + 1:hi].sum())
        rows.append((k, mass, interior, mu[2], L, D, 1.0 - 1.0 / L))
    write_csv(
        _out(config, "hilbert.csv"),
        ("k", "mass_below_mid", "interior_mass", "mu_1", "L", "D", "r"),
        rows,
    )
    last = len(masses) - 1
    even = last if last % 2 == 0 else last - 1
    odd = even - 1 if even == last else last
    summary = {
        "n_atoms": int(nu.lambdas.size),
        "n_steps": last,
        "p_even": masses[even],
        "p_odd": masses[odd] if odd >= 0 else math.nan,
        "defect": abs(masses[even] + masses[odd] - 1.0) if odd >= 0 else math.nan,
        "even_step_change": abs(masses[even] - masses[even - 2]) if even >= 2 else math.nan,
    }
    return _sidecar(config, "hilbert", summary)


RUNNERS = {
    "density": run_density,
    "rate_curves": run_rate_curves,
    "rate_range": run_rate_range,
    "trajectory": run_trajectory,
    "measure_orbit": run_measure_orbit,
    "stability_probe": run_stability_probe,
    "hilbert": run_hilbert,
}


def run_experiment(config: ExperimentConfig) -> dict:
    return RUNNERS[config.experiment](config)
