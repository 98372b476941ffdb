"""Acceptance criteria, each at its stated tolerance.

Every test records a PASS/FAIL line; the lines are printed in the
terminal summary (and by running this file directly).
"""

import math
import time
from collections import defaultdict
from itertools import combinations

import numpy as np
import pytest

from pgrad.attractor import (
    H_fixed_point,
    extract_p,
    p_from_L,
    phi_density,
    run_to_attractor,
    stability_intervals,
)
from pgrad.experiments import (
    ExperimentConfig,
    run_density,
    run_experiment,
    run_hilbert,
    run_stability_probe,
    sample_x0,
    trajectory_measures,
)
from pgrad.io import read_csv
from pgrad.pgradient import (
    RunConfig,
    estimate_inner_products,
    gradient_eval_count,
    iterate,
    oracle_iterate,
    problem_oracle,
)
from pgrad.pspec import PSpec
from pgrad.quadratic import QuadraticProblem, gradient
from pgrad.rates import RHO_WIDEST, r_of_p, rate_bounds, trajectory_rate
from pgrad.renorm import SpectralMeasure, transform

QS = (-1, 0, 1, 2)
N_CRITERIA = 12
RESULTS: dict[int, list[tuple[str, bool, str]]] = defaultdict(list)


def record(n: int, ok: bool, detail: str, part: str = "") -> None:
    RESULTS[n].append((part, bool(ok), detail))
    print(f"criterion {n}{part}: {'PASS' if ok else 'FAIL'} | {detail}")


def summary_lines() -> list[str]:
    lines = []
    for n in range(1, N_CRITERIA + 1):
        parts = RESULTS.get(n)
        if not parts:
            lines.append(f"criterion {n:2d}: NOT RUN")
            continue
        ok = all(p[1] for p in parts)
        if len(parts) == 1 and not parts[0][0]:
            detail = parts[0][2]
        else:
            detail = "; ".join(f"{p[0]} {'ok' if p[1] else 'FAILED'}: {p[2]}" for p in sorted(parts))
        lines.append(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} | {detail}")
    return lines


def random_spectrum(rng, d_lo=2, d_hi=10, rho_hi=100.0, margin=0.0, rho_lo=1.0):
    d = int(rng.integers(d_lo, d_hi + 1))
    rho = float(np.exp(rng.uniform(math.log(rho_lo), math.log(rho_hi))))
    if rho <= 1.0:
        rho = 1.0 + 1e-3
    t = margin + (1 - 2 * margin) * rng.random(d - 2)
    return np.sort(np.concatenate(([1.0, rho], 1.0 + (rho - 1.0) * t)))


# ---------------------------------------------------------------- criteria 1, 2, 5(ii)


@pytest.fixture(scope="module")
def ensemble():
    """10^4 trajectories: d in [2, 10], rho log-uniform in (1, 100], all four PSpecs."""
    t0 = time.perf_counter()
    out = []
    for i in range(10_000):
        rng = np.random.default_rng([20240601, i])
        lam = random_spectrum(rng)
        problem = QuadraticProblem.from_eigenvalues(lam)
        P = PSpec.power(QS[i % 4])
        rec = iterate(problem, P, sample_x0(problem, P, rng), RunConfig(max_iters=50))
        out.append((problem, P, rec))
    return out, time.perf_counter() - t0


def test_criterion_01_kantorovich(ensemble):
    trajs, elapsed = ensemble
    t0 = time.perf_counter()
    worst_L = worst_D = worst_g = -math.inf
    for problem, _, rec in trajs:
        m, M = problem.spectrum.m, problem.spectrum.M
        worst_L = max(worst_L, float(np.max(rec.L - (M + m) ** 2 / (4 * m * M))))
        worst_D = max(worst_D, float(np.max(rec.D - (M - m) ** 2 / 4)))
        if rec.gamma.size:
            worst_g = max(worst_g, float(np.max(np.maximum(1 / M - rec.gamma, rec.gamma - 1 / m))))
    elapsed += time.perf_counter() - t0
    ok = worst_L <= 1e-10 and worst_D <= 1e-10 and worst_g <= 1e-12 and elapsed <= 60.0
    record(
        1, ok,
        f"max(L-L*)={worst_L:.3g} max(D-D*)={worst_D:.3g} max step excess={worst_g:.3g} "
        f"over {len(trajs)} trajectories in {elapsed:.1f}s",
    )
    assert ok


def test_criterion_02_monotonicity(ensemble):
    trajs, _ = ensemble
    worst = dict(L=0.0, D=0.0, r=0.0, det=0.0, ident=0.0)
    for problem, _, rec in trajs:
        n = min(rec.L.size, rec.gamma.size + 1)
        L, D = rec.L[:n], rec.D[:n]
        worst["L"] = max(worst["L"], float(np.max(L[:-1] - L[1:], initial=0.0)))
        # D can reach (M-m)^2/4 ~ 2450; 1e-12 is applied relative to max(1, D)
        worst["D"] = max(worst["D"], float(np.max((D[:-1] - D[1:]) / np.maximum(1.0, D[:-1]), initial=0.0)))
        worst["r"] = max(worst["r"], float(np.max(rec.r[:-1] - rec.r[1:], initial=0.0)))
        lam = problem.eigenvalues
        scale_M = (lam[-1] - lam[0]) ** 6 / lam[0] ** 3
        scale_N = (lam[-1] - lam[0]) ** 6
        worst["det"] = max(
            worst["det"], float(np.max(-rec.detM / scale_M)), float(np.max(-rec.detN / scale_N))
        )
        if n > 1:
            mu1 = rec.moments[: n - 1, 2]
            term = D[:-1] ** 2 / mu1
            err = np.abs(rec.detM[: n - 1] - (L[1:] - L[:-1]) * term) / (L[1:] * term)
            worst["ident"] = max(worst["ident"], float(err.max()))
    ok = (
        worst["L"] <= 1e-12 and worst["D"] <= 1e-12 and worst["r"] <= 1e-12
        and worst["det"] <= 1e-12 and worst["ident"] <= 1e-10
    )
    record(
        2, ok,
        f"max decrease L={worst['L']:.3g} D(rel)={worst['D']:.3g} r={worst['r']:.3g}; "
        f"min det/scale={-worst['det']:.3g}; det identity rel err={worst['ident']:.3g}",
    )
    assert ok


# ---------------------------------------------------------------- criterion 3


def test_criterion_03_two_point_cycle():
    n_orbits = 300
    worst_res = worst_p = 0.0
    max_steps = 0
    failures = 0
    for i in range(n_orbits):
        rng = np.random.default_rng([303, i])
        lam = random_spectrum(rng, d_lo=10, d_hi=10, rho_lo=2.0, margin=0.05)
        z = rng.standard_normal(10)
        z /= np.linalg.norm(z)
        est = run_to_attractor(SpectralMeasure.from_atoms(lam, z * z), max_steps=500, threshold=1e-10)
        if not est.converged:
            failures += 1
            continue
        lo, hi = p_from_L(est.L_limit, lam[-1] / lam[0])
        worst_p = max(worst_p, min(abs(est.p - lo), abs(est.p - hi)))
        worst_res = max(worst_res, est.interior_residual)
        max_steps = max(max_steps, est.n_steps)
    ok = failures == 0 and worst_res <= 1e-10 and worst_p <= 1e-8
    record(
        3, ok,
        f"{n_orbits - failures}/{n_orbits} orbits reached interior mass <= 1e-10 within 500 transforms "
        f"(max {max_steps}); max |p - p_from_L|={worst_p:.3g}",
    )
    assert ok


# ---------------------------------------------------------------- criterion 4


def test_criterion_04_cycle_algebra():
    rng = np.random.default_rng(404)
    worst1 = worst2 = 0.0
    for _ in range(100):
        p = float(rng.uniform(0.001, 0.999))
        m = float(np.exp(rng.uniform(math.log(0.1), math.log(10.0))))
        M = m * float(np.exp(rng.uniform(math.log(1.01), math.log(100.0))))
        nu = SpectralMeasure.two_point(p, m, M)
        one = transform(nu)
        two = transform(one)
        worst1 = max(worst1, abs(one.masses[0] - (1 - p)), abs(one.masses[1] - p))
        worst2 = max(worst2, float(np.max(np.abs(two.masses - nu.masses))))
    ok = worst1 <= 1e-14 and worst2 <= 1e-14
    record(4, ok, f"max |T nu - swap|={worst1:.3g} max |T^2 nu - nu|={worst2:.3g} over 100 cases")
    assert ok


# ---------------------------------------------------------------- criterion 5


def test_criterion_05i_rate_law():
    n_traj, n = 20, 2000
    worst = worst_tail = 0.0
    scaled = []
    unconverged = 0
    for i in range(n_traj):
        rng = np.random.default_rng([505, i])
        lam = random_spectrum(rng, d_lo=3, rho_lo=2.0, margin=0.05)
        problem = QuadraticProblem.from_eigenvalues(lam)
        P = PSpec.power(QS[i % 4])
        rec = iterate(problem, P, sample_x0(problem, P, rng), RunConfig(max_iters=n))
        est = extract_p(trajectory_measures(problem, P, rec))
        if not est.converged:
            unconverged += 1
            continue
        r = r_of_p(est.p, lam[-1] / lam[0])
        err = abs(trajectory_rate(lam, rec, P, n=n) - r)
        worst = max(worst, err)
        scaled.append(n * err)
        worst_tail = max(worst_tail, abs(rec.r[-1] - r))
    ok = worst <= 1e-4 and unconverged == 0
    record(
        5, ok,
        f"max |V_2000 - r(p)|={worst:.3g} over {n_traj - unconverged}/{n_traj} converged runs (n*err up to {max(scaled):.3g}; "
        f"final per-step |r_k - r(p)|={worst_tail:.3g})",
        part="(i)",
    )
    assert ok


def test_criterion_05ii_worst_case(ensemble):
    trajs, _ = ensemble
    worst = -math.inf
    for problem, P, rec in trajs:
        if rec.n_steps == 0:
            continue
        R_max = rate_bounds(problem.spectrum.M / problem.spectrum.m)[0]
        worst = max(worst, trajectory_rate(problem.eigenvalues, rec, P) - R_max)
    ok = worst <= 1e-6
    record(5, ok, f"max V_n - R_max={worst:.3g} over {len(trajs)} trajectories", part="(ii)")
    assert ok


def test_criterion_05iii_range_width():
    R_max, R_min = rate_bounds(RHO_WIDEST)
    gap = R_max - R_min
    ok = abs(RHO_WIDEST - 7.5239) <= 1e-4 and abs(gap - 0.1716) <= 1e-4
    record(5, ok, f"rho={RHO_WIDEST:.6f} R_max-R_min*={gap:.6f}", part="(iii)")
    assert ok


# ---------------------------------------------------------------- criterion 6


def test_criterion_06_weight_independence():
    rng = np.random.default_rng([0, 0])
    lam = np.sort(np.concatenate(([1.0, 10.0], 1.0 + 9.0 * (0.05 + 0.9 * rng.random(8)))))
    problem = QuadraticProblem.from_eigenvalues(lam)
    P = PSpec.steepest_descent()
    rec = iterate(problem, P, sample_x0(problem, P, rng), RunConfig(max_iters=2000))
    weights = {"I": PSpec({0: 1.0}), "A": PSpec({1: 1.0}), "A^-1": PSpec({-1: 1.0}), "A^2": PSpec({2: 1.0})}
    gaps = []
    ns = (250, 500, 1000, 2000)
    for n in ns:
        V = {k: trajectory_rate(lam, rec, W, n=n) for k, W in weights.items()}
        gaps.append(max(abs(V[a] - V[b]) for a, b in combinations(V, 2)))
    decreasing = all(a > b for a, b in zip(gaps, gaps[1:]))
    ok = gaps[-1] <= 1e-3 and decreasing
    record(6, ok, "max pairwise gap " + ", ".join(f"n={n}: {g:.3g}" for n, g in zip(ns, gaps)))
    assert ok


# ---------------------------------------------------------------- criterion 7


def test_criterion_07_gradient_only():
    worst = 0.0
    for i in range(100):
        rng = np.random.default_rng([707, i])
        lam = random_spectrum(rng)
        problem = QuadraticProblem.from_eigenvalues(lam, rng.standard_normal(lam.size))
        x = rng.standard_normal(lam.size)
        g = gradient(problem, x)
        G = estimate_inner_products(problem_oracle(problem), x, 4, 1.0 / lam[-1])
        direct = np.array([np.dot(lam**n * g, g) for n in range(5)])
        worst = max(worst, float(np.max(np.abs(G - direct) / direct)))
    calls = {}
    problem = QuadraticProblem.from_eigenvalues([1.0, 2.0, 5.0, 9.0])
    for q in (0, 1, 2, 3):
        oracle = problem_oracle(problem)
        oracle_iterate(oracle, [1.0, -1.0, 0.5, 2.0], PSpec.power(q), 5, beta0=1 / 9)
        calls[q] = oracle.calls / 5
    calls_ok = all(calls[q] == math.ceil(q / 2) + 2 == gradient_eval_count(q) for q in calls)
    ok = worst <= 1e-8 and calls_ok
    record(7, ok, f"max rel err={worst:.3g}; calls/step {calls} (expected ceil(q/2)+2)")
    assert ok


# ---------------------------------------------------------------- criterion 8


def test_criterion_08_density_support(tmp_path):
    config = ExperimentConfig(
        experiment="density", eigenvalues=[1.0, 4.0, 10.0], trials=10_000, seed=42, out=str(tmp_path)
    )
    t0 = time.perf_counter()
    summary = run_density(config)
    elapsed = time.perf_counter() - t0
    header, rows = read_csv(tmp_path / "density_trials.csv")
    p = np.array([float(r[2]) for r in rows if r[1] == "converged"])
    inside = float(np.mean((p > 0.1173) & (p < 0.8827)))
    a, b = stability_intervals([1.0, 4.0, 10.0]).I_s
    phi_edges = phi_density(np.array([a, b]), 1.0, 4.0, 10.0)
    grid = np.linspace(0.0, 1.0, 1001)
    phi = phi_density(grid, 1.0, 4.0, 10.0)
    phi_out = float(np.max(np.abs(phi[(grid <= a) | (grid >= b)])))
    ok = inside >= 0.99 and np.max(np.abs(phi_edges)) <= 1e-12 and phi_out == 0.0 and elapsed <= 120.0
    record(
        8, ok,
        f"{inside:.4%} of {p.size} converged p in (0.1173, 0.8827); non-converged={summary['non_converged']}, "
        f"finite={summary['finite_convergence']}; phi at I_s ends={np.max(np.abs(phi_edges)):.2g}, "
        f"max phi on I_u={phi_out:.2g}; {elapsed:.1f}s",
    )
    assert ok


# ---------------------------------------------------------------- criterion 9


def test_criterion_09_stability_boundary(tmp_path):
    config = ExperimentConfig(
        experiment="stability_probe", eigenvalues=[1.0, 4.0, 10.0], p_step=0.01, alpha=1e-8, out=str(tmp_path)
    )
    summary = run_stability_probe(config)
    flips = [float(f) for f in summary["flip_points"]]
    ends = (0.12732, 0.87268)
    flips_ok = len(flips) == 2 and all(abs(f - e) <= 0.01 for f, e in zip(flips, ends))
    _, rows = read_csv(tmp_path / "stability_probe.csv")
    worst = 0.0
    for r in rows:
        p, mult = float(r[0]), float(r[1])
        H = H_fixed_point(p, 4.0, 1.0, 10.0)
        worst = max(worst, abs(mult / H - 1.0))
    ok = flips_ok and worst <= 0.05
    record(9, ok, f"flip points {[round(f, 4) for f in flips]} vs {ends}; max |multiplier/H - 1|={worst:.3g}")
    assert ok


# ---------------------------------------------------------------- criterion 10


def test_criterion_10_hilbert(tmp_path):
    config = ExperimentConfig(
        experiment="hilbert", m=1.0, M=10.0, density="uniform", n_atoms=10_000, n_steps=300, out=str(tmp_path)
    )
    s = run_hilbert(config)
    ok = s["even_step_change"] <= 1e-6 and s["defect"] <= 1e-6
    record(
        10, ok,
        f"p_even={s['p_even']:.12f} p_odd={s['p_odd']:.12f} even-step change={s['even_step_change']:.3g} "
        f"defect={s['defect']:.3g} ({s['n_atoms']} atoms)",
    )
    assert ok


# ---------------------------------------------------------------- criterion 11


def test_criterion_11_two_dimensional_constancy():
    worst = 0.0
    for i in range(100):
        rng = np.random.default_rng([1111, i])
        lam = random_spectrum(rng, d_lo=2, d_hi=2, rho_lo=1.01)
        problem = QuadraticProblem.from_eigenvalues(lam * float(np.exp(rng.uniform(-2, 2))))
        for q in QS:
            P = PSpec.power(q)
            rec = iterate(problem, P, sample_x0(problem, P, rng), RunConfig(max_iters=100))
            worst = max(worst, float(np.max(np.abs(rec.r - rec.r[0]))))
    ok = worst <= 1e-12
    record(11, ok, f"max |r_k - r_0|={worst:.3g} over 100 problems x 4 PSpecs x 100 steps")
    assert ok


# ---------------------------------------------------------------- criterion 12


REPRO_CONFIGS = {
    "density": dict(eigenvalues=[1.0, 4.0, 10.0], trials=400),
    "trajectory": dict(eigenvalues=[1.0, 2.0, 3.5, 7.0, 10.0], max_iters=200),
    "measure_orbit": dict(eigenvalues=[1.0, 1.5, 2.0, 4.0], masses=[0.3, 0.2, 0.2, 0.3], n_steps=100),
    "rate_curves": {},
    "rate_range": {},
    "stability_probe": dict(eigenvalues=[1.0, 4.0, 10.0]),
    "hilbert": dict(density="linear", n_atoms=2000, n_steps=100),
}


def test_criterion_12_reproducibility(tmp_path):
    mismatched = []
    n_files = 0
    for name, params in REPRO_CONFIGS.items():
        dirs = []
        for label, workers in (("a", 1), ("b", 8), ("c", 8)):
            d = tmp_path / f"{name}_{label}"
            run_experiment(ExperimentConfig(experiment=name, seed=11, workers=workers, out=str(d), **params))
            dirs.append(d)
        files = sorted(p.name for p in dirs[0].iterdir())
        for other in dirs[1:]:
            if sorted(p.name for p in other.iterdir()) != files:
                mismatched.append(f"{name}: file list")
            for f in files:
                n_files += 1
                if (dirs[0] / f).read_bytes() != (other / f).read_bytes():
                    mismatched.append(f"{name}/{f}")
    ok = not mismatched
    record(
        12, ok,
        f"{len(REPRO_CONFIGS)} experiments, {n_files} file comparisons at workers 1 vs 8 (and 8 vs 8); "
        f"mismatches: {mismatched or 'none'}",
    )
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
