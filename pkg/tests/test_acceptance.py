"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in
the terminal summary) or ``python3 tests/test_acceptance.py``.
"""

import logging
import math
import time

import numpy as np
import pytest

from drfdr.baselines import make_drs, make_dys, make_prs
from drfdr.cli import make_problem, run_algo
from drfdr.core import SmoothOracle, SolverConfig, StoppingRule
from drfdr.params import ProblemConstants, eta_upper_bound, gamma_range
from drfdr.problems import build_cs, build_slrme, build_toy, generate_cs, generate_slrme
from drfdr.prox import (
    LeastSquaresProx,
    kyfan_oracle,
    l1_oracle,
    l2norm_oracle,
    project_rank,
    prox_quadratic_full,
    prox_quadratic_leastsquares,
    prox_quadratic_masked,
    soft_threshold,
    sq_norm_oracle,
)
from drfdr.solver import drfdr_step, initial_state, solve

from _reference import (
    convex_inequality_slack,
    eckart_young_residual,
    grid_prox,
    random_instance,
    ref_run,
)

RESULTS = []

TOY_A = np.array([[1.0, 0.0], [0.0, 0.0]])
TOY_GAMMAS = (0.05, 0.08, 0.11, 0.14, 0.17, 0.20, 0.22)
TOY_ETAS = (1.0, 1.1, 1.2, 1.3, 1.4, 1.5)
LRMC_RATIOS = (0.2, 0.3)
LRMC_TRIALS = 10


def report(number, passed, detail):
    line = f"CRITERION {number} {'PASS' if passed else 'FAIL'}: {detail}"
    RESULTS.append(line)
    print(line)
    assert passed, line


def summable(step_sq):
    """Last-quarter sum of squared steps below the first-quarter sum."""
    s = np.asarray(step_sq, dtype=float)
    s = s[np.isfinite(s)]
    q = len(s) // 4
    if q == 0:
        return None
    return float(np.sum(s[-q:])) < float(np.sum(s[:q]))


# Shared runs (computed once per session)

@pytest.fixture(scope="module")
def toy_grid():
    problem = build_toy(TOY_A, rho=0.1)
    runs = {}
    for gamma in TOY_GAMMAS:
        for eta in TOY_ETAS:
            runs[gamma, eta] = run_algo(problem, "drfdr", {"gamma": gamma, "eta": eta}, record_steps=True)
    return runs


@pytest.fixture(scope="module")
def lrmc_runs():
    logging.disable(logging.INFO)
    t0 = time.perf_counter()
    runs = {}
    for R in LRMC_RATIOS:
        for trial in range(LRMC_TRIALS):
            problem = make_problem("lrmc", trial, {"m": 200, "r": 5, "R": R})
            for algo in ("drfdr", "dys", "fbs"):
                report_ = run_algo(problem, algo, record_steps=True)
                obs = problem.stopping.value(report_.y, None)
                runs[R, trial, algo] = (report_, obs)
    logging.disable(logging.NOTSET)
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def slrme_runs():
    t0 = time.perf_counter()
    inst = generate_slrme(1, blocks=(30, 40, 10, 20, 10), rho1=0.1, rho2=0.1)
    runs = {}
    for alpha in (0.0, 1.0):
        problem = build_slrme(inst, alpha=alpha)
        runs[alpha] = run_algo(problem, "drfdr", {"eta": 1.4, "gamma_offset": 1e-12, "tol": 1e-6},
                               record_steps=True)
    runs["gppa"] = run_algo(build_slrme(inst, alpha=1.0), "gppa", {"tol": 1e-6})
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def cs_run():
    t0 = time.perf_counter()
    problem = build_cs(generate_cs(1, m=100, d=200, sparsity=10, noise=0.0))
    r = run_algo(problem, "drfdr", {"tol": 1e-5}, record_steps=True)
    return r, time.perf_counter() - t0


# 1. Parameter ranges

def test_criterion_1_parameter_ranges():
    t0 = time.perf_counter()
    e2 = math.exp(-2)
    checks = [
        ("toy gamma_bar", gamma_range(ProblemConstants(0, 2, e2, 1, 1.5)).upper, 0.223),
        ("toy eta bound", eta_upper_bound(ProblemConstants(0, 2, e2, 1, 1.0)), 3.87),
        ("lrmc gamma_bar", gamma_range(ProblemConstants(0, 1, 1.8e-6, 1, 1.8)).upper, 0.32),
        ("slrme a=0 gamma_bar", gamma_range(ProblemConstants(0, 1, 0.2, 1, 1.4)).upper, 0.4167),
        ("slrme a=1 gamma_bar", gamma_range(ProblemConstants(1, 1, 0.2, 1, 1.4)).upper, 0.7385),
    ]
    elapsed = time.perf_counter() - t0
    errs = {name: abs(got - want) for name, got, want in checks}
    passed = all(e < 5e-3 for e in errs.values()) and elapsed < 0.1
    detail = ", ".join(f"{name}={got:.4f}" for name, got, _ in checks)
    report(1, passed, f"{detail}; max abs err {max(errs.values()):.2e} (tol 5e-3); {elapsed * 1e3:.2f} ms")


# 2. Toy problem

def test_criterion_2a_toy_convergence_and_ordering(toy_grid):
    # time a fresh grid without step recording
    t0 = time.perf_counter()
    for gamma in TOY_GAMMAS:
        for eta in TOY_ETAS:
            run_algo(build_toy(TOY_A), "drfdr", {"gamma": gamma, "eta": eta})
    elapsed = time.perf_counter() - t0
    all_converged = all(r.converged for r in toy_grid.values())
    fast, slow = toy_grid[0.22, 1.5].iterations, toy_grid[0.05, 1.0].iterations
    passed = all_converged and fast < slow and elapsed < 1.0
    report("2a", passed, f"{len(toy_grid)} grid runs converged={all_converged}; iterations "
                         f"(0.22, 1.5)={fast} < (0.05, 1.0)={slow}; {elapsed:.3f} s (limit 1 s)")


def test_criterion_2b_toy_limit_norm(toy_grid):
    norms = {k: float(np.linalg.norm(r.y)) for k, r in toy_grid.items()}
    worst = max(norms.values())
    passed = all(r.converged for r in toy_grid.values()) and worst < 1e-2
    report("2b", passed, f"max final ||y|| over grid = {worst:.4f} (required < 1e-2); "
                         f"limit at (0.22, 1.5) = {np.round(toy_grid[0.22, 1.5].y, 4).tolist()}")


# 3. and 4. Lyapunov suite and fixed-point identities

def _lyapunov_instances(count=100, seed=2024):
    """Mixed toy/CS/SLRME instances with validated parameters."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        kind = ("toy", "cs", "slrme")[i % 3]
        if kind == "toy":
            d = int(rng.integers(2, 6))
            A = rng.standard_normal((d, d)) * rng.uniform(0.2, 1.5)
            # the true Lipschitz constant of grad(exp(-||x||^2)/2) is 1
            problem = build_toy(A, rho=float(rng.uniform(0.01, 0.5)), ell=1.0,
                                y0=rng.standard_normal(d) * 3)
        elif kind == "cs":
            m, d = int(rng.integers(10, 30)), int(rng.integers(20, 50))
            problem = build_cs(generate_cs(int(rng.integers(10 ** 6)), m, d, 5, noise=0.01,
                                           rho=float(rng.uniform(1e-3, 0.1))))
        else:
            problem = build_slrme(generate_slrme(int(rng.integers(10 ** 6)), blocks=(4, 6, 5),
                                                 rho1=float(rng.uniform(0.01, 0.3)),
                                                 rho2=float(rng.uniform(0.01, 0.3))),
                                  alpha=float(rng.choice([0.0, 1.0])))
        alpha, kappa, ell = problem.constants
        theta = float(rng.uniform(0.3, 1.0))
        eta = float(rng.uniform(1.0, 1.95)) if ell > 0 else float(rng.uniform(0.3, 1.95))
        c = ProblemConstants(alpha, kappa, ell, theta, eta)
        if i % 4 == 0:
            eta_b = float(rng.uniform(2.0, eta_upper_bound(ProblemConstants(alpha, kappa, ell, theta, 2.0))))
            cb = ProblemConstants(alpha, kappa, ell, theta, eta_b)
            if gamma_range(cb).feasible:
                c = cb
        rng_ = gamma_range(c)
        hi = min(rng_.upper, 1e3)
        gamma = float(rng_.lower + (hi - rng_.lower) * rng.uniform(0.05, 0.95))
        assert rng_.contains(gamma)
        out.append((kind, rng_.case_label, problem, c, gamma))
    return out


def test_criterion_3_lyapunov_suite():
    t0 = time.perf_counter()
    worst_dec = worst_low = -np.inf
    cases = {}
    for kind, case, problem, c, gamma in _lyapunov_instances():
        cfg = SolverConfig(gamma=gamma, theta=c.theta, eta=c.eta, max_iters=200,
                           stopping=StoppingRule("y_step", 1e-12), record_trajectory=True)
        t = solve(problem.spec, cfg, problem.y0, problem.z0).trajectory
        L = t["L"]
        dec = t["decrease_slack"][1:] - t["decrease_bound"][1:] - 1e-8 * (1 + np.abs(L[:-1]))
        low = -t["lower_gap"] - 1e-8 * (1 + np.abs(L))
        if dec.size:
            worst_dec = max(worst_dec, float(np.max(dec)))
        worst_low = max(worst_low, float(np.max(low)))
        cases[kind, case] = cases.get((kind, case), 0) + 1
    elapsed = time.perf_counter() - t0
    passed = worst_dec <= 0 and worst_low <= 0 and elapsed < 30
    mix = ", ".join(f"{k}/{c}:{n}" for (k, c), n in sorted(cases.items()))
    report(3, passed, f"100 instances ({mix}); worst decrease excess {worst_dec:.2e}, worst lower-bound "
                      f"excess {worst_low:.2e} (both must be <= 0 after 1e-8(1+|L|) slack); {elapsed:.1f} s")


def _identity_residuals(problem, config, iters):
    """Max of ||z_{n-1} - x_n - gamma grad f(x_n)|| / (1 + ||z_{n-1}||) and of the z-update
    defect relative to 1 + ||z_{n-1}|| + ||z_n||."""
    state = initial_state(problem.y0, problem.z0, config.gamma)
    worst_x = worst_z = 0.0
    for _ in range(iters):
        prev = state
        state = drfdr_step(state, problem.spec, config)
        zp = prev.z
        r_x = np.linalg.norm(np.ravel(zp - state.x - state.gamma * problem.spec.f.grad(state.x)))
        r_z = np.linalg.norm(np.ravel((state.y - state.x) - (state.z - zp) / config.eta))
        worst_x = max(worst_x, r_x / (1 + np.linalg.norm(np.ravel(zp))))
        worst_z = max(worst_z, r_z / (1 + np.linalg.norm(np.ravel(zp)) + np.linalg.norm(np.ravel(state.z))))
    return worst_x, worst_z


def test_criterion_4_fixed_point_identities():
    runs = [(p, SolverConfig(gamma=g, theta=c.theta, eta=c.eta), 100)
            for _, _, p, c, g in _lyapunov_instances()]
    toy = build_toy(TOY_A)
    runs += [(toy, SolverConfig(gamma=g, eta=e), 60) for g in TOY_GAMMAS for e in TOY_ETAS]
    lrmc = make_problem("lrmc", 0, {"m": 200, "r": 5, "R": 0.2})
    runs.append((lrmc, SolverConfig(gamma=2.0, eta=1.8), 40))
    slrme = make_problem("slrme", 1, {"alpha": 1.0})
    runs.append((slrme, SolverConfig(gamma=0.7385, eta=1.4), 20))
    worst_x = worst_z = 0.0
    for problem, cfg, iters in runs:
        wx, wz = _identity_residuals(problem, cfg, iters)
        worst_x, worst_z = max(worst_x, wx), max(worst_z, wz)
    # "exact" for the z identity means floating-point rounding level
    passed = worst_x <= 1e-8 and worst_z <= 1e-12
    report(4, passed, f"{len(runs)} runs; max ||z_(n-1) - x_n - gamma grad f(x_n)||/(1+||z_(n-1)||) = "
                      f"{worst_x:.2e} (tol 1e-8); max z-update defect {worst_z:.2e} (rounding tol 1e-12)")


# 5. Special cases

def _oracles(inst):
    ls = LeastSquaresProx(inst["A"], inst["b"])
    f = SmoothOracle(eval=ls.eval, grad=ls.grad, lipschitz=float(np.linalg.norm(inst["A"], 2) ** 2),
                     alpha=0.0, prox=ls)
    C = inst["C"]
    h = SmoothOracle(eval=lambda x: 0.5 * float(np.sum((C @ x) ** 2)), grad=lambda x: C.T @ (C @ x),
                     lipschitz=float(np.linalg.norm(C, 2) ** 2), alpha=0.0)
    return f, l1_oracle(inst["lam"]), h


def test_criterion_5_special_cases():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        inst = random_instance(seed)
        f, g, h = _oracles(inst)
        for spec_cfg, ref in ((make_drs(f, g, gamma=inst["gamma"]), ref_run(inst, 50, 1.0, False)),
                              (make_dys(f, g, h, gamma=inst["gamma"]), ref_run(inst, 50, 1.0, True)),
                              (make_prs(f, g, gamma=inst["gamma"]), ref_run(inst, 50, 2.0, False))):
            spec, cfg = spec_cfg
            state = initial_state(inst["z0"], inst["z0"], cfg.gamma)
            for rx, ry, rz in ref:
                state = drfdr_step(state, spec, cfg)
                scale = 1 + np.linalg.norm(rz)
                worst = max(worst, max(np.linalg.norm(state.x - rx), np.linalg.norm(state.y - ry),
                                       np.linalg.norm(state.z - rz)) / scale)
    elapsed = time.perf_counter() - t0
    passed = worst <= 1e-12 and elapsed < 5
    report(5, passed, f"DRS/DYS/PRS on 10 instances x 50 iterations; max relative iterate gap {worst:.2e} "
                      f"(tol 1e-12); {elapsed:.2f} s")


# 6. Prox oracles

def test_criterion_6_prox_oracles():
    rng = np.random.default_rng(6)
    us, ts = rng.uniform(-3, 3, 50), rng.uniform(0.05, 1.0, 50)
    a, w = rng.uniform(-2, 2, 50), rng.random(50) < 0.5
    d, b = rng.uniform(-0.7, 0.7, 50), rng.uniform(-1, 1, 50)
    sq = sq_norm_oracle(0.4)
    worst_grid = 0.0
    for u, t, ai, wi, di, bi in zip(us, ts, a, w, d, b):
        pairs = [
            (soft_threshold(u, 0.7 * t), grid_prox(lambda z: 0.7 * np.abs(z), u, t)),
            (prox_quadratic_full(np.array([u]), np.array([ai]), t)[0], grid_prox(lambda z: 0.5 * (z - ai) ** 2, u, t)),
            (prox_quadratic_masked(np.array([u]), np.array([ai]), np.array([wi]), t)[0],
             grid_prox(lambda z: 0.5 * wi * (z - ai) ** 2, u, t)),
            (sq.prox(np.array([u]), t)[0], grid_prox(lambda z: 0.2 * z ** 2, u, t)),
            (prox_quadratic_leastsquares(np.array([u]), np.array([[di]]), np.array([bi]), t, weight=2.0)[0],
             grid_prox(lambda z: (di * z - bi) ** 2, u, t)),
        ]
        worst_grid = max(worst_grid, max(abs(p - q) for p, q in pairs))
    worst_ey = 0.0
    for _ in range(20):
        m, n = rng.integers(3, 9, size=2)
        X = rng.standard_normal((m, n))
        r = int(rng.integers(1, min(m, n) + 1))
        worst_ey = max(worst_ey, abs(np.linalg.norm(X - project_rank(X, r)) - eckart_young_residual(X, r)))
    l2 = l2norm_oracle(0.8)
    kf = kyfan_oracle(2, 0.5)
    slack_l2 = convex_inequality_slack(l2.eval, l2.subgrad, [rng.standard_normal(4) for _ in range(99)] + [np.zeros(4)])
    slack_kf = convex_inequality_slack(kf.eval, kf.subgrad,
                                       [rng.standard_normal((6, 5)) for _ in range(99)] + [np.zeros((6, 5))])
    passed = worst_grid <= 2e-4 and worst_ey <= 1e-8 and min(slack_l2, slack_kf) >= -1e-8
    report(6, passed, f"grid-oracle max gap {worst_grid:.2e} (tol 2e-4); Eckart-Young residual gap "
                      f"{worst_ey:.2e} (tol 1e-8); subgradient slack min {min(slack_l2, slack_kf):.2e} (>= -1e-8)")


# 7. LRMC benchmark

def test_criterion_7_lrmc_benchmark(lrmc_runs):
    runs, elapsed = lrmc_runs
    parts, ok = [], elapsed < 60
    for R in LRMC_RATIOS:
        mean = {a: np.mean([runs[R, t, a][0].iterations for t in range(LRMC_TRIALS)]) for a in ("drfdr", "dys", "fbs")}
        drfdr = [runs[R, t, "drfdr"] for t in range(LRMC_TRIALS)]
        max_obs = max(obs for _, obs in drfdr)
        max_re = max(r.relative_error for r, _ in drfdr)
        all_conv = all(r.converged for r, _ in drfdr)
        ordered = mean["drfdr"] <= mean["dys"] <= mean["fbs"]
        ok = ok and all_conv and max_obs < 1e-4 and max_re < 1e-3 and ordered
        parts.append(f"R={R}: mean iters drfdr {mean['drfdr']:.1f} <= dys {mean['dys']:.1f} <= fbs "
                     f"{mean['fbs']:.1f} ({ordered}), max residual {max_obs:.2e}, max RE {max_re:.2e}")
    report(7, ok, "; ".join(parts) + f"; {elapsed:.1f} s (limit 60 s)")


# 8. SLRME benchmark

def test_criterion_8_slrme_benchmark(slrme_runs):
    runs, elapsed = slrme_runs
    r0, r1, rg = runs[0.0], runs[1.0], runs["gppa"]
    within = all(r.converged and r.iterations <= 2000 for r in (r0, r1, rg))
    passed = within and r1.relative_error <= r0.relative_error + 5e-2 and elapsed < 30
    report(8, passed, f"gamma(a=0)={r0.gamma:.6f} in {r0.iterations} it, gamma(a=1)={r1.gamma:.6f} in "
                      f"{r1.iterations} it, gppa {rg.iterations} it; RE a=1 {r1.relative_error:.4f} <= "
                      f"RE a=0 {r0.relative_error:.4f} + 5e-2; {elapsed:.2f} s")


# 9. Compressed sensing

def test_criterion_9_cs(cs_run):
    r, elapsed = cs_run
    passed = r.converged and r.relative_error < 1e-2 and elapsed < 5
    report(9, passed, f"{r.reason} in {r.iterations} iterations, RE {r.relative_error:.2e} (tol 1e-2); "
                      f"{elapsed:.2f} s")


# 10. Summability proxy

def test_criterion_10_summability(toy_grid, lrmc_runs, slrme_runs, cs_run):
    histories = [r.trajectory["step_sq"] for r in toy_grid.values() if r.converged]
    histories += [r.trajectory["step_sq"] for (_, _, a), (r, _) in lrmc_runs[0].items()
                  if a != "fbs" and r.converged]
    histories += [slrme_runs[0][a].trajectory["step_sq"] for a in (0.0, 1.0) if slrme_runs[0][a].converged]
    if cs_run[0].converged:
        histories.append(cs_run[0].trajectory["step_sq"])
    verdicts = [summable(h) for h in histories]
    checked = [v for v in verdicts if v is not None]
    passed = len(checked) > 0 and all(checked)
    report(10, passed, f"{sum(checked)}/{len(checked)} converged runs have a smaller last-quarter than "
                       f"first-quarter sum of squared steps ({len(verdicts) - len(checked)} too short to split)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
