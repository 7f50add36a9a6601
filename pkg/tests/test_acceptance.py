"""End-to-end acceptance checks.

Each test prints a single PASS/FAIL line, repeated in the terminal summary.
Run alone with ``pytest tests/test_acceptance.py -v``; expect roughly fifteen
minutes on one core.
"""

import math
import time

import numpy as np
import pytest

from conftest import record
from oracles import double_integrator_time
from tocsynth.dataset import DatasetMeta, build_dataset, build_samples, read_dataset
from tocsynth.feedback import SimConfig, monte_carlo, simulate_closed_loop
from tocsynth.hermite import Ideal, buchberger, count_real_roots, hermite_report, normal_form, quotient_basis
from tocsynth.newton import SolveOptions, deflated_solve
from tocsynth.nn import MlpModel, TrainConfig, bce_loss, gradients, train
from tocsynth.openloop import propagate_exact, solve_time_optimal
from tocsynth.poly import MultiPoly, Q, evaluate, partial
from tocsynth.sysgen import PolySystem, ProblemSpec, build_system, eval_jacobian, eval_system, system_factory

pytestmark = pytest.mark.slow

# longer training for the closed-loop checks; the boundary has to be sharp near the origin
CLOSED_LOOP_TRAINING = TrainConfig(updates=300_000)


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def dyadic_states(rng, count, n, bits=6):
    scale = 2**bits
    return [tuple(Q(int(k), scale) for k in row) for row in rng.integers(-scale, scale + 1, (count, n))]


@pytest.fixture(scope="module")
def model3():
    def run():
        Z, U = build_samples(DatasetMeta(n=3, N_s=500, K=100, seed=0)).arrays()
        return train(Z, U, (3, 80, 1))
    return timed(run)


def test_c1_double_integrator_training():
    def run():
        Z, U = build_samples(DatasetMeta(n=2, N_s=50, K=100, seed=0)).arrays()
        return train(Z, U, (2, 100, 1))
    res, secs = timed(run)
    ok = res.test.accuracy >= 0.97 and res.test.loss <= 0.05 and secs <= 120
    record("C1 n=2 training", ok, f"test acc {res.test.accuracy:.4f}, BCE {res.test.loss:.4f}, {secs:.0f}s")


def test_c2_triple_integrator_training(model3):
    res, secs = model3
    ok = res.test.accuracy >= 0.95 and secs <= 600
    record("C2 n=3 training", ok, f"test acc {res.test.accuracy:.4f}, BCE {res.test.loss:.4f}, {secs:.0f}s")


def test_c3_analytic_oracle():
    rng = np.random.default_rng(3)
    fac = system_factory(2)
    worst = {"dT": 0.0, "F": 0.0, "y": 0.0, "t": 0.0}
    for x in rng.uniform(-1, 1, (100, 2)):
        sol = solve_time_optimal(x)
        t = np.array(sol.t)
        worst["dT"] = max(worst["dT"], abs(sol.T - double_integrator_time(*x)))
        worst["F"] = max(worst["F"], float(np.max(np.abs(fac.instantiate(x, sol.u0).residual(t)))))
        worst["y"] = max(worst["y"], float(np.max(np.abs(propagate_exact(x, sol, sol.T)))))
        worst["t"] = min(worst["t"], float(t.min()))
    ok = worst["dT"] <= 1e-6 and worst["F"] <= 1e-8 and worst["y"] <= 1e-8 and worst["t"] >= 0
    record("C3 analytic oracle", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_c4_hermite_matches_deflation():
    rng = np.random.default_rng(4)
    mismatches = {2: 0, 3: 0}
    rule_misses = 0
    for n, count in ((2, 100), (3, 50)):
        fac = system_factory(n)
        for i, x in enumerate(dyadic_states(rng, count, n)):
            u0 = 1 if i % 2 == 0 else -1
            sig = count_real_roots(ProblemSpec(n, x, u0))
            xf = np.array([float(v) for v in x])
            found = deflated_solve(fac.instantiate(xf, u0), SolveOptions.for_dimension(n, n_roots=math.factorial(n), seed=i))
            mismatches[n] += len(found.roots) != sig
            if n == 2:
                d = x[1] * x[1] - 2 * u0 * x[0]
                rule_misses += sig != (2 if d > 0 else 1 if d == 0 else 0)
    ok = not any(mismatches.values()) and rule_misses == 0
    record("C4 Hermite vs deflation", ok, f"mismatches n=2 {mismatches[2]}/100, n=3 {mismatches[3]}/50, sign rule {rule_misses}")


def test_c5_two_dimensional_hermite_matrix():
    rng = np.random.default_rng(5)
    bad = 0
    for x1, x2 in dyadic_states(rng, 20, 2, bits=5):
        H = hermite_report(ProblemSpec(2, (x1, x2), 1)).H
        bad += [list(r) for r in H] != [[2, 0], [0, x2 * x2 - 2 * x1]]
    record("C5 Hermite matrix diag(2, x2^2-2x1)", bad == 0, f"{20 - bad}/20 exact")


def test_c6_hermite_bound_saves_iterations():
    rng = np.random.default_rng(6)
    fac = system_factory(4)

    def run():
        informed = factorial = 0
        for i, x in enumerate(dyadic_states(rng, 100, 4)):
            u0 = 1 if i % 2 == 0 else -1
            xf = np.array([float(v) for v in x])
            cs = fac.instantiate(xf, u0)
            sig = count_real_roots(ProblemSpec(4, x, u0))
            informed += deflated_solve(cs, SolveOptions.for_dimension(4, n_roots=sig, seed=i)).iterations
            factorial += deflated_solve(cs, SolveOptions.for_dimension(4, n_roots=24, seed=i)).iterations
        return informed, factorial
    (informed, factorial), secs = timed(run)
    ok = informed < factorial and secs <= 1800
    record("C6 n=4 iteration totals", ok, f"Hermite {informed} vs factorial {factorial} iterations, {secs:.0f}s")


def test_c7_noise_robustness(model3):
    model = model3[0].model
    x = np.array([0.5, 0.5, 0.5])
    cfg = SimConfig(noise_sigma=0.02, noise_is_variance=True, confidence_eps=0.005, seed=7)

    def run():
        open_loop = monte_carlo("open", x, cfg, M=1000)
        feedback = monte_carlo("net-fallback", x, cfg, M=1000, model=model)
        return open_loop.mean_final_norm, feedback.mean_final_norm
    (open_norm, fb_norm), secs = timed(run)
    ok = fb_norm <= 0.1 and fb_norm <= open_norm / 4 and secs <= 600
    record("C7 Monte Carlo", ok, f"feedback {fb_norm:.4f} vs open loop {open_norm:.4f}, {secs:.0f}s")


@pytest.mark.parametrize("n,eps,dims", [(2, 0.01, (2, 100, 1)), (3, 0.005, (3, 80, 1))])
def test_c8_closed_loop_time(n, eps, dims):
    Z, U = build_samples(DatasetMeta(n=n, N_s=500, K=100, seed=0)).arrays()
    model = train(Z, U, dims, CLOSED_LOOP_TRAINING).model
    rng = np.random.default_rng(8)
    cfg = SimConfig(confidence_eps=eps)
    ratios, fallback = [], []
    for x in rng.uniform(-1, 1, (20, n)):
        rec = simulate_closed_loop(model, x, cfg)
        ratios.append(math.inf if rec.T_NN is None else rec.T_NN / solve_time_optimal(x).T)
        fallback.append(rec.fallback_fraction)
    worst = max(ratios)
    record(f"C8 n={n} closed-loop time", worst <= 1.1,
           f"max T_NN/T* {worst:.3f} (median {np.median(ratios):.3f}), fallback {np.mean(fallback):.1%}")


def test_c9_property_suites(tmp_path):
    rng = np.random.default_rng(9)
    failures = []

    # ring axioms on random sparse rational polynomials
    def rand_poly():
        return MultiPoly(3, {tuple(rng.integers(0, 3, 3)): Q(int(rng.integers(-4, 5)), int(rng.integers(1, 4))) for _ in range(4)})
    for _ in range(30):
        p, q, r = rand_poly(), rand_poly(), rand_poly()
        if not (p + q == q + p and p * q == q * p and p * (q + r) == p * q + p * r and (p * q) * r == p * (q * r)):
            failures.append("ring axioms")
            break

    # Jacobian against central differences
    for n in (2, 3, 4, 5):
        sys_ = build_system(ProblemSpec(n, dyadic_states(rng, 1, n)[0], 1))
        t = rng.uniform(0, 2, n)
        fd = np.column_stack([(eval_system(sys_, t + h) - eval_system(sys_, t - h)) / 2e-6 for h in 1e-6 * np.eye(n)])
        J = eval_jacobian(sys_, t)
        if np.max(np.abs(fd - J)) > 1e-6 * max(1.0, np.max(np.abs(J))):
            failures.append(f"jacobian n={n}")

    # MLP gradients on the four architectures
    for dims in ((2, 100, 1), (3, 80, 1), (4, 100, 100, 1), (5, 80, 80, 1)):
        m = MlpModel.init(dims, seed=1)
        Z, U = rng.uniform(-1, 1, (6, dims[0])), rng.choice([-1, 1], 6)
        grads = gradients(m, Z, U)
        params = m.params()
        worst = 0.0
        for k in range(len(params)):
            for idx in rng.choice(params[k].size, size=min(params[k].size, 8), replace=False):
                up = [p.copy() for p in params]
                dn = [p.copy() for p in params]
                up[k].reshape(-1)[idx] += 1e-6
                dn[k].reshape(-1)[idx] -= 1e-6
                fd = (bce_loss(m.with_params(up), Z, U) - bce_loss(m.with_params(dn), Z, U)) / 2e-6
                an = grads[k].reshape(-1)[idx]
                worst = max(worst, abs(fd - an) / max(1e-3, abs(fd) + abs(an)))
        if worst > 1e-5:
            failures.append(f"mlp gradients {dims}")

    # normal form idempotence and the n=2 standard monomials
    gb = buchberger(Ideal(build_system(ProblemSpec(2, (Q(1, 3), Q(1, 2)), 1)).equations))
    if quotient_basis(gb) != [(0, 0), (0, 1)]:
        failures.append("quotient basis")
    gb3 = buchberger(Ideal(build_system(ProblemSpec(3, dyadic_states(rng, 1, 3)[0], -1)).equations))
    for _ in range(10):
        f = rand_poly()
        if normal_form(normal_form(f, gb3), gb3) != normal_form(f, gb3):
            failures.append("normal form idempotence")
            break

    # deflation exhausts t^2 - 1
    t = MultiPoly.variable(1, 0)
    for p in (1, 2, 3):
        for xi in (0.0, 1.0):
            res = deflated_solve(PolySystem.from_polys([t * t - 1]), SolveOptions(guess=np.array([3.0]), n_roots=2, p=p, xi=xi))
            if sorted(round(float(r[0]), 9) for r in res.roots) != [-1.0, 1.0]:
                failures.append(f"deflation p={p} xi={xi}")

    # dataset determinism and round-trip
    a = build_dataset(DatasetMeta(n=2, N_s=5, K=20, seed=1), tmp_path / "a.jsonl")
    build_dataset(DatasetMeta(n=2, N_s=5, K=20, seed=1), tmp_path / "b.jsonl")
    if (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "b.jsonl").read_bytes():
        failures.append("dataset determinism")
    if read_dataset(tmp_path / "a.jsonl").samples != a.samples:
        failures.append("dataset round-trip")

    record("C9 property suites", not failures, "all hold" if not failures else "; ".join(failures))


def test_n5_smoke():
    def run():
        Z, U = build_samples(DatasetMeta(n=5, N_s=500, K=100, seed=0)).arrays()
        return len(U), train(Z, U, (5, 80, 80, 1))
    (count, res), secs = timed(run)
    record("n=5 smoke", res.test.accuracy >= 0.90, f"{count} samples, test acc {res.test.accuracy:.4f}, {secs:.0f}s")
