"""Acceptance criteria, each at its stated tolerance.

Every check prints one ``criterion N: PASS|FAIL`` line. Run the file directly
(``python tests/test_acceptance.py``) for just those lines, or through pytest.
The Monte Carlo criteria 4 and 5 take several minutes and are marked slow.
"""

from __future__ import annotations

import itertools
import math
import sys
import time

import numpy as np
import pytest
from scipy.special import gammaln

from hjmfit.asymptotics import asymptotic_cov, fisher, limit_loglik
from hjmfit.estimation import fit
from hjmfit.experiments import McConfig, run_clt, run_consistency
from hjmfit.field_sim import generate_noise, simulate_surface
from hjmfit.likelihood import log_likelihood, log_likelihood_grad_hess, residuals, xi
from hjmfit.market import martingale_check
from hjmfit.params import ConstraintBox, ModelParams

from oracles import gaussian_loglik

TRUTH = ModelParams(0.5, 0.5, (0.2,))
BOX = ConstraintBox((0.1, 2.0), (-0.9, 0.9), ((-2.0, 2.0),))


def _random_params(rng, J):
    beta = rng.uniform(0.2, 1.5) * rng.choice([-1, 1])
    return ModelParams(beta, rng.uniform(-0.9, 0.9), tuple(rng.uniform(-1, 1, J + 1)))


def criterion_1():
    rng = np.random.default_rng(1)
    worst = 0.0
    for K, L, J in itertools.product([1, 2, 3], [1, 2, 3], [0, 1]):
        truth = _random_params(rng, J)
        curve = rng.normal(scale=0.05, size=K + L + 1)
        s = simulate_surface(truth, curve, generate_noise(K, L, int(rng.integers(2**63))))
        for _ in range(25):
            p = _random_params(rng, J)
            ref = gaussian_loglik(p.beta, p.rho, p.b, s.sample()[1:], curve, K, L)
            worst = max(worst, abs(log_likelihood(p, s) - ref))
    return worst < 1e-8, f"max |loglik - brute-force MVN| = {worst:.2e} (tol 1e-08)"


def criterion_2():
    rng = np.random.default_rng(2)
    h1, h2 = 1e-4, 1e-5
    g_worst = h_worst = 0.0
    for _ in range(20):
        J = int(rng.integers(0, 3))
        K, L = int(rng.integers(2, 8)), int(rng.integers(J + 1, 8))
        s = simulate_surface(_random_params(rng, J), rng.normal(scale=0.05, size=K + L + 1),
                             generate_noise(K, L, int(rng.integers(2**63))))
        p = _random_params(rng, J)
        theta = p.to_vector()
        ev = log_likelihood_grad_hess(p, s)

        def f(t):
            return log_likelihood(ModelParams.from_vector(t), s)

        def g(t):
            return log_likelihood_grad_hess(ModelParams.from_vector(t), s).gradient

        eye = np.eye(theta.size)
        g_fd = np.array([(-f(theta + 2 * h1 * e) + 8 * f(theta + h1 * e) - 8 * f(theta - h1 * e)
                          + f(theta - 2 * h1 * e)) / (12 * h1) for e in eye])
        H_fd = np.stack([(g(theta + h2 * e) - g(theta - h2 * e)) / (2 * h2) for e in eye])
        g_worst = max(g_worst, np.max(np.abs(ev.gradient - g_fd)) / np.max(np.abs(g_fd)))
        h_worst = max(h_worst, np.max(np.abs(ev.hessian - H_fd)) / np.max(np.abs(H_fd)))
    ok = g_worst < 1e-6 and h_worst < 1e-4
    return ok, f"gradient rel err {g_worst:.2e} (tol 1e-06), Hessian rel err {h_worst:.2e} (tol 1e-04)"


def criterion_3():
    p = ModelParams(0.1, 0.3, (0.1, -0.05))
    good = martingale_check(p, 5, 5, 5, 10_000, seed=2024)
    bad = martingale_check(p, 5, 5, 5, 10_000, seed=2024, convexity=False)
    ok = good.max_abs_z <= 4 and bad.max_abs_z > 6
    return ok, f"max |z| = {good.max_abs_z:.2f} (tol 4), corrupted drift max |z| = {bad.max_abs_z:.1f} (needs > 6)"


def criterion_4():
    config = McConfig(TRUTH, BOX, (1.0, 1.0), (10, 20, 40, 80), 200, seed=4)
    report = run_consistency(config)
    med = np.array([report.medians()[n] for n in config.n_grid])
    decreasing = bool(np.all(np.diff(med[:, :2], axis=0) < 0))
    small = bool(np.all(med[-1, :2] < 0.02))
    fails = report.failure_counts()
    detail = (
        "median |beta err| " + " > ".join(f"{m:.4f}" for m in med[:, 0])
        + "; median |rho err| " + " > ".join(f"{m:.4f}" for m in med[:, 1])
        + f"; n=80 below 0.02: {small}; median |b0 err| at n=80 {med[-1, 2]:.3f}"
        + f" (sqrt(n) rate, not part of the 0.02 bound); failures {fails}"
    )
    return decreasing and small, detail


def criterion_5():
    config = McConfig(TRUTH, BOX, (1.0, 1.0), (30,), 2000, seed=2024)
    clt = run_clt(config).clt
    rel = np.array(clt["diag_rel_error"])
    corr = np.abs(np.array(clt["cross_block_corr"]))
    ks = np.array(clt["ks_pvalue"])
    ok = bool(np.all(rel < 0.2) and np.all(corr < 0.1) and np.all(ks > 0.01))
    detail = (
        f"diag rel err {np.round(rel, 3).tolist()} (tol 0.2), max |cross corr| {corr.max():.3f} (tol 0.1), "
        f"KS p {np.round(ks, 3).tolist()} (tol 0.01), used {clt['used']}/2000"
    )
    return ok, detail


def criterion_6():
    worst_prod = worst_b = 0.0
    for J, beta, rho, K, L in itertools.product(range(6), [-1.2, 0.3, 1.0], [-0.9, -0.3, 0.0, 0.5, 0.95],
                                                 [0.5, 1.0, 3.0], [0.5, 2.0]):
        p = ModelParams(beta, rho, (0.0,) * (J + 1))
        sig = fisher(p, K, L).sigma
        cov = asymptotic_cov(p, K, L)
        worst_prod = max(worst_prod, np.max(np.abs(cov.full @ sig - np.eye(J + 3))))
        worst_b = max(worst_b, np.max(np.abs(cov.lambda2 - np.linalg.inv(sig[2:, 2:]))))
    s11 = fisher(ModelParams(1.0, 0.0), 1, 1).sigma[0, 0]
    ok = worst_prod < 1e-10 and worst_b < 1e-10 and s11 == 3.5
    return ok, f"max |Lambda Sigma - I| = {worst_prod:.1e}, max |Lambda2 - inv(b-block)| = {worst_b:.1e}, sigma11 = {s11}"


def criterion_7():
    n = 200
    s = simulate_surface(TRUTH, np.zeros(2 * n + 1), generate_noise(n, n, 7))
    worst = 0.0
    for beta, rho in itertools.product(np.linspace(0.3, 1.0, 5), np.linspace(-0.8, 0.8, 5)):
        scaled = (log_likelihood(ModelParams(beta, rho, TRUTH.b), s) + 0.5 * gammaln(n + 1)) / n**2
        A = limit_loglik(beta, rho, TRUTH, 1.0, 1.0)
        worst = max(worst, abs(scaled - A) / abs(A))
    return worst < 0.05, f"max |n^-2 (L_n + log(K_n!)/2) - A| / |A| = {worst:.4f} (tol 0.05) on 5x5 grid"


def criterion_8():
    worst = 0.0
    cases = [(0, 20, 10), (0, 40, 1), (1, 30, 5), (2, 25, 3), (3, 20, 8)]
    for i, (J, K, L) in enumerate(cases):
        truth = ModelParams(0.5, 0.5, tuple(0.2 * (-0.5) ** j for j in range(J + 1)))
        box = ConstraintBox((0.1, 2.0), (-0.9, 0.9), ((-2.0, 2.0),) * (J + 1))
        s = simulate_surface(truth, np.zeros(K + L + 1), generate_noise(K, L, 80 + i))
        est = fit(s, box).estimate
        y = residuals(s, est.rho).y
        for j in range(J + 1):
            worst = max(worst, abs(sum(xi(est, y[k, j], j) for k in range(K))))
    return worst < 1e-10, f"max_j |sum_k xi_kj(theta_hat)| = {worst:.1e} (tol 1e-10) over {len(cases)} fits"


CRITERIA = {
    1: ("likelihood oracle equivalence", criterion_1),
    2: ("gradient/Hessian finite differences", criterion_2),
    3: ("martingale property", criterion_3),
    4: ("consistency", criterion_4),
    5: ("CLT covariance", criterion_5),
    6: ("closed-form matrix identities", criterion_6),
    7: ("expansion diagnostic", criterion_7),
    8: ("first-order conditions", criterion_8),
}


def _run(number: int) -> tuple[bool, str]:
    name, check = CRITERIA[number]
    start = time.perf_counter()
    ok, detail = check()
    line = f"criterion {number} ({name}): {'PASS' if ok else 'FAIL'}: {detail} [{time.perf_counter() - start:.1f}s]"
    return ok, line


def _check(number, capsys):
    ok, line = _run(number)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


@pytest.mark.parametrize("number", [1, 2, 3, 6, 7, 8])
def test_criterion(number, capsys):
    _check(number, capsys)


@pytest.mark.slow
@pytest.mark.parametrize("number", [4, 5])
def test_monte_carlo_criterion(number, capsys):
    _check(number, capsys)


if __name__ == "__main__":
    chosen = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    results = []
    for number in chosen:
        ok, line = _run(number)
        print(line, flush=True)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
