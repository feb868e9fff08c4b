import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from hjmfit.estimation import FitError, FitOptions, fit, profile_objective
from hjmfit.field_sim import ForwardSurface, NoiseField, generate_noise, simulate_surface
from hjmfit.likelihood import log_likelihood, log_likelihood_grad_hess, solve_b_profile
from hjmfit.params import ConstraintBox, ModelParams

TRUTH = ModelParams(0.5, 0.5, (0.2,))
BOX = ConstraintBox((0.1, 2.0), (-0.9, 0.9), ((-2.0, 2.0),))


def simulated(params, K, L, seed):
    return simulate_surface(params, np.zeros(K + L + 1), generate_noise(K, L, seed))


def test_profile_dominates_every_b():
    s = simulated(TRUTH, 6, 4, seed=1)
    rng = np.random.default_rng(0)
    for beta, rho in [(0.5, 0.5), (1.2, -0.3), (0.2, 0.8)]:
        top = profile_objective(beta, rho, s)
        for b in rng.uniform(-2, 2, 25):
            assert top >= log_likelihood(ModelParams(beta, rho, (b,)), s)
        b_hat = solve_b_profile(beta, rho, s)
        assert top == log_likelihood(ModelParams(beta, rho, tuple(b_hat)), s)


def test_matches_grid_search_on_tiny_surface():
    # K = 2 is the smallest fittable size; a dense grid must land next to the fit
    s = simulated(TRUTH, 2, 1, seed=3)
    box = ConstraintBox((0.1, 2.0), (-0.9, 0.9), ((-3.0, 3.0),))
    res = fit(s, box)
    betas, rhos, bs = np.linspace(0.1, 2, 60), np.linspace(-0.9, 0.9, 60), np.linspace(-3, 3, 60)
    best = max(
        itertools.product(betas, rhos, bs),
        key=lambda t: log_likelihood(ModelParams(t[0], t[1], (t[2],)), s),
    )
    assert res.loglik >= log_likelihood(ModelParams(best[0], best[1], (best[2],)), s) - 1e-9
    steps = np.array([betas[1] - betas[0], rhos[1] - rhos[0], bs[1] - bs[0]])
    assert np.all(np.abs(res.estimate.to_vector() - np.array(best)) <= 2 * steps)


@pytest.mark.parametrize("seed", range(10))
def test_matches_full_space_optimizer(seed):
    J = seed % 2
    truth = ModelParams(0.5, 0.5, (0.2, -0.1)[: J + 1])
    s = simulated(truth, 15, 10, seed)
    box = ConstraintBox((0.1, 2.0), (-0.9, 0.9), ((-2.0, 2.0),) * (J + 1))
    res = fit(s, box)
    assert res.converged and not res.boundary_hit

    def neg(t):
        ev = log_likelihood_grad_hess(ModelParams.from_vector(t), s)
        return -ev.value, -ev.gradient

    def neg_hess(t):
        return -log_likelihood_grad_hess(ModelParams.from_vector(t), s).hessian

    ref = minimize(neg, truth.to_vector(), jac=True, hess=neg_hess, method="trust-exact", options={"gtol": 1e-11})
    assert np.max(np.abs(res.estimate.to_vector() - ref.x)) < 1e-6
    assert abs(res.loglik + ref.fun) < 1e-8 * max(1.0, abs(ref.fun))


def test_near_truth_at_moderate_size():
    hits = 0
    for seed in range(20):
        est = fit(simulated(TRUTH, 100, 100, seed), BOX).estimate
        hits += abs(est.beta - 0.5) < 0.05 and abs(est.rho - 0.5) < 0.05 and abs(est.b[0] - 0.2) < 0.3
    assert hits >= 19


def test_beats_truth_and_history_is_monotone():
    s = simulated(TRUTH, 30, 30, seed=9)
    res = fit(s, BOX)
    assert res.converged
    assert profile_objective(res.estimate.beta, res.estimate.rho, s) >= profile_objective(0.5, 0.5, s) - 1e-9
    assert np.all(np.diff(res.history) >= -1e-9 * abs(res.history[-1]))
    assert res.history[-1] == pytest.approx(res.loglik, rel=1e-12)


def test_noise_free_surface_hits_beta_floor():
    # pure drift rows at beta = 0.05 leave residuals far smaller than any beta in the box
    s = simulate_surface(ModelParams(0.05, 0.3, (0.0,)), np.zeros(12), NoiseField.zeros(6, 5))
    res = fit(s, BOX)
    assert res.boundary_hit
    assert res.estimate.beta == BOX.beta_range[0]


def test_rejects_single_row_and_corrupt_input():
    with pytest.raises(ValueError):
        fit(simulated(TRUTH, 1, 3, seed=1), BOX)
    s = simulated(TRUTH, 3, 3, seed=1)
    rows = [s.row(k).copy() for k in range(4)]
    rows[2][1] = np.inf
    with pytest.raises(FitError):
        fit(ForwardSurface.from_rows(3, 3, rows), BOX)


def test_result_serializes():
    res = fit(simulated(TRUTH, 5, 5, seed=2), BOX, FitOptions(grid=2))
    d = res.to_dict()
    assert set(d) == {"estimate", "loglik", "converged", "iterations", "grad_norm", "boundary_hit"}
    assert ModelParams.from_dict(d["estimate"]) == res.estimate
