"""Simulation and maximum likelihood estimation for a discrete-time HJM model
driven by a doubly geometric spatial autoregressive field."""

__version__ = "0.1.0"

from .asymptotics import asymptotic_cov, fisher, limit_loglik, m_limit, sigma2_limit
from .estimation import FitOptions, FitResult, fit, profile_objective
from .field_sim import (
    ForwardSurface,
    NoiseField,
    closed_form_increment,
    closed_form_level,
    generate_noise,
    simulate_surface,
)
from .likelihood import (
    log_likelihood,
    log_likelihood_grad_hess,
    q_coefficient,
    residuals,
    solve_b_profile,
    xi,
)
from .market import bond_prices, discount_factors, martingale_check, simulate_s_field
from .params import ConstraintBox, ModelParams
