"""Closed-form large-sample quantities.

``K`` and ``L`` here are the real rate constants with ``K_n ~ nK`` and
``L_n ~ nL``, not the integer sample sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import ModelParams


def m_limit(params: ModelParams, true_params: ModelParams) -> float:
    """Limit of the mean of the centred residual at ``(beta, rho)`` as the maturity grows."""
    b0, r0 = true_params.beta, true_params.rho
    beta, rho = params.beta, params.rho
    return b0**2 / (2 * (1 - r0)) - beta**2 / (2 * (1 - rho)) + (r0 - rho) * b0**2 / (2 * (1 - r0) ** 2)


def sigma2_limit(rho: float, true_params: ModelParams) -> float:
    b0, r0 = true_params.beta, true_params.rho
    return b0**2 * (1 + (r0 - rho) ** 2 / (1 - r0**2))


def limit_loglik(beta: float, rho: float, true_params: ModelParams, K: float, L: float) -> float:
    """Almost-sure limit of ``n^-2 (loglik_n + log(K_n!)/2)`` at ``(beta, rho)``."""
    if beta == 0.0:
        raise ValueError("beta must be nonzero")
    m = m_limit(ModelParams(beta, rho, true_params.b), true_params)
    s2 = sigma2_limit(rho, true_params)
    return (
        -K * L / 2 * math.log(2 * math.pi * beta**2)
        - K * L * (s2 + m * m) / (2 * beta**2)
        - K**2 * m * m / (4 * beta**2)
    )


def _check(params: ModelParams, K: float, L: float) -> None:
    params.require_likelihood_domain()
    if not (K > 0 and L > 0):
        raise ValueError(f"rate constants must be positive, got K={K}, L={L}")


@dataclass(frozen=True)
class FisherMatrix:
    sigma: np.ndarray
    K: float
    L: float
    at: ModelParams


@dataclass(frozen=True)
class AsymptoticCovariance:
    lambda1: np.ndarray
    lambda2: np.ndarray
    full: np.ndarray


def fisher(params: ModelParams, K: float, L: float) -> FisherMatrix:
    """Limiting scaled information in the ordering ``(beta, rho, b_0..b_J)``.

    Block diagonal: the ``(beta, rho)`` block is scaled by ``n^-2``, the ``b``
    block by ``n^-1``, and the cross terms vanish in the limit.
    """
    _check(params, K, L)
    beta, rho, J = params.beta, params.rho, params.J
    kk = K * (K + 2 * L)
    sigma = np.zeros((J + 3, J + 3))
    sigma[0, 0] = 2 * K * L / beta**2 + kk / (2 * (1 - rho) ** 2)
    sigma[1, 1] = K * L / (1 - rho**2) + kk * beta**2 / (2 * (1 - rho) ** 4)
    sigma[0, 1] = sigma[1, 0] = kk * beta / (2 * (1 - rho) ** 3)
    for i in range(J + 1):
        for j in range(J + 1):
            sigma[i + 2, j + 2] = K * sum(rho ** (i + j - 2 * k) for k in range(min(i, j) + 1))
    return FisherMatrix(sigma, K, L, params)


def asymptotic_cov(params: ModelParams, K: float, L: float) -> AsymptoticCovariance:
    """Closed-form inverse of :func:`fisher`, cross-checked against a generic inversion."""
    sig = fisher(params, K, L).sigma
    s11, s22, s12 = sig[0, 0], sig[1, 1], sig[0, 1]
    det = s11 * s22 - s12**2
    assert det > 0, "singular (beta, rho) information block"
    lambda1 = np.array([[s22, -s12], [-s12, s11]]) / det

    rho, J = params.rho, params.J
    lambda2 = np.diag(np.full(J + 1, 1 + rho**2))
    lambda2[-1, -1] = 1.0
    idx = np.arange(J)
    lambda2[idx, idx + 1] = lambda2[idx + 1, idx] = -rho
    lambda2 /= K

    full = np.zeros_like(sig)
    full[:2, :2] = lambda1
    full[2:, 2:] = lambda2
    generic = np.linalg.inv(sig)
    assert np.allclose(full, generic, rtol=1e-8, atol=1e-10 * np.max(np.abs(generic))), (
        "closed-form covariance disagrees with the inverse information matrix"
    )
    return AsymptoticCovariance(lambda1, lambda2, full)
