"""Exact Gaussian log-likelihood of a forward-rate sample, with analytic derivatives.

The sample ``x[k, ell]``, ``1 <= k <= K``, ``0 <= ell <= L`` maps one-to-one
(unit Jacobian) onto independent Gaussian residuals:

* ``K * L`` one-step residuals ``y[k, ell](rho)``, ``ell < L``, variance ``beta^2``;
* ``K`` tail residuals ``y_tilde[k](rho)`` along anti-diagonals, variance ``k beta^2``.

Every residual is ``data(rho) + m(beta, rho, b)`` where the data part is linear
in ``rho`` and the deterministic part ``m`` depends only on the maturity (one-step
residuals) or the row (tail residuals). Summing squares over ``k`` first leaves
a handful of per-maturity moments, so one evaluation costs O(K + L) once the
moments are cached in :class:`SurfaceStats`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from ._series import partial_sums, powers
from .field_sim import ForwardSurface
from .params import ModelParams


@dataclass(frozen=True)
class Residuals:
    y: np.ndarray  # shape (K, L): y[k-1, ell]
    y_tilde: np.ndarray  # shape (K,)


@dataclass(frozen=True)
class LikelihoodEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "gradient": self.gradient.tolist(),
            "hessian": self.hessian.tolist(),
        }


def _differences(surface: ForwardSurface) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    K, L = surface.K, surface.L
    x = surface.sample()
    curve = surface.initial_curve
    u = x[1:, :L] - x[:-1, 1:]
    v = np.zeros_like(u)
    v[:, 1:] = x[1:, : L - 1] - x[:-1, 1:L]
    k = np.arange(1, K + 1)
    ut = x[1:, L] - curve[k + L]
    vt = x[1:, L - 1] - curve[k + L - 1]
    return u, v, ut, vt


def residuals(surface: ForwardSurface, rho: float) -> Residuals:
    """One-step residuals ``y[k, ell](rho)`` for ``ell < L`` and tail residuals ``y_tilde[k, L](rho)``."""
    if surface.initial_curve.size < surface.K + surface.L + 1:
        raise ValueError("initial curve too short: needs maturities up to K + L")
    u, v, ut, vt = _differences(surface)
    return Residuals(u - rho * v, ut - rho * vt)


def q_coefficient(rho: float, j: int, k: int, L: int) -> float:
    """Weight of ``b_j`` in the tail drift: ``sum_{n=max(0, j-k-L+1)}^{j-L} rho^n`` for ``j >= L``."""
    if j < L:
        return 0.0
    lo = max(0, j - k - L + 1)
    return float(sum(rho**n for n in range(lo, j - L + 1)))


def xi(params: ModelParams, g: float, ell: int) -> float:
    """Centred residual: ``g`` minus the no-arbitrage drift at maturity ``ell``."""
    beta, rho, b = params.beta, params.rho, params.b
    convex = sum(rho**i for i in range(2 * ell + 1))
    risk = sum(b[j] * rho ** (j - ell) for j in range(ell, len(b)))
    return g - 0.5 * beta**2 * convex + beta * risk


class SurfaceStats:
    """Per-maturity moments of the one-step residual data and the tail data."""

    def __init__(self, surface: ForwardSurface) -> None:
        u, v, ut, vt = _differences(surface)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(ut)) and np.all(np.isfinite(vt))):
            raise ValueError("surface contains non-finite values inside the sample")
        self.K, self.L = surface.K, surface.L
        self.U1 = u.sum(axis=0)
        self.V1 = v.sum(axis=0)
        self.U2 = (u * u).sum(axis=0)
        self.UV = (u * v).sum(axis=0)
        self.V2 = (v * v).sum(axis=0)
        self.ut = ut
        self.vt = vt
        self.n_obs = self.K * (self.L + 1)
        self.log_k_factorial = float(gammaln(self.K + 1))
        # group weights: L one-step groups of K residuals, then K single tail residuals
        self.count = np.concatenate((np.full(self.L, float(self.K)), np.ones(self.K)))
        self.weight = np.concatenate((np.ones(self.L), 1.0 / np.arange(1, self.K + 1)))


@dataclass
class _Drift:
    """Deterministic parts per group: convexity ``D`` and risk loadings ``C`` plus rho-derivatives."""

    D: np.ndarray
    dD: np.ndarray
    d2D: np.ndarray
    C: np.ndarray
    dC: np.ndarray
    d2C: np.ndarray


def _drift_terms(rho: float, K: int, L: int, J: int) -> _Drift:
    S, dS, d2S = partial_sums(rho, 2 * (K + L - 1))
    ell = np.arange(L)
    m = np.arange(L, K + L)  # maturities feeding the tail, ell = L .. K + L - 1
    D = np.concatenate((S[2 * ell], np.cumsum(S[2 * m])))
    dD = np.concatenate((dS[2 * ell], np.cumsum(dS[2 * m])))
    d2D = np.concatenate((d2S[2 * ell], np.cumsum(d2S[2 * m])))

    G = L + K
    C = np.zeros((G, J + 1))
    dC = np.zeros_like(C)
    d2C = np.zeros_like(C)
    p0, p1, p2 = (powers(rho, J + 1, d) for d in (0, 1, 2))
    for e in range(min(L, J + 1)):
        C[e, e:] = p0[: J + 1 - e]
        dC[e, e:] = p1[: J + 1 - e]
        d2C[e, e:] = p2[: J + 1 - e]
    if J >= L:
        c0, c1, c2 = (np.concatenate(([0.0], np.cumsum(p))) for p in (p0, p1, p2))
        for k in range(1, K + 1):
            for j in range(L, J + 1):
                lo, hi = max(0, j - k - L + 1), j - L
                C[L + k - 1, j] = c0[hi + 1] - c0[lo]
                dC[L + k - 1, j] = c1[hi + 1] - c1[lo]
                d2C[L + k - 1, j] = c2[hi + 1] - c2[lo]
    return _Drift(D, dD, d2D, C, dC, d2C)


def _data_moments(stats: SurfaceStats, rho: float):
    """Per-group ``S1 = sum a``, ``S2 = sum a^2`` of the data part ``a = u - rho v`` and rho-derivatives."""
    a_t = stats.ut - rho * stats.vt
    S1 = np.concatenate((stats.U1 - rho * stats.V1, a_t))
    dS1 = -np.concatenate((stats.V1, stats.vt))
    S2 = np.concatenate((stats.U2 - 2 * rho * stats.UV + rho**2 * stats.V2, a_t**2))
    dS2 = np.concatenate((-2 * stats.UV + 2 * rho * stats.V2, -2 * a_t * stats.vt))
    d2S2 = np.concatenate((2 * stats.V2, 2 * stats.vt**2))
    return S1, dS1, S2, dS2, d2S2


def evaluate(theta: np.ndarray, stats: SurfaceStats, order: int = 0):
    """Log-likelihood at ``theta = (beta, rho, b_0..b_J)`` with derivatives up to ``order``."""
    beta, rho = float(theta[0]), float(theta[1])
    b = np.asarray(theta[2:], dtype=float)
    if beta == 0.0:
        raise ValueError("beta: the likelihood is undefined at beta = 0")
    if not abs(rho) < 1.0:
        raise ValueError(f"rho: |rho| must be < 1, got {rho}")
    J = b.size - 1
    dr = _drift_terms(rho, stats.K, stats.L, J)
    S1, dS1, S2, dS2, d2S2 = _data_moments(stats, rho)
    n, w = stats.count, stats.weight

    Cb = dr.C @ b
    m = -0.5 * beta**2 * dr.D + beta * Cb
    q = S2 + 2.0 * m * S1 + n * m * m
    Q = float(w @ q)
    N = stats.n_obs
    value = -0.5 * N * math.log(2.0 * math.pi * beta**2) - 0.5 * stats.log_k_factorial - Q / (2.0 * beta**2)
    if order == 0:
        return value

    P = J + 3
    G = m.size
    dm = np.empty((G, P))
    dm[:, 0] = -beta * dr.D + Cb
    dm[:, 1] = -0.5 * beta**2 * dr.dD + beta * (dr.dC @ b)
    dm[:, 2:] = beta * dr.C
    dq = 2.0 * (S1 + n * m)[:, None] * dm
    dq[:, 1] += dS2 + 2.0 * m * dS1
    dQ = w @ dq

    h, dh, d2h = 1.0 / (2.0 * beta**2), -1.0 / beta**3, 3.0 / beta**4
    grad = -h * dQ
    grad[0] += -N / beta - Q * dh
    if order == 1:
        return value, grad

    d2m = np.zeros((G, P, P))
    d2m[:, 0, 0] = -dr.D
    d2m[:, 0, 1] = d2m[:, 1, 0] = -beta * dr.dD + dr.dC @ b
    d2m[:, 1, 1] = -0.5 * beta**2 * dr.d2D + beta * (dr.d2C @ b)
    d2m[:, 0, 2:] = d2m[:, 2:, 0] = dr.C
    d2m[:, 1, 2:] = d2m[:, 2:, 1] = beta * dr.dC
    d2Q = 2.0 * np.einsum("g,gi,gj->ij", w * n, dm, dm)
    d2Q += 2.0 * np.einsum("g,gij->ij", w * (S1 + n * m), d2m)
    cross = 2.0 * (w * dS1) @ dm
    d2Q[1, :] += cross
    d2Q[:, 1] += cross
    d2Q[1, 1] += w @ d2S2

    hess = -h * d2Q
    hess[0, :] -= dh * dQ
    hess[:, 0] -= dh * dQ
    hess[0, 0] += N / beta**2 - Q * d2h
    return value, grad, 0.5 * (hess + hess.T)


def log_likelihood(params: ModelParams, surface: ForwardSurface) -> float:
    params.require_likelihood_domain()
    return evaluate(params.to_vector(), SurfaceStats(surface))


def log_likelihood_grad_hess(params: ModelParams, surface: ForwardSurface) -> LikelihoodEval:
    params.require_likelihood_domain()
    value, grad, hess = evaluate(params.to_vector(), SurfaceStats(surface), order=2)
    return LikelihoodEval(value, grad, hess)


def solve_b_from_stats(beta: float, rho: float, stats: SurfaceStats, J: int) -> np.ndarray:
    if beta == 0.0:
        raise ValueError("beta: the likelihood is undefined at beta = 0")
    if not abs(rho) < 1.0:
        raise ValueError(f"rho: |rho| must be < 1, got {rho}")
    K, L = stats.K, stats.L
    if L > J:
        # sum_k xi[k, j] = 0 for j = J, J-1, ..., 0; b_j enters xi[k, ell] for ell <= j only
        S, _, _ = partial_sums(rho, 2 * J)
        pw = powers(rho, J + 1)
        b = np.zeros(J + 1)
        for j in range(J, -1, -1):
            g_mean = (stats.U1[j] - rho * stats.V1[j]) / K
            b[j] = (0.5 * beta**2 * S[2 * j] - g_mean) / beta - np.dot(b[j + 1 :], pw[1 : J + 1 - j])
        return b
    dr = _drift_terms(rho, K, L, J)
    S1, _, _, _, _ = _data_moments(stats, rho)
    n, w = stats.count, stats.weight
    m0 = -0.5 * beta**2 * dr.D
    normal = (dr.C * (w * n)[:, None]).T @ dr.C
    rhs = -(dr.C.T @ (w * (S1 + n * m0))) / beta
    try:
        factor = linalg.cho_factor(normal)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular normal matrix for the risk parameters") from exc
    return linalg.cho_solve(factor, rhs)


def solve_b_profile(beta: float, rho: float, surface: ForwardSurface, J: int = 0) -> np.ndarray:
    """Risk parameters maximizing the likelihood at fixed ``(beta, rho)``."""
    return solve_b_from_stats(beta, rho, SurfaceStats(surface), J)
