"""Geometric power sums in rho and their rho-derivatives."""

from __future__ import annotations

import numpy as np


def geometric_sum(rho: float, m: int) -> float:
    """``sum_{i=0}^{m} rho**i``; zero for ``m < 0``."""
    if m < 0:
        return 0.0
    if abs(1.0 - rho) < 1e-6:
        return float(np.sum(rho ** np.arange(m + 1)))
    return (1.0 - rho ** (m + 1)) / (1.0 - rho)


def powers(rho: float, n: int, deriv: int = 0) -> np.ndarray:
    """``d^deriv/drho^deriv rho**i`` for ``i = 0 .. n-1``."""
    i = np.arange(n, dtype=float)
    p = np.empty(n)
    if n:
        p[0] = 1.0
        p[1:] = rho
        p = np.cumprod(p)
    if deriv == 0:
        return p
    shifted = np.concatenate(([0.0] * deriv, p[: n - deriv])) if n > deriv else np.zeros(n)
    if deriv == 1:
        return i * shifted
    if deriv == 2:
        return i * (i - 1.0) * shifted
    raise ValueError("deriv must be 0, 1 or 2")


def partial_sums(rho: float, m_max: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arrays ``S_m``, ``S'_m``, ``S''_m`` for ``m = 0 .. m_max`` with ``S_m = sum_{i<=m} rho**i``.

    Direct cumulative summation: every term is O(1) inside |rho| < 1, so there is
    no cancellation to guard against and the derivatives come out exactly.
    """
    n = m_max + 1
    return (
        np.cumsum(powers(rho, n, 0)),
        np.cumsum(powers(rho, n, 1)),
        np.cumsum(powers(rho, n, 2)),
    )
