"""Innovation fields and forward-rate surfaces under the no-arbitrage dynamics.

Both lattices are triangular. For a sample with ``K`` time rows and maximum
maturity ``L``, row ``k`` covers maturities ``0 .. K + L - k``; the surface
carries row 0 (the initial curve) and the noise field rows ``1 .. K``.
Entries are stored row-major in one flat array.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from ._series import geometric_sum, partial_sums, powers
from .params import ModelParams

_UINT64 = 2**64


def _row_offsets(K: int, L: int, first_row: int) -> np.ndarray:
    lengths = np.array([K + L - k + 1 for k in range(first_row, K + 1)], dtype=np.int64)
    return np.concatenate(([0], np.cumsum(lengths)))


def _check_sizes(K: int, L: int) -> None:
    if int(K) != K or int(L) != L or K < 1 or L < 1:
        raise ValueError(f"K and L must be positive integers, got K={K}, L={L}")


class _Triangle:
    """Flat storage with (k, ell) -> index arithmetic."""

    _first_row = 0

    def __init__(self, K: int, L: int, values: np.ndarray) -> None:
        _check_sizes(K, L)
        self.K = int(K)
        self.L = int(L)
        self._offsets = _row_offsets(self.K, self.L, self._first_row)
        values = np.asarray(values, dtype=float)
        if values.shape != (self._offsets[-1],):
            raise ValueError(
                f"expected {self._offsets[-1]} lattice values for K={K}, L={L}, got {values.size}"
            )
        values.setflags(write=False)
        self.values = values

    def row_length(self, k: int) -> int:
        return self.K + self.L - k + 1

    def row(self, k: int) -> np.ndarray:
        if not self._first_row <= k <= self.K:
            raise IndexError(f"row {k} outside {self._first_row}..{self.K}")
        i = k - self._first_row
        return self.values[self._offsets[i] : self._offsets[i + 1]]

    def __getitem__(self, key: tuple[int, int]) -> float:
        k, ell = key
        if not 0 <= ell < self.row_length(k) or not self._first_row <= k <= self.K:
            raise IndexError(f"lattice point ({k}, {ell}) outside the triangle")
        return float(self.values[self._offsets[k - self._first_row] + ell])

    def points(self):
        for k in range(self._first_row, self.K + 1):
            for ell in range(self.row_length(k)):
                yield k, ell

    @classmethod
    def from_rows(cls, K: int, L: int, rows: Sequence[Sequence[float]]):
        return cls(K, L, np.concatenate([np.asarray(r, dtype=float) for r in rows]))

    def __eq__(self, other: object) -> bool:
        return (
            type(other) is type(self)
            and (self.K, self.L) == (other.K, other.L)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash((type(self).__name__, self.K, self.L, self.values.tobytes()))


class NoiseField(_Triangle):
    """Standard-normal innovations ``eta[k, ell]``, ``1 <= k <= K``, ``0 <= ell <= K + L - k``."""

    _first_row = 1

    def __init__(self, K: int, L: int, values: np.ndarray, seed: int | None = None) -> None:
        super().__init__(K, L, values)
        self.seed = seed

    @classmethod
    def zeros(cls, K: int, L: int) -> "NoiseField":
        return cls(K, L, np.zeros(_row_offsets(K, L, 1)[-1]))


class ForwardSurface(_Triangle):
    """Forward rates ``f[k, ell]``; row 0 is the initial curve of length ``K + L + 1``."""

    @property
    def initial_curve(self) -> np.ndarray:
        return self.row(0)

    def sample(self) -> np.ndarray:
        """Rectangle ``x[k, ell]`` for ``0 <= k <= K``, ``0 <= ell <= L``."""
        return np.stack([self.row(k)[: self.L + 1] for k in range(self.K + 1)])

    @classmethod
    def from_sample(cls, sample: np.ndarray, initial_curve: Sequence[float]) -> "ForwardSurface":
        """Build a surface holding only what the likelihood reads.

        Rows ``k >= 1`` beyond maturity ``L`` are filled with NaN.
        """
        sample = np.asarray(sample, dtype=float)
        K, width = sample.shape
        L = width - 1
        curve = np.asarray(initial_curve, dtype=float)
        if curve.size != K + L + 1:
            raise ValueError(f"initial curve needs {K + L + 1} entries, got {curve.size}")
        rows = [curve]
        for k in range(1, K + 1):
            row = np.full(K + L - k + 1, np.nan)
            row[: L + 1] = sample[k - 1]
            rows.append(row)
        return cls.from_rows(K, L, rows)


def row_seed_key(seed: int, k: int) -> np.ndarray:
    return np.array([int(seed) % _UINT64, k], dtype=np.uint64)


def generate_noise(K: int, L: int, seed: int) -> NoiseField:
    """I.i.d. N(0, 1) field covering one triangular surface.

    Row ``k`` is drawn from a Philox stream keyed on ``(seed, k)``, so each row
    is independent of how many other rows are generated or in which order,
    and enlarging ``L`` only appends to each row.
    """
    _check_sizes(K, L)
    if int(seed) != seed:
        raise ValueError(f"seed must be an integer, got {seed!r}")
    rows = []
    for k in range(1, K + 1):
        gen = np.random.Generator(np.random.Philox(key=row_seed_key(seed, k)))
        rows.append(gen.standard_normal(K + L - k + 1))
    field = NoiseField.from_rows(K, L, rows)
    field.seed = int(seed)
    return field


def drift(params: ModelParams, n: int, convexity: bool = True) -> np.ndarray:
    """No-arbitrage drift ``c_ell = beta^2/2 sum_{i<=2 ell} rho^i - beta sum_{j>=ell} b_j rho^(j-ell)``."""
    beta, rho, b = params.beta, params.rho, params.b_array
    S, _, _ = partial_sums(rho, 2 * max(n - 1, 0))
    c = np.zeros(n)
    if convexity:
        c += 0.5 * beta**2 * S[0 : 2 * n : 2]
    pw = powers(rho, b.size)
    for ell in range(min(n, b.size)):
        c[ell] -= beta * np.dot(b[ell:], pw[: b.size - ell])
    return c


def simulate_surface(
    params: ModelParams,
    initial_curve: Sequence[float],
    noise: NoiseField,
    *,
    convexity: bool = True,
) -> ForwardSurface:
    """Propagate the initial curve forward row by row.

    Along a row, ``e_ell = f[k, ell] - f[k-1, ell+1]`` follows the AR(1)
    recursion ``e_ell = rho e_{ell-1} + beta eta[k, ell] + c_ell`` started at
    ``e_{-1} = 0``, which is exactly the no-arbitrage system. ``convexity=False``
    drops the ``beta^2/2`` term and exists only as a negative control.
    """
    K, L = noise.K, noise.L
    curve = np.asarray(initial_curve, dtype=float)
    if curve.shape != (K + L + 1,):
        raise ValueError(f"initial curve needs {K + L + 1} entries for K={K}, L={L}, got {curve.size}")
    c = drift(params, K + L, convexity=convexity)
    rows = [curve]
    for k in range(1, K + 1):
        n = K + L - k + 1
        shocks = params.beta * noise.row(k) + c[:n]
        e = lfilter([1.0], [1.0, -params.rho], shocks)
        rows.append(rows[-1][1 : n + 1] + e)
    return ForwardSurface.from_rows(K, L, rows)


def _check_index(noise: NoiseField, k: int, ell: int, min_ell: int) -> None:
    if not 1 <= k <= noise.K or ell < min_ell:
        raise IndexError(f"({k}, {ell}) outside the lattice")


def closed_form_increment(params: ModelParams, noise: NoiseField, k: int, ell: int) -> float:
    """``f[k, ell-1] - f[k-1, ell]`` written directly in terms of row ``k`` of the noise."""
    _check_index(noise, k, ell, 1)
    if ell - 1 >= noise.row_length(k):
        raise IndexError(f"({k}, {ell}) outside the lattice")
    beta, rho, b = params.beta, params.rho, params.b
    eta = noise.row(k)
    stoch = sum(rho ** (ell - i - 1) * eta[i] for i in range(ell))
    risk = sum(
        b[j] * sum(rho ** (ell + j - 1 - 2 * i) for i in range(min(j, ell - 1) + 1))
        for j in range(len(b))
    )
    return beta * stoch + 0.5 * beta**2 * geometric_sum(rho, ell - 1) ** 2 - beta * risk


def closed_form_level(params: ModelParams, noise: NoiseField, k: int, ell: int) -> float:
    """``f[k, ell] - f[0, k+ell]`` as a sum over the rows ``1 .. k`` that feed it."""
    _check_index(noise, k, ell, 0)
    if k + ell > noise.K + noise.L:
        raise IndexError(f"({k}, {ell}) outside the lattice")
    beta, rho, b = params.beta, params.rho, params.b
    total = 0.0
    for n in range(1, k + 1):
        m = k + ell - n
        eta = noise.row(n)
        stoch = sum(rho ** (m - i) * eta[i] for i in range(m + 1))
        risk = sum(
            b[j] * sum(rho ** (m + j - 2 * i) for i in range(min(j, m) + 1))
            for j in range(len(b))
        )
        total += 0.5 * beta**2 * geometric_sum(rho, m) ** 2 + beta * stoch - beta * risk
    return total
