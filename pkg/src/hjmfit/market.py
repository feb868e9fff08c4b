"""Bond prices, the stochastic discount factor and a Monte Carlo martingale check."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .field_sim import ForwardSurface, NoiseField, generate_noise, simulate_surface
from .params import ModelParams


class SPath:
    """Spatial AR field ``S[k, ell]`` on the noise triangle, with zero boundary."""

    def __init__(self, rho: float, rows: list[np.ndarray]) -> None:
        self.rho = rho
        self._rows = rows  # rows[0] is the zero boundary row S[0, .]

    @property
    def K(self) -> int:
        return len(self._rows) - 1

    def row(self, k: int) -> np.ndarray:
        return self._rows[k]

    def __getitem__(self, key: tuple[int, int]) -> float:
        k, ell = key
        if ell == -1:
            return 0.0
        return float(self._rows[k][ell])

    def increment(self, k: int) -> np.ndarray:
        """``Delta_1 S[k, .] = S[k+1, .] - S[k, .]`` over the maturities row ``k+1`` covers."""
        nxt = self._rows[k + 1]
        return nxt - self._rows[k][: nxt.size]


def simulate_s_field(rho: float, noise: NoiseField) -> SPath:
    """``S[k, l] = S[k-1, l] + rho S[k, l-1] - rho S[k-1, l-1] + eta[k, l]``.

    Row increments obey ``D[l] = rho D[l-1] + eta[k, l]``, so each row is the
    previous one plus an AR(1) filter of the noise row.
    """
    if not abs(rho) < 1.0:
        raise ValueError(f"rho: |rho| must be < 1, got {rho}")
    rows = [np.zeros(noise.row_length(1) + 1)]
    for k in range(1, noise.K + 1):
        d = lfilter([1.0], [1.0, -rho], noise.row(k))
        rows.append(rows[-1][: d.size] + d)
    return SPath(rho, rows)


def bond_prices(surface: ForwardSurface, k: int) -> np.ndarray:
    """``P[k, ell]`` for ``ell = k .. k + len(row k)``; ``P[k, k] = 1``."""
    if not 0 <= k <= surface.K:
        raise IndexError(f"time {k} outside 0..{surface.K}")
    f = surface.row(k)
    return np.exp(-np.concatenate(([0.0], np.cumsum(f))))


def bond_price(surface: ForwardSurface, k: int, maturity: int) -> float:
    if maturity < k:
        raise ValueError(f"maturity {maturity} is below the current time {k}")
    prices = bond_prices(surface, k)
    if maturity - k >= prices.size:
        raise IndexError(f"maturity {maturity} beyond the surface at time {k}")
    return float(prices[maturity - k])


def risk_loadings(params: ModelParams) -> np.ndarray:
    """``B_i = sum_{j>=i} b_j rho^(j-i)``, the weight of ``eta[k+1, i]`` in ``sum_j b_j Delta_1 S[k, j]``."""
    b = params.b_array
    J = b.size - 1
    return np.array([sum(b[j] * params.rho ** (j - i) for j in range(i, J + 1)) for i in range(J + 1)])


def sdf_log_normalizer(params: ModelParams) -> float:
    """``log E[exp(sum_j b_j Delta_1 S[k, j]) | F_k] = V / 2`` (Gaussian moment generating function)."""
    return 0.5 * float(np.sum(risk_loadings(params) ** 2))


@dataclass(frozen=True)
class DiscountPath:
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values[0] != 1.0 or not np.all(self.values > 0):
            raise ValueError("discount path must start at 1 and stay positive")


def discount_factors(params: ModelParams, surface: ForwardSurface, s_path: SPath) -> DiscountPath:
    """``M[k+1] = M[k] exp(-r_k) exp(sum_j b_j Delta_1 S[k, j]) / exp(V / 2)``, ``r_k = f[k, 0]``."""
    J = params.J
    if s_path.K != surface.K:
        raise ValueError(f"S field has {s_path.K} rows, surface has {surface.K}")
    b = params.b_array
    half_v = sdf_log_normalizer(params)
    log_m = [0.0]
    for k in range(surface.K):
        ds = s_path.increment(k)
        if ds.size < J + 1:
            raise ValueError(f"S field row {k + 1} is too short for J = {J}")
        log_m.append(log_m[-1] - surface[k, 0] + float(b @ ds[: J + 1]) - half_v)
    return DiscountPath(np.exp(np.array(log_m)))


@dataclass(frozen=True)
class MartingaleReport:
    maturity: int
    replications: int
    mean_diff: np.ndarray
    stderr: np.ndarray
    threshold: float = 4.0

    @property
    def z_score(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = self.mean_diff / self.stderr
        return np.where(self.stderr > 0, z, np.where(self.mean_diff == 0, 0.0, np.inf))

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z_score)))

    @property
    def passed(self) -> bool:
        return self.max_abs_z <= self.threshold

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(
            f"# {self.maturity} steps tested at |z| <= {self.threshold}; "
            f"Bonferroni-adjusted level is {self.maturity} times the per-step level\n"
        )
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "mean_diff", "stderr", "z_score"])
        for k, (m, s, z) in enumerate(zip(self.mean_diff, self.stderr, self.z_score)):
            writer.writerow([k, repr(float(m)), repr(float(s)), repr(float(z))])
        return buf.getvalue()


def discounted_prices(
    params: ModelParams,
    K: int,
    L: int,
    maturity: int,
    seed: int,
    initial_curve: np.ndarray | None = None,
    convexity: bool = True,
) -> np.ndarray:
    """One path of ``M[k] P[k, maturity]`` for ``k = 0 .. maturity``."""
    noise = generate_noise(K, L, seed)
    curve = np.zeros(K + L + 1) if initial_curve is None else initial_curve
    surface = simulate_surface(params, curve, noise, convexity=convexity)
    m = discount_factors(params, surface, simulate_s_field(params.rho, noise)).values
    return np.array([m[k] * bond_price(surface, k, maturity) for k in range(maturity + 1)])


def _replicate(args) -> np.ndarray:
    params, K, L, maturity, seeds, curve, convexity = args
    return np.stack([discounted_prices(params, K, L, maturity, s, curve, convexity) for s in seeds])


def martingale_check(
    params: ModelParams,
    K: int,
    L: int,
    maturity: int,
    replications: int,
    seed: int,
    *,
    initial_curve: np.ndarray | None = None,
    convexity: bool = True,
    threads: int = 1,
) -> MartingaleReport:
    """Estimate ``E[M[k+1] P[k+1, T]] - E[M[k] P[k, T]]`` for every step ``k < T``.

    Replication ``r`` uses noise seed ``seed + r``. The discount factor needs
    rows up to ``T`` of the surface, so ``T <= K`` is required.
    """
    if not 1 <= maturity <= K:
        raise ValueError(f"maturity must lie in 1..K={K} (bond and discount paths need rows up to it), got {maturity}")
    if params.J > L:
        raise ValueError(f"J = {params.J} exceeds L = {L}: Delta_1 S[k, J] would leave the noise field")
    if replications < 100:
        raise ValueError(f"need at least 100 replications, got {replications}")
    seeds = [seed + r for r in range(replications)]
    curve = None if initial_curve is None else np.asarray(initial_curve, dtype=float)
    if threads > 1:
        chunks = [seeds[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(threads) as pool:
            parts = list(pool.map(_replicate, [(params, K, L, maturity, c, curve, convexity) for c in chunks]))
        order = np.argsort(np.concatenate(chunks))
        paths = np.concatenate(parts)[order]
    else:
        paths = _replicate((params, K, L, maturity, seeds, curve, convexity))
    steps = np.diff(paths, axis=1)
    mean = steps.mean(axis=0)
    stderr = steps.std(axis=0, ddof=1) / math.sqrt(replications)
    # steps that vanish in exact arithmetic (e.g. into P[T, T] = 1 without noise) leave
    # pure rounding; floor the error at a few ulps of the discounted price level
    floor = 64 * np.finfo(float).eps * np.abs(paths).mean(axis=0)[1:]
    stderr = np.maximum(stderr, floor)
    return MartingaleReport(maturity, replications, mean, stderr)
