"""Parameter points and constraint boxes for the discrete-time HJM model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Parameter point ``(beta, rho, b_0, ..., b_J)``.

    ``beta = 0`` is accepted so that degenerate (noise-free) paths can be
    simulated; anything that evaluates the likelihood rejects it.
    """

    beta: float
    rho: float
    b: tuple[float, ...] = (0.0,)

    def __post_init__(self) -> None:
        b = tuple(float(x) for x in np.atleast_1d(np.asarray(self.b, dtype=float)))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "b", b)
        if len(b) == 0:
            raise ValueError("b: need at least one market-price-of-risk coefficient")
        if not all(math.isfinite(x) for x in (self.beta, self.rho, *b)):
            raise ValueError("parameters must be finite")
        if not abs(self.rho) < 1.0:
            raise ValueError(f"rho: |rho| must be < 1, got {self.rho}")

    @property
    def J(self) -> int:
        return len(self.b) - 1

    @property
    def b_array(self) -> np.ndarray:
        return np.asarray(self.b, dtype=float)

    def to_vector(self) -> np.ndarray:
        """Ordering ``(beta, rho, b_0, ..., b_J)``."""
        return np.concatenate(([self.beta, self.rho], self.b_array))

    @classmethod
    def from_vector(cls, theta: Sequence[float]) -> "ModelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[0], theta[1], tuple(theta[2:]))

    def require_likelihood_domain(self) -> None:
        if self.beta == 0.0:
            raise ValueError("beta: the likelihood is undefined at beta = 0")

    def to_dict(self) -> dict:
        return {"beta": self.beta, "rho": self.rho, "b": list(self.b)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(d["beta"], d["rho"], tuple(d["b"]))


def _interval(name: str, pair: Sequence[float]) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in pair)
    except (TypeError, ValueError):
        raise ValueError(f"{name}: expected a [lo, hi] pair, got {pair!r}") from None
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError(f"{name}: interval must be finite")
    if lo > hi:
        raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
    return lo, hi


@dataclass(frozen=True)
class ConstraintBox:
    """Compact parameter box: ``beta`` range excludes 0, ``rho`` range inside (-1, 1)."""

    beta_range: tuple[float, float]
    rho_range: tuple[float, float]
    b_ranges: tuple[tuple[float, float], ...] = field(default=((-2.0, 2.0),))

    def __post_init__(self) -> None:
        beta = _interval("beta", self.beta_range)
        rho = _interval("rho", self.rho_range)
        b = tuple(_interval(f"b[{j}]", r) for j, r in enumerate(self.b_ranges))
        if not b:
            raise ValueError("b: need at least one interval")
        if beta[0] <= 0.0 <= beta[1]:
            raise ValueError(f"beta: range {list(beta)} must exclude 0")
        if not (-1.0 < rho[0] and rho[1] < 1.0):
            raise ValueError(f"rho: range {list(rho)} must lie strictly inside (-1, 1)")
        object.__setattr__(self, "beta_range", beta)
        object.__setattr__(self, "rho_range", rho)
        object.__setattr__(self, "b_ranges", b)

    @property
    def J(self) -> int:
        return len(self.b_ranges) - 1

    def bounds(self) -> list[tuple[float, float]]:
        return [self.beta_range, self.rho_range, *self.b_ranges]

    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds()])

    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds()])

    def contains(self, params: ModelParams, tol: float = 1e-12) -> bool:
        theta = params.to_vector()
        if theta.size != self.J + 3:
            return False
        return bool(np.all(theta >= self.lower() - tol) and np.all(theta <= self.upper() + tol))

    def clip(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.lower(), self.upper())

    def to_dict(self) -> dict:
        return {
            "beta": list(self.beta_range),
            "rho": list(self.rho_range),
            "b": [list(r) for r in self.b_ranges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConstraintBox":
        for key in ("beta", "rho", "b"):
            if key not in d:
                raise ValueError(f"{key}: missing from constraint box")
        if not isinstance(d["b"], list) or not all(isinstance(r, list) for r in d["b"]):
            raise ValueError("b: expected a list of [lo, hi] pairs")
        return cls(tuple(d["beta"]), tuple(d["rho"]), tuple(tuple(r) for r in d["b"]))

    @classmethod
    def point(cls, params: ModelParams) -> "ConstraintBox":
        """Degenerate box holding exactly one parameter point."""
        return cls(
            (params.beta, params.beta),
            (params.rho, params.rho),
            tuple((x, x) for x in params.b),
        )
