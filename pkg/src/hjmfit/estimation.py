"""Maximum likelihood over a compact box by profiling out the risk parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .field_sim import ForwardSurface
from .likelihood import SurfaceStats, evaluate, solve_b_from_stats
from .params import ConstraintBox, ModelParams


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitOptions:
    grid: int = 5
    gtol: float = 1e-8
    xtol: float = 1e-10
    maxiter: int = 500


@dataclass
class FitResult:
    estimate: ModelParams
    loglik: float
    converged: bool
    iterations: int
    grad_norm: float
    boundary_hit: bool
    history: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate.to_dict(),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "boundary_hit": self.boundary_hit,
        }


class Profile:
    """Log-likelihood concentrated over ``b`` as a function of ``(beta, rho)``."""

    def __init__(self, surface: ForwardSurface | SurfaceStats, J: int) -> None:
        self.stats = surface if isinstance(surface, SurfaceStats) else SurfaceStats(surface)
        self.J = J

    def theta(self, x: np.ndarray) -> np.ndarray:
        b = solve_b_from_stats(x[0], x[1], self.stats, self.J)
        return np.concatenate((x[:2], b))

    def value(self, x: np.ndarray) -> float:
        return evaluate(self.theta(x), self.stats)

    def value_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        # envelope: d/dx of the profile is the partial derivative at b_hat(x)
        value, grad = evaluate(self.theta(x), self.stats, order=1)
        return value, grad[:2]

    def hessian(self, x: np.ndarray) -> np.ndarray:
        _, _, H = evaluate(self.theta(x), self.stats, order=2)
        Haa, Hab, Hbb = H[:2, :2], H[:2, 2:], H[2:, 2:]
        return Haa - Hab @ np.linalg.solve(Hbb, Hab.T)


def profile_objective(beta: float, rho: float, surface: ForwardSurface, J: int = 0) -> float:
    return Profile(surface, J).value(np.array([beta, rho], dtype=float))


def _start_grid(box: ConstraintBox, n: int) -> list[np.ndarray]:
    def axis(lo, hi):
        return np.unique(lo + (np.arange(n) + 0.5) / n * (hi - lo))

    return [np.array([b, r]) for b in axis(*box.beta_range) for r in axis(*box.rho_range)]


def _projected_grad(x: np.ndarray, g: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Ascent-direction gradient with components pushing out of the box removed."""
    pg = g.copy()
    pg[(x <= lo) & (g < 0)] = 0.0
    pg[(x >= hi) & (g > 0)] = 0.0
    return pg


def _ascend(profile: Profile, x0: np.ndarray, lo: np.ndarray, hi: np.ndarray, opts: FitOptions):
    scale = float(profile.stats.n_obs)
    history: list[float] = []

    def fun(x):
        v, g = profile.value_grad(x)
        return -v / scale, -g / scale

    def record(xk):
        history.append(profile.value(xk))

    history.append(profile.value(x0))
    res = minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=list(zip(lo, hi)),
        callback=record,
        options={"maxiter": opts.maxiter, "ftol": 1e-15, "gtol": 1e-12 / scale, "maxls": 50},
    )
    return np.clip(res.x, lo, hi), int(res.get("nit", 0)), history


def _newton_polish(profile: Profile, x: np.ndarray, lo, hi, opts: FitOptions, history: list[float]):
    """Projected Newton steps with backtracking; never lowers the objective."""
    value, g = profile.value_grad(x)
    it = 0
    for it in range(1, 51):
        pg = _projected_grad(x, g, lo, hi)
        if np.max(np.abs(pg)) < opts.gtol:
            break
        free = pg != 0.0
        H = profile.hessian(x)[np.ix_(free, free)]
        step = np.zeros_like(x)
        try:
            np.linalg.cholesky(-H)
            step[free] = -np.linalg.solve(H, g[free])
        except np.linalg.LinAlgError:
            step[free] = g[free] / max(np.max(np.abs(np.diag(H))), 1.0)
        t, accepted = 1.0, False
        noise_floor = 8 * np.finfo(float).eps * max(abs(value), 1.0)
        while t > 1e-12:
            cand = np.clip(x + t * step, lo, hi)
            cval, cg = profile.value_grad(cand)
            # near the optimum value changes drop below rounding; judge by the gradient there
            flat = cval >= value - noise_floor
            if cval >= value or (
                flat and np.max(np.abs(_projected_grad(cand, cg, lo, hi))) < np.max(np.abs(pg))
            ):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        moved = np.max(np.abs(cand - x))
        x, value, g = cand, cval, cg
        history.append(value)
        if moved < opts.xtol:
            break
    return x, value, g, it


def _kkt_norm(theta: np.ndarray, grad: np.ndarray, box: ConstraintBox) -> float:
    lo, hi = box.lower(), box.upper()
    return float(np.max(np.abs(_projected_grad(theta, grad, lo, hi))))


def fit(surface: ForwardSurface, box: ConstraintBox, options: FitOptions | None = None) -> FitResult:
    """Maximize the log-likelihood over ``box``.

    The risk parameters are concentrated out exactly, a multi-start bounded
    quasi-Newton search runs on the two-dimensional profile, and the best
    start is polished with projected Newton steps. If the concentrated ``b``
    leaves its box, the search continues in the full parameter space.
    """
    opts = options or FitOptions()
    if surface.K < 2:
        raise ValueError(f"need at least 2 time rows to fit, got K={surface.K}")
    try:
        profile = Profile(surface, box.J)
    except ValueError as exc:
        raise FitError(f"corrupt input: {exc}") from exc
    lo, hi = box.lower()[:2], box.upper()[:2]

    starts = _start_grid(box, opts.grid)
    for x0 in starts:
        v = profile.value(x0)
        if not math.isfinite(v):
            raise FitError(f"non-finite log-likelihood at start (beta={x0[0]}, rho={x0[1]})")

    runs = []
    for x0 in starts:
        x, nit, history = _ascend(profile, x0, lo, hi, opts)
        runs.append((profile.value(x), x, nit, history))
    best_value = max(r[0] for r in runs)
    tied = [r for r in runs if r[0] >= best_value - 1e-9 * max(1.0, abs(best_value))]
    _, x, nit, history = min(tied, key=lambda r: (r[1][0], r[1][1]))

    x, value, _, polish_it = _newton_polish(profile, x, lo, hi, opts, history)
    theta = profile.theta(x)
    iterations = nit + polish_it

    if np.any(theta[2:] < box.lower()[2:]) or np.any(theta[2:] > box.upper()[2:]):
        theta, value, extra, more_history = _full_space(profile.stats, box.clip(theta), box, opts)
        iterations += extra
        history.extend(more_history)

    value, grad = evaluate(theta, profile.stats, order=1)
    grad_norm = _kkt_norm(theta, grad, box)
    span = box.upper() - box.lower()
    at_bound = (theta <= box.lower() + 1e-12 * np.maximum(span, 1.0)) | (
        theta >= box.upper() - 1e-12 * np.maximum(span, 1.0)
    )
    return FitResult(
        estimate=ModelParams.from_vector(theta),
        loglik=float(value),
        converged=bool(grad_norm < opts.gtol and iterations < opts.maxiter),
        iterations=iterations,
        grad_norm=grad_norm,
        boundary_hit=bool(np.any(at_bound)),
        history=history,
    )


def _full_space(stats: SurfaceStats, theta0: np.ndarray, box: ConstraintBox, opts: FitOptions):
    scale = float(stats.n_obs)
    history = [evaluate(theta0, stats)]

    def fun(t):
        v, g = evaluate(t, stats, order=1)
        return -v / scale, -g / scale

    res = minimize(
        fun,
        theta0,
        jac=True,
        method="L-BFGS-B",
        bounds=box.bounds(),
        callback=lambda t: history.append(evaluate(t, stats)),
        options={"maxiter": opts.maxiter, "ftol": 1e-15, "gtol": 1e-12 / scale, "maxls": 50},
    )
    theta = box.clip(res.x)
    return theta, evaluate(theta, stats), int(res.get("nit", 0)), history
