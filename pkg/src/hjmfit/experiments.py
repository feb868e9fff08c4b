"""Monte Carlo checks of consistency and of the mixed-rate normal limit of the MLE."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .asymptotics import asymptotic_cov
from .estimation import FitError, FitOptions, fit
from .field_sim import generate_noise, simulate_surface
from .params import ConstraintBox, ModelParams

TOLERANCE_NOTE = (
    "finite-sample engineering tolerances; the limit theorems give no finite-n error bound"
)
MAX_FAILURE_RATE = 0.2


class McAbort(RuntimeError):
    pass


@dataclass(frozen=True)
class McConfig:
    true_params: ModelParams
    box: ConstraintBox
    rate_constants: tuple[float, float] = (1.0, 1.0)
    n_grid: tuple[int, ...] = (10, 20, 40, 80)
    replications: int = 200
    seed: int = 0
    fit_options: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self) -> None:
        if self.replications < 2:
            raise ValueError(f"replications must be >= 2, got {self.replications}")
        if not self.n_grid:
            raise ValueError("n_grid is empty")
        if self.box.J != self.true_params.J:
            raise ValueError(f"box has J={self.box.J}, true parameters have J={self.true_params.J}")
        if not self.box.contains(self.true_params):
            raise ValueError("true parameters lie outside the constraint box")

    def sizes(self, n: int) -> tuple[int, int]:
        K, L = self.rate_constants
        return max(1, round(n * K)), max(1, round(n * L))

    def to_dict(self) -> dict:
        return {
            "true_params": self.true_params.to_dict(),
            "box": self.box.to_dict(),
            "rate_constants": list(self.rate_constants),
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "seed": self.seed,
            "fit_options": asdict(self.fit_options),
        }


def replication_seed(seed: int, n: int, rep: int) -> int:
    """Noise seed for one replication, a hash of ``(seed, n, rep)``; no shared stream."""
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=(n, rep))
    return int(ss.generate_state(1, np.uint64)[0])


def _one(config: McConfig, n: int, rep: int) -> tuple[np.ndarray, bool, bool]:
    K, L = config.sizes(n)
    truth = config.true_params
    noise = generate_noise(K, L, replication_seed(config.seed, n, rep))
    surface = simulate_surface(truth, np.zeros(K + L + 1), noise)
    try:
        res = fit(surface, config.box, config.fit_options)
    except (FitError, np.linalg.LinAlgError, ValueError):
        return np.full(truth.J + 3, np.nan), False, False
    return res.estimate.to_vector() - truth.to_vector(), res.converged, res.boundary_hit


def _batch(args) -> list:
    config, n, reps = args
    return [_one(config, n, r) for r in reps]


def _run_cell(config: McConfig, n: int, threads: int) -> "McCell":
    reps = list(range(config.replications))
    if threads > 1:
        chunks = [reps[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(threads) as pool:
            parts = list(pool.map(_batch, [(config, n, c) for c in chunks]))
        by_rep = dict(zip((r for c in chunks for r in c), (x for p in parts for x in p)))
        out = [by_rep[r] for r in reps]
    else:
        out = _batch((config, n, reps))
    K, L = config.sizes(n)
    return McCell(
        n=n,
        K_n=K,
        L_n=L,
        errors=np.stack([o[0] for o in out]),
        converged=np.array([o[1] for o in out]),
        boundary_hit=np.array([o[2] for o in out]),
    )


@dataclass
class McCell:
    """All replications at one ``n``; ``errors`` are raw estimate-minus-truth rows."""

    n: int
    K_n: int
    L_n: int
    errors: np.ndarray
    converged: np.ndarray
    boundary_hit: np.ndarray

    @property
    def scale(self) -> np.ndarray:
        """Normalizations ``(n, n, sqrt(n), ..., sqrt(n))``."""
        P = self.errors.shape[1]
        return np.concatenate(([self.n, self.n], np.full(P - 2, math.sqrt(self.n))))

    @property
    def scaled_errors(self) -> np.ndarray:
        return self.errors * self.scale

    def failed(self, count_boundary: bool) -> np.ndarray:
        bad = ~self.converged
        return bad | self.boundary_hit if count_boundary else bad

    def median_abs_error(self) -> np.ndarray:
        ok = ~self.failed(False)
        return np.median(np.abs(self.errors[ok]), axis=0)


@dataclass
class McReport:
    config: McConfig
    cells: list[McCell]
    kind: str
    clt: dict | None = None

    def failure_counts(self) -> dict[int, int]:
        cb = self.kind == "clt"
        return {c.n: int(c.failed(cb).sum()) for c in self.cells}

    def medians(self) -> dict[int, np.ndarray]:
        return {c.n: c.median_abs_error() for c in self.cells}

    def to_dict(self) -> dict:
        out = {
            "schema": 1,
            "kind": self.kind,
            "note": TOLERANCE_NOTE,
            "config": self.config.to_dict(),
            "cells": [
                {
                    "n": c.n,
                    "K_n": c.K_n,
                    "L_n": c.L_n,
                    "replications": int(c.errors.shape[0]),
                    "converged": int(c.converged.sum()),
                    "failures": self.failure_counts()[c.n],
                    "median_abs_error": c.median_abs_error().tolist(),
                }
                for c in self.cells
            ],
        }
        if self.clt is not None:
            out["clt"] = self.clt
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "rep", "param", "scaled_error", "converged"])
        names = ["beta", "rho"] + [f"b{j}" for j in range(self.config.true_params.J + 1)]
        cb = self.kind == "clt"
        for c in self.cells:
            ok = ~c.failed(cb)
            for rep, row in enumerate(c.scaled_errors):
                for name, val in zip(names, row):
                    writer.writerow([c.n, rep, name, repr(float(val)), int(ok[rep])])
        return buf.getvalue()


def _guard(cell: McCell, count_boundary: bool) -> None:
    failed = int(cell.failed(count_boundary).sum())
    if failed > MAX_FAILURE_RATE * cell.errors.shape[0]:
        raise McAbort(f"{failed} of {cell.errors.shape[0]} fits failed at n={cell.n}")


def run_consistency(config: McConfig, threads: int = 1) -> McReport:
    cells = []
    for n in config.n_grid:
        cell = _run_cell(config, n, threads)
        _guard(cell, count_boundary=False)
        cells.append(cell)
    return McReport(config, cells, "consistency")


def clt_statistics(cell: McCell, config: McConfig) -> dict:
    """Compare the scaled-error sample covariance with the limiting covariance."""
    ok = ~cell.failed(True)
    z = cell.scaled_errors[ok]
    K, L = config.rate_constants
    target = asymptotic_cov(config.true_params, K, L).full
    emp = np.cov(z, rowvar=False)
    corr = np.corrcoef(z, rowvar=False)
    rel = np.abs(np.diag(emp) - np.diag(target)) / np.diag(target)
    ks = [float(stats.kstest(z[:, i], "norm", args=(0.0, math.sqrt(target[i, i]))).pvalue) for i in range(z.shape[1])]
    return {
        "used": int(ok.sum()),
        "empirical_cov": emp.tolist(),
        "target_cov": target.tolist(),
        "diag_rel_error": rel.tolist(),
        "cross_block_corr": corr[:2, 2:].tolist(),
        "ks_pvalue": ks,
        "mean_scaled_error": z.mean(axis=0).tolist(),
    }


def run_clt(config: McConfig, threads: int = 1) -> McReport:
    """Scaled errors at the largest ``n`` of the grid, compared with the limiting covariance.

    Fits that end on the box boundary count as failures here.
    """
    n = max(config.n_grid)
    cell = _run_cell(config, n, threads)
    _guard(cell, count_boundary=True)
    return McReport(config, [cell], "clt", clt_statistics(cell, config))
