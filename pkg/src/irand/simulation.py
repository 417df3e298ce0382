"""Structural-equation data generators and Monte-Carlo MSE experiments.

Outcomes follow the linear structural equation

    Y[i, t] = alpha + delta * T[i, t] + X[i, t] @ beta + eps,  eps ~ N(0, sigma^2)

with a two-point confounder process

    X[i, 0] = e,                 e ~ N(0, 1)
    X[i, 1] = rho * X[i, 0] + sqrt(1 - rho^2) * xi + drift,  xi ~ N(0, 1).

Two treatment designs are supported. ``lcd_like`` is time-aligned: T[i, t] =
1{t = 1} for everyone (no control group at either visit). ``bmi_like`` is
time-misaligned: a second confounder X2[i, t] = 1{t = 1} plays the role of
an intervention indicator and T[i, t] = 1{X2[i, t] + noise > 0}, so both
groups exist at both visits.

``run_mse_experiment`` benchmarks estimators over an (n, sigma) grid with
paired replicates: every estimator in a replicate consumes the identical
generated panel.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from itertools import product

import numpy as np
import pandas as pd

from .errors import IrandError, UsageError
from .inference import IrandConfig, did_regression_estimate, irand_estimate
from .matching import AnalysisSpec, MatchingOptions, matching_ate
from .panel import TwoPointPanel, VariableSchema, pool, reorganize_did
from .streams import DGP, ESTIMATE, REPLICATE, child_seed, substream

DESIGNS = ("lcd_like", "bmi_like")
DEFAULT_GRID_N = (50, 100, 200, 400)
DEFAULT_GRID_SIGMA = (0.25, 0.5, 1.0, 2.0)
DEFAULT_REPLICATES = 200
DEFAULT_IRAND_M = 50


@dataclass(frozen=True)
class DgpConfig:
    """Structural-equation parameters for one generated panel."""

    n: int
    design: str = "lcd_like"
    alpha: float = 0.0
    beta: tuple[float, ...] = (-1.0,)
    delta: float = 1.0
    sigma: float = 0.5
    rho: float = 1.0
    drift: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", tuple(float(b) for b in np.atleast_1d(self.beta)))
        if self.design not in DESIGNS:
            raise UsageError(f"design must be one of {DESIGNS}, got {self.design!r}")
        if self.sigma < 0:
            raise UsageError(f"sigma must be >= 0, got {self.sigma}")
        if abs(self.rho) > 1:
            raise UsageError(f"rho must be in [-1, 1], got {self.rho}")
        expected = 2 if self.design == "bmi_like" else 1
        if len(self.beta) != expected:
            raise UsageError(
                f"{self.design} uses {expected} confounder(s); beta has {len(self.beta)}"
            )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "design": self.design,
            "alpha": self.alpha,
            "beta": list(self.beta),
            "delta": self.delta,
            "sigma": self.sigma,
            "rho": self.rho,
            "drift": self.drift,
            "seed": self.seed,
        }


def bmi_like_config(n: int, **overrides) -> DgpConfig:
    """The time-misaligned design with its reference parameters."""
    defaults = dict(
        design="bmi_like", beta=(-1.0, 1.0), delta=1.0, rho=0.99, drift=1.0 / 12.0
    )
    defaults.update(overrides)
    return DgpConfig(n=n, **defaults)


def _confounder_process(
    n: int, rho: float, drift: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    x0 = rng.standard_normal(n)
    xi = rng.standard_normal(n)
    x1 = rho * x0 + np.sqrt(max(0.0, 1.0 - rho * rho)) * xi + drift
    return x0, x1


def generate_confounders(
    n: int, rho: float, drift: float, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Baseline and follow-up confounder values, i.i.d. across individuals."""
    if abs(rho) > 1:
        raise UsageError(f"rho must be in [-1, 1], got {rho}")
    return _confounder_process(n, rho, drift, substream(seed, DGP))


def assign_treatment(design: str, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Treatment at both time points under the named design."""
    if design == "lcd_like":
        return np.zeros(n), np.ones(n)
    if design == "bmi_like":
        rng = substream(seed, DGP)
        t0 = (rng.standard_normal(n) > 0).astype(float)
        t1 = (1.0 + rng.standard_normal(n) > 0).astype(float)
        return t0, t1
    raise UsageError(f"design must be one of {DESIGNS}, got {design!r}")


def generate_outcomes(
    T: np.ndarray, X: np.ndarray, config: DgpConfig, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Linear structural outcomes with Gaussian noise."""
    if rng is None:
        rng = substream(config.seed, DGP)
    T = np.asarray(T, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    beta = np.asarray(config.beta)
    noise = config.sigma * rng.standard_normal(T.shape)
    return config.alpha + config.delta * T + X @ beta + noise


def generate_panel(config: DgpConfig) -> TwoPointPanel:
    """A seeded two-point panel from the structural equations."""
    n = config.n
    rng = substream(config.seed, DGP)
    x0, x1 = _confounder_process(n, config.rho, config.drift, rng)
    if config.design == "lcd_like":
        t0, t1 = np.zeros(n), np.ones(n)
        confounders = ("x1",)
        x_matrix = {0: x0[:, None], 1: x1[:, None]}
    else:
        t0 = (rng.standard_normal(n) > 0).astype(float)
        t1 = (1.0 + rng.standard_normal(n) > 0).astype(float)
        confounders = ("x1", "x2")
        x_matrix = {
            0: np.column_stack([x0, np.zeros(n)]),
            1: np.column_stack([x1, np.ones(n)]),
        }
    beta = np.asarray(config.beta)
    y = {}
    for t, treatment in ((0, t0), (1, t1)):
        noise = config.sigma * rng.standard_normal(n)
        y[t] = config.alpha + config.delta * treatment + x_matrix[t] @ beta + noise

    columns: dict[str, np.ndarray] = {
        "id": np.repeat(np.arange(1, n + 1, dtype=np.int64), 2),
        "time": np.tile(np.array([0, 1], dtype=np.int64), n),
        "t": np.stack([t0, t1], axis=1).ravel(),
    }
    for j, name in enumerate(confounders):
        columns[name] = np.stack([x_matrix[0][:, j], x_matrix[1][:, j]], axis=1).ravel()
    columns["y"] = np.stack([y[0], y[1]], axis=1).ravel()
    kinds = {"t": "binary", "y": "continuous", "x1": "continuous"}
    if "x2" in confounders:
        kinds["x2"] = "binary"
    schema = VariableSchema(
        id_column="id",
        time_column="time",
        treatment_column="t",
        confounder_columns=confounders,
        outcome_column="y",
        variable_kinds=kinds,
    )
    return TwoPointPanel(pd.DataFrame(columns), schema)


def analysis_spec_for(config: DgpConfig) -> AnalysisSpec:
    confounders = ("x1", "x2") if config.design == "bmi_like" else ("x1",)
    return AnalysisSpec(treatment="t", outcome="y", confounders=confounders)


def generate_mediation_panel(
    n: int,
    delta: float = 1.0,
    gamma: float = 1.0,
    eta: float = 0.5,
    beta: float = -1.0,
    zeta: float = 0.5,
    sigma_y: float = 0.25,
    sigma_m: float = 0.5,
    rho: float = 1.0,
    drift: float = 0.0,
    seed: int = 0,
    treatment_levels: int = 2,
    time_aligned: bool = True,
) -> TwoPointPanel:
    """Linear mediation panel: mediator = eta*T + zeta*X + noise, outcome =
    delta*T + gamma*mediator + beta*X + noise.

    Under this no-interaction model the total effect of T on the outcome is
    delta + gamma*eta, the direct effect is delta, and the indirect effect is
    gamma*eta. With ``treatment_levels > 2`` (or ``time_aligned=False``) the
    driving variable is a column ``grp`` with that many levels drawn
    uniformly per row, with the same per-level-step effects; the binary
    time-aligned column ``t`` always remains the schema treatment.
    """
    rng = substream(seed, DGP)
    x0, x1 = _confounder_process(n, rho, drift, rng)
    x = {0: x0, 1: x1}
    if treatment_levels < 2:
        raise UsageError("treatment_levels must be >= 2")
    if treatment_levels == 2 and time_aligned:
        driver = {0: np.zeros(n), 1: np.ones(n)}
    else:
        driver = {
            0: rng.integers(0, treatment_levels, size=n).astype(float),
            1: rng.integers(0, treatment_levels, size=n).astype(float),
        }
    mediator = {}
    outcome = {}
    for t in (0, 1):
        mediator[t] = eta * driver[t] + zeta * x[t] + sigma_m * rng.standard_normal(n)
        outcome[t] = (
            delta * driver[t]
            + gamma * mediator[t]
            + beta * x[t]
            + sigma_y * rng.standard_normal(n)
        )
    columns: dict[str, np.ndarray] = {
        "id": np.repeat(np.arange(1, n + 1, dtype=np.int64), 2),
        "time": np.tile(np.array([0, 1], dtype=np.int64), n),
        "t": np.tile(np.array([0.0, 1.0]), n),
        "x1": np.stack([x[0], x[1]], axis=1).ravel(),
        "m": np.stack([mediator[0], mediator[1]], axis=1).ravel(),
        "y": np.stack([outcome[0], outcome[1]], axis=1).ravel(),
    }
    kinds = {"t": "binary", "x1": "continuous", "m": "continuous", "y": "continuous"}
    if treatment_levels > 2 or not time_aligned:
        columns["grp"] = np.stack([driver[0], driver[1]], axis=1).ravel()
        kinds["grp"] = "ordinal" if treatment_levels > 2 else "binary"
    schema = VariableSchema(
        id_column="id",
        time_column="time",
        treatment_column="t",
        confounder_columns=("x1",),
        mediator_column="m",
        outcome_column="y",
        variable_kinds=kinds,
    )
    return TwoPointPanel(pd.DataFrame(columns), schema)


def panel_digest(panel: TwoPointPanel) -> str:
    """Stable content digest, used to assert paired-replicate discipline."""
    return hashlib.sha1(panel.data.to_csv(index=False).encode("utf-8")).hexdigest()


def _estimate_irand(panel, spec, seed, irand_m, options):
    config = IrandConfig(
        m_subsamples=irand_m,
        s_permutations=0,
        strategy="min_overlap",
        seed=seed,
        matching=options,
    )
    return irand_estimate(panel, spec, config).mean_ate


def _estimate_pooled(panel, spec, seed, irand_m, options):
    return matching_ate(pool(panel), spec, options).ate


def _estimate_did_regression(panel, spec, seed, irand_m, options):
    return did_regression_estimate(panel, spec).delta_hat


def _estimate_did_reorganized(panel, spec, seed, irand_m, options):
    return matching_ate(reorganize_did(panel), spec, options).ate


ESTIMATORS = {
    "irand": _estimate_irand,
    "pooled": _estimate_pooled,
    "did_regression": _estimate_did_regression,
    "did_reorganized": _estimate_did_reorganized,
}


@dataclass(frozen=True)
class MseCell:
    """One (n, sigma, estimator) cell with its per-replicate estimates."""

    n: int
    sigma: float
    estimator: str
    estimates: np.ndarray
    n_failures: int
    delta: float

    @property
    def completed(self) -> np.ndarray:
        return self.estimates[np.isfinite(self.estimates)]

    @property
    def mse(self) -> float:
        errors = self.completed - self.delta
        return float(np.mean(errors**2))

    @property
    def bias(self) -> float:
        return float(np.mean(self.completed) - self.delta)

    @property
    def variance(self) -> float:
        return float(np.var(self.completed))


@dataclass(frozen=True)
class MseSurface:
    """Estimator MSE/bias/variance over an (n, sigma) grid, paired replicates."""

    design: str
    delta: float
    grid_n: tuple[int, ...]
    grid_sigma: tuple[float, ...]
    estimators: tuple[str, ...]
    replicates: int
    seed: int
    cells: tuple[MseCell, ...]
    panel_digests: tuple[str, ...]

    def cell(self, n: int, sigma: float, estimator: str) -> MseCell:
        for cell in self.cells:
            if cell.n == n and cell.sigma == sigma and cell.estimator == estimator:
                return cell
        raise KeyError((n, sigma, estimator))

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "design": self.design,
                "n": cell.n,
                "sigma": cell.sigma,
                "estimator": cell.estimator,
                "mse": cell.mse,
                "bias": cell.bias,
                "variance": cell.variance,
                "replicates": len(cell.completed),
                "failures": cell.n_failures,
            }
            for cell in self.cells
        ]
        return pd.DataFrame(rows)

    def to_dict(self) -> dict:
        return {
            "design": self.design,
            "delta": self.delta,
            "grid_n": list(self.grid_n),
            "grid_sigma": list(self.grid_sigma),
            "estimators": list(self.estimators),
            "replicates": self.replicates,
            "seed": self.seed,
            "cells": self.to_frame().to_dict(orient="records"),
        }


def run_mse_experiment(
    template: DgpConfig,
    grid_n: tuple[int, ...] = DEFAULT_GRID_N,
    grid_sigma: tuple[float, ...] = DEFAULT_GRID_SIGMA,
    estimators: tuple[str, ...] = ("irand", "pooled", "did_regression"),
    replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
    irand_m: int = DEFAULT_IRAND_M,
    options: MatchingOptions = MatchingOptions(),
) -> MseSurface:
    """Paired Monte-Carlo comparison of estimators over the (n, sigma) grid.

    Within a replicate every estimator consumes the identical generated
    panel; per-replicate estimator failures are recorded and excluded from
    the cell aggregates.
    """
    if replicates < 2:
        raise UsageError(f"replicates must be >= 2, got {replicates}")
    unknown = [e for e in estimators if e not in ESTIMATORS]
    if unknown:
        raise UsageError(f"unknown estimators: {unknown}")
    spec = analysis_spec_for(template)
    cells: list[MseCell] = []
    digests: list[str] = []
    for cell_index, (n, sigma) in enumerate(product(grid_n, grid_sigma)):
        estimates = {name: np.full(replicates, np.nan) for name in estimators}
        failures = {name: 0 for name in estimators}
        for r in range(replicates):
            config = replace(
                template, n=n, sigma=sigma, seed=child_seed(seed, REPLICATE, cell_index, r)
            )
            panel = generate_panel(config)
            digests.append(panel_digest(panel))
            for e_index, name in enumerate(estimators):
                estimator_seed = child_seed(seed, ESTIMATE, cell_index, r, e_index)
                try:
                    estimates[name][r] = ESTIMATORS[name](
                        panel, spec, estimator_seed, irand_m, options
                    )
                except IrandError:
                    failures[name] += 1
        for name in estimators:
            cells.append(
                MseCell(
                    n=n,
                    sigma=sigma,
                    estimator=name,
                    estimates=estimates[name],
                    n_failures=failures[name],
                    delta=template.delta,
                )
            )
    return MseSurface(
        design=template.design,
        delta=template.delta,
        grid_n=tuple(grid_n),
        grid_sigma=tuple(grid_sigma),
        estimators=tuple(estimators),
        replicates=replicates,
        seed=seed,
        cells=tuple(cells),
        panel_digests=tuple(digests),
    )
