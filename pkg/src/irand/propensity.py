"""Propensity-score estimation and covariate-balance diagnostics.

The propensity model is a ridge-penalized logistic regression fit by
iteratively reweighted least squares (Newton steps with step-halving, so the
penalized log-likelihood never decreases). The small default ridge keeps
coefficients finite under separation, which matters on the small one-row-
per-individual subsamples this package feeds the model.

Balance is measured by the standardized mean difference with the treatment
group's standard deviation in the denominator; |difference| < 0.25 on every
confounder counts as balanced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DataError, DimensionMismatch, SingleClass, ZeroVariance

SCORE_EPSILON = 1e-12
BALANCE_THRESHOLD = 0.25


@dataclass(frozen=True)
class LogisticOptions:
    max_iterations: int = 50
    tolerance: float = 1e-8
    ridge: float = 1e-6


@dataclass(frozen=True)
class PropensityModel:
    """Fitted logistic model: intercept first, then one weight per column.

    ``objective_trace`` records the penalized log-likelihood after each
    accepted iteration (starting with the value at the zero vector); it is
    non-decreasing by construction.
    """

    coefficients: np.ndarray
    converged: bool
    iterations: int
    max_abs_score_logit: float
    objective_trace: np.ndarray

    @property
    def n_features(self) -> int:
        return len(self.coefficients) - 1


@dataclass(frozen=True)
class BalanceReport:
    """Per-confounder standardized mean differences on a (matched) sample."""

    names: tuple[str, ...]
    differences: np.ndarray
    threshold: float = BALANCE_THRESHOLD

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.differences) < self.threshold))

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "passed": self.passed,
            "standardized_differences": {
                name: float(value) for name, value in zip(self.names, self.differences)
            },
        }


def _design(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.hstack([np.ones((len(X), 1)), X])


def _penalized_loglik(Z: np.ndarray, T: np.ndarray, beta: np.ndarray, ridge: float) -> float:
    eta = Z @ beta
    loglik = float(T @ eta - np.logaddexp(0.0, eta).sum())
    return loglik - 0.5 * ridge * float(beta @ beta)


def fit_logistic(
    X: np.ndarray,
    T: np.ndarray,
    options: LogisticOptions = LogisticOptions(),
) -> PropensityModel:
    """Maximize the ridge-penalized binomial log-likelihood by IRLS.

    Convergence is declared when the largest proposed coefficient change
    falls below ``options.tolerance`` (the step is then not applied, so a
    fit that starts at its optimum returns exactly zero coefficients). A fit
    that exhausts ``max_iterations`` is returned with ``converged=False``,
    never silently.
    """
    T = np.asarray(T, dtype=float).ravel()
    Z = _design(X)
    if len(Z) != len(T):
        raise DataError(f"label length {len(T)} != row count {len(Z)}")
    if not np.isfinite(Z).all() or not np.isfinite(T).all():
        raise DataError("logistic fit requires finite inputs without missing cells")
    positives = int(T.sum())
    if positives == 0 or positives == len(T):
        raise SingleClass("all labels identical; need at least one of each class")

    ridge = float(options.ridge)
    p = Z.shape[1]
    beta = np.zeros(p)
    objective = _penalized_loglik(Z, T, beta, ridge)
    trace = [objective]
    converged = False
    iterations = 0
    eye = np.eye(p)

    for iterations in range(1, options.max_iterations + 1):
        mu = expit(Z @ beta)
        gradient = Z.T @ (T - mu) - ridge * beta
        weights = mu * (1.0 - mu)
        hessian = Z.T @ (Z * weights[:, None]) + ridge * eye
        step = np.linalg.solve(hessian, gradient)
        if np.max(np.abs(step)) < options.tolerance:
            converged = True
            iterations -= 1
            break
        # Step-halving keeps the penalized log-likelihood non-decreasing.
        scale = 1.0
        candidate = beta + step
        new_objective = _penalized_loglik(Z, T, candidate, ridge)
        for _ in range(30):
            if new_objective >= objective:
                break
            scale *= 0.5
            candidate = beta + scale * step
            new_objective = _penalized_loglik(Z, T, candidate, ridge)
        if np.max(np.abs(candidate - beta)) < options.tolerance:
            beta = candidate
            objective = new_objective
            trace.append(objective)
            converged = True
            break
        beta = candidate
        objective = new_objective
        trace.append(objective)

    return PropensityModel(
        coefficients=beta,
        converged=converged,
        iterations=iterations,
        max_abs_score_logit=float(np.max(np.abs(Z @ beta))),
        objective_trace=np.asarray(trace),
    )


def predict_propensity(model: PropensityModel, X: np.ndarray) -> np.ndarray:
    """Inverse-logit of the linear predictor, clamped inside (0, 1)."""
    Z = _design(X)
    if Z.shape[1] != len(model.coefficients):
        raise DimensionMismatch(
            f"row width {Z.shape[1] - 1} != fitted feature count {model.n_features}"
        )
    scores = expit(Z @ model.coefficients)
    return np.clip(scores, SCORE_EPSILON, 1.0 - SCORE_EPSILON)


def standardized_mean_difference(treated_values, control_values) -> float:
    """(mean_treated - mean_control) / sd_treated.

    The denominator is the treatment group's sample standard deviation.
    Identical group means give 0 even when that sd is zero.
    """
    treated = np.asarray(treated_values, dtype=float)
    control = np.asarray(control_values, dtype=float)
    if treated.size == 0:
        raise DataError("treated group is empty")
    gap = treated.mean() - control.mean()
    if gap == 0.0:
        return 0.0
    sd = treated.std(ddof=1) if treated.size > 1 else 0.0
    if not np.isfinite(sd) or sd == 0.0:
        raise ZeroVariance("treatment group has zero variance but group means differ")
    return float(gap / sd)


def balance_from_matches(
    X: np.ndarray,
    T: np.ndarray,
    matches,
    names: tuple[str, ...],
    threshold: float = BALANCE_THRESHOLD,
) -> BalanceReport:
    """Standardized differences on the matched sample.

    Treated units enter unweighted; each control enters with weight equal to
    its multiplicity across the treated units' match sets (1/|J_i| per
    appearance). Confounders whose treated and weighted-control means
    coincide report 0 even when degenerate.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    T = np.asarray(T)
    treated_mask = T == 1
    treated_idx = np.flatnonzero(treated_mask)
    weights = np.zeros(len(T))
    for i in treated_idx:
        neighbors = matches.neighbors[i]
        if len(neighbors):
            np.add.at(weights, neighbors, 1.0 / len(neighbors))
    control_weight = weights.sum()
    differences = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        treated_values = X[treated_mask, j]
        mean_t = treated_values.mean()
        mean_c = float(weights @ X[:, j]) / control_weight if control_weight > 0 else mean_t
        gap = mean_t - mean_c
        if gap == 0.0:
            continue
        sd = treated_values.std(ddof=1) if treated_values.size > 1 else 0.0
        differences[j] = gap / sd if sd > 0 else np.inf * np.sign(gap)
    return BalanceReport(names=tuple(names), differences=differences, threshold=threshold)


def check_balance(cross_section, matches, confounders, threshold: float = BALANCE_THRESHOLD) -> BalanceReport:
    """Balance report for a matched cross-section on the named confounders."""
    frame = cross_section.data
    X = frame[list(confounders)].to_numpy(dtype=float)
    T = frame[cross_section.schema.treatment_column].to_numpy(dtype=float)
    return balance_from_matches(X, T, matches, tuple(confounders), threshold=threshold)
