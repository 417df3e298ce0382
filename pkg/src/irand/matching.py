"""Nearest-neighbor matching on propensity scores and the matching ATE.

Every unit is matched (with replacement) to the k opposite-group units with
the nearest propensity score, ties broken deterministically by lower unit
index. The average treatment effect is the sign-corrected imputation form

    ATE = (1/n) * sum_i s_i * (Y_i - mean_{j in J_i} Y_j),  s_i = 2*T_i - 1,

so treated units contribute their outcome minus the matched-control mean and
control units the matched-treated mean minus their outcome, giving the
population-average contrast over both groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError, EmptyGroup, MissingColumn, NonBinaryTreatment, UsageError
from .panel import CrossSection
from .propensity import (
    BALANCE_THRESHOLD,
    BalanceReport,
    LogisticOptions,
    PropensityModel,
    balance_from_matches,
    fit_logistic,
    predict_propensity,
)


@dataclass(frozen=True)
class AnalysisSpec:
    """Columns an estimator should use, resolved against the data frame.

    ``treatment_levels`` restricts an ordinal treatment to two adjacent
    levels (low, high): rows at other levels are dropped and the treatment is
    recoded to 1 at the high level.
    """

    treatment: str
    outcome: str
    confounders: tuple[str, ...]
    treatment_levels: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "confounders", tuple(self.confounders))
        if self.treatment_levels is not None:
            lo, hi = self.treatment_levels
            if lo == hi:
                raise UsageError("treatment_levels must name two distinct levels")
            object.__setattr__(self, "treatment_levels", (float(lo), float(hi)))


@dataclass(frozen=True)
class MatchingOptions:
    k: int = 1
    retry_k: int | None = 3
    balance_threshold: float = BALANCE_THRESHOLD
    logistic: LogisticOptions = field(default_factory=LogisticOptions)


@dataclass(frozen=True)
class MatchSet:
    """Matched opposite-group unit indices per unit, with replacement."""

    neighbors: tuple[np.ndarray, ...]
    k: int
    with_replacement: bool = True


@dataclass(frozen=True)
class AteEstimate:
    ate: float
    n_units: int
    balance: BalanceReport
    diagnostics: dict

    def to_dict(self) -> dict:
        return {
            "ate": self.ate,
            "n_units": self.n_units,
            "balance": self.balance.to_dict(),
            "diagnostics": dict(self.diagnostics),
        }


@dataclass(frozen=True)
class PreparedData:
    """Analysis columns extracted to arrays, missing values preserved."""

    confounders: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    names: tuple[str, ...]


def prepare_data(frame: pd.DataFrame, spec: AnalysisSpec) -> PreparedData:
    """Extract (confounders, treatment, outcome) as float arrays.

    Non-numeric confounders are one-hot encoded with the first (sorted)
    level dropped. Missing cells become NaN and are handled later by
    :func:`complete_cases`.
    """
    for column in (spec.treatment, spec.outcome, *spec.confounders):
        if column not in frame.columns:
            raise MissingColumn(f"analysis column {column!r} not present in data")
    blocks: list[np.ndarray] = []
    names: list[str] = []
    for column in spec.confounders:
        series = frame[column]
        if pd.api.types.is_numeric_dtype(series):
            blocks.append(series.to_numpy(dtype=float)[:, None])
            names.append(column)
        else:
            levels = sorted(series.dropna().unique())
            for level in levels[1:]:
                blocks.append((series == level).astype(float).to_numpy()[:, None])
                names.append(f"{column}={level}")
    if blocks:
        X = np.hstack(blocks)
    else:
        X = np.empty((len(frame), 0))
    T = frame[spec.treatment].to_numpy(dtype=float)
    Y = frame[spec.outcome].to_numpy(dtype=float)
    return PreparedData(confounders=X, treatment=T, outcome=Y, names=tuple(names))


def complete_cases(
    prepared: PreparedData,
    rows: np.ndarray | None = None,
    treatment_levels: tuple[float, float] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Rows with every analysis value present, treatment recoded to 0/1.

    Returns (X, T, Y, n_dropped); ``n_dropped`` counts rows removed for
    missingness only (level restriction is not a drop).
    """
    X, T, Y = prepared.confounders, prepared.treatment, prepared.outcome
    if rows is not None:
        X, T, Y = X[rows], T[rows], Y[rows]
    keep = np.isfinite(T) & np.isfinite(Y)
    if X.shape[1]:
        keep &= np.isfinite(X).all(axis=1)
    n_dropped = int((~keep).sum())
    X, T, Y = X[keep], T[keep], Y[keep]
    if treatment_levels is not None:
        lo, hi = treatment_levels
        in_contrast = (T == lo) | (T == hi)
        X, T, Y = X[in_contrast], T[in_contrast], Y[in_contrast]
        T = (T == hi).astype(float)
    elif T.size and not np.isin(T, (0.0, 1.0)).all():
        raise NonBinaryTreatment("analysis treatment values must be 0/1 (or use treatment_levels)")
    return X, T.astype(np.int8), Y, n_dropped


def match_nearest(scores: np.ndarray, treatment: np.ndarray, k: int = 1) -> MatchSet:
    """k nearest opposite-group units per unit by |score_i - score_j|.

    Ties are broken by the lower unit index; |J_i| = min(k, opposite group
    size).
    """
    scores = np.asarray(scores, dtype=float)
    treatment = np.asarray(treatment)
    if not np.isfinite(scores).all():
        raise DataError("scores must be finite")
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    treated_idx = np.flatnonzero(treatment == 1)
    control_idx = np.flatnonzero(treatment == 0)
    if len(treated_idx) == 0 or len(control_idx) == 0:
        raise EmptyGroup("matching requires at least one treated and one control unit")

    neighbors: list[np.ndarray | None] = [None] * len(scores)
    for own_idx, other_idx in ((treated_idx, control_idx), (control_idx, treated_idx)):
        distances = np.abs(scores[own_idx][:, None] - scores[other_idx][None, :])
        k_eff = min(k, len(other_idx))
        if k_eff == 1:
            # argmin returns the first minimum: lowest opposite index on ties.
            chosen = other_idx[np.argmin(distances, axis=1)][:, None]
        else:
            order = np.argsort(distances, axis=1, kind="stable")[:, :k_eff]
            chosen = other_idx[order]
        for row, unit in enumerate(own_idx):
            neighbors[unit] = chosen[row]
    return MatchSet(neighbors=tuple(neighbors), k=k)


def estimate_ate(outcomes: np.ndarray, treatment: np.ndarray, matches: MatchSet) -> float:
    """Sign-corrected imputation ATE over all units."""
    Y = np.asarray(outcomes, dtype=float)
    T = np.asarray(treatment)
    signs = 2.0 * (T == 1) - 1.0
    total = 0.0
    for i in range(len(Y)):
        matched = matches.neighbors[i]
        total += signs[i] * (Y[i] - Y[matched].mean())
    return float(total / len(Y))


def _estimate_ate_fast(Y: np.ndarray, signs: np.ndarray, matches: MatchSet) -> float:
    neighbors = matches.neighbors
    widths = {len(v) for v in neighbors}
    if len(widths) == 1:
        stacked = np.vstack(neighbors)
        return float(np.mean(signs * (Y - Y[stacked].mean(axis=1))))
    counterfactual = np.array([Y[v].mean() for v in neighbors])
    return float(np.mean(signs * (Y - counterfactual)))


@dataclass(frozen=True)
class PipelineResult:
    ate: float
    model: PropensityModel
    matches: MatchSet
    balance: BalanceReport
    k_used: int
    balance_retried: bool


def pipeline_ate(
    X: np.ndarray,
    T: np.ndarray,
    Y: np.ndarray,
    names: tuple[str, ...],
    options: MatchingOptions = MatchingOptions(),
) -> PipelineResult:
    """Propensity fit -> predict -> match -> ATE -> balance, with one retry.

    If balance fails at ``options.k``, matching is retried once with
    ``options.retry_k`` neighbors and the retried estimate is returned; a
    persistent failure is reported through the balance report rather than
    looping further.

    Constant confounder columns are excluded from the propensity fit (they
    carry no information and would leave the ridge solution to split weight
    with the intercept arbitrarily); balance still reports them, as zero.
    """
    if len(np.flatnonzero(T == 1)) == 0 or len(np.flatnonzero(T == 0)) == 0:
        raise EmptyGroup("both treatment groups must be non-empty")
    if X.shape[1]:
        varying = ~np.all(X == X[0], axis=0)
        X_fit = X[:, varying]
    else:
        X_fit = X
    model = fit_logistic(X_fit, T, options.logistic)
    scores = predict_propensity(model, X_fit)
    signs = 2.0 * (T == 1) - 1.0

    matches = match_nearest(scores, T, k=options.k)
    balance = balance_from_matches(X, T, matches, names, threshold=options.balance_threshold)
    k_used, retried = options.k, False
    if not balance.passed and options.retry_k and options.retry_k != options.k:
        matches = match_nearest(scores, T, k=options.retry_k)
        balance = balance_from_matches(X, T, matches, names, threshold=options.balance_threshold)
        k_used, retried = options.retry_k, True
    ate = _estimate_ate_fast(Y, signs, matches)
    return PipelineResult(
        ate=ate,
        model=model,
        matches=matches,
        balance=balance,
        k_used=k_used,
        balance_retried=retried,
    )


def matching_ate(
    cross_section: CrossSection,
    spec: AnalysisSpec,
    options: MatchingOptions = MatchingOptions(),
) -> AteEstimate:
    """Full matching estimate on a cross-section, with diagnostics."""
    prepared = prepare_data(cross_section.data, spec)
    X, T, Y, n_dropped = complete_cases(prepared, treatment_levels=spec.treatment_levels)
    if len(T) == 0:
        raise EmptyGroup("no usable rows after dropping missing values")
    result = pipeline_ate(X, T, Y, prepared.names, options)
    diagnostics = {
        "propensity_converged": result.model.converged,
        "propensity_iterations": result.model.iterations,
        "max_abs_score_logit": result.model.max_abs_score_logit,
        "dropped_rows": n_dropped,
        "balance_retried": result.balance_retried,
        "balance_passed": result.balance.passed,
        "k_used": result.k_used,
        "coefficients": [float(c) for c in result.model.coefficients],
    }
    return AteEstimate(
        ate=result.ate,
        n_units=len(T),
        balance=result.balance,
        diagnostics=diagnostics,
    )
