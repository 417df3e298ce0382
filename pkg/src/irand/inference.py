"""Resampling estimators and permutation inference for two-point panels.

``irand_estimate`` is the time-split resampling estimator: draw M subsamples
taking one time point per individual, compute the matching ATE inside each,
average the per-subsample estimates, and assess significance by permuting
the treatment labels within each subsample (S shuffles, one-tailed by
default). ``pooled_estimate`` and the two difference-in-differences
estimators are the baselines it is benchmarked against.

Every randomized step draws from a counter-based stream keyed by
(master seed, subsample m, shuffle s), so reports are bit-identical for a
given configuration regardless of execution order or parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Iterable

import numpy as np

from .errors import (
    DataError,
    EmptyData,
    EmptyGroup,
    NonBinaryTreatment,
    NonNumericVariable,
    SingleClass,
    UsageError,
)
from .matching import (
    AnalysisSpec,
    AteEstimate,
    MatchingOptions,
    complete_cases,
    matching_ate,
    pipeline_ate,
    prepare_data,
)
from .panel import (
    CrossSection,
    SubsamplePlan,
    TwoPointPanel,
    VariableSchema,
    draw_subsamples,
    pool,
    reorganize_did,
)
from .streams import PERMUTATION, RELABEL, substream

TAILS = ("lower", "upper", "two_sided")
COLLINEARITY_LIMIT = 1e8
MAX_EXHAUSTIVE = 200_000


@dataclass(frozen=True)
class IrandConfig:
    """Configuration of the time-split resampling estimator."""

    m_subsamples: int = 500
    s_permutations: int = 500
    tail: str = "lower"
    strategy: str = "min_overlap"
    seed: int = 0
    p_value_variant: str = "plain"
    keep_null_distributions: bool = False
    matching: MatchingOptions = field(default_factory=MatchingOptions)

    def __post_init__(self) -> None:
        if self.m_subsamples < 1:
            raise UsageError(f"m_subsamples must be >= 1, got {self.m_subsamples}")
        if self.s_permutations < 0:
            raise UsageError(f"s_permutations must be >= 0, got {self.s_permutations}")
        if self.tail not in TAILS:
            raise UsageError(f"tail must be one of {TAILS}, got {self.tail!r}")
        if self.p_value_variant not in ("plain", "add_one"):
            raise UsageError(f"unknown p-value variant {self.p_value_variant!r}")

    def to_dict(self) -> dict:
        return {
            "m_subsamples": self.m_subsamples,
            "s_permutations": self.s_permutations,
            "tail": self.tail,
            "strategy": self.strategy,
            "seed": self.seed,
            "p_value_variant": self.p_value_variant,
            "k": self.matching.k,
            "retry_k": self.matching.retry_k,
            "balance_threshold": self.matching.balance_threshold,
            "ridge": self.matching.logistic.ridge,
        }


def p_value_from_null(
    null_ates: np.ndarray,
    observed: float,
    tail: str,
    variant: str = "plain",
) -> float:
    """Fraction of null statistics that beat the observed one, per tail."""
    null_ates = np.asarray(null_ates, dtype=float)
    if tail == "lower":
        count = int(np.sum(null_ates < observed))
    elif tail == "upper":
        count = int(np.sum(null_ates > observed))
    elif tail == "two_sided":
        count = int(np.sum(np.abs(null_ates) > abs(observed)))
    else:
        raise UsageError(f"tail must be one of {TAILS}, got {tail!r}")
    s = len(null_ates)
    if variant == "plain":
        return count / s
    return (count + 1) / (s + 1)


def _null_distribution(
    X: np.ndarray,
    T: np.ndarray,
    Y: np.ndarray,
    names: tuple[str, ...],
    options: MatchingOptions,
    shuffles: Iterable[np.ndarray],
) -> np.ndarray:
    """Matching ATE recomputed under each shuffled treatment labelling."""
    n_treated = int(T.sum())
    ates = []
    for T_shuffled in shuffles:
        # Shuffling must preserve the treatment-group sizes.
        assert int(T_shuffled.sum()) == n_treated
        ates.append(pipeline_ate(X, T_shuffled, Y, names, options).ate)
    return np.asarray(ates)


def _sampled_shuffles(T: np.ndarray, seed: int, m: int, s_permutations: int):
    for s in range(s_permutations):
        rng = substream(seed, PERMUTATION, m, s)
        yield T[rng.permutation(len(T))]


def _exhaustive_shuffles(T: np.ndarray):
    n = len(T)
    n_treated = int(T.sum())
    from math import comb

    total = comb(n, n_treated)
    if total > MAX_EXHAUSTIVE:
        raise UsageError(
            f"exhaustive enumeration of {total} labellings exceeds the limit {MAX_EXHAUSTIVE}"
        )
    for treated_positions in combinations(range(n), n_treated):
        labels = np.zeros(n, dtype=np.int8)
        labels[list(treated_positions)] = 1
        yield labels


@dataclass(frozen=True)
class PermutationResult:
    p_value: float
    null_ates: np.ndarray
    tail: str
    s_permutations: int
    exhaustive: bool = False


def permutation_test(
    cross_section: CrossSection,
    spec: AnalysisSpec,
    observed_ate: float,
    s_permutations: int,
    tail: str,
    seed: int = 0,
    options: MatchingOptions = MatchingOptions(),
    p_value_variant: str = "plain",
    exhaustive: bool = False,
    subsample_index: int = 0,
) -> PermutationResult:
    """Permutation test of no treatment effect on a cross-section.

    Shuffles the treatment column uniformly (confounders and outcomes fixed)
    and recomputes the full matching pipeline per shuffle; with
    ``exhaustive=True`` every distinct labelling with the observed group
    sizes is enumerated instead of sampled.
    """
    prepared = prepare_data(cross_section.data, spec)
    X, T, Y, _ = complete_cases(prepared, treatment_levels=spec.treatment_levels)
    if exhaustive:
        shuffles = _exhaustive_shuffles(T)
    else:
        shuffles = _sampled_shuffles(T, seed, subsample_index, s_permutations)
    null_ates = _null_distribution(X, T, Y, prepared.names, options, shuffles)
    p = p_value_from_null(null_ates, observed_ate, tail, p_value_variant)
    return PermutationResult(
        p_value=p,
        null_ates=null_ates,
        tail=tail,
        s_permutations=len(null_ates),
        exhaustive=exhaustive,
    )


@dataclass(frozen=True)
class SubsampleResult:
    index: int
    ate: float
    p_value: float | None
    n_units: int
    n_dropped: int
    converged: bool
    balance_passed: bool
    balance_retried: bool


@dataclass(frozen=True)
class IrandReport:
    """Aggregated time-split resampling estimate.

    ``mean_ate`` is the exact arithmetic mean of the completed per-subsample
    estimates; ``mean_p_value`` likewise for the per-subsample permutation
    p-values. Subsamples where matching is impossible (an empty group after
    selection) are skipped and counted, never silently absorbed.
    """

    mean_ate: float
    mean_p_value: float | None
    ates: np.ndarray
    p_values: np.ndarray | None
    subsamples: tuple[SubsampleResult, ...]
    skipped_indices: tuple[int, ...]
    config: IrandConfig
    plan_fingerprint: str
    null_ates: np.ndarray | None = None

    @property
    def n_skipped(self) -> int:
        return len(self.skipped_indices)

    def to_dict(self) -> dict:
        payload = {
            "estimator": "irand",
            "config": self.config.to_dict(),
            "mean_ate": self.mean_ate,
            "mean_p_value": self.mean_p_value,
            "per_subsample": {
                "ates": [float(a) for a in self.ates],
                "p_values": None
                if self.p_values is None
                else [float(p) for p in self.p_values],
            },
            "diagnostics": {
                "n_subsamples_completed": len(self.ates),
                "n_subsamples_skipped": self.n_skipped,
                "skipped_indices": list(self.skipped_indices),
                "plan_fingerprint": self.plan_fingerprint,
                "n_balance_failures": sum(
                    1 for sub in self.subsamples if not sub.balance_passed
                ),
                "n_not_converged": sum(1 for sub in self.subsamples if not sub.converged),
                "dropped_rows": [sub.n_dropped for sub in self.subsamples],
            },
        }
        return payload


def irand_estimate(
    panel: TwoPointPanel,
    spec: AnalysisSpec,
    config: IrandConfig = IrandConfig(),
    plan: SubsamplePlan | None = None,
) -> IrandReport:
    """Time-split resampling estimate of the ATE with permutation inference.

    A pre-built :class:`SubsamplePlan` may be supplied (e.g. to share one
    plan across several runs); otherwise M assignments are drawn with the
    configured strategy and seed.
    """
    if plan is None:
        plan = draw_subsamples(panel, config.m_subsamples, config.strategy, config.seed)
    if plan.n_individuals != panel.n_individuals:
        raise UsageError("plan was drawn for a different number of individuals")
    prepared = prepare_data(panel.data, spec)
    n = panel.n_individuals
    base_positions = 2 * np.arange(n)

    results: list[SubsampleResult] = []
    skipped: list[int] = []
    nulls: list[np.ndarray] = []
    s_perm = config.s_permutations
    for m in range(plan.m_subsamples):
        rows = base_positions + plan.assignments[m]
        X, T, Y, n_dropped = complete_cases(prepared, rows, spec.treatment_levels)
        try:
            if len(T) == 0:
                raise EmptyGroup("no usable rows in subsample")
            outcome = pipeline_ate(X, T, Y, prepared.names, config.matching)
        except (EmptyGroup, SingleClass):
            skipped.append(m)
            continue
        p_value = None
        if s_perm > 0:
            null_ates = _null_distribution(
                X,
                T,
                Y,
                prepared.names,
                config.matching,
                _sampled_shuffles(T, config.seed, m, s_perm),
            )
            p_value = p_value_from_null(
                null_ates, outcome.ate, config.tail, config.p_value_variant
            )
            if config.keep_null_distributions:
                nulls.append(null_ates)
        results.append(
            SubsampleResult(
                index=m,
                ate=outcome.ate,
                p_value=p_value,
                n_units=len(T),
                n_dropped=n_dropped,
                converged=outcome.model.converged,
                balance_passed=outcome.balance.passed,
                balance_retried=outcome.balance_retried,
            )
        )

    if not results:
        raise EmptyData("every subsample was skipped; no estimate available")
    ates = np.array([r.ate for r in results])
    p_values = None
    mean_p = None
    if s_perm > 0:
        p_values = np.array([r.p_value for r in results])
        mean_p = float(np.mean(p_values))
    return IrandReport(
        mean_ate=float(np.mean(ates)),
        mean_p_value=mean_p,
        ates=ates,
        p_values=p_values,
        subsamples=tuple(results),
        skipped_indices=tuple(skipped),
        config=config,
        plan_fingerprint=plan.fingerprint(),
        null_ates=np.vstack(nulls) if nulls else None,
    )


@dataclass(frozen=True)
class PooledReport:
    """Matching estimate plus permutation p-value on the pooled cross-section."""

    estimate: AteEstimate
    p_value: float | None
    null_ates: np.ndarray | None
    tail: str
    s_permutations: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "estimator": "pooled",
            "config": {
                "s_permutations": self.s_permutations,
                "tail": self.tail,
                "seed": self.seed,
            },
            "ate": self.estimate.ate,
            "p_value": self.p_value,
            "estimate": self.estimate.to_dict(),
        }


def pooled_estimate(
    panel: TwoPointPanel,
    spec: AnalysisSpec,
    s_permutations: int = 500,
    tail: str = "lower",
    seed: int = 0,
    options: MatchingOptions = MatchingOptions(),
    p_value_variant: str = "plain",
) -> PooledReport:
    """Matching ATE treating the two visits of each individual as distinct units."""
    cross = pool(panel)
    estimate = matching_ate(cross, spec, options)
    p_value = None
    null_ates = None
    if s_permutations > 0:
        result = permutation_test(
            cross,
            spec,
            estimate.ate,
            s_permutations,
            tail,
            seed=seed,
            options=options,
            p_value_variant=p_value_variant,
        )
        p_value, null_ates = result.p_value, result.null_ates
    return PooledReport(
        estimate=estimate,
        p_value=p_value,
        null_ates=null_ates,
        tail=tail,
        s_permutations=s_permutations,
        seed=seed,
    )


@dataclass(frozen=True)
class DidRegressionResult:
    """Least-squares fit of the outcome change on the treatment and confounder changes."""

    delta_hat: float
    coefficients: np.ndarray
    names: tuple[str, ...]
    condition_number: float
    collinear: bool
    n_individuals: int
    n_dropped: int
    residual_sd: float

    def to_dict(self) -> dict:
        return {
            "estimator": "did_regression",
            "ate": self.delta_hat,
            "coefficients": {
                name: float(c) for name, c in zip(self.names, self.coefficients)
            },
            "diagnostics": {
                "condition_number": None
                if not np.isfinite(self.condition_number)
                else float(self.condition_number),
                "collinear": self.collinear,
                "n_individuals": self.n_individuals,
                "n_dropped": self.n_dropped,
                "residual_sd": self.residual_sd,
            },
        }


def _paired_numeric(panel: TwoPointPanel, column: str) -> tuple[np.ndarray, np.ndarray]:
    import pandas as pd

    series = panel.data[column]
    if not pd.api.types.is_numeric_dtype(series):
        raise NonNumericVariable(f"column {column!r} is not numeric")
    values = series.to_numpy(dtype=float)
    return values[0::2], values[1::2]


def did_regression_estimate(panel: TwoPointPanel, spec: AnalysisSpec) -> DidRegressionResult:
    """OLS of the outcome change on (treatment change, confounder changes).

    The regression runs on the baseline-untreated individuals (the
    untreated-to-treated group plus, when the treatment is not time-aligned,
    the never-treated group), which is the comparison that identifies the
    effect from change scores; under a time-aligned treatment that is every
    individual. No intercept. Rank-deficient designs are solved by the
    minimum-norm pseudo-inverse and flagged as collinear (condition number
    > 1e8), which is exactly what happens when the confounder changes are
    collinear with the treatment change.
    """
    columns = [spec.treatment, *spec.confounders]
    deltas = []
    keep = None
    for column in [spec.outcome, *columns]:
        v0, v1 = _paired_numeric(panel, column)
        mask = np.isfinite(v0) & np.isfinite(v1)
        keep = mask if keep is None else (keep & mask)
        deltas.append(v1 - v0)
    baseline_treatment = _paired_numeric(panel, spec.treatment)[0]
    keep &= baseline_treatment == 0
    dy = deltas[0][keep]
    design = np.column_stack([d[keep] for d in deltas[1:]])
    if len(dy) == 0:
        raise EmptyData("no usable baseline-untreated individuals")
    condition = float(np.linalg.cond(design))
    coefficients, _, rank, _ = np.linalg.lstsq(design, dy, rcond=None)
    residuals = dy - design @ coefficients
    dof = max(1, len(dy) - rank)
    names = ("d_" + spec.treatment,) + tuple("d_" + c for c in spec.confounders)
    return DidRegressionResult(
        delta_hat=float(coefficients[0]),
        coefficients=coefficients,
        names=names,
        condition_number=condition,
        collinear=not np.isfinite(condition) or condition > COLLINEARITY_LIMIT,
        n_individuals=len(dy),
        n_dropped=int((~keep).sum()),
        residual_sd=float(np.sqrt((residuals @ residuals) / dof)),
    )


@dataclass(frozen=True)
class DidReorganizedReport:
    """Matching estimate on the change-score view with its coin-flip permutation test."""

    estimate: AteEstimate
    p_value: float | None
    null_ates: np.ndarray | None
    tail: str
    s_permutations: int
    seed: int
    n_pairs: int
    n_dropped: int

    def to_dict(self) -> dict:
        return {
            "estimator": "did_reorganized",
            "config": {
                "s_permutations": self.s_permutations,
                "tail": self.tail,
                "seed": self.seed,
            },
            "ate": self.estimate.ate,
            "p_value": self.p_value,
            "estimate": self.estimate.to_dict(),
            "diagnostics": {"n_pairs": self.n_pairs, "n_dropped": self.n_dropped},
        }


def did_reorganized_estimate(
    panel: TwoPointPanel,
    spec: AnalysisSpec,
    s_permutations: int = 500,
    tail: str = "lower",
    seed: int = 0,
    options: MatchingOptions = MatchingOptions(),
    p_value_variant: str = "plain",
) -> DidReorganizedReport:
    """Matching on change scores against a synthetic zero-outcome control image.

    The permutation test reassigns each individual's treatment-image /
    control-image labels by an independent fair coin and recomputes the
    matching estimate, mirroring the estimator's own synthetic-control
    construction.
    """
    if spec.treatment_levels is not None:
        raise UsageError("did_reorganized_estimate does not support ordinal contrasts")
    analysis_schema = VariableSchema(
        id_column=panel.schema.id_column,
        time_column=panel.schema.time_column,
        treatment_column=spec.treatment,
        confounder_columns=spec.confounders,
        outcome_column=spec.outcome,
    )
    view = reorganize_did(TwoPointPanel(panel.data, analysis_schema))
    prepared = prepare_data(view.data, spec)
    # Rows alternate control image (even) / treatment image (odd) per pair.
    dt = prepared.treatment[1::2]
    if not np.isin(dt[np.isfinite(dt)], (0.0, 1.0)).all():
        raise NonBinaryTreatment(
            "differenced treatment must be 0/1; time-misaligned treatments are unsupported here"
        )
    X, T, Y, n_dropped = complete_cases(prepared)
    if len(T) == 0:
        raise EmptyData("no usable rows after dropping missing values")
    result = pipeline_ate(X, T, Y, prepared.names, options)
    estimate = AteEstimate(
        ate=result.ate,
        n_units=len(T),
        balance=result.balance,
        diagnostics={
            "propensity_converged": result.model.converged,
            "balance_retried": result.balance_retried,
            "balance_passed": result.balance.passed,
            "k_used": result.k_used,
        },
    )
    p_value = None
    null_ates = None
    if s_permutations > 0:
        n_pairs = len(T) // 2
        even = 2 * np.arange(n_pairs)
        image_values = T[even + 1].astype(np.int8)
        ates = []
        for s in range(s_permutations):
            coins = substream(seed, RELABEL, s).integers(0, 2, size=n_pairs)
            T_shuffled = np.zeros_like(T)
            T_shuffled[even + 1] = np.where(coins == 1, image_values, 0)
            T_shuffled[even] = np.where(coins == 1, 0, image_values)
            assert int(T_shuffled.sum()) == int(T.sum())
            ates.append(pipeline_ate(X, T_shuffled, Y, prepared.names, options).ate)
        null_ates = np.asarray(ates)
        p_value = p_value_from_null(null_ates, result.ate, tail, p_value_variant)
    return DidReorganizedReport(
        estimate=estimate,
        p_value=p_value,
        null_ates=null_ates,
        tail=tail,
        s_permutations=s_permutations,
        seed=seed,
        n_pairs=len(T) // 2,
        n_dropped=view.n_dropped + n_dropped,
    )
