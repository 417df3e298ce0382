"""Total, natural direct, and natural indirect effect estimation.

The total effect adjusts for the confounders only; the direct effect
additionally adjusts for the mediator (closing the mediated paths); and the
indirect effect is defined through the linear no-interaction decomposition

    total effect = direct effect + indirect effect,

applied per subsample and per permutation replicate. Total and direct runs
share one subsample plan and identical permutation streams, so the
decomposition is exact rather than noisy, and the indirect effect's null
distribution is the paired difference of the two permuted estimates.

Ordinal treatments (e.g. adjacent weight categories) are analyzed as
pairwise binary contrasts of consecutive levels, one report per contrast;
each contrast restricts the data to its two level sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import PlanMismatch, UsageError
from .inference import (
    IrandConfig,
    irand_estimate,
    p_value_from_null,
    pooled_estimate,
)
from .matching import AnalysisSpec
from .panel import SubsamplePlan, TwoPointPanel, draw_subsamples

ENGINES = ("irand", "pooled")


@dataclass(frozen=True)
class MediationSpec:
    """Causal-graph roles plus the estimation engine to run them through."""

    treatment: str
    outcome: str
    confounders: tuple[str, ...]
    mediator: str
    engine: str = "irand"
    config: IrandConfig = field(default_factory=IrandConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "confounders", tuple(self.confounders))
        if self.mediator in self.confounders:
            raise UsageError("mediator must not appear among the confounders")
        if self.mediator in (self.treatment, self.outcome):
            raise UsageError("mediator must differ from treatment and outcome")
        if self.engine not in ENGINES:
            raise UsageError(f"engine must be one of {ENGINES}, got {self.engine!r}")

    def to_dict(self) -> dict:
        return {
            "treatment": self.treatment,
            "outcome": self.outcome,
            "confounders": list(self.confounders),
            "mediator": self.mediator,
            "engine": self.engine,
            "config": self.config.to_dict(),
        }


@dataclass(frozen=True)
class EffectEstimate:
    """One effect (total/direct/indirect) with its per-subsample distribution."""

    kind: str
    ate: float
    p_value: float | None
    subsample_ates: np.ndarray
    subsample_p_values: np.ndarray | None
    null_ates: np.ndarray | None
    completed_indices: tuple[int, ...]
    engine: str
    plan_fingerprint: str | None
    tail: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "ate": self.ate,
            "p_value": self.p_value,
            "per_subsample": {
                "ates": [float(a) for a in self.subsample_ates],
                "p_values": None
                if self.subsample_p_values is None
                else [float(p) for p in self.subsample_p_values],
            },
        }


def _restrict(effect: EffectEstimate, indices: tuple[int, ...]) -> EffectEstimate:
    if effect.completed_indices == indices:
        return effect
    positions = [effect.completed_indices.index(i) for i in indices]
    ates = effect.subsample_ates[positions]
    p_values = (
        None if effect.subsample_p_values is None else effect.subsample_p_values[positions]
    )
    return EffectEstimate(
        kind=effect.kind,
        ate=float(np.mean(ates)),
        p_value=None if p_values is None else float(np.mean(p_values)),
        subsample_ates=ates,
        subsample_p_values=p_values,
        null_ates=None if effect.null_ates is None else effect.null_ates[positions],
        completed_indices=indices,
        engine=effect.engine,
        plan_fingerprint=effect.plan_fingerprint,
        tail=effect.tail,
    )


def _run_engine(
    panel: TwoPointPanel,
    spec: MediationSpec,
    analysis: AnalysisSpec,
    kind: str,
    plan: SubsamplePlan | None,
) -> EffectEstimate:
    config = spec.config
    if spec.engine == "irand":
        engine_config = replace(config, keep_null_distributions=config.s_permutations > 0)
        report = irand_estimate(panel, analysis, engine_config, plan=plan)
        return EffectEstimate(
            kind=kind,
            ate=report.mean_ate,
            p_value=report.mean_p_value,
            subsample_ates=report.ates,
            subsample_p_values=report.p_values,
            null_ates=report.null_ates,
            completed_indices=tuple(r.index for r in report.subsamples),
            engine="irand",
            plan_fingerprint=report.plan_fingerprint,
            tail=config.tail,
        )
    report = pooled_estimate(
        panel,
        analysis,
        s_permutations=config.s_permutations,
        tail=config.tail,
        seed=config.seed,
        options=config.matching,
        p_value_variant=config.p_value_variant,
    )
    return EffectEstimate(
        kind=kind,
        ate=report.estimate.ate,
        p_value=report.p_value,
        subsample_ates=np.array([report.estimate.ate]),
        subsample_p_values=None if report.p_value is None else np.array([report.p_value]),
        null_ates=None if report.null_ates is None else report.null_ates[None, :],
        completed_indices=(0,),
        engine="pooled",
        plan_fingerprint=f"pooled:{config.seed}:{config.s_permutations}",
        tail=config.tail,
    )


def total_effect(
    panel: TwoPointPanel,
    spec: MediationSpec,
    plan: SubsamplePlan | None = None,
    contrast: tuple[float, float] | None = None,
) -> EffectEstimate:
    """Engine ATE of treatment on outcome adjusting for confounders only."""
    analysis = AnalysisSpec(
        treatment=spec.treatment,
        outcome=spec.outcome,
        confounders=spec.confounders,
        treatment_levels=contrast,
    )
    return _run_engine(panel, spec, analysis, "total", plan)


def direct_effect(
    panel: TwoPointPanel,
    spec: MediationSpec,
    plan: SubsamplePlan | None = None,
    contrast: tuple[float, float] | None = None,
) -> EffectEstimate:
    """Engine ATE adjusting for the confounders and the mediator."""
    analysis = AnalysisSpec(
        treatment=spec.treatment,
        outcome=spec.outcome,
        confounders=spec.confounders + (spec.mediator,),
        treatment_levels=contrast,
    )
    return _run_engine(panel, spec, analysis, "direct", plan)


def indirect_effect(
    total: EffectEstimate,
    direct: EffectEstimate,
    p_value_variant: str = "plain",
) -> EffectEstimate:
    """Indirect effect as (total - direct), paired per subsample and shuffle.

    Both inputs must have been computed on the same subsample plan and the
    same permutation streams; the indirect null distribution is the paired
    difference of the permuted totals and permuted directs.
    """
    if total.plan_fingerprint is None or total.plan_fingerprint != direct.plan_fingerprint:
        raise PlanMismatch("total and direct effects were built from different subsample plans")
    if total.tail != direct.tail or total.engine != direct.engine:
        raise PlanMismatch("total and direct effects use different inference settings")
    common = tuple(i for i in total.completed_indices if i in set(direct.completed_indices))
    total = _restrict(total, common)
    direct = _restrict(direct, common)
    ates = total.subsample_ates - direct.subsample_ates
    p_values = None
    nulls = None
    if total.null_ates is not None and direct.null_ates is not None:
        nulls = total.null_ates - direct.null_ates
        p_values = np.array(
            [
                p_value_from_null(nulls[row], ates[row], total.tail, p_value_variant)
                for row in range(len(ates))
            ]
        )
    return EffectEstimate(
        kind="indirect",
        # defined as the difference of the aggregates so the decomposition
        # identity is bitwise; the mean of the per-subsample differences
        # agrees to float reassociation error
        ate=total.ate - direct.ate,
        p_value=None if p_values is None else float(np.mean(p_values)),
        subsample_ates=ates,
        subsample_p_values=p_values,
        null_ates=nulls,
        completed_indices=common,
        engine=total.engine,
        plan_fingerprint=total.plan_fingerprint,
        tail=total.tail,
    )


@dataclass(frozen=True)
class MediationReport:
    """Total, direct, and indirect effects on one shared subsample plan."""

    total: EffectEstimate
    direct: EffectEstimate
    indirect: EffectEstimate
    spec: MediationSpec
    contrast: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "contrast": None if self.contrast is None else list(self.contrast),
            "total": self.total.to_dict(),
            "direct": self.direct.to_dict(),
            "indirect": self.indirect.to_dict(),
            "decomposition_identity": {
                "total_minus_direct": self.total.ate - self.direct.ate,
                "indirect": self.indirect.ate,
            },
        }


def mediation_report(
    panel: TwoPointPanel,
    spec: MediationSpec,
    contrast: tuple[float, float] | None = None,
) -> MediationReport:
    """Run the three effects on one shared plan and shared permutation streams."""
    plan = None
    if spec.engine == "irand":
        plan = draw_subsamples(
            panel, spec.config.m_subsamples, spec.config.strategy, spec.config.seed
        )
    total = total_effect(panel, spec, plan=plan, contrast=contrast)
    direct = direct_effect(panel, spec, plan=plan, contrast=contrast)
    indirect = indirect_effect(total, direct, spec.config.p_value_variant)
    # Restrict all three to the subsamples where both runs completed so the
    # decomposition identity holds in aggregate as well as per subsample.
    common = indirect.completed_indices
    return MediationReport(
        total=_restrict(total, common),
        direct=_restrict(direct, common),
        indirect=indirect,
        spec=spec,
        contrast=contrast,
    )


def treatment_contrasts(panel: TwoPointPanel, treatment: str) -> list[tuple[float, float]] | None:
    """Adjacent level pairs for an ordinal treatment, or None if already binary."""
    series = panel.data[treatment]
    if not pd.api.types.is_numeric_dtype(series):
        raise UsageError(f"treatment column {treatment!r} must be numeric")
    levels = sorted(float(v) for v in series.dropna().unique())
    declared = panel.schema.variable_kinds.get(treatment)
    if len(levels) <= 2 and set(levels) <= {0.0, 1.0} and declared != "ordinal":
        return None
    if len(levels) < 2:
        raise UsageError(f"treatment column {treatment!r} has fewer than two levels")
    return [(levels[i], levels[i + 1]) for i in range(len(levels) - 1)]


def mediation_reports(panel: TwoPointPanel, spec: MediationSpec) -> list[MediationReport]:
    """One report for a binary treatment; one per adjacent-level contrast otherwise."""
    contrasts = treatment_contrasts(panel, spec.treatment)
    if contrasts is None:
        return [mediation_report(panel, spec)]
    return [mediation_report(panel, spec, contrast=c) for c in contrasts]
