"""Causal inference for two-point panels without a control group.

The package estimates average treatment effects from baseline/follow-up
panel data by time-split resampling with propensity-score matching and
permutation inference, alongside pooled and difference-in-differences
baselines, mediation-effect decomposition, and a Monte-Carlo benchmark
harness for comparing the estimators.
"""

from .errors import (
    DataError,
    DimensionMismatch,
    DuplicateTimePoint,
    EmptyData,
    EmptyGroup,
    InvalidPanel,
    InvalidSummary,
    IrandError,
    LengthMismatch,
    MissingColumn,
    NonBinaryTreatment,
    NonNumericVariable,
    NumericError,
    OrphanIndividual,
    PlanMismatch,
    SingleClass,
    UsageError,
    ZeroVariance,
)
from .inference import (
    DidRegressionResult,
    DidReorganizedReport,
    IrandConfig,
    IrandReport,
    PermutationResult,
    PooledReport,
    did_regression_estimate,
    did_reorganized_estimate,
    irand_estimate,
    p_value_from_null,
    permutation_test,
    pooled_estimate,
)
from .matching import (
    AnalysisSpec,
    AteEstimate,
    MatchingOptions,
    MatchSet,
    estimate_ate,
    match_nearest,
    matching_ate,
)
from .mediation import (
    EffectEstimate,
    MediationReport,
    MediationSpec,
    direct_effect,
    indirect_effect,
    mediation_report,
    mediation_reports,
    total_effect,
)
from .panel import (
    CrossSection,
    DifferencedData,
    SubsamplePlan,
    TwoPointPanel,
    VariableSchema,
    difference,
    draw_subsamples,
    load_panel,
    pool,
    reorganize_did,
    save_panel,
    select_subsample,
)
from .propensity import (
    BalanceReport,
    LogisticOptions,
    PropensityModel,
    check_balance,
    fit_logistic,
    predict_propensity,
    standardized_mean_difference,
)
from .simulation import (
    DgpConfig,
    MseCell,
    MseSurface,
    assign_treatment,
    bmi_like_config,
    generate_confounders,
    generate_mediation_panel,
    generate_outcomes,
    generate_panel,
    panel_digest,
    run_mse_experiment,
)
from .synth import (
    VariableSummary,
    default_summary,
    load_summary,
    synthesize_panel,
)

__version__ = "0.1.0"
