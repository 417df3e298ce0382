import numpy as np
import pandas as pd
import pytest

from irand.errors import EmptyGroup, NonBinaryTreatment
from irand.matching import (
    AnalysisSpec,
    MatchingOptions,
    complete_cases,
    estimate_ate,
    match_nearest,
    matching_ate,
    pipeline_ate,
    prepare_data,
)
from irand.panel import CrossSection, VariableSchema, pool
from irand.propensity import fit_logistic, predict_propensity
from irand.simulation import DgpConfig, generate_panel

from oracles import (
    matching_ate_with_retry,
    matching_contributions,
    nearest_opposite,
)

FOUR_UNIT_SCORES = np.array([0.7, 0.4, 0.6, 0.3])
FOUR_UNIT_TREATMENT = np.array([1, 1, 0, 0], dtype=np.int8)
FOUR_UNIT_OUTCOMES = np.array([3.0, 2.0, 1.0, 0.0])


class TestMatchNearest:
    def test_four_unit_hand_example(self):
        matches = match_nearest(FOUR_UNIT_SCORES, FOUR_UNIT_TREATMENT, k=1)
        assert [list(m) for m in matches.neighbors] == [[2], [3], [0], [1]]

    def test_two_units_forced_match(self):
        matches = match_nearest(np.array([0.9, 0.1]), np.array([1, 0], dtype=np.int8), k=1)
        assert [list(m) for m in matches.neighbors] == [[1], [0]]

    def test_equal_scores_tie_break_by_lowest_index(self):
        scores = np.full(6, 0.5)
        treatment = np.array([1, 0, 1, 0, 1, 0], dtype=np.int8)
        matches = match_nearest(scores, treatment, k=1)
        assert [list(matches.neighbors[i]) for i in (0, 2, 4)] == [[1], [1], [1]]
        assert [list(matches.neighbors[i]) for i in (1, 3, 5)] == [[0], [0], [0]]

    def test_neighbor_count_capped_by_opposite_group(self):
        scores = np.array([0.2, 0.8, 0.5])
        treatment = np.array([1, 1, 0], dtype=np.int8)
        matches = match_nearest(scores, treatment, k=3)
        assert len(matches.neighbors[0]) == 1
        assert len(matches.neighbors[2]) == 2

    def test_empty_group(self):
        with pytest.raises(EmptyGroup):
            match_nearest(np.array([0.4, 0.6]), np.array([1, 1], dtype=np.int8), k=1)

    def test_monotone_transform_leaves_match_set_unchanged(self, rng):
        scores = rng.random(30)
        treatment = (rng.random(30) < 0.5).astype(np.int8)
        if treatment.sum() in (0, 30):
            treatment[0] = 1 - treatment[0]
        base = match_nearest(scores, treatment, k=2)
        transformed = match_nearest(0.2 + 0.5 * scores, treatment, k=2)
        for a, b in zip(base.neighbors, transformed.neighbors):
            assert np.array_equal(a, b)

    def test_matches_oracle_on_random_instances(self, rng):
        for _ in range(100):
            n = int(rng.integers(3, 13))
            scores = rng.random(n)
            treatment = np.zeros(n, dtype=np.int8)
            treatment[: int(rng.integers(1, n))] = 1
            treatment = treatment[rng.permutation(n)]
            if treatment.sum() in (0, n):
                continue
            k = int(rng.integers(1, 4))
            ours = match_nearest(scores, treatment, k=k)
            oracle = nearest_opposite(scores, treatment, k)
            assert [list(m) for m in ours.neighbors] == oracle


class TestEstimateAte:
    def test_four_unit_hand_value(self):
        matches = match_nearest(FOUR_UNIT_SCORES, FOUR_UNIT_TREATMENT, k=1)
        assert estimate_ate(FOUR_UNIT_OUTCOMES, FOUR_UNIT_TREATMENT, matches) == 2.0

    def test_constant_outcome_gives_zero(self):
        matches = match_nearest(FOUR_UNIT_SCORES, FOUR_UNIT_TREATMENT, k=1)
        outcomes = np.full(4, 3.7)
        assert estimate_ate(outcomes, FOUR_UNIT_TREATMENT, matches) == 0.0

    def test_outcome_equal_to_treatment_gives_one(self):
        matches = match_nearest(FOUR_UNIT_SCORES, FOUR_UNIT_TREATMENT, k=1)
        outcomes = FOUR_UNIT_TREATMENT.astype(float)
        assert estimate_ate(outcomes, FOUR_UNIT_TREATMENT, matches) == 1.0

    def test_outcome_shift_and_scale_equivariance(self, rng):
        scores = rng.random(20)
        treatment = np.array([1] * 10 + [0] * 10, dtype=np.int8)
        outcomes = rng.standard_normal(20)
        matches = match_nearest(scores, treatment, k=1)
        base = estimate_ate(outcomes, treatment, matches)
        shifted = estimate_ate(outcomes + 5.0, treatment, matches)
        scaled = estimate_ate(outcomes * 3.0, treatment, matches)
        assert abs(shifted - base) < 1e-12
        assert abs(scaled - 3.0 * base) < 1e-12


def random_cross_section(rng, n):
    schema = VariableSchema("id", "time", "t", ("x1", "x2"), "y")
    treatment = np.zeros(n, dtype=np.int8)
    treatment[: int(rng.integers(1, n))] = 1
    treatment = treatment[rng.permutation(n)]
    frame = pd.DataFrame(
        {
            "id": np.arange(n),
            "time": np.zeros(n, dtype=int),
            "t": treatment.astype(float),
            "x1": rng.standard_normal(n),
            "x2": rng.standard_normal(n),
            "y": rng.standard_normal(n),
        }
    )
    return CrossSection(frame, schema, provenance="subsample"), schema


class TestMatchingAte:
    def test_oracle_equivalence_small_instances(self, rng):
        spec = AnalysisSpec("t", "y", ("x1", "x2"))
        checked = 0
        for _ in range(200):
            n = int(rng.integers(4, 13))
            cross, _ = random_cross_section(rng, n)
            T = cross.data["t"].to_numpy()
            if T.sum() in (0, n):
                continue
            estimate = matching_ate(cross, spec)
            prepared = prepare_data(cross.data, spec)
            X, T, Y, _ = complete_cases(prepared)
            varying = ~np.all(X == X[0], axis=0)
            model = fit_logistic(X[:, varying], T)
            scores = predict_propensity(model, X[:, varying])
            oracle = matching_ate_with_retry(scores, X, T, Y, k=1, retry_k=3)
            assert estimate.ate == oracle
            checked += 1
        assert checked >= 150

    def test_row_permutation_leaves_ate_almost_unchanged(self, rng):
        spec = AnalysisSpec("t", "y", ("x1", "x2"))
        cross, schema = random_cross_section(rng, 40)
        base = matching_ate(cross, spec).ate
        shuffled = CrossSection(
            cross.data.sample(frac=1.0, random_state=3).reset_index(drop=True),
            schema,
            provenance="subsample",
        )
        permuted = matching_ate(shuffled, spec).ate
        assert abs(permuted - base) < 1e-10

    def test_row_permutation_exact_after_canonical_sort(self, rng):
        spec = AnalysisSpec("t", "y", ("x1", "x2"))
        cross, schema = random_cross_section(rng, 40)

        def canonical(frame):
            ordered = frame.sort_values(["t", "x1", "x2", "y"], kind="mergesort")
            return CrossSection(
                ordered.reset_index(drop=True), schema, provenance="subsample"
            )

        base = matching_ate(canonical(cross.data), spec).ate
        shuffled = cross.data.sample(frac=1.0, random_state=5).reset_index(drop=True)
        assert matching_ate(canonical(shuffled), spec).ate == base

    def test_pooled_fixed_confounder_design_matches_oracle_exactly(self):
        panel = generate_panel(
            DgpConfig(n=6, design="lcd_like", sigma=0.0, rho=1.0, drift=0.0, seed=21)
        )
        cross = pool(panel)
        spec = AnalysisSpec("t", "y", ("x1",))
        estimate = matching_ate(cross, spec)
        prepared = prepare_data(cross.data, spec)
        X, T, Y, _ = complete_cases(prepared)
        model = fit_logistic(X, T)
        # exactly balanced design: the penalized optimum is the zero vector
        assert np.array_equal(model.coefficients, np.zeros(2))
        scores = predict_propensity(model, X)
        oracle = matching_ate_with_retry(scores, X, T, Y, k=1, retry_k=3)
        assert estimate.ate == oracle

    def test_constant_outcome_gives_zero(self, rng):
        cross, _ = random_cross_section(rng, 16)
        frame = cross.data.copy()
        frame["y"] = 1.25
        constant = CrossSection(frame, cross.schema, provenance="subsample")
        assert matching_ate(constant, AnalysisSpec("t", "y", ("x1", "x2"))).ate == 0.0

    def test_all_treated_raises_empty_group(self, rng):
        cross, _ = random_cross_section(rng, 10)
        frame = cross.data.copy()
        frame["t"] = 1.0
        bad = CrossSection(frame, cross.schema, provenance="subsample")
        with pytest.raises(EmptyGroup):
            matching_ate(bad, AnalysisSpec("t", "y", ("x1", "x2")))

    def test_missing_rows_dropped_and_reported(self, rng):
        cross, _ = random_cross_section(rng, 20)
        frame = cross.data.copy()
        frame.loc[frame.index[:3], "x1"] = np.nan
        cross = CrossSection(frame, cross.schema, provenance="subsample")
        estimate = matching_ate(cross, AnalysisSpec("t", "y", ("x1", "x2")))
        assert estimate.diagnostics["dropped_rows"] == 3
        assert estimate.n_units == 17

    def test_non_binary_analysis_treatment_needs_levels(self, rng):
        cross, _ = random_cross_section(rng, 12)
        frame = cross.data.copy()
        frame["grade"] = np.repeat([0.0, 1.0, 2.0], 4)
        cross = CrossSection(frame, cross.schema, provenance="subsample")
        with pytest.raises(NonBinaryTreatment):
            matching_ate(cross, AnalysisSpec("grade", "y", ("x1",)))
        restricted = matching_ate(
            cross, AnalysisSpec("grade", "y", ("x1",), treatment_levels=(1.0, 2.0))
        )
        assert restricted.n_units == 8

    def test_retry_diagnostics_recorded(self, rng):
        # exactly tied scores concentrate the matches, so balance fails and
        # the pipeline retries with three neighbours
        n = 30
        X = rng.standard_normal((n, 1))
        T = np.zeros(n, dtype=np.int8)
        T[0::2] = 1
        result = pipeline_ate(np.zeros((n, 1)) + X * 0, T, rng.standard_normal(n), ("x1",))
        assert result.k_used in (1, 3)
