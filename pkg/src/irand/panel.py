"""Two-point panel data model and its derived one-row-per-unit views.

A :class:`TwoPointPanel` holds exactly two observations per individual: a
baseline row at time 0 and a follow-up row at time 1, with the treatment
administered between the visits and no parallel control group. Estimators
never consume the panel directly; they consume :class:`CrossSection` views
derived from it:

* ``pool`` treats every (individual, time) pair as a distinct unit;
* ``select_subsample`` keeps one time point per individual (the synthetic
  control construction used by the time-split resampling estimator);
* ``reorganize_did`` pairs each individual's change scores with a synthetic
  all-zero control image;
* ``difference`` produces per-individual change scores for regression.

All types are immutable after construction and safe to share across
concurrent readers; the view constructors are pure functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import (
    DataError,
    DuplicateTimePoint,
    InvalidPanel,
    LengthMismatch,
    MissingColumn,
    NonBinaryTreatment,
    NonNumericVariable,
    OrphanIndividual,
    UsageError,
)
from .streams import PLAN, substream

VALID_KINDS = ("binary", "ordinal", "continuous")


@dataclass(frozen=True)
class VariableSchema:
    """Column roles and measurement kinds for a two-point panel.

    Parameters
    ----------
    id_column, time_column : str
        Individual identifier and the 0/1 visit indicator.
    treatment_column : str
        Binary treatment indicator.
    confounder_columns : tuple of str
        Covariates used for adjustment by default.
    outcome_column : str
        Default analysis outcome.
    mediator_column : str, optional
        Default mediator for mediation analyses.
    variable_kinds : mapping of str to {"binary", "ordinal", "continuous"}
        Measurement kind per column; treatment and time must be binary.
    """

    id_column: str
    time_column: str
    treatment_column: str
    confounder_columns: tuple[str, ...]
    outcome_column: str
    mediator_column: str | None = None
    variable_kinds: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "confounder_columns", tuple(self.confounder_columns))
        names = self.all_columns
        if len(set(names)) != len(names):
            raise UsageError(f"schema columns must be distinct, got {names}")
        kinds = dict(self.variable_kinds)
        for column, kind in kinds.items():
            if kind not in VALID_KINDS:
                raise UsageError(f"unknown variable kind {kind!r} for column {column!r}")
        kinds.setdefault(self.treatment_column, "binary")
        kinds.setdefault(self.time_column, "binary")
        if kinds[self.treatment_column] != "binary":
            raise UsageError("treatment column must be declared binary")
        if kinds[self.time_column] != "binary":
            raise UsageError("time column must be declared binary")
        object.__setattr__(self, "variable_kinds", kinds)

    @property
    def all_columns(self) -> tuple[str, ...]:
        columns = [self.id_column, self.time_column, self.treatment_column]
        columns.extend(self.confounder_columns)
        if self.mediator_column is not None:
            columns.append(self.mediator_column)
        columns.append(self.outcome_column)
        return tuple(columns)

    @property
    def value_columns(self) -> tuple[str, ...]:
        return tuple(c for c in self.all_columns if c not in (self.id_column, self.time_column))

    def to_dict(self) -> dict:
        return {
            "id_column": self.id_column,
            "time_column": self.time_column,
            "treatment_column": self.treatment_column,
            "confounder_columns": list(self.confounder_columns),
            "outcome_column": self.outcome_column,
            "mediator_column": self.mediator_column,
            "variable_kinds": dict(self.variable_kinds),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "VariableSchema":
        return cls(
            id_column=payload["id_column"],
            time_column=payload["time_column"],
            treatment_column=payload["treatment_column"],
            confounder_columns=tuple(payload["confounder_columns"]),
            outcome_column=payload["outcome_column"],
            mediator_column=payload.get("mediator_column"),
            variable_kinds=dict(payload.get("variable_kinds", {})),
        )


@dataclass(frozen=True)
class TwoPointPanel:
    """Validated long-format panel: one row per (individual, time) pair.

    Rows are stored sorted by (id, time), so positions ``2*i`` and ``2*i + 1``
    hold individual ``i``'s baseline and follow-up rows.
    """

    data: pd.DataFrame
    schema: VariableSchema

    def __post_init__(self) -> None:
        frame = self.data
        missing = [c for c in self.schema.all_columns if c not in frame.columns]
        if missing:
            raise MissingColumn(f"columns missing from panel data: {missing}")
        sid, stime = self.schema.id_column, self.schema.time_column
        times = frame[stime]
        if times.isna().any() or not times.isin((0, 1)).all():
            raise InvalidPanel("time values must all be 0 or 1")
        duplicated = frame.duplicated([sid, stime])
        if duplicated.any():
            bad = sorted(frame.loc[duplicated, sid].unique().tolist())
            raise DuplicateTimePoint(f"ids with repeated time points: {bad}")
        counts = frame.groupby(sid, sort=False)[stime].size()
        orphans = sorted(counts.index[counts != 2].tolist())
        if orphans:
            raise OrphanIndividual(f"ids without both time points: {orphans}")
        treatment = frame[self.schema.treatment_column].dropna()
        if not treatment.isin((0, 1)).all():
            raise NonBinaryTreatment(
                f"treatment column {self.schema.treatment_column!r} has values outside {{0, 1}}"
            )
        frame = frame.sort_values([sid, stime], kind="mergesort").reset_index(drop=True)
        # Normalize storage: time as int64, every other numeric column as
        # float64 (missing = NaN), so panels round-trip the file format
        # bit-exactly. The id column and string columns keep their dtype.
        for column in frame.columns:
            if column == sid:
                continue
            if column == stime:
                frame[column] = frame[column].astype(np.int64)
            elif pd.api.types.is_numeric_dtype(frame[column]):
                frame[column] = frame[column].astype(np.float64)
        object.__setattr__(self, "data", frame)

    @property
    def n_individuals(self) -> int:
        return len(self.data) // 2

    @property
    def ids(self) -> np.ndarray:
        """Distinct individual ids in row order (sorted)."""
        return self.data[self.schema.id_column].to_numpy()[0::2]


@dataclass(frozen=True)
class CrossSection:
    """One-row-per-unit view of a panel.

    ``provenance`` records how the view was produced: ``"pooled"`` (two rows
    per individual, each an independent unit), ``"subsample"`` (one row per
    individual at its assigned time), or ``"did_reorganized"`` (two image
    rows per individual, one of them an all-zero control image).
    """

    data: pd.DataFrame
    schema: VariableSchema
    provenance: str
    subsample_index: int | None = None
    n_dropped: int = 0

    def __post_init__(self) -> None:
        if self.provenance not in ("pooled", "subsample", "did_reorganized"):
            raise UsageError(f"unknown provenance {self.provenance!r}")
        ids = self.data[self.schema.id_column].to_numpy()
        counts = pd.Series(ids).value_counts()
        if self.provenance == "subsample":
            if (counts != 1).any():
                raise InvalidPanel("subsample must contain exactly one row per individual")
        else:
            if (counts != 2).any():
                raise InvalidPanel(f"{self.provenance} view must contain two rows per individual")
        if self.provenance == "did_reorganized":
            control = self.data[self.data[self.schema.time_column] == 0]
            outcome = control[self.schema.outcome_column].to_numpy(dtype=float)
            treatment = control[self.schema.treatment_column].to_numpy(dtype=float)
            if not (np.all(outcome == 0.0) and np.all(treatment == 0.0)):
                raise InvalidPanel("control image must have zero outcome and zero treatment")

    @property
    def n_units(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class DifferencedData:
    """Per-individual change scores: outcome, treatment, and confounders.

    Columns are the individual id, ``d_<name>`` for each differenced
    variable (follow-up minus baseline, exactly), and the baseline value of
    each confounder under its original name.
    """

    data: pd.DataFrame
    schema: VariableSchema
    n_dropped: int

    @property
    def dy(self) -> np.ndarray:
        return self.data[f"d_{self.schema.outcome_column}"].to_numpy(dtype=float)

    @property
    def dt(self) -> np.ndarray:
        return self.data[f"d_{self.schema.treatment_column}"].to_numpy(dtype=float)

    @property
    def dx(self) -> np.ndarray:
        columns = [f"d_{c}" for c in self.schema.confounder_columns]
        return self.data[columns].to_numpy(dtype=float)


@dataclass(frozen=True)
class SubsamplePlan:
    """A reproducible set of time-point assignments.

    ``assignments`` has shape (M, n); entry (m, i) is the time point at which
    individual i enters subsample m.
    """

    assignments: np.ndarray
    ids: np.ndarray
    strategy: str
    seed: int

    def __post_init__(self) -> None:
        assignments = np.asarray(self.assignments, dtype=np.uint8)
        if assignments.ndim != 2:
            raise UsageError("assignments must be a 2-d array of shape (M, n)")
        if assignments.shape[1] != len(self.ids):
            raise LengthMismatch(
                f"assignment width {assignments.shape[1]} != number of ids {len(self.ids)}"
            )
        if assignments.size and assignments.max() > 1:
            raise UsageError("assignment entries must be 0 or 1")
        assignments.setflags(write=False)
        object.__setattr__(self, "assignments", assignments)

    @property
    def m_subsamples(self) -> int:
        return self.assignments.shape[0]

    @property
    def n_individuals(self) -> int:
        return self.assignments.shape[1]

    def fingerprint(self) -> str:
        import hashlib

        digest = hashlib.sha1()
        digest.update(self.assignments.tobytes())
        digest.update(str(self.seed).encode())
        return digest.hexdigest()

    def to_json(self) -> str:
        payload = {
            "strategy": self.strategy,
            "seed": self.seed,
            "ids": [int(i) if isinstance(i, (int, np.integer)) else str(i) for i in self.ids],
            "assignments": ["".join(str(int(v)) for v in row) for row in self.assignments],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SubsamplePlan":
        payload = json.loads(text)
        assignments = np.array(
            [[int(ch) for ch in row] for row in payload["assignments"]], dtype=np.uint8
        )
        return cls(
            assignments=assignments,
            ids=np.asarray(payload["ids"]),
            strategy=payload["strategy"],
            seed=int(payload["seed"]),
        )


def load_panel(path: str | Path, schema: VariableSchema) -> TwoPointPanel:
    """Read a long-format delimited panel file and validate it.

    The file must be comma-separated UTF-8 with a header naming every schema
    column; missing cells are empty and preserved as missing.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"panel file does not exist: {path}")
    # round_trip parsing keeps reloaded floats bit-identical to saved ones
    frame = pd.read_csv(path, float_precision="round_trip")
    return TwoPointPanel(frame, schema)


def save_panel(panel: TwoPointPanel, path: str | Path) -> Path:
    """Write a panel back to the long-format delimited encoding.

    Floats are written with 17 significant digits so values round-trip
    bit-exactly; missing cells are empty.
    """
    path = Path(path)
    panel.data.to_csv(path, index=False, float_format="%.17g")
    return path


def pool(panel: TwoPointPanel) -> CrossSection:
    """Treat the two observations of every individual as distinct units."""
    return CrossSection(panel.data.copy(), panel.schema, provenance="pooled")


def _require_numeric(panel: TwoPointPanel, columns: list[str]) -> None:
    for column in columns:
        if not pd.api.types.is_numeric_dtype(panel.data[column]):
            raise NonNumericVariable(f"column {column!r} is not numeric")


def _paired_values(panel: TwoPointPanel, column: str) -> tuple[np.ndarray, np.ndarray]:
    values = panel.data[column].to_numpy(dtype=float)
    return values[0::2], values[1::2]


def difference(panel: TwoPointPanel) -> DifferencedData:
    """Per-individual follow-up minus baseline for outcome, treatment and confounders.

    Individuals with a missing value in any differenced variable at either
    time are dropped; the dropped count is reported on the result.
    """
    schema = panel.schema
    columns = [schema.treatment_column, schema.outcome_column, *schema.confounder_columns]
    _require_numeric(panel, columns)
    baseline: dict[str, np.ndarray] = {}
    deltas: dict[str, np.ndarray] = {}
    keep = np.ones(panel.n_individuals, dtype=bool)
    for column in columns:
        v0, v1 = _paired_values(panel, column)
        keep &= np.isfinite(v0) & np.isfinite(v1)
        deltas[column] = (v0, v1)
        baseline[column] = v0
    out = {schema.id_column: panel.ids[keep]}
    for column in columns:
        v0, v1 = deltas[column]
        out[f"d_{column}"] = (v1 - v0)[keep]
    for column in schema.confounder_columns:
        out[column] = baseline[column][keep]
    frame = pd.DataFrame(out)
    return DifferencedData(frame, schema, n_dropped=int((~keep).sum()))


def reorganize_did(panel: TwoPointPanel) -> CrossSection:
    """Pair each individual's change scores with a synthetic zero control image.

    For each individual the view holds a "treatment image" row carrying the
    treatment and outcome changes alongside the baseline confounders, and a
    "control image" row with treatment and outcome identically zero and the
    same baseline confounders. Individuals with a missing treatment or
    outcome at either time are dropped and counted.
    """
    schema = panel.schema
    _require_numeric(panel, [schema.treatment_column, schema.outcome_column])
    t0, t1 = _paired_values(panel, schema.treatment_column)
    y0, y1 = _paired_values(panel, schema.outcome_column)
    keep = np.isfinite(t0) & np.isfinite(t1) & np.isfinite(y0) & np.isfinite(y1)
    ids = panel.ids[keep]
    dt = (t1 - t0)[keep]
    dy = (y1 - y0)[keep]
    retained = list(schema.confounder_columns)
    if schema.mediator_column is not None:
        retained.append(schema.mediator_column)
    baselines = {c: _paired_values(panel, c)[0][keep] for c in retained}

    n = len(ids)
    rows = {
        schema.id_column: np.repeat(ids, 2),
        # control image first (time 0), treatment image second (time 1)
        schema.time_column: np.tile(np.array([0, 1]), n),
        schema.treatment_column: np.stack([np.zeros(n), dt], axis=1).ravel(),
        schema.outcome_column: np.stack([np.zeros(n), dy], axis=1).ravel(),
    }
    for column, values in baselines.items():
        rows[column] = np.repeat(values, 2)
    frame = pd.DataFrame(rows)
    return CrossSection(
        frame,
        schema,
        provenance="did_reorganized",
        n_dropped=int((~keep).sum()),
    )


def draw_subsamples(
    panel: TwoPointPanel,
    m_subsamples: int,
    strategy: str = "min_overlap",
    seed: int = 0,
) -> SubsamplePlan:
    """Draw M time-point assignment vectors for the panel's individuals.

    ``independent_uniform`` flips an independent fair coin per entry.
    ``min_overlap`` balances every individual's column so each individual is
    assigned to each time point as close to M/2 times as possible (the
    column-balanced, Latin-hypercube-style reading of minimal subsample
    overlap), with the per-column placement independently shuffled.
    """
    if m_subsamples < 1:
        raise UsageError(f"m_subsamples must be >= 1, got {m_subsamples}")
    n = panel.n_individuals
    if n < 1:
        raise DataError("panel has no individuals")
    rng = substream(seed, PLAN)
    if strategy == "independent_uniform":
        assignments = rng.integers(0, 2, size=(m_subsamples, n), dtype=np.uint8)
    elif strategy == "min_overlap":
        ones = np.full(n, m_subsamples // 2, dtype=np.int64)
        if m_subsamples % 2:
            # Odd M: the extra slot goes to either time point with equal
            # probability so the marginal assignment stays a fair coin.
            ones += rng.integers(0, 2, size=n)
        noise = rng.random((m_subsamples, n))
        ranks = np.argsort(np.argsort(noise, axis=0, kind="stable"), axis=0, kind="stable")
        assignments = (ranks < ones[None, :]).astype(np.uint8)
    else:
        raise UsageError(f"unknown subsampling strategy {strategy!r}")
    return SubsamplePlan(assignments=assignments, ids=panel.ids.copy(), strategy=strategy, seed=seed)


def select_subsample(
    panel: TwoPointPanel,
    assignment: np.ndarray,
    index: int | None = None,
) -> CrossSection:
    """Keep, for each individual, the row at its assigned time point."""
    a = np.asarray(assignment)
    n = panel.n_individuals
    if a.shape != (n,):
        raise LengthMismatch(f"assignment length {a.shape} != number of individuals {n}")
    if a.size and not np.isin(a, (0, 1)).all():
        raise UsageError("assignment entries must be 0 or 1")
    positions = 2 * np.arange(n) + a.astype(np.int64)
    rows = panel.data.iloc[positions].reset_index(drop=True)
    return CrossSection(rows, panel.schema, provenance="subsample", subsample_index=index)
