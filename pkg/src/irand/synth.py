"""Synthetic two-point panels drawn from per-variable summary moments.

Each variable is described by (mean, sd, min, max) at both time points plus
a measurement kind. Continuous variables are drawn from a truncated normal
whose parent location/scale are solved so the *truncated* distribution
carries the stated mean and sd; ordinal variables are drawn by thresholding
a Gaussian latent at half-integer cut points (again moment-matched); binary
variables are thresholded uniforms. One shared latent per individual and
variable links the two time points, so a cross-time correlation of 1 keeps
an individual at the same quantile at both visits (fixed attributes such as
gender come out identical, ageing variables move coherently).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources as importlib_resources
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd
from scipy import optimize, stats
from scipy.special import ndtr

from .errors import InvalidSummary, UsageError
from .panel import TwoPointPanel, VariableSchema
from .streams import SYNTH, substream

DEFAULT_SUMMARY_RESOURCE = "norwood_like_summary.json"


@dataclass(frozen=True)
class VariableSummary:
    """Per-time-point moments for one variable.

    ``missing`` gives the fraction of cells to mask at each time point.
    """

    kind: str
    mean: tuple[float, float]
    sd: tuple[float, float]
    minimum: tuple[float, float]
    maximum: tuple[float, float]
    missing: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.kind not in ("binary", "ordinal", "continuous"):
            raise InvalidSummary(f"unknown variable kind {self.kind!r}")
        for t in (0, 1):
            if self.sd[t] < 0:
                raise InvalidSummary(f"sd must be >= 0, got {self.sd[t]} at time {t}")
            if self.minimum[t] > self.maximum[t]:
                raise InvalidSummary(
                    f"min {self.minimum[t]} > max {self.maximum[t]} at time {t}"
                )
            if not 0.0 <= self.missing[t] <= 1.0:
                raise InvalidSummary(f"missing rate must be in [0, 1], got {self.missing[t]}")


@lru_cache(maxsize=256)
def _truncnorm_params(mean: float, sd: float, lo: float, hi: float) -> tuple[float, float]:
    """Parent (loc, scale) whose [lo, hi]-truncation has the given mean and sd."""
    if sd == 0.0:
        return mean, 0.0
    # Non-binding bounds: the parent moments already match.
    if lo <= mean - 8.0 * sd and hi >= mean + 8.0 * sd:
        return mean, sd

    def gap(params: np.ndarray) -> np.ndarray:
        loc, log_scale = params
        scale = math.exp(log_scale)
        a, b = (lo - loc) / scale, (hi - loc) / scale
        m, v = stats.truncnorm.stats(a, b, loc=loc, scale=scale, moments="mv")
        return np.array([m - mean, math.sqrt(v) - sd])

    solution, info, ok, message = optimize.fsolve(
        gap, np.array([mean, math.log(sd)]), full_output=True
    )
    if ok != 1 or not np.all(np.abs(info["fvec"]) < 1e-6):
        warnings.warn(
            f"could not moment-match truncated normal ({message.strip()}); "
            "falling back to unadjusted parameters",
            RuntimeWarning,
        )
        return mean, sd
    return float(solution[0]), float(math.exp(solution[1]))


@lru_cache(maxsize=256)
def _ordinal_params(mean: float, sd: float, lo: float, hi: float) -> tuple[float, float]:
    """Latent (loc, scale) whose rounded-and-clipped values match the moments."""
    categories = np.arange(math.ceil(lo), math.floor(hi) + 1, dtype=float)
    if len(categories) < 2 or sd == 0.0:
        return mean, 0.0
    cuts = (categories[:-1] + categories[1:]) / 2.0

    def moments(loc: float, scale: float) -> tuple[float, float]:
        cdf = ndtr((cuts - loc) / scale)
        probs = np.diff(np.concatenate(([0.0], cdf, [1.0])))
        m = float(probs @ categories)
        v = float(probs @ (categories - m) ** 2)
        return m, math.sqrt(v)

    def gap(params: np.ndarray) -> np.ndarray:
        m, s = moments(params[0], math.exp(params[1]))
        return np.array([m - mean, s - sd])

    solution, info, ok, message = optimize.fsolve(
        gap, np.array([mean, math.log(sd)]), full_output=True
    )
    if ok != 1 or not np.all(np.abs(info["fvec"]) < 1e-6):
        warnings.warn(
            f"could not moment-match ordinal latent ({message.strip()}); "
            "falling back to unadjusted parameters",
            RuntimeWarning,
        )
        return mean, sd
    return float(solution[0]), float(math.exp(solution[1]))


def _draw_variable(
    summary: VariableSummary,
    z: tuple[np.ndarray, np.ndarray],
    rng: np.random.Generator,
) -> np.ndarray:
    """Values for one variable at both times, interleaved (t0, t1) per individual."""
    n = len(z[0])
    per_time = []
    for t in (0, 1):
        mean, sd = summary.mean[t], summary.sd[t]
        lo, hi = summary.minimum[t], summary.maximum[t]
        if summary.kind == "binary":
            u = ndtr(z[t])
            values = (u < mean).astype(float)
        elif sd == 0.0:
            values = np.full(n, mean)
        elif summary.kind == "continuous":
            loc, scale = _truncnorm_params(mean, sd, lo, hi)
            a, b = (lo - loc) / scale, (hi - loc) / scale
            values = stats.truncnorm.ppf(ndtr(z[t]), a, b, loc=loc, scale=scale)
        else:  # ordinal
            loc, scale = _ordinal_params(mean, sd, lo, hi)
            # + 0.0 normalizes negative zero out of the clipped values
            values = np.clip(np.round(loc + scale * z[t]), math.ceil(lo), math.floor(hi)) + 0.0
        rate = summary.missing[t]
        if rate > 0.0:
            values = values.astype(float)
            values[rng.random(n) < rate] = np.nan
        per_time.append(np.asarray(values, dtype=float))
    return np.stack(per_time, axis=1).ravel()


def synthesize_panel(
    schema: VariableSchema,
    summaries: Mapping[str, VariableSummary],
    n: int,
    seed: int = 0,
    correlations: Mapping[str, float] | None = None,
) -> TwoPointPanel:
    """Draw a seeded synthetic panel matching the summary moments.

    ``correlations`` maps variable names to the cross-time correlation of the
    Gaussian latent (default 1.0: one shared latent per individual, i.e. the
    same quantile at both visits).
    """
    if n < 1:
        raise UsageError(f"n must be >= 1, got {n}")
    missing = [c for c in schema.value_columns if c not in summaries]
    if missing:
        raise InvalidSummary(f"no summary provided for schema columns: {missing}")
    correlations = dict(correlations or {})
    rng = substream(seed, SYNTH)
    columns: dict[str, np.ndarray] = {
        schema.id_column: np.repeat(np.arange(1, n + 1, dtype=np.int64), 2),
        schema.time_column: np.tile(np.array([0, 1], dtype=np.int64), n),
    }
    for name in sorted(summaries):
        summary = summaries[name]
        rho = float(correlations.get(name, 1.0))
        if not -1.0 <= rho <= 1.0:
            raise InvalidSummary(f"cross-time correlation for {name!r} must be in [-1, 1]")
        z0 = rng.standard_normal(n)
        fresh = rng.standard_normal(n)
        z1 = rho * z0 + math.sqrt(max(0.0, 1.0 - rho * rho)) * fresh
        columns[name] = _draw_variable(summary, (z0, z1), rng)
    frame = pd.DataFrame(columns)
    ordered = [schema.id_column, schema.time_column] + sorted(summaries)
    return TwoPointPanel(frame[ordered], schema)


def parse_summary(payload: Mapping) -> tuple[VariableSchema, dict[str, VariableSummary], int]:
    """Parse a summary document into (schema, per-variable summaries, default n)."""
    schema = VariableSchema.from_dict(payload["schema"])
    kinds = dict(schema.variable_kinds)
    summaries: dict[str, VariableSummary] = {}
    for name, spec in payload["variables"].items():
        kind = spec.get("kind", kinds.get(name, "continuous"))
        kinds.setdefault(name, kind)

        def per_time(key: str, default=None) -> tuple[float, float]:
            raw = spec.get(key, default)
            if raw is None:
                raise InvalidSummary(f"variable {name!r} lacks required field {key!r}")
            if np.isscalar(raw):
                raw = [raw, raw]
            return float(raw[0]), float(raw[1])

        if kind == "binary":
            mean = per_time("mean")
            summary = VariableSummary(
                kind="binary",
                mean=mean,
                sd=per_time("sd", [0.0, 0.0]),
                minimum=per_time("min", [0.0, 0.0]),
                maximum=per_time("max", [1.0, 1.0]),
                missing=per_time("missing", [0.0, 0.0]),
            )
        else:
            summary = VariableSummary(
                kind=kind,
                mean=per_time("mean"),
                sd=per_time("sd"),
                minimum=per_time("min"),
                maximum=per_time("max"),
                missing=per_time("missing", [0.0, 0.0]),
            )
        summaries[name] = summary
    schema = VariableSchema(
        id_column=schema.id_column,
        time_column=schema.time_column,
        treatment_column=schema.treatment_column,
        confounder_columns=schema.confounder_columns,
        outcome_column=schema.outcome_column,
        mediator_column=schema.mediator_column,
        variable_kinds=kinds,
    )
    return schema, summaries, int(payload.get("n", 256))


def load_summary(path: str | Path) -> tuple[VariableSchema, dict[str, VariableSummary], int]:
    """Load a summary-statistics JSON file."""
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    return parse_summary(payload)


def default_summary() -> tuple[VariableSchema, dict[str, VariableSummary], int]:
    """The bundled clinic-style summary (dietary-intervention panel moments)."""
    text = (
        importlib_resources.files("irand.resources")
        .joinpath(DEFAULT_SUMMARY_RESOURCE)
        .read_text(encoding="utf-8")
    )
    return parse_summary(json.loads(text))
