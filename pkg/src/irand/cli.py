"""Command-line entry point: synth, estimate, mediate, bench.

Options resolve in three layers (later wins): built-in defaults, a
declarative JSON config file given with --config, and explicit flags. Every
run echoes its resolved configuration into its output for reproducibility,
and all randomness flows from the single --seed value.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure; on
failure a machine-readable error JSON is printed to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import DataError, IrandError, NumericError, UsageError
from .inference import (
    IrandConfig,
    did_regression_estimate,
    did_reorganized_estimate,
    irand_estimate,
    pooled_estimate,
)
from .matching import AnalysisSpec, MatchingOptions
from .mediation import MediationSpec, mediation_reports
from .panel import VariableSchema, load_panel, save_panel
from .plots import save_mse_figures, save_report_figures
from .simulation import (
    DEFAULT_GRID_N,
    DEFAULT_GRID_SIGMA,
    DEFAULT_IRAND_M,
    DEFAULT_REPLICATES,
    DgpConfig,
    run_mse_experiment,
)
from .synth import default_summary, load_summary, synthesize_panel

ESTIMATOR_CHOICES = ("irand", "pooled", "did_regression", "did_reorganized")
PERMUTATION_ESTIMATORS = ("irand", "pooled", "did_reorganized")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="irand", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with default option values; flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="write a synthetic two-point panel")
    synth.add_argument("--summary", help="summary-statistics JSON (default: bundled)")
    synth.add_argument("-n", "--n-individuals", type=int, dest="n")
    synth.add_argument("--seed", type=int)
    synth.add_argument("--output", required=True, help="panel CSV path")

    estimate = sub.add_parser("estimate", help="estimate an average treatment effect")
    estimate.add_argument("--input", required=True, help="panel CSV path")
    estimate.add_argument("--schema", help="schema JSON (or a synth config echo)")
    estimate.add_argument("--estimator", choices=ESTIMATOR_CHOICES)
    estimate.add_argument("--treatment")
    estimate.add_argument("--outcome")
    estimate.add_argument("--confounders", help="comma-separated column names")
    estimate.add_argument("--tail", choices=("lower", "upper", "two_sided"))
    estimate.add_argument("--m", type=int, help="subsample count")
    estimate.add_argument("--s", type=int, help="permutation count")
    estimate.add_argument("--strategy", choices=("min_overlap", "independent_uniform"))
    estimate.add_argument("--seed", type=int)
    estimate.add_argument("--figures", action="store_true", default=None)
    estimate.add_argument("--output", required=True, help="report JSON path")

    mediate = sub.add_parser("mediate", help="total/direct/indirect effect decomposition")
    mediate.add_argument("--input", required=True)
    mediate.add_argument("--schema")
    mediate.add_argument("--treatment")
    mediate.add_argument("--outcome")
    mediate.add_argument("--confounders")
    mediate.add_argument("--mediator")
    mediate.add_argument("--engine", choices=("irand", "pooled"))
    mediate.add_argument("--tail", choices=("lower", "upper", "two_sided"))
    mediate.add_argument("--m", type=int)
    mediate.add_argument("--s", type=int)
    mediate.add_argument("--strategy", choices=("min_overlap", "independent_uniform"))
    mediate.add_argument("--seed", type=int)
    mediate.add_argument("--figures", action="store_true", default=None)
    mediate.add_argument("--output", required=True)

    bench = sub.add_parser("bench", help="Monte-Carlo MSE comparison of estimators")
    bench.add_argument("--design", choices=("lcd_like", "bmi_like"))
    bench.add_argument("--grid-n", dest="grid_n", help="comma-separated sample sizes")
    bench.add_argument("--grid-sigma", dest="grid_sigma", help="comma-separated noise levels")
    bench.add_argument("--replicates", type=int)
    bench.add_argument("--estimators", help="comma-separated estimator names")
    bench.add_argument("--irand-m", dest="irand_m", type=int)
    bench.add_argument("--alpha", type=float)
    bench.add_argument("--beta", help="comma-separated confounder coefficients")
    bench.add_argument("--delta", type=float)
    bench.add_argument("--rho", type=float)
    bench.add_argument("--drift", type=float)
    bench.add_argument("--seed", type=int)
    bench.add_argument("--output", required=True, help="surface CSV path")
    return parser


_DEFAULTS = {
    "synth": {"summary": None, "n": None, "seed": 0},
    "estimate": {
        "schema": None,
        "estimator": "irand",
        "treatment": None,
        "outcome": None,
        "confounders": None,
        "tail": None,
        "m": 500,
        "s": 500,
        "strategy": "min_overlap",
        "seed": 0,
        "figures": False,
    },
    "mediate": {
        "schema": None,
        "treatment": None,
        "outcome": None,
        "confounders": None,
        "mediator": None,
        "engine": "irand",
        "tail": None,
        "m": 500,
        "s": 500,
        "strategy": "min_overlap",
        "seed": 0,
        "figures": False,
    },
    "bench": {
        "design": "lcd_like",
        "grid_n": ",".join(str(n) for n in DEFAULT_GRID_N),
        "grid_sigma": ",".join(f"{s:g}" for s in DEFAULT_GRID_SIGMA),
        "replicates": DEFAULT_REPLICATES,
        "estimators": "irand,pooled,did_regression",
        "irand_m": DEFAULT_IRAND_M,
        "alpha": 0.0,
        "beta": None,
        "delta": 1.0,
        "rho": None,
        "drift": None,
        "seed": 0,
    },
}


def _resolve_options(args: argparse.Namespace) -> dict:
    options = dict(_DEFAULTS[args.command])
    if args.config:
        with open(args.config, "r", encoding="utf-8") as handle:
            file_options = json.load(handle)
        for key, value in file_options.items():
            if key in options:
                options[key] = value
    for key in list(options):
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            options[key] = flag_value
    for key in ("input", "output"):
        if hasattr(args, key):
            options[key] = getattr(args, key)
    options["command"] = args.command
    return options


def _split_csv(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [part.strip() for part in str(text).split(",") if part.strip()]


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def _load_schema(options: dict) -> VariableSchema:
    if options.get("schema"):
        with open(options["schema"], "r", encoding="utf-8") as handle:
            payload = json.load(handle)
        if "schema" in payload:
            payload = payload["schema"]
        return VariableSchema.from_dict(payload)
    schema, _, _ = default_summary()
    return schema


def _analysis_columns(options: dict, schema: VariableSchema) -> tuple[str, str, tuple[str, ...]]:
    treatment = options["treatment"] or schema.treatment_column
    outcome = options["outcome"] or schema.outcome_column
    confounders = _split_csv(options["confounders"])
    if confounders is None:
        confounders = list(schema.confounder_columns)
    return treatment, outcome, tuple(confounders)


def _cmd_synth(options: dict) -> int:
    if options["summary"]:
        schema, summaries, default_n = load_summary(options["summary"])
    else:
        schema, summaries, default_n = default_summary()
    n = options["n"] or default_n
    panel = synthesize_panel(schema, summaries, n=n, seed=options["seed"])
    output = Path(options["output"])
    output.parent.mkdir(parents=True, exist_ok=True)
    save_panel(panel, output)
    echo = {
        "command": "synth",
        "config": {"summary": options["summary"], "n": n, "seed": options["seed"]},
        "schema": schema.to_dict(),
        "rows_written": len(panel.data),
        "individuals": panel.n_individuals,
    }
    _write_json(output.with_suffix(".config.json"), echo)
    print(f"wrote {len(panel.data)} rows ({panel.n_individuals} individuals) to {output}")
    return 0


def _cmd_estimate(options: dict) -> int:
    schema = _load_schema(options)
    panel = load_panel(options["input"], schema)
    treatment, outcome, confounders = _analysis_columns(options, schema)
    spec = AnalysisSpec(treatment=treatment, outcome=outcome, confounders=confounders)
    estimator = options["estimator"]
    if estimator in PERMUTATION_ESTIMATORS and options["s"] > 0 and not options["tail"]:
        raise UsageError(f"estimator {estimator!r} requires an explicit --tail")
    tail = options["tail"] or "lower"
    matching_options = MatchingOptions()
    output = Path(options["output"])

    if estimator == "irand":
        config = IrandConfig(
            m_subsamples=options["m"],
            s_permutations=options["s"],
            tail=tail,
            strategy=options["strategy"],
            seed=options["seed"],
            matching=matching_options,
        )
        report = irand_estimate(panel, spec, config)
        payload = report.to_dict()
        figure_data = (report.ates, report.p_values)
    elif estimator == "pooled":
        report = pooled_estimate(
            panel,
            spec,
            s_permutations=options["s"],
            tail=tail,
            seed=options["seed"],
            options=matching_options,
        )
        payload = report.to_dict()
        figure_data = (report.null_ates, None)
    elif estimator == "did_regression":
        result = did_regression_estimate(panel, spec)
        payload = result.to_dict()
        figure_data = None
    else:
        report = did_reorganized_estimate(
            panel,
            spec,
            s_permutations=options["s"],
            tail=tail,
            seed=options["seed"],
            options=matching_options,
        )
        payload = report.to_dict()
        figure_data = (report.null_ates, None)

    resolved = dict(options)
    resolved["tail"] = tail
    payload = {
        "command": "estimate",
        "config": {k: v for k, v in resolved.items() if k != "command"},
        "analysis": {
            "treatment": treatment,
            "outcome": outcome,
            "confounders": list(confounders),
        },
        **payload,
    }
    _write_json(output, payload)
    if options["figures"] and figure_data is not None and figure_data[0] is not None:
        label = "per-subsample ATE" if estimator == "irand" else "permuted ATE (null)"
        save_report_figures(
            figure_data[0],
            figure_data[1],
            output.parent,
            stem=output.stem,
            ates_label=label,
        )
    print(f"wrote {estimator} report to {output}")
    return 0


def _cmd_mediate(options: dict) -> int:
    schema = _load_schema(options)
    panel = load_panel(options["input"], schema)
    treatment, outcome, confounders = _analysis_columns(options, schema)
    mediator = options["mediator"] or schema.mediator_column
    if mediator is None:
        raise UsageError("mediation requires --mediator (or a schema with a mediator column)")
    if not options["tail"]:
        raise UsageError("mediation requires an explicit --tail")
    config = IrandConfig(
        m_subsamples=options["m"],
        s_permutations=options["s"],
        tail=options["tail"],
        strategy=options["strategy"],
        seed=options["seed"],
    )
    spec = MediationSpec(
        treatment=treatment,
        outcome=outcome,
        confounders=confounders,
        mediator=mediator,
        engine=options["engine"],
        config=config,
    )
    reports = mediation_reports(panel, spec)
    output = Path(options["output"])
    payload = {
        "command": "mediate",
        "config": {k: v for k, v in options.items() if k != "command"},
        "reports": [report.to_dict() for report in reports],
    }
    _write_json(output, payload)
    if options["figures"]:
        for index, report in enumerate(reports):
            for effect in (report.total, report.direct, report.indirect):
                save_report_figures(
                    effect.subsample_ates,
                    effect.subsample_p_values,
                    output.parent,
                    stem=f"{output.stem}_c{index}_{effect.kind}",
                )
    print(f"wrote {len(reports)} mediation report(s) to {output}")
    return 0


def _cmd_bench(options: dict) -> int:
    design = options["design"]
    grid_n = tuple(int(v) for v in _split_csv(options["grid_n"]))
    grid_sigma = tuple(float(v) for v in _split_csv(options["grid_sigma"]))
    estimators = tuple(_split_csv(options["estimators"]))
    beta = options["beta"]
    if beta is None:
        beta = (-1.0, 1.0) if design == "bmi_like" else (-1.0,)
    else:
        beta = tuple(float(v) for v in _split_csv(str(beta)))
    rho = options["rho"]
    drift = options["drift"]
    if design == "bmi_like":
        rho = 0.99 if rho is None else rho
        drift = 1.0 / 12.0 if drift is None else drift
    else:
        rho = 1.0 if rho is None else rho
        drift = 0.0 if drift is None else drift
    template = DgpConfig(
        n=grid_n[0],
        design=design,
        alpha=options["alpha"],
        beta=beta,
        delta=options["delta"],
        sigma=grid_sigma[0],
        rho=rho,
        drift=drift,
        seed=0,
    )
    surface = run_mse_experiment(
        template,
        grid_n=grid_n,
        grid_sigma=grid_sigma,
        estimators=estimators,
        replicates=options["replicates"],
        seed=options["seed"],
        irand_m=options["irand_m"],
    )
    output = Path(options["output"])
    output.parent.mkdir(parents=True, exist_ok=True)
    surface.to_frame().to_csv(output, index=False)
    resolved = {k: v for k, v in options.items() if k != "command"}
    resolved.update({"rho": rho, "drift": drift, "beta": list(beta)})
    _write_json(
        output.with_suffix(".json"),
        {"command": "bench", "config": resolved, **surface.to_dict()},
    )
    figures = save_mse_figures(surface, output.parent, stem=output.stem)
    print(
        f"wrote {len(surface.cells)} cells to {output} "
        f"(+ JSON and {len(figures)} figures)"
    )
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "estimate": _cmd_estimate,
    "mediate": _cmd_mediate,
    "bench": _cmd_bench,
}


def _emit_error(error: Exception) -> None:
    payload = {"error": {"type": type(error).__name__, "message": str(error)}}
    print(json.dumps(payload))


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        options = _resolve_options(args)
        return _COMMANDS[args.command](options)
    except UsageError as error:
        _emit_error(error)
        return 1
    except DataError as error:
        _emit_error(error)
        return 2
    except (NumericError, np.linalg.LinAlgError) as error:
        _emit_error(error)
        return 3
    except IrandError as error:
        _emit_error(error)
        return 2


if __name__ == "__main__":
    sys.exit(main())
