import json
from pathlib import Path

import jsonschema
import numpy as np
import pandas as pd
import pytest

from irand.cli import main
from irand.panel import save_panel
from irand.simulation import DgpConfig, generate_mediation_panel, generate_panel


def schema_for(name):
    path = Path(__file__).parent.parent / "src" / "irand" / "schemas" / name
    return json.loads(path.read_text())


def read_json(path):
    return json.loads(Path(path).read_text())


def write_schema_file(panel, path):
    path.write_text(json.dumps(panel.schema.to_dict()))
    return path


@pytest.fixture(scope="module")
def synth_outputs(tmp_path_factory):
    directory = tmp_path_factory.mktemp("synth")
    output = directory / "panel.csv"
    code = main(["synth", "--output", str(output), "-n", "256", "--seed", "5"])
    assert code == 0
    return output


@pytest.fixture(scope="module")
def lcd_panel_file(tmp_path_factory):
    directory = tmp_path_factory.mktemp("lcd")
    panel = generate_panel(DgpConfig(n=80, design="lcd_like", sigma=0.5, rho=1.0, seed=3))
    path = directory / "lcd.csv"
    save_panel(panel, path)
    schema_path = write_schema_file(panel, directory / "schema.json")
    return path, schema_path


class TestSynth:
    def test_default_summary_writes_two_rows_per_individual(self, synth_outputs):
        frame = pd.read_csv(synth_outputs)
        assert len(frame) == 512

    def test_single_individual(self, tmp_path):
        output = tmp_path / "one.csv"
        assert main(["synth", "--output", str(output), "-n", "1", "--seed", "2"]) == 0
        assert len(pd.read_csv(output)) == 2

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["synth", "--output", str(a), "-n", "32", "--seed", "9"])
        main(["synth", "--output", str(b), "-n", "32", "--seed", "9"])
        assert a.read_bytes() == b.read_bytes()
        assert (
            a.with_suffix(".config.json").read_text()
            == b.with_suffix(".config.json").read_text()
        )

    def test_config_echo_contains_schema(self, synth_outputs):
        echo = read_json(synth_outputs.with_suffix(".config.json"))
        assert echo["command"] == "synth"
        assert echo["config"]["n"] == 256
        assert echo["schema"]["treatment_column"] == "lcd"


class TestEstimate:
    def test_irand_finds_planted_negative_effect(self, synth_outputs, tmp_path):
        output = tmp_path / "report.json"
        code = main(
            [
                "estimate",
                "--input",
                str(synth_outputs),
                "--schema",
                str(synth_outputs.with_suffix(".config.json")),
                "--estimator",
                "irand",
                "--treatment",
                "lcd",
                "--outcome",
                "t2d",
                "--confounders",
                "gender,age",
                "--tail",
                "lower",
                "--m",
                "40",
                "--s",
                "80",
                "--seed",
                "7",
                "--output",
                str(output),
            ]
        )
        assert code == 0
        report = read_json(output)
        jsonschema.validate(report, schema_for("estimate_report.schema.json"))
        assert report["mean_ate"] < 0
        assert report["mean_p_value"] < 0.05

    def test_pooled_report_has_p_value(self, synth_outputs, tmp_path):
        output = tmp_path / "pooled.json"
        code = main(
            [
                "estimate",
                "--input",
                str(synth_outputs),
                "--schema",
                str(synth_outputs.with_suffix(".config.json")),
                "--estimator",
                "pooled",
                "--treatment",
                "lcd",
                "--outcome",
                "t2d",
                "--confounders",
                "gender,age",
                "--tail",
                "lower",
                "--s",
                "40",
                "--output",
                str(output),
            ]
        )
        assert code == 0
        report = read_json(output)
        jsonschema.validate(report, schema_for("estimate_report.schema.json"))
        assert "p_value" in report

    def test_did_regression_surfaces_collinearity_flag(self, lcd_panel_file, tmp_path):
        panel_path, schema_path = lcd_panel_file
        output = tmp_path / "did.json"
        code = main(
            [
                "estimate",
                "--input",
                str(panel_path),
                "--schema",
                str(schema_path),
                "--estimator",
                "did_regression",
                "--output",
                str(output),
            ]
        )
        assert code == 0
        report = read_json(output)
        jsonschema.validate(report, schema_for("estimate_report.schema.json"))
        assert report["diagnostics"]["collinear"] is True

    def test_permutation_estimator_requires_tail(self, lcd_panel_file, tmp_path, capsys):
        panel_path, schema_path = lcd_panel_file
        code = main(
            [
                "estimate",
                "--input",
                str(panel_path),
                "--schema",
                str(schema_path),
                "--estimator",
                "irand",
                "--output",
                str(tmp_path / "x.json"),
            ]
        )
        assert code == 1
        error = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        jsonschema.validate(error, schema_for("error.schema.json"))

    def test_missing_input_is_a_data_error(self, tmp_path, capsys):
        code = main(
            [
                "estimate",
                "--input",
                str(tmp_path / "absent.csv"),
                "--estimator",
                "irand",
                "--tail",
                "lower",
                "--output",
                str(tmp_path / "x.json"),
            ]
        )
        assert code == 2
        error = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert error["error"]["type"] == "DataError"

    def test_figures_written_when_requested(self, lcd_panel_file, tmp_path):
        panel_path, schema_path = lcd_panel_file
        output = tmp_path / "fig_report.json"
        code = main(
            [
                "estimate",
                "--input",
                str(panel_path),
                "--schema",
                str(schema_path),
                "--estimator",
                "irand",
                "--tail",
                "upper",
                "--m",
                "8",
                "--s",
                "10",
                "--figures",
                "--output",
                str(output),
            ]
        )
        assert code == 0
        assert (tmp_path / "fig_report_ates.png").stat().st_size > 0
        assert (tmp_path / "fig_report_pvalues.png").stat().st_size > 0

    def test_byte_identical_reruns(self, lcd_panel_file, tmp_path):
        panel_path, schema_path = lcd_panel_file
        outputs = []
        for name in ("r1.json", "r2.json"):
            output = tmp_path / name
            main(
                [
                    "estimate",
                    "--input",
                    str(panel_path),
                    "--schema",
                    str(schema_path),
                    "--estimator",
                    "irand",
                    "--tail",
                    "upper",
                    "--m",
                    "6",
                    "--s",
                    "8",
                    "--seed",
                    "4",
                    "--output",
                    str(output),
                ]
            )
            payload = output.read_text()
            outputs.append(payload.replace(name, "OUT"))
        assert outputs[0] == outputs[1]


class TestMediate:
    @pytest.fixture(scope="class")
    def mediation_files(self, tmp_path_factory):
        directory = tmp_path_factory.mktemp("mediate")
        panel = generate_mediation_panel(n=150, seed=3)
        path = directory / "scm.csv"
        save_panel(panel, path)
        schema_path = write_schema_file(panel, directory / "schema.json")
        return path, schema_path

    def test_signs_recovered_and_identity_holds(self, mediation_files, tmp_path):
        panel_path, schema_path = mediation_files
        output = tmp_path / "mediation.json"
        code = main(
            [
                "mediate",
                "--input",
                str(panel_path),
                "--schema",
                str(schema_path),
                "--treatment",
                "t",
                "--outcome",
                "y",
                "--confounders",
                "x1",
                "--mediator",
                "m",
                "--tail",
                "upper",
                "--m",
                "12",
                "--s",
                "15",
                "--seed",
                "2",
                "--output",
                str(output),
            ]
        )
        assert code == 0
        payload = read_json(output)
        jsonschema.validate(payload, schema_for("mediation_report.schema.json"))
        report = payload["reports"][0]
        assert report["total"]["ate"] > 0
        assert report["indirect"]["ate"] > 0
        identity = report["decomposition_identity"]
        assert identity["total_minus_direct"] == identity["indirect"]

    def test_four_level_ordinal_treatment_gives_three_reports(self, tmp_path):
        panel = generate_mediation_panel(n=240, seed=6, treatment_levels=4)
        path = tmp_path / "ordinal.csv"
        save_panel(panel, path)
        schema_path = write_schema_file(panel, tmp_path / "schema.json")
        output = tmp_path / "ordinal.json"
        code = main(
            [
                "mediate",
                "--input",
                str(path),
                "--schema",
                str(schema_path),
                "--treatment",
                "grp",
                "--outcome",
                "y",
                "--confounders",
                "x1",
                "--mediator",
                "m",
                "--tail",
                "upper",
                "--m",
                "8",
                "--s",
                "10",
                "--output",
                str(output),
            ]
        )
        assert code == 0
        payload = read_json(output)
        jsonschema.validate(payload, schema_for("mediation_report.schema.json"))
        assert len(payload["reports"]) == 3
        assert [r["contrast"] for r in payload["reports"]] == [
            [0.0, 1.0],
            [1.0, 2.0],
            [2.0, 3.0],
        ]

    def test_mediator_required(self, mediation_files, tmp_path, capsys):
        panel_path, schema_path = mediation_files
        code = main(
            [
                "mediate",
                "--input",
                str(panel_path),
                "--treatment",
                "t",
                "--outcome",
                "y",
                "--confounders",
                "x1",
                "--tail",
                "upper",
                "--output",
                str(tmp_path / "x.json"),
            ]
        )
        # default bundled schema wins when no schema file given; its mediator
        # column does not exist in this panel, so this is a data error
        assert code in (1, 2)


class TestBench:
    def test_smoke_run_writes_csv_json_and_figures(self, tmp_path):
        output = tmp_path / "bench.csv"
        code = main(
            [
                "bench",
                "--design",
                "lcd_like",
                "--grid-n",
                "20,40",
                "--grid-sigma",
                "0.5,1",
                "--replicates",
                "2",
                "--irand-m",
                "4",
                "--seed",
                "3",
                "--output",
                str(output),
            ]
        )
        assert code == 0
        frame = pd.read_csv(output)
        assert len(frame) == 2 * 2 * 3  # grid cells x estimators
        payload = read_json(output.with_suffix(".json"))
        jsonschema.validate(payload, schema_for("bench_surface.schema.json"))
        for estimator in ("irand", "pooled", "did_regression"):
            assert (tmp_path / f"bench_mse_{estimator}.png").stat().st_size > 0
        assert (tmp_path / "bench_mse_pooled_minus_irand.png").exists()

    def test_byte_identical_reruns(self, tmp_path):
        contents = []
        for name in ("b1", "b2"):
            output = tmp_path / f"{name}.csv"
            main(
                [
                    "bench",
                    "--grid-n",
                    "16",
                    "--grid-sigma",
                    "0.5",
                    "--replicates",
                    "2",
                    "--irand-m",
                    "3",
                    "--estimators",
                    "irand,did_regression",
                    "--seed",
                    "8",
                    "--output",
                    str(output),
                ]
            )
            contents.append(
                (
                    output.read_bytes(),
                    output.with_suffix(".json").read_text().replace(name, "OUT"),
                    (tmp_path / f"{name}_mse_irand.png").read_bytes(),
                )
            )
        assert contents[0][0] == contents[1][0]
        assert contents[0][1] == contents[1][1]
        assert contents[0][2] == contents[1][2]

    def test_config_file_with_flag_override(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"grid_n": "16", "grid_sigma": "0.5", "replicates": 2, "irand_m": 3}))
        output = tmp_path / "cfg.csv"
        code = main(
            [
                "--config",
                str(config),
                "bench",
                "--replicates",
                "3",
                "--estimators",
                "did_regression",
                "--output",
                str(output),
            ]
        )
        assert code == 0
        payload = read_json(output.with_suffix(".json"))
        assert payload["config"]["replicates"] == 3  # flag wins
        assert payload["config"]["grid_n"] == "16"  # file wins over default

    def test_usage_error_exit_code(self, capsys):
        assert main(["estimate", "--estimator", "nonsense"]) == 1
