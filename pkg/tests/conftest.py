import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from irand.panel import TwoPointPanel, VariableSchema


@pytest.fixture
def basic_schema():
    return VariableSchema(
        id_column="id",
        time_column="time",
        treatment_column="t",
        confounder_columns=("x1",),
        outcome_column="y",
    )


def make_panel(rows, schema=None, confounders=("x1",), mediator=None):
    """Build a panel from (id, time, t, x1[, ...], y) row tuples."""
    if schema is None:
        schema = VariableSchema(
            id_column="id",
            time_column="time",
            treatment_column="t",
            confounder_columns=confounders,
            outcome_column="y",
            mediator_column=mediator,
        )
    columns = ["id", "time", "t", *confounders]
    if mediator:
        columns.append(mediator)
    columns.append("y")
    frame = pd.DataFrame(rows, columns=columns)
    return TwoPointPanel(frame, schema)


@pytest.fixture
def two_person_panel():
    return make_panel(
        [
            (1, 0, 0.0, 0.5, 1.0),
            (1, 1, 1.0, 0.5, 3.0),
            (2, 0, 0.0, -0.2, 2.0),
            (2, 1, 1.0, -0.2, 4.0),
        ]
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
