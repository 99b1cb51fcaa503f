from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from linediag.catalog import CONTROL, OBSERVATION, Tolerance, VariableCatalog, VariableInfo
from linediag.rules import default_ruleset
from linediag.table import DataTable


@pytest.fixture
def fig3_catalog() -> VariableCatalog:
    """The four-variable control/observation layout from the grinding example."""
    return VariableCatalog(
        {
            "C4": VariableInfo(var_type=CONTROL, stage=1),
            "O4": VariableInfo(var_type=OBSERVATION, stage=1),
            "C10": VariableInfo(var_type=CONTROL, stage=2),
            "O10": VariableInfo(var_type=OBSERVATION, stage=2),
        }
    )


@pytest.fixture
def rules():
    return default_ruleset()


@pytest.fixture
def chain_catalog() -> VariableCatalog:
    return VariableCatalog(
        {
            "X": VariableInfo(var_type=OBSERVATION, stage=1),
            "Y": VariableInfo(var_type=OBSERVATION, stage=2),
            "Z": VariableInfo(var_type=OBSERVATION, stage=3),
        }
    )


def make_chain_table(seed: int, n: int = 5000) -> DataTable:
    """X -> Y -> Z with unit coefficients and unit noise."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    y = x + rng.normal(size=n)
    z = y + rng.normal(size=n)
    return DataTable(pd.DataFrame({"X": x, "Y": y, "Z": z}))


@pytest.fixture
def chain_table() -> DataTable:
    return make_chain_table(seed=1001)


def make_toleranced_catalog(names: dict[str, tuple[str, int]], lo=-3.0, hi=3.0) -> VariableCatalog:
    return VariableCatalog(
        {
            name: VariableInfo(var_type=t, stage=s, tolerance=Tolerance(lo, hi))
            for name, (t, s) in names.items()
        }
    )
