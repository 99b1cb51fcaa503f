import json

import pytest

from linediag.catalog import CONTROL, OBSERVATION, ProcessGraph, Tolerance, VariableCatalog, VariableInfo, load_catalog
from linediag.errors import UnknownVariable, ValidationError


def test_empty_catalog_is_valid():
    cat = load_catalog({"variables": {}})
    assert len(cat) == 0
    assert not cat.fully_staged()


def test_load_catalog_with_table3_names():
    doc = {
        "variables": [
            {"name": "SetAngle_3", "var_type": "control", "stage": 1},
            {"name": "GrindDepth_3", "var_type": "control", "stage": 1},
        ]
    }
    cat = load_catalog(doc)
    assert len(cat) == 2
    assert cat.type_of("SetAngle_3") == CONTROL
    assert cat.type_of("GrindDepth_3") == CONTROL


def test_degenerate_tolerance_rejected():
    doc = {"variables": [{"name": "v", "var_type": "control", "stage": 1, "tolerance": {"lo": 5, "hi": 5}}]}
    with pytest.raises(ValidationError, match="v"):
        load_catalog(doc)


def test_parse_failure():
    with pytest.raises(ValidationError, match="parse"):
        load_catalog("{not json")


def test_missing_name_field():
    with pytest.raises(ValidationError, match="name"):
        load_catalog({"variables": [{"var_type": "control"}]})


def test_stage_contiguity_enforced():
    with pytest.raises(ValidationError, match="contiguous"):
        VariableCatalog(
            {
                "a": VariableInfo(var_type=CONTROL, stage=1),
                "b": VariableInfo(var_type=CONTROL, stage=3),
            }
        )


def test_unstaged_entries_are_exempt_from_contiguity():
    cat = VariableCatalog(
        {
            "a": VariableInfo(var_type=CONTROL, stage=0),
            "b": VariableInfo(var_type=OBSERVATION, stage=0),
        }
    )
    assert not cat.fully_staged()


def test_describe_closed_world():
    cat = VariableCatalog({"a": VariableInfo(description="angle set-point")})
    out = cat.describe(["a", "nope"])
    assert out["a"] == "angle set-point"
    assert out["nope"] == "no description available"


def test_unknown_variable_lookup():
    cat = VariableCatalog({})
    with pytest.raises(UnknownVariable):
        cat.info("ghost")


def test_catalog_roundtrip_through_json(fig3_catalog):
    doc = json.loads(json.dumps(fig3_catalog.to_dict()))
    assert VariableCatalog.from_dict(doc) == fig3_catalog


def test_process_graph_validation(fig3_catalog):
    g = ProcessGraph(stages=[1, 2], stage_variables={1: ["C4", "O4"], 2: ["C10", "O10"]})
    g.validate(fig3_catalog)
    bad = ProcessGraph(stages=[1, 1])
    with pytest.raises(ValidationError):
        bad.validate(fig3_catalog)
    missing = ProcessGraph(stages=[1], stage_variables={1: ["ghost"]})
    with pytest.raises(UnknownVariable):
        missing.validate(fig3_catalog)


def test_tolerance_closed_interval():
    tol = Tolerance(0.0, 1.0)
    assert tol.contains(0.0) and tol.contains(1.0)
    assert not tol.contains(1.0000001)
