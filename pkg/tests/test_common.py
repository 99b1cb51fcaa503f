import numpy as np
import pandas as pd
import pytest

from linediag.catalog import VariableCatalog, VariableInfo
from linediag.common import describe_variables, preprocess, recommend_next
from linediag.errors import EmptyDataset
from linediag.table import DataTable


@pytest.fixture
def catalog():
    return VariableCatalog(
        {
            "num": VariableInfo(description="a numeric sensor", stage=1),
            "cat": VariableInfo(description="a categorical flag", stage=1),
        }
    )


class TestPreprocess:
    def test_all_empty_column_dropped(self, catalog):
        t = DataTable.from_records(["num", "cat"], [[1.0, None], [2.0, None], [3.0, None]])
        out, summary = preprocess(t, catalog)
        assert summary.cols_out == summary.cols_in - 1
        assert out.columns == ["num"]

    def test_all_empty_rows_dropped(self, catalog):
        t = DataTable.from_records(["num"], [[1.0], [None], [2.0]])
        out, summary = preprocess(t, catalog)
        assert summary.rows_out == 2

    def test_every_row_empty_raises(self, catalog):
        t = DataTable.from_records(["num"], [[None], [None]])
        with pytest.raises(EmptyDataset):
            preprocess(t, catalog)

    def test_mode_imputation_and_first_occurrence_encoding(self, catalog):
        # The missing cell sits beside a populated column so the row survives
        # the empty-row drop and reaches imputation.
        t = DataTable.from_records(
            ["num", "cat"], [[1.0, "a"], [2.0, "b"], [3.0, "a"], [4.0, None]]
        )
        out, summary = preprocess(t, catalog)
        assert out.df["cat"].tolist() == [0, 1, 0, 0]
        assert out.encoders["cat"] == {"a": 0, "b": 1}
        assert summary.imputed_cells == {"cat": 1}

    def test_median_imputation_for_numeric(self, catalog):
        t = DataTable.from_records(
            ["num", "cat"], [[1.0, "x"], [None, "x"], [9.0, "x"], [2.0, "x"]]
        )
        out, _ = preprocess(t, catalog)
        assert out.df["num"].tolist() == [1.0, 2.0, 9.0, 2.0]

    def test_clean_numeric_table_unchanged(self, catalog):
        t = DataTable.from_records(["num"], [[1.0], [2.0], [3.0]])
        out, summary = preprocess(t, catalog)
        assert out.df["num"].tolist() == [1.0, 2.0, 3.0]
        assert summary.imputed_cells == {}
        assert summary.rows_in == summary.rows_out

    def test_ninety_percent_threshold(self, catalog):
        # 9 of 10 parse as numbers -> numeric column, failure imputed as median
        rows = [[str(i)] for i in range(9)] + [["oops"]]
        out, _ = preprocess(DataTable.from_records(["num"], rows), catalog)
        assert out.df["num"].dtype == float
        assert out.df["num"].tolist()[-1] == 4.0  # median of 0..8

    def test_mostly_text_becomes_categorical(self, catalog):
        rows = [["x"], ["y"], ["x"], ["3"]]
        out, _ = preprocess(DataTable.from_records(["cat"], rows), catalog)
        assert out.encoders["cat"] == {"x": 0, "y": 1, "3": 2}

    def test_idempotent_fixpoint(self, catalog):
        t = DataTable.from_records(["num", "cat"], [[1.0, "a"], [None, "b"], [3.0, None]])
        once, s1 = preprocess(t, catalog)
        twice, s2 = preprocess(once, catalog)
        assert twice == once
        assert s2.rows_in == s2.rows_out == s1.rows_out
        assert s2.imputed_cells == {}
        assert s2.encodings == s1.encodings

    def test_decode_restores_categories(self, catalog):
        t = DataTable.from_records(["cat"], [["red"], ["blue"], ["red"]])
        out, _ = preprocess(t, catalog)
        decoded = [out.decode("cat", int(v)) for v in out.df["cat"]]
        assert decoded == ["red", "blue", "red"]

    def test_enrichment_uses_catalog(self, catalog):
        t = DataTable.from_records(["num"], [[1.0]])
        _, summary = preprocess(t, catalog)
        assert summary.enriched == {"num": "a numeric sensor"}


class TestDescribeVariables:
    def test_known_names(self, catalog):
        assert describe_variables(["num"], catalog) == {"num": "a numeric sensor"}

    def test_empty_request(self, catalog):
        assert describe_variables([], catalog) == {}

    def test_unknown_gets_placeholder(self, catalog):
        assert describe_variables(["Unknown_Var"], catalog) == {"Unknown_Var": "no description available"}


class TestRecommendNext:
    def test_after_preprocessing(self):
        recs = recommend_next("preprocessing", {}, {})
        assert recs[0].suggested_capability == "anomaly"
        assert recs[0].auto_chain is False

    def test_after_anomalous_detection(self):
        recs = recommend_next("anomaly", {"status": "StageShift"}, {"slots_filled": []})
        assert recs[0].suggested_capability == "rca"
        assert recs[0].auto_chain is True
        assert recs[1].suggested_capability == "causal"

    def test_causal_not_suggested_when_present(self):
        recs = recommend_next("anomaly", {"status": "StageShift"}, {"slots_filled": ["causal"]})
        assert [r.suggested_capability for r in recs] == ["rca"]

    def test_after_normal_detection(self):
        recs = recommend_next("anomaly", {"status": "Normal"}, {})
        assert [r.suggested_capability for r in recs] == ["archive"]

    def test_after_causal_with_anomaly(self):
        recs = recommend_next("causal", {}, {"slots_filled": ["anomaly"]})
        assert [r.suggested_capability for r in recs] == ["rca"]

    def test_after_causal_without_anomaly(self):
        assert recommend_next("causal", {}, {"slots_filled": []}) == []

    def test_after_rca_names_top_variable(self):
        recs = recommend_next("rca", {"ranked_causes": [{"variable": "SetAngle_3"}]}, {})
        assert recs[0].suggested_capability == "inspect"
        assert "SetAngle_3" in recs[0].rationale
        assert recs[0].params == {"variable": "SetAngle_3"}

    def test_unknown_capability_is_total(self):
        assert recommend_next("zebra", None, None) == []

    def test_pure(self):
        args = ("anomaly", {"status": "X"}, {"slots_filled": []})
        first = [r.to_dict() for r in recommend_next(*args)]
        for _ in range(50):
            assert [r.to_dict() for r in recommend_next(*args)] == first

    def test_cap_at_three(self):
        recs = recommend_next("anomaly", {"status": "X"}, {"slots_filled": []})
        assert len(recs) <= 3
