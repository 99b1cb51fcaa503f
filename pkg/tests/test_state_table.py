import pandas as pd
import pytest

from linediag.errors import MissingColumn, NonNumericInput, ValidationError
from linediag.state import ExecutedStep, StepSpec, WorkflowState, validate_state
from linediag.table import DataTable


def step(seq, capability="preprocessing", status="Success", slot="preprocessing", **kw):
    return ExecutedStep(
        seq=seq, capability=capability, agent="a", status=status,
        started_ms=0, ended_ms=1, slot=slot, **kw,
    )


class TestValidateState:
    def test_fresh_state_is_clean(self):
        assert validate_state(WorkflowState(query="q")) == []

    def test_non_contiguous_seq(self):
        s = WorkflowState(query="q")
        s.slots["preprocessing"] = {"ok": True}
        s.trace = [step(1), step(3)]
        violations = validate_state(s)
        assert any("non-contiguous" in v for v in violations)

    def test_success_step_without_slot(self):
        s = WorkflowState(query="q")
        s.trace = [step(1, slot=None)]
        violations = validate_state(s)
        assert len(violations) == 1 and "wrote no slot" in violations[0]

    def test_success_step_with_empty_slot(self):
        s = WorkflowState(query="q")
        s.trace = [step(1, slot="anomaly")]
        assert any("empty" in v for v in validate_state(s))

    def test_failed_steps_need_no_slot(self):
        s = WorkflowState(query="q")
        s.trace = [step(1, status="Failed", slot=None)]
        assert validate_state(s) == []


def test_state_roundtrip():
    s = WorkflowState(query="q", data_ref="/tmp/x.csv")
    s.slots["anomaly"] = {"status": "Normal"}
    s.plan = [StepSpec("recommend", {"a": 1}, cacheable=True)]
    s.trace = [step(1, capability="anomaly", slot="anomaly")]
    again = WorkflowState.from_dict(s.to_dict())
    assert again.to_dict() == s.to_dict()


class TestDataTable:
    def test_row_arity_enforced(self):
        with pytest.raises(ValidationError):
            DataTable.from_records(["a", "b"], [[1, 2], [3]])

    def test_duplicate_columns_rejected(self):
        with pytest.raises(ValidationError):
            DataTable(pd.DataFrame([[1, 2]], columns=["a", "a"]))

    def test_csv_roundtrip(self, tmp_path):
        t = DataTable.from_records(["a", "b"], [[1.5, "x"], [2.5, "y"]])
        p = tmp_path / "t.csv"
        t.to_csv(p)
        back = DataTable.from_csv(p)
        assert back.columns == ["a", "b"]
        assert back.df["a"].tolist() == [1.5, 2.5]

    def test_missing_cells_survive_roundtrip(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("a,b\n1,\n,2\n")
        t = DataTable.from_csv(p)
        assert t.df.isna().sum().sum() == 2

    def test_numeric_matrix_rejects_text(self):
        t = DataTable.from_records(["a", "b"], [[1, "x"], [2, "y"]])
        with pytest.raises(NonNumericInput):
            t.numeric_matrix()

    def test_missing_column(self):
        t = DataTable.from_records(["a"], [[1]])
        with pytest.raises(MissingColumn):
            t.column("b")

    def test_decode_inverts_encoding(self):
        t = DataTable.from_records(["c"], [[0], [1], [0]], encoders={"c": {"red": 0, "blue": 1}})
        assert t.decode("c", 0) == "red"
        assert t.decode("c", 1) == "blue"
        with pytest.raises(ValidationError):
            t.decode("c", 9)

    def test_content_hash_tracks_content(self):
        t1 = DataTable.from_records(["a"], [[1], [2]])
        t2 = DataTable.from_records(["a"], [[1], [2]])
        t3 = DataTable.from_records(["a"], [[1], [3]])
        assert t1.content_hash() == t2.content_hash() != t3.content_hash()
