import math

import numpy as np
import pytest

from linediag.anomaly import MODE_FOREST, MODE_THRESHOLD, detect, threshold_check
from linediag.catalog import CONTROL, OBSERVATION, Tolerance, VariableCatalog, VariableInfo
from linediag.errors import InsufficientData, ModelUnavailable, NonNumericInput
from linediag.forest import EULER_GAMMA, IsolationForest, TreeNode, average_path_length
from linediag.reports import NORMAL
from linediag.synth import Intervention, SyntheticSpec, generate
from linediag.table import DataTable


class TestAveragePathLength:
    def test_base_cases(self):
        assert average_path_length(1) == 0.0
        assert average_path_length(2) == 1.0

    def test_formula_for_larger_n(self):
        n = 256
        expected = 2 * (math.log(n - 1) + EULER_GAMMA) - 2 * (n - 1) / n
        assert average_path_length(n) == pytest.approx(expected)

    def test_monotone(self):
        values = [average_path_length(n) for n in range(1, 100)]
        assert all(a <= b for a, b in zip(values, values[1:]))


class TestForestFit:
    def test_too_few_rows(self):
        with pytest.raises(InsufficientData):
            IsolationForest().fit(np.array([[1.0, 2.0]]))

    def test_non_numeric_rejected(self):
        with pytest.raises(NonNumericInput):
            IsolationForest().fit(np.array([["a", "b"], ["c", "d"]]))

    def test_fixed_seed_reproduces_trees(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(500, 3))
        a = IsolationForest(n_trees=20, seed=7).fit(X)
        b = IsolationForest(n_trees=20, seed=7).fit(X)
        assert a.to_dict() == b.to_dict()

    def test_height_limit(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(600, 2))
        f = IsolationForest(n_trees=10, subsample=256, seed=3).fit(X)
        limit = math.ceil(math.log2(256))
        assert all(t.height() <= limit for t in f.trees_)

    def test_serialization_roundtrip(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(300, 2))
        f = IsolationForest(n_trees=5, seed=1).fit(X)
        g = IsolationForest.from_dict(f.to_dict())
        assert np.allclose(f.score_samples(X[:20]), g.score_samples(X[:20]))

    def test_get_set_params(self):
        f = IsolationForest(n_trees=9, subsample=64, seed=5)
        assert f.get_params() == {"n_trees": 9, "subsample": 64, "seed": 5}
        f.set_params(n_trees=10)
        assert f.n_trees == 10


class TestForestScore:
    def test_two_point_tree_scores_half(self):
        # psi=2: one split, both leaves singletons; every query path has
        # length 1, c(2)=1, so s = 2^(-1/1) = 0.5.
        f = IsolationForest(n_trees=1, subsample=2, seed=0).fit(np.array([[0.0], [1.0]]))
        assert f.score_row(np.array([0.5])) == pytest.approx(0.5)

    def test_mean_depth_equal_to_c_psi_scores_half(self):
        # Hand-built model: every row lands in a leaf whose adjusted depth
        # equals c(psi) exactly.
        f = IsolationForest(n_trees=1, subsample=256)
        psi = 256
        depth = average_path_length(psi)
        f.trees_ = [TreeNode(size=psi)]  # leaf at depth 0 with c(psi) adjustment
        f.psi_ = psi
        f.n_features_ = 1
        assert f.score_row(np.array([0.0])) == pytest.approx(0.5)
        assert depth == average_path_length(psi)

    def test_scores_in_open_unit_interval(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(400, 2))
        f = IsolationForest(n_trees=50, seed=4).fit(X)
        s = f.score_samples(X)
        assert np.all(s > 0) and np.all(s < 1)

    def test_arity_mismatch(self):
        f = IsolationForest(n_trees=2, seed=0).fit(np.zeros((10, 2)) + np.arange(10)[:, None])
        with pytest.raises(Exception):
            f.score_row(np.array([1.0, 2.0, 3.0]))

    def test_far_outlier_ranks_first(self):
        # 2-D gaussian blob plus a single point 10 sigma away.
        wins = 0
        n_seeds = 100
        for seed in range(n_seeds):
            rng = np.random.default_rng(seed)
            X = np.vstack([rng.normal(size=(999, 2)), [[10.0, 10.0]]])
            f = IsolationForest(seed=seed).fit(X)
            scores = f.score_samples(X)
            if int(np.argmax(scores)) == 999:
                wins += 1
        assert wins >= 95

    def test_training_scores_in_sanity_band(self):
        means = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            X = rng.normal(size=(256, 3))
            f = IsolationForest(n_trees=25, seed=seed).fit(X)
            means.append(f.score_samples(X).mean())
        assert all(0.3 < m < 0.7 for m in means)


@pytest.fixture
def tol_catalog():
    return VariableCatalog(
        {
            "a": VariableInfo(var_type=CONTROL, stage=1, tolerance=Tolerance(0.0, 10.0)),
            "b": VariableInfo(var_type=OBSERVATION, stage=1, tolerance=Tolerance(-1.0, 1.0)),
            "c": VariableInfo(var_type=OBSERVATION, stage=1),  # no tolerance
        }
    )


class TestThresholdCheck:
    def test_all_mid_range_is_normal(self, tol_catalog):
        report = threshold_check({"a": 5.0, "b": 0.0, "c": 99.0}, tol_catalog)
        assert report.status == NORMAL
        assert report.score == 0.0
        assert report.violated_features == []

    def test_boundary_value_conforms(self, tol_catalog):
        report = threshold_check({"a": 10.0, "b": 1.0}, tol_catalog)
        assert report.status == NORMAL

    def test_violation_listed_with_band(self, tol_catalog):
        report = threshold_check({"a": 11.0, "b": 0.0}, tol_catalog)
        assert report.status == "ToleranceViolation"
        assert report.score == pytest.approx(0.5)
        v = report.violated_features[0]
        assert (v.variable, v.lo, v.hi) == ("a", 0.0, 10.0)

    def test_untoleranced_variables_skipped(self, tol_catalog):
        report = threshold_check({"c": 1e9}, tol_catalog)
        assert report.status == NORMAL

    def test_definitional_equivalence(self, tol_catalog):
        for row in [{"a": 5.0, "b": 0.0}, {"a": -1.0, "b": 0.0}, {"a": -1.0, "b": 7.0}]:
            report = threshold_check(row, tol_catalog)
            assert (report.status == NORMAL) == (report.violated_features == [])

    def test_generator_intervention_detected(self):
        spec = SyntheticSpec(
            stages=4,
            n_variables=10,
            interventions=[Intervention.make("GrindDepth_1", 4.0, range(900, 1000))],
        )
        gd = generate(spec, 1000, seed=42)
        report = threshold_check(gd.table.row(950), gd.catalog)
        assert "GrindDepth_1" in [v.variable for v in report.violated_features]


class TestDetect:
    def test_auto_picks_threshold_from_catalog_only(self, tol_catalog):
        t = DataTable.from_records(["a", "b"], [[5.0, 0.0], [5.0, 0.1]])
        det = detect(t, tol_catalog)
        assert det.report.backend == "Threshold"

    def test_auto_backend_ignores_data_values(self, tol_catalog):
        wild = DataTable.from_records(["a", "b"], [[1e9, -1e9], [5.0, 0.0]])
        tame = DataTable.from_records(["a", "b"], [[5.0, 0.0], [5.0, 0.0]])
        assert detect(wild, tol_catalog).report.backend == detect(tame, tol_catalog).report.backend

    def test_auto_picks_forest_without_tolerances(self):
        catalog = VariableCatalog({"x": VariableInfo(), "y": VariableInfo()})
        rng = np.random.default_rng(0)
        t = DataTable.from_records(["x", "y"], rng.normal(size=(300, 2)).tolist())
        det = detect(t, catalog, seed=0)
        assert det.report.backend == "IsolationForest"

    def test_forest_row_without_model_unavailable(self):
        catalog = VariableCatalog({"x": VariableInfo()})
        with pytest.raises(ModelUnavailable):
            detect({"x": 1.0}, catalog, mode=MODE_FOREST)

    def test_normal_row_has_no_rca_payload(self, tol_catalog):
        det = detect({"a": 5.0, "b": 0.0}, tol_catalog, mode=MODE_THRESHOLD)
        assert det.report.status == NORMAL
        assert det.rca_payload is None

    def test_anomalous_row_emits_rca_payload(self, tol_catalog):
        det = detect({"a": 11.0, "b": 5.0}, tol_catalog, mode=MODE_THRESHOLD, data_ref="/tmp/run.csv", event_ref="row:7")
        assert det.report.is_anomalous()
        payload = det.rca_payload
        assert payload is not None
        assert set(payload) == {"targets", "event_ref", "data_ref"}
        assert payload["event_ref"] == "row:7"
        # most-downstream violated first: b is an observation at the same stage
        assert payload["targets"] == ["b", "a"]

    def test_forest_outlier_flagged(self):
        catalog = VariableCatalog({"x": VariableInfo(), "y": VariableInfo()})
        rng = np.random.default_rng(1)
        rows = np.vstack([rng.normal(size=(500, 2)), [[12.0, -12.0]]])
        t = DataTable.from_records(["x", "y"], rows.tolist())
        det = detect(t, catalog, mode=MODE_FOREST, seed=0)
        assert det.report.status == "ForestAnomaly"
        assert det.report.score >= 0.6
        assert det.report.event_ref == "row:500"
        assert det.rca_payload is not None
