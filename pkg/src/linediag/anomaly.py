"""Anomaly detection backends: tolerance rules and the isolation forest."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import VariableCatalog
from .errors import ModelUnavailable
from .forest import IsolationForest
from .reports import (
    BACKEND_FOREST,
    BACKEND_THRESHOLD,
    FOREST_ANOMALY,
    NORMAL,
    TOLERANCE_VIOLATION,
    AnomalyReport,
    ViolatedFeature,
)
from .rules import stage_order
from .table import DataTable

MODE_AUTO = "Auto"
MODE_THRESHOLD = "Threshold"
MODE_FOREST = "Forest"

FOREST_CUTOFF = 0.6


def threshold_check(row: dict, catalog: VariableCatalog, event_ref: str | None = None) -> AnomalyReport:
    """Flag every toleranced variable whose value falls outside its closed [lo, hi] band."""
    violated: list[ViolatedFeature] = []
    n_checked = 0
    for name, value in row.items():
        info = catalog.entries.get(name)
        if info is None or info.tolerance is None:
            continue
        try:
            x = float(value)
        except (TypeError, ValueError):
            continue
        n_checked += 1
        if not info.tolerance.contains(x):
            violated.append(ViolatedFeature(name, x, info.tolerance.lo, info.tolerance.hi))
    score = min(1.0, len(violated) / n_checked) if n_checked else 0.0
    status = NORMAL if not violated else TOLERANCE_VIOLATION
    return AnomalyReport(
        status=status,
        score=score,
        violated_features=violated,
        backend=BACKEND_THRESHOLD,
        event_ref=event_ref,
    )


@dataclass
class Detection:
    report: AnomalyReport
    rca_payload: dict | None = None
    anomalous_rows: int = 0
    total_rows: int = 0


def _pick_target_variables(report: AnomalyReport, catalog: VariableCatalog) -> list[str]:
    """Violated variables ordered most-downstream first (the likeliest effect leads)."""
    order = {n: i for i, n in enumerate(stage_order(catalog))}
    names = [v.variable for v in report.violated_features]
    return sorted(names, key=lambda n: -order.get(n, -1))


def _rca_payload(report: AnomalyReport, targets: list[str], data_ref: str | None) -> dict:
    return {"targets": targets, "event_ref": report.event_ref, "data_ref": data_ref}


def detect(
    data: DataTable | dict,
    catalog: VariableCatalog,
    mode: str = MODE_AUTO,
    model: IsolationForest | None = None,
    event_ref: str | None = None,
    data_ref: str | None = None,
    seed: int | None = None,
) -> Detection:
    """Run one detection pass and, for anomalous results, build the RCA trigger payload.

    Auto picks the threshold backend whenever the catalog defines tolerance
    limits (the decision never looks at the data itself), and the isolation
    forest otherwise. Table input reports the highest-scoring row.
    """
    if mode == MODE_AUTO:
        mode = MODE_THRESHOLD if catalog.with_tolerance() else MODE_FOREST

    if mode == MODE_THRESHOLD:
        detection = _detect_threshold(data, catalog, event_ref)
    elif mode == MODE_FOREST:
        detection = _detect_forest(data, catalog, model, event_ref, seed)
    else:
        raise ModelUnavailable(f"unknown detection mode {mode!r}")

    if detection.report.is_anomalous():
        targets = _pick_target_variables(detection.report, catalog)
        if not targets and isinstance(data, DataTable):
            targets = _top_deviating(data, detection.report)
        detection.rca_payload = _rca_payload(detection.report, targets, data_ref)
    return detection


def violations_per_row(table: DataTable, catalog: VariableCatalog) -> tuple[np.ndarray, int]:
    """Vectorized tolerance sweep: per-row violation counts and the number of
    toleranced columns checked."""
    import pandas as pd

    tol_cols = [c for c in table.columns if (i := catalog.entries.get(c)) and i.tolerance]
    counts = np.zeros(len(table), dtype=int)
    for c in tol_cols:
        x = pd.to_numeric(table.df[c], errors="coerce").to_numpy(dtype=float)
        tol = catalog.info(c).tolerance
        with np.errstate(invalid="ignore"):
            bad = (x < tol.lo) | (x > tol.hi)
        counts += np.where(np.isnan(x), False, bad)
    return counts, len(tol_cols)


def violation_mask(table: DataTable, catalog: VariableCatalog) -> np.ndarray:
    counts, _ = violations_per_row(table, catalog)
    return counts > 0


def _detect_threshold(data, catalog, event_ref) -> Detection:
    if isinstance(data, dict):
        report = threshold_check(data, catalog, event_ref=event_ref)
        return Detection(report, anomalous_rows=int(report.is_anomalous()), total_rows=1)
    counts, n_checked = violations_per_row(data, catalog)
    if len(counts) == 0 or n_checked == 0:
        report = AnomalyReport(NORMAL, 0.0, [], BACKEND_THRESHOLD, event_ref)
        return Detection(report, anomalous_rows=0, total_rows=len(data))
    i = int(np.argmax(counts))
    report = threshold_check(data.row(i), catalog, event_ref=f"row:{i}")
    if event_ref is not None and not report.is_anomalous():
        report.event_ref = event_ref
    return Detection(report, anomalous_rows=int((counts > 0).sum()), total_rows=len(data))


def _detect_forest(data, catalog, model, event_ref, seed) -> Detection:
    if isinstance(data, dict):
        if model is None:
            raise ModelUnavailable("forest mode on a single row requires a fitted model")
        cols = sorted(data)
        score = model.score_row(np.array([float(data[c]) for c in cols]))
        status = FOREST_ANOMALY if score >= FOREST_CUTOFF else NORMAL
        report = AnomalyReport(status, float(score), [], BACKEND_FOREST, event_ref)
        return Detection(report, anomalous_rows=int(report.is_anomalous()), total_rows=1)
    X = data.numeric_matrix()
    if model is None:
        model = IsolationForest(seed=seed).fit(X)
    scores = model.score_samples(X)
    i = int(np.argmax(scores))
    score = float(scores[i])
    status = FOREST_ANOMALY if score >= FOREST_CUTOFF else NORMAL
    report = AnomalyReport(status, score, [], BACKEND_FOREST, event_ref=f"row:{i}")
    return Detection(report, anomalous_rows=int((scores >= FOREST_CUTOFF).sum()), total_rows=len(data))


def _top_deviating(table: DataTable, report: AnomalyReport) -> list[str]:
    """Fallback target: the column with the largest standardized value in the event row."""
    if not (report.event_ref or "").startswith("row:"):
        return []
    i = int(report.event_ref.split(":", 1)[1])
    X = table.numeric_matrix()
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    z = np.abs((X[i] - mu) / sd)
    return [table.columns[int(np.argmax(z))]]
