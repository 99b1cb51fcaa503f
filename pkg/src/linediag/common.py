"""Reusable agents: preprocessing, background-info lookup, recommender."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .catalog import VariableCatalog
from .errors import EmptyDataset
from .reports import NORMAL, PreprocessSummary, Recommendation
from .table import DataTable

NUMERIC_PARSE_THRESHOLD = 0.9
PLACEHOLDER_DESCRIPTION = "no description available"
MAX_RECOMMENDATIONS = 3


def describe_variables(names: list[str], catalog: VariableCatalog) -> dict[str, str]:
    """Name -> human-readable description, computed purely from the catalog."""
    return catalog.describe(list(names), placeholder=PLACEHOLDER_DESCRIPTION)


def _column_mode(series: pd.Series):
    """Most frequent value; ties broken by first occurrence in the column."""
    counts: dict = {}
    order: list = []
    for v in series:
        if pd.isna(v):
            continue
        if v not in counts:
            counts[v] = 0
            order.append(v)
        counts[v] += 1
    if not order:
        return None
    best = max(counts.values())
    for v in order:
        if counts[v] == best:
            return v
    return None


def preprocess(table: DataTable, catalog: VariableCatalog) -> tuple[DataTable, PreprocessSummary]:
    """Clean, impute, and label-encode a table.

    In order: drop all-empty rows and columns, coerce columns to numeric when
    at least 90% of their non-missing cells parse as numbers, impute numeric
    gaps with the column median and categorical gaps with the column mode,
    label-encode categoricals in first-occurrence order, then enrich the
    summary with catalog descriptions.
    """
    df = table.df
    rows_in, cols_in = df.shape
    if cols_in == 0:
        raise EmptyDataset("table has no columns")

    df = df.dropna(axis=0, how="all")
    df = df.dropna(axis=1, how="all")
    if df.shape[0] == 0:
        raise EmptyDataset("all rows are empty")

    out = {}
    imputed: dict[str, int] = {}
    encoders: dict[str, dict[str, int]] = dict(table.encoders)
    new_encodings: dict[str, int] = {}

    for col in df.columns:
        series = df[col]
        non_missing = series.dropna()
        parsed = pd.to_numeric(non_missing, errors="coerce")
        frac_numeric = (parsed.notna().sum() / len(non_missing)) if len(non_missing) else 1.0
        if frac_numeric >= NUMERIC_PARSE_THRESHOLD:
            values = pd.to_numeric(series, errors="coerce")
            n_missing = int(values.isna().sum())
            if n_missing:
                values = values.fillna(values.median())
                imputed[str(col)] = n_missing
            out[col] = values.astype(float)
        else:
            values = series.astype(object)
            n_missing = int(values.isna().sum())
            if n_missing:
                values = values.fillna(_column_mode(values))
                imputed[str(col)] = n_missing
            mapping: dict[str, int] = {}
            codes = np.empty(len(values), dtype=int)
            for i, v in enumerate(values):
                key = str(v)
                if key not in mapping:
                    mapping[key] = len(mapping)
                codes[i] = mapping[key]
            encoders[str(col)] = mapping
            new_encodings[str(col)] = len(mapping)
            out[col] = codes

    result = DataTable(pd.DataFrame(out, columns=list(df.columns)), encoders)
    enriched = describe_variables(result.columns, catalog)
    summary = PreprocessSummary(
        rows_in=rows_in,
        rows_out=result.shape["N"],
        cols_in=cols_in,
        cols_out=result.shape["M"],
        imputed_cells=imputed,
        encodings={c: len(m) for c, m in result.encoders.items()},
        enriched=enriched,
    )
    return result, summary


def recommend_next(last_capability: str, last_output: dict, state_summary: dict) -> list[Recommendation]:
    """Deterministic next-step suggestions; pure, total, at most three."""
    last_output = last_output or {}
    slots_filled = set((state_summary or {}).get("slots_filled", []))
    recs: list[Recommendation] = []

    if last_capability == "preprocessing":
        recs.append(Recommendation("anomaly", "run anomaly detection on the cleaned data", auto_chain=False))
    elif last_capability == "anomaly":
        status = last_output.get("status", NORMAL)
        if status != NORMAL:
            recs.append(Recommendation("rca", f"attribute the {status} event to its root causes", auto_chain=True))
            if "causal" not in slots_filled:
                recs.append(Recommendation("causal", "learn the causal graph to support attribution", auto_chain=False))
        else:
            recs.append(Recommendation("archive", "archive report: no anomaly detected", auto_chain=False))
    elif last_capability == "causal":
        if "anomaly" in slots_filled:
            recs.append(Recommendation("rca", "trace the detected anomaly through the learned graph", auto_chain=False))
    elif last_capability == "rca":
        ranked = last_output.get("ranked_causes") or []
        if ranked:
            top = ranked[0].get("variable", "?") if isinstance(ranked[0], dict) else str(ranked[0])
            recs.append(
                Recommendation(
                    "inspect",
                    f"inspect top-ranked variable {top}",
                    auto_chain=False,
                    params={"variable": top},
                )
            )
    return recs[:MAX_RECOMMENDATIONS]
