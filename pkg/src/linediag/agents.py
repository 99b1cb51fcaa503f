"""The six diagnostic agents, each exposing a card plus a run handler.

Handlers are plain callables so they can be served either in-process or as
standalone HTTP microservices; the payload dicts they accept and return are
the wire format documented in the README.
"""

from __future__ import annotations

import json
from pathlib import Path

from .anomaly import MODE_AUTO, detect
from .cards import AgentCard, PostprocessRule, Trigger
from .catalog import VariableCatalog
from .common import describe_variables, preprocess, recommend_next
from .discovery import ALGO_AUTO, discover
from .errors import MissingColumn
from .rca import RcaRunner
from .rules import RuleSet
from .table import DataTable

PREPROCESSED_SUFFIX = ".preprocessed.csv"
ENCODERS_SUFFIX = ".encoders.json"


def _processed_paths(data_ref: str) -> tuple[Path, Path]:
    src = Path(data_ref)
    stem = src.name[: -len(".csv")] if src.name.endswith(".csv") else src.name
    return src.with_name(stem + PREPROCESSED_SUFFIX), src.with_name(stem + ENCODERS_SUFFIX)


class PreprocessingAgent:
    name = "preprocessing-agent"

    def __init__(self, catalog: VariableCatalog):
        self.catalog = catalog

    def card(self, endpoint: str = "inproc://preprocessing") -> AgentCard:
        return AgentCard(
            name=self.name,
            version="1.0",
            endpoint=endpoint,
            capabilities=["preprocessing"],
            input_schema={"fields": ["data_ref"]},
            output_schema={"fields": ["data_ref", "encoders_ref", "summary"]},
        )

    def run(self, payload: dict, context: dict) -> dict:
        data_ref = payload.get("data_ref")
        if not data_ref or not Path(data_ref).exists():
            raise MissingColumn(f"data file not found: {data_ref!r}")
        table = DataTable.from_csv(data_ref)
        processed, summary = preprocess(table, self.catalog)
        out_csv, out_enc = _processed_paths(data_ref)
        processed.to_csv(out_csv)
        out_enc.write_text(json.dumps(processed.encoders, indent=2))
        return {
            "data_ref": str(out_csv),
            "encoders_ref": str(out_enc),
            "summary": summary.to_dict(),
        }


class BackgroundInfoAgent:
    name = "background-info-agent"

    def __init__(self, catalog: VariableCatalog):
        self.catalog = catalog

    def card(self, endpoint: str = "inproc://background_info") -> AgentCard:
        return AgentCard(
            name=self.name,
            version="1.0",
            endpoint=endpoint,
            capabilities=["background_info"],
            input_schema={"fields": ["names"]},
            output_schema={"fields": ["descriptions"]},
        )

    def run(self, payload: dict, context: dict) -> dict:
        names = payload.get("names") or self.catalog.names()
        return {"descriptions": describe_variables(list(names), self.catalog)}


class AnomalyAgent:
    name = "anomaly-agent"

    def __init__(self, catalog: VariableCatalog, seed: int | None = None):
        self.catalog = catalog
        self.seed = seed

    def card(self, endpoint: str = "inproc://anomaly") -> AgentCard:
        return AgentCard(
            name=self.name,
            version="1.0",
            endpoint=endpoint,
            capabilities=["anomaly"],
            input_schema={"fields": ["data_ref", "row", "mode", "event_ref"]},
            output_schema={
                "fields": [
                    "status",
                    "score",
                    "violated_features",
                    "backend",
                    "event_ref",
                    "anomalous_rows",
                    "total_rows",
                    "rca_payload",
                ]
            },
            postprocess_rules=[
                PostprocessRule(
                    trigger=Trigger(field="status", op="ne", value="Normal"),
                    next_capability="rca",
                    input_mapping={
                        "rca_payload.event_ref": "event_ref",
                        "rca_payload.data_ref": "data_ref",
                        "rca_payload.targets": "targets",
                    },
                    auto_chain=True,
                )
            ],
        )

    def run(self, payload: dict, context: dict) -> dict:
        mode = payload.get("mode", MODE_AUTO)
        row = payload.get("row")
        data_ref = payload.get("data_ref")
        if row is not None:
            data = dict(row)
        else:
            if not data_ref or not Path(data_ref).exists():
                raise MissingColumn(f"data file not found: {data_ref!r}")
            data = DataTable.from_csv(data_ref)
        detection = detect(
            data,
            self.catalog,
            mode=mode,
            event_ref=payload.get("event_ref"),
            data_ref=data_ref,
            seed=self.seed,
        )
        out = detection.report.to_dict()
        out["anomalous_rows"] = detection.anomalous_rows
        out["total_rows"] = detection.total_rows
        if detection.rca_payload is not None:
            out["rca_payload"] = detection.rca_payload
        return out


class CausalAgent:
    name = "causal-agent"

    def __init__(self, catalog: VariableCatalog, rules: RuleSet):
        self.catalog = catalog
        self.rules = rules

    def card(self, endpoint: str = "inproc://causal") -> AgentCard:
        return AgentCard(
            name=self.name,
            version="1.0",
            endpoint=endpoint,
            capabilities=["causal"],
            input_schema={"fields": ["data_ref", "algorithm"]},
            output_schema={"fields": ["graph", "algorithm", "edge_list"]},
        )

    def run(self, payload: dict, context: dict) -> dict:
        data_ref = payload.get("data_ref")
        if not data_ref or not Path(data_ref).exists():
            raise MissingColumn(f"data file not found: {data_ref!r}")
        table = DataTable.from_csv(data_ref)
        known = [c for c in table.columns if c in self.catalog]
        if known != table.columns:
            import pandas as pd

            table = DataTable(pd.DataFrame(table.df[known]), table.encoders)
        graph = discover(table, self.catalog, self.rules, algorithm=payload.get("algorithm", ALGO_AUTO))
        return {"graph": graph.to_dict(), "algorithm": graph.algorithm, "edge_list": graph.to_edge_list_text()}


class RcaAgent:
    name = "rca-agent"

    def __init__(self, catalog: VariableCatalog, max_path_len: int = 6):
        self.catalog = catalog
        self.runner = RcaRunner(catalog, max_len=max_path_len)

    def card(self, endpoint: str = "inproc://rca") -> AgentCard:
        return AgentCard(
            name=self.name,
            version="1.0",
            endpoint=endpoint,
            capabilities=["rca"],
            input_schema={"fields": ["event_ref", "data_ref", "row", "graph", "targets"]},
            output_schema={"fields": ["target", "ranked_causes", "paths", "cache_hit", "warnings", "text"]},
        )

    def run(self, payload: dict, context: dict) -> dict:
        report, meta = self.runner.run(payload)
        out = report.to_dict()
        out["cache_hit"] = meta["cache_hit"]
        out["warnings"] = meta["warnings"]
        out["text"] = report.to_text()
        return out


class RecommendAgent:
    name = "recommend-agent"

    def card(self, endpoint: str = "inproc://recommend") -> AgentCard:
        return AgentCard(
            name=self.name,
            version="1.0",
            endpoint=endpoint,
            capabilities=["recommend"],
            input_schema={"fields": ["last_capability", "last_output", "state_summary"]},
            output_schema={"fields": ["recommendations"]},
        )

    def run(self, payload: dict, context: dict) -> dict:
        recs = recommend_next(
            payload.get("last_capability", ""),
            payload.get("last_output") or {},
            payload.get("state_summary") or {},
        )
        return {"recommendations": [r.to_dict() for r in recs]}


def build_agents(catalog: VariableCatalog, rules: RuleSet, seed: int | None = None) -> list:
    """All six agents wired to the shared catalog and rule set."""
    return [
        PreprocessingAgent(catalog),
        BackgroundInfoAgent(catalog),
        AnomalyAgent(catalog, seed=seed),
        CausalAgent(catalog, rules),
        RcaAgent(catalog),
        RecommendAgent(),
    ]
