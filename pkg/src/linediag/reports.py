"""Result payload types: anomaly reports, RCA reports, recommendations."""

from __future__ import annotations

from dataclasses import dataclass, field

from .cards import KNOWN_CAPABILITIES, PSEUDO_CAPABILITIES
from .errors import ValidationError

NORMAL = "Normal"
TOLERANCE_VIOLATION = "ToleranceViolation"
FOREST_ANOMALY = "ForestAnomaly"

BACKEND_THRESHOLD = "Threshold"
BACKEND_FOREST = "IsolationForest"


@dataclass
class ViolatedFeature:
    variable: str
    value: float
    lo: float
    hi: float

    def to_dict(self) -> dict:
        return {"variable": self.variable, "value": self.value, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "ViolatedFeature":
        return cls(d["variable"], float(d["value"]), float(d["lo"]), float(d["hi"]))


@dataclass
class AnomalyReport:
    status: str
    score: float
    violated_features: list[ViolatedFeature] = field(default_factory=list)
    backend: str = BACKEND_THRESHOLD
    event_ref: str | None = None

    def __post_init__(self):
        if self.backend == BACKEND_THRESHOLD and self.status == NORMAL and self.violated_features:
            raise ValidationError("Normal threshold report must not list violated features")

    def is_anomalous(self) -> bool:
        return self.status != NORMAL

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "score": self.score,
            "violated_features": [v.to_dict() for v in self.violated_features],
            "backend": self.backend,
            "event_ref": self.event_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnomalyReport":
        return cls(
            status=d["status"],
            score=float(d["score"]),
            violated_features=[ViolatedFeature.from_dict(v) for v in d.get("violated_features", [])],
            backend=d.get("backend", BACKEND_THRESHOLD),
            event_ref=d.get("event_ref"),
        )


@dataclass
class RankedCause:
    variable: str
    combined_score: float
    noise_score: float
    structural_score: float
    description: str = ""

    def to_dict(self) -> dict:
        return {
            "variable": self.variable,
            "combined_score": self.combined_score,
            "noise_score": self.noise_score,
            "structural_score": self.structural_score,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RankedCause":
        return cls(
            d["variable"],
            float(d["combined_score"]),
            float(d["noise_score"]),
            float(d["structural_score"]),
            d.get("description", ""),
        )


@dataclass
class RcaReport:
    target: str
    ranked_causes: list[RankedCause] = field(default_factory=list)
    paths: list[list[str]] = field(default_factory=list)

    def validate(self, stage_index: dict[str, int] | None = None) -> None:
        for c in self.ranked_causes:
            if c.combined_score < 0:
                raise ValidationError(f"negative combined score for {c.variable}")
        scores = [c.combined_score for c in self.ranked_causes]
        if scores != sorted(scores, reverse=True):
            raise ValidationError("ranked causes are not sorted by combined score descending")
        for p in self.paths:
            if not p or p[-1] != self.target:
                raise ValidationError(f"path {p} does not terminate at target {self.target!r}")

    def ranked_names(self) -> list[str]:
        return [c.variable for c in self.ranked_causes]

    def to_text(self) -> str:
        """Human-readable rendering: one ranked path per line."""
        by_head = {c.variable: c.combined_score for c in self.ranked_causes}
        lines = [f"target: {self.target}"]
        for p in self.paths:
            score = by_head.get(p[0], 0.0)
            lines.append(" -> ".join(p) + f" (score={score:.4g})")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "ranked_causes": [c.to_dict() for c in self.ranked_causes],
            "paths": [list(p) for p in self.paths],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RcaReport":
        return cls(
            target=d["target"],
            ranked_causes=[RankedCause.from_dict(c) for c in d.get("ranked_causes", [])],
            paths=[list(p) for p in d.get("paths", [])],
        )


@dataclass
class Recommendation:
    suggested_capability: str
    rationale: str
    auto_chain: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        known = set(KNOWN_CAPABILITIES) | set(PSEUDO_CAPABILITIES)
        if self.suggested_capability not in known:
            raise ValidationError(f"unknown capability tag {self.suggested_capability!r}")

    def to_dict(self) -> dict:
        return {
            "suggested_capability": self.suggested_capability,
            "rationale": self.rationale,
            "auto_chain": self.auto_chain,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Recommendation":
        return cls(
            d["suggested_capability"],
            d.get("rationale", ""),
            bool(d.get("auto_chain", False)),
            dict(d.get("params", {})),
        )


@dataclass
class PreprocessSummary:
    rows_in: int
    rows_out: int
    cols_in: int
    cols_out: int
    imputed_cells: dict[str, int] = field(default_factory=dict)
    encodings: dict[str, int] = field(default_factory=dict)
    enriched: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.rows_out > self.rows_in or self.cols_out > self.cols_in:
            raise ValidationError("preprocessing cannot add rows or columns")

    def to_dict(self) -> dict:
        return {
            "rows_in": self.rows_in,
            "rows_out": self.rows_out,
            "cols_in": self.cols_in,
            "cols_out": self.cols_out,
            "imputed_cells": dict(self.imputed_cells),
            "encodings": dict(self.encodings),
            "enriched": dict(self.enriched),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessSummary":
        return cls(
            rows_in=int(d["rows_in"]),
            rows_out=int(d["rows_out"]),
            cols_in=int(d["cols_in"]),
            cols_out=int(d["cols_out"]),
            imputed_cells=dict(d.get("imputed_cells", {})),
            encodings=dict(d.get("encodings", {})),
            enriched=dict(d.get("enriched", {})),
        )
