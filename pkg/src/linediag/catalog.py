"""Variable catalog and process structure.

The catalog carries per-variable semantics (description, unit, location,
subsystem, control/observation type, process stage, tolerance limits) and is
the single source of truth consulted by the rule engine, the agents, and the
planner.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import UnknownVariable, ValidationError

CONTROL = "control"
OBSERVATION = "observation"
VAR_TYPES = (CONTROL, OBSERVATION)

# Stage 0 marks a variable with no known position in the process order.
UNSTAGED = 0


@dataclass(frozen=True)
class Tolerance:
    lo: float
    hi: float

    def contains(self, value: float) -> bool:
        # Closed interval: boundary values conform.
        return self.lo <= value <= self.hi

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "Tolerance":
        return cls(lo=float(d["lo"]), hi=float(d["hi"]))


@dataclass(frozen=True)
class VariableInfo:
    description: str = ""
    unit: str = ""
    location: str = ""
    subsystem: str = ""
    var_type: str = OBSERVATION
    stage: int = UNSTAGED
    tolerance: Tolerance | None = None

    def to_dict(self) -> dict:
        d = {
            "description": self.description,
            "unit": self.unit,
            "location": self.location,
            "subsystem": self.subsystem,
            "var_type": self.var_type,
            "stage": self.stage,
        }
        if self.tolerance is not None:
            d["tolerance"] = self.tolerance.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VariableInfo":
        tol = d.get("tolerance")
        return cls(
            description=d.get("description", ""),
            unit=d.get("unit", ""),
            location=d.get("location", ""),
            subsystem=d.get("subsystem", ""),
            var_type=d.get("var_type", OBSERVATION),
            stage=int(d.get("stage", UNSTAGED)),
            tolerance=Tolerance.from_dict(tol) if tol else None,
        )


class VariableCatalog:
    """Mapping from variable name to its semantic metadata.

    Invariants enforced at construction:
      - names unique (guaranteed by the dict) and non-empty
      - tolerance, when present, has lo < hi
      - positive stage indices form a contiguous range starting at 1
        (stage 0 means "unstaged" and is exempt)
    """

    def __init__(self, entries: dict[str, VariableInfo] | None = None):
        self.entries: dict[str, VariableInfo] = dict(entries or {})
        self._validate()

    def _validate(self) -> None:
        staged = set()
        for name, info in self.entries.items():
            if not name or not isinstance(name, str):
                raise ValidationError(f"variable name must be a non-empty string, got {name!r}")
            if info.var_type not in VAR_TYPES:
                raise ValidationError(f"{name}: var_type must be one of {VAR_TYPES}, got {info.var_type!r}")
            if info.stage < 0:
                raise ValidationError(f"{name}: stage must be non-negative, got {info.stage}")
            if info.tolerance is not None and not info.tolerance.lo < info.tolerance.hi:
                raise ValidationError(
                    f"{name}: tolerance lo must be < hi, got [{info.tolerance.lo}, {info.tolerance.hi}]"
                )
            if info.stage > 0:
                staged.add(info.stage)
        if staged and staged != set(range(1, max(staged) + 1)):
            raise ValidationError(f"stage indices must be contiguous from 1, got {sorted(staged)}")

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, VariableCatalog) and self.entries == other.entries

    def names(self) -> list[str]:
        return list(self.entries)

    def info(self, name: str) -> VariableInfo:
        try:
            return self.entries[name]
        except KeyError:
            raise UnknownVariable(f"variable {name!r} is not in the catalog") from None

    def stage_of(self, name: str) -> int:
        return self.info(name).stage

    def type_of(self, name: str) -> str:
        return self.info(name).var_type

    def fully_staged(self) -> bool:
        """True when every variable has a positive process stage."""
        return bool(self.entries) and all(i.stage > 0 for i in self.entries.values())

    def with_tolerance(self) -> list[str]:
        return [n for n, i in self.entries.items() if i.tolerance is not None]

    def describe(self, names: list[str], placeholder: str = "no description available") -> dict[str, str]:
        """Closed-world name -> description lookup; unknown names get the placeholder."""
        out = {}
        for n in names:
            info = self.entries.get(n)
            out[n] = info.description if info is not None else placeholder
        return out

    def to_dict(self) -> dict:
        return {"variables": {n: i.to_dict() for n, i in self.entries.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "VariableCatalog":
        variables = d.get("variables", d)
        if isinstance(variables, list):
            entries = {}
            for item in variables:
                if "name" not in item:
                    raise ValidationError("catalog entry is missing the 'name' field")
                entries[item["name"]] = VariableInfo.from_dict(item)
        else:
            entries = {n: VariableInfo.from_dict(v) for n, v in variables.items()}
        return cls(entries)


def load_catalog(source: str | Path | dict) -> VariableCatalog:
    """Load and validate a catalog from a JSON document, file path, or dict."""
    if isinstance(source, dict):
        return VariableCatalog.from_dict(source)
    text = Path(source).read_text() if Path(str(source)).exists() else str(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"catalog document does not parse: {e}") from e
    return VariableCatalog.from_dict(doc)


@dataclass
class ProcessGraph:
    """Process stages and the machine -> subsystem -> sensor asset hierarchy."""

    stages: list[int] = field(default_factory=list)
    asset_edges: list[tuple[str, str]] = field(default_factory=list)
    stage_variables: dict[int, list[str]] = field(default_factory=dict)

    def validate(self, catalog: VariableCatalog) -> None:
        if len(self.stages) != len(set(self.stages)):
            raise ValidationError("stage order must be a strict total order (no duplicates)")
        for stage, names in self.stage_variables.items():
            for n in names:
                if n not in catalog:
                    raise UnknownVariable(f"stage {stage} lists unknown variable {n!r}")

    def to_dict(self) -> dict:
        return {
            "stages": list(self.stages),
            "asset_edges": [list(e) for e in self.asset_edges],
            "stage_variables": {str(k): list(v) for k, v in self.stage_variables.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessGraph":
        return cls(
            stages=[int(s) for s in d.get("stages", [])],
            asset_edges=[tuple(e) for e in d.get("asset_edges", [])],
            stage_variables={int(k): list(v) for k, v in d.get("stage_variables", {}).items()},
        )
