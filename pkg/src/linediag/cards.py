"""Agent capability cards and their postprocess chaining rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from urllib.parse import urlparse

from .errors import InvalidCard

KNOWN_CAPABILITIES = (
    "preprocessing",
    "background_info",
    "anomaly",
    "causal",
    "rca",
    "recommend",
)

# Terminal suggestions the recommender may emit; no agent serves these.
PSEUDO_CAPABILITIES = ("archive", "inspect")

TRIGGER_OPS = ("eq", "ne", "exists", "gt", "lt")


def _lookup(payload: dict, dotted: str):
    """Resolve a dotted field path in a nested dict; KeyError when absent."""
    cur = payload
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise KeyError(dotted)
        cur = cur[part]
    return cur


@dataclass(frozen=True)
class Trigger:
    field: str
    op: str = "exists"
    value: object = None

    def matches(self, output: dict) -> bool:
        try:
            actual = _lookup(output, self.field)
        except KeyError:
            return False
        if self.op == "exists":
            return True
        if self.op == "eq":
            return actual == self.value
        if self.op == "ne":
            return actual != self.value
        if self.op == "gt":
            return actual > self.value
        if self.op == "lt":
            return actual < self.value
        return False

    def to_dict(self) -> dict:
        return {"field": self.field, "op": self.op, "value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> "Trigger":
        return cls(d["field"], d.get("op", "exists"), d.get("value"))


@dataclass(frozen=True)
class PostprocessRule:
    trigger: Trigger
    next_capability: str
    input_mapping: dict[str, str] = field(default_factory=dict)  # output field -> input field
    auto_chain: bool = False

    def to_dict(self) -> dict:
        return {
            "trigger": self.trigger.to_dict(),
            "next_capability": self.next_capability,
            "input_mapping": dict(self.input_mapping),
            "auto_chain": self.auto_chain,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PostprocessRule":
        return cls(
            trigger=Trigger.from_dict(d["trigger"]),
            next_capability=d["next_capability"],
            input_mapping=dict(d.get("input_mapping", {})),
            auto_chain=bool(d.get("auto_chain", False)),
        )

    def __hash__(self):
        return hash((self.trigger, self.next_capability, self.auto_chain, tuple(sorted(self.input_mapping.items()))))


@dataclass
class AgentCard:
    name: str
    version: str
    endpoint: str
    capabilities: list[str]
    input_schema: dict = field(default_factory=dict)
    output_schema: dict = field(default_factory=dict)
    postprocess_rules: list[PostprocessRule] = field(default_factory=list)

    def validate(self) -> None:
        if not self.name:
            raise InvalidCard("card name must be non-empty")
        if not self.capabilities:
            raise InvalidCard(f"card {self.name!r} declares no capabilities")
        parsed = urlparse(self.endpoint)
        if not parsed.scheme or not (parsed.netloc or parsed.path):
            raise InvalidCard(f"card {self.name!r} has an invalid endpoint {self.endpoint!r}")
        for rule in self.postprocess_rules:
            if rule.trigger.op not in TRIGGER_OPS:
                raise InvalidCard(f"card {self.name!r}: unknown trigger op {rule.trigger.op!r}")
            declared_out = self._declared_fields(self.output_schema)
            if declared_out is not None:
                for out_field in rule.input_mapping:
                    if out_field.split(".")[0] not in declared_out:
                        raise InvalidCard(
                            f"card {self.name!r}: mapping references undeclared output field {out_field!r}"
                        )

    @staticmethod
    def _declared_fields(schema: dict) -> list[str] | None:
        # Schemas are free-form descriptors; only a top-level "fields" list is checkable.
        fields = schema.get("fields") if isinstance(schema, dict) else None
        return list(fields) if isinstance(fields, (list, tuple)) else None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "endpoint": self.endpoint,
            "capabilities": list(self.capabilities),
            "input_schema": self.input_schema,
            "output_schema": self.output_schema,
            "postprocess_rules": [r.to_dict() for r in self.postprocess_rules],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentCard":
        return cls(
            name=d["name"],
            version=d.get("version", "0"),
            endpoint=d.get("endpoint", ""),
            capabilities=list(d.get("capabilities", [])),
            input_schema=d.get("input_schema", {}),
            output_schema=d.get("output_schema", {}),
            postprocess_rules=[PostprocessRule.from_dict(r) for r in d.get("postprocess_rules", [])],
        )
