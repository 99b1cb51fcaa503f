"""Declarative edge-admissibility rules over variable type and process stage.

The default rule set encodes the grinding-line constraints: control
parameters may cause observations at the same or a later stage, observations
may only cause strictly later observations, and everything else (in
particular anything into a control, or anything running backwards in stage
order) is forbidden. Rules are closed-world: what is not explicitly allowed
is forbidden.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .catalog import CONTROL, OBSERVATION, UNSTAGED, VariableCatalog
from .errors import UnknownVariable, ValidationError

SAME = "Same"
STRICTLY_LATER = "StrictlyLater"
SAME_OR_LATER = "SameOrLater"
STAGE_RELATIONS = (SAME, STRICTLY_LATER, SAME_OR_LATER)


@dataclass(frozen=True)
class Rule:
    src_type: str
    dst_type: str
    stage_relation: str
    allowed: bool

    def to_dict(self) -> dict:
        return {
            "src_type": self.src_type,
            "dst_type": self.dst_type,
            "stage_relation": self.stage_relation,
            "allowed": self.allowed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Rule":
        return cls(d["src_type"], d["dst_type"], d["stage_relation"], bool(d["allowed"]))


class RuleSet:
    def __init__(self, rules: list[Rule], default_allowed: bool = False):
        seen = set()
        for r in rules:
            if r.stage_relation not in STAGE_RELATIONS:
                raise ValidationError(f"unknown stage_relation {r.stage_relation!r}")
            key = (r.src_type, r.dst_type, r.stage_relation)
            if key in seen:
                raise ValidationError(f"duplicate rule for {key}")
            seen.add(key)
        self.rules = list(rules)
        self.default_allowed = default_allowed

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RuleSet)
            and set(self.rules) == set(other.rules)
            and self.default_allowed == other.default_allowed
        )

    def allows(self, src_type: str, dst_type: str, src_stage: int, dst_stage: int) -> bool:
        """Admissibility of a (type, type, stage) configuration.

        Unstaged endpoints (stage 0) cannot violate temporal order, so any
        relation that some allowed rule names is treated as satisfiable;
        type constraints still apply.
        """
        unstaged = src_stage == UNSTAGED or dst_stage == UNSTAGED
        verdict = self.default_allowed
        matched = False
        for r in self.rules:
            if r.src_type != src_type or r.dst_type != dst_type:
                continue
            if unstaged:
                satisfiable = True
            elif r.stage_relation == SAME:
                satisfiable = src_stage == dst_stage
            elif r.stage_relation == STRICTLY_LATER:
                satisfiable = dst_stage > src_stage
            else:  # SameOrLater
                satisfiable = dst_stage >= src_stage
            if satisfiable:
                matched = True
                if r.allowed:
                    return True
                verdict = False
        return verdict if matched else self.default_allowed

    def to_dict(self) -> dict:
        return {"default_allowed": self.default_allowed, "rules": [r.to_dict() for r in self.rules]}

    @classmethod
    def from_dict(cls, d: dict) -> "RuleSet":
        return cls([Rule.from_dict(r) for r in d.get("rules", [])], bool(d.get("default_allowed", False)))


def default_ruleset() -> RuleSet:
    """The shipped grinding-line rules (R1/R5, R2, R3; everything else forbidden)."""
    return RuleSet(
        rules=[
            Rule(CONTROL, OBSERVATION, SAME, True),
            Rule(CONTROL, OBSERVATION, STRICTLY_LATER, True),
            Rule(OBSERVATION, OBSERVATION, STRICTLY_LATER, True),
        ],
        default_allowed=False,
    )


def load_rules(source: str | Path | dict) -> RuleSet:
    if isinstance(source, dict):
        return RuleSet.from_dict(source)
    text = Path(source).read_text() if Path(str(source)).exists() else str(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"rule document does not parse: {e}") from e
    return RuleSet.from_dict(doc)


@dataclass(frozen=True)
class EdgeQuery:
    src: str
    dst: str


def is_admissible(q: EdgeQuery, catalog: VariableCatalog, rules: RuleSet) -> bool:
    """Whether the directed edge q.src -> q.dst is admissible. Self-loops never are."""
    if q.src not in catalog:
        raise UnknownVariable(f"unknown variable {q.src!r}")
    if q.dst not in catalog:
        raise UnknownVariable(f"unknown variable {q.dst!r}")
    if q.src == q.dst:
        return False
    s, d = catalog.info(q.src), catalog.info(q.dst)
    return rules.allows(s.var_type, d.var_type, s.stage, d.stage)


def admissible_pairs(catalog: VariableCatalog, rules: RuleSet) -> set[tuple[str, str]]:
    names = catalog.names()
    return {
        (u, v)
        for u in names
        for v in names
        if u != v and is_admissible(EdgeQuery(u, v), catalog, rules)
    }


def forbidden_edges(catalog: VariableCatalog, rules: RuleSet) -> set[tuple[str, str]]:
    """Complement of the admissible ordered pairs; self-loops count as forbidden."""
    names = catalog.names()
    allowed = admissible_pairs(catalog, rules)
    return {(u, v) for u in names for v in names if (u, v) not in allowed}


def stage_order(catalog: VariableCatalog) -> list[str]:
    """Total order by (stage, control-before-observation, name).

    Every edge admissible under the default rules goes strictly forward in
    this order, which is what makes admissible edge sets acyclic.
    """
    def key(name: str):
        info = catalog.info(name)
        return (info.stage, 0 if info.var_type == CONTROL else 1, name)

    return sorted(catalog.names(), key=key)
