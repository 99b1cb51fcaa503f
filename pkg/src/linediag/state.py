"""Workflow state shared between planner, executor, and replanner."""

from __future__ import annotations

from dataclasses import dataclass, field

SLOTS = ("preprocessing", "background", "anomaly", "causal", "rca", "recommendations")

CAPABILITY_SLOT = {
    "preprocessing": "preprocessing",
    "background_info": "background",
    "anomaly": "anomaly",
    "causal": "causal",
    "rca": "rca",
    "recommend": "recommendations",
}

STATUS_SUCCESS = "Success"
STATUS_FAILED = "Failed"


def slot_for(capability: str) -> str | None:
    return CAPABILITY_SLOT.get(capability)


@dataclass
class StepSpec:
    capability: str
    params: dict = field(default_factory=dict)
    cacheable: bool = False

    def to_dict(self) -> dict:
        return {"capability": self.capability, "params": self.params, "cacheable": self.cacheable}

    @classmethod
    def from_dict(cls, d: dict) -> "StepSpec":
        return cls(d["capability"], dict(d.get("params", {})), bool(d.get("cacheable", False)))


@dataclass
class ExecutedStep:
    seq: int
    capability: str
    agent: str
    status: str
    started_ms: int
    ended_ms: int
    cache_hit: bool = False
    slot: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "capability": self.capability,
            "agent": self.agent,
            "status": self.status,
            "started_ms": self.started_ms,
            "ended_ms": self.ended_ms,
            "cache_hit": self.cache_hit,
            "slot": self.slot,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutedStep":
        return cls(
            seq=int(d["seq"]),
            capability=d["capability"],
            agent=d.get("agent", ""),
            status=d["status"],
            started_ms=int(d.get("started_ms", 0)),
            ended_ms=int(d.get("ended_ms", 0)),
            cache_hit=bool(d.get("cache_hit", False)),
            slot=d.get("slot"),
            error=d.get("error"),
        )


@dataclass
class WorkflowState:
    query: str = ""
    data_ref: str | None = None
    slots: dict[str, object] = field(default_factory=lambda: {s: None for s in SLOTS})
    plan: list[StepSpec] = field(default_factory=list)
    trace: list[ExecutedStep] = field(default_factory=list)

    def slot_filled(self, slot: str) -> bool:
        return self.slots.get(slot) is not None

    def next_seq(self) -> int:
        return len(self.trace) + 1

    def successful_capabilities(self) -> list[str]:
        return [t.capability for t in self.trace if t.status == STATUS_SUCCESS]

    def summary(self) -> dict:
        """Compact view handed to agents as context (no payload bodies)."""
        return {
            "query": self.query,
            "data_ref": self.data_ref,
            "slots_filled": [s for s in SLOTS if self.slot_filled(s)],
            "trace": [(t.capability, t.status) for t in self.trace],
        }

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "data_ref": self.data_ref,
            "slots": self.slots,
            "plan": [s.to_dict() for s in self.plan],
            "trace": [t.to_dict() for t in self.trace],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorkflowState":
        slots = {s: None for s in SLOTS}
        slots.update(d.get("slots", {}))
        return cls(
            query=d.get("query", ""),
            data_ref=d.get("data_ref"),
            slots=slots,
            plan=[StepSpec.from_dict(s) for s in d.get("plan", [])],
            trace=[ExecutedStep.from_dict(t) for t in d.get("trace", [])],
        )


def validate_state(state: WorkflowState) -> list[str]:
    """Return invariant violations (empty list means the state is consistent)."""
    violations = []
    for i, step in enumerate(state.trace):
        if step.seq != i + 1:
            violations.append(f"non-contiguous seq at position {i}: expected {i + 1}, got {step.seq}")
    for step in state.trace:
        if step.status == STATUS_SUCCESS:
            if step.slot is None:
                violations.append(f"success step seq={step.seq} ({step.capability}) wrote no slot")
            elif step.slot not in SLOTS:
                violations.append(f"success step seq={step.seq} wrote unknown slot {step.slot!r}")
            elif not state.slot_filled(step.slot):
                violations.append(f"success step seq={step.seq} claims slot {step.slot!r} but it is empty")
    for slot in state.slots:
        if slot not in SLOTS:
            violations.append(f"unknown slot name {slot!r}")
    return violations
