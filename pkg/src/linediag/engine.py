"""Planner -> executor -> replanner loop with step caching and pruning.

The planner is deterministic: each workflow template carries keyword groups,
a query selects the matching template with the most groups hit (then the
longest step list, then the lowest template number). An optional external
planner URL can override template selection; its answer is validated and the
keyword table remains the fallback.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .cards import KNOWN_CAPABILITIES
from .catalog import VariableCatalog
from .errors import GraphUnavailable, UnplannableQuery, ValidationError
from .graphs import CausalGraph
from .protocol import (
    CPA,
    EVENT_ERROR,
    EVENT_PROGRESS,
    EVENT_RESULT,
    EVENT_STARTED,
    EventStore,
    InvokeRequest,
    Registry,
)
from .reports import NORMAL
from .rules import RuleSet
from .state import (
    STATUS_FAILED,
    STATUS_SUCCESS,
    ExecutedStep,
    StepSpec,
    WorkflowState,
    slot_for,
    validate_state,
)

log = logging.getLogger(__name__)

CACHEABLE_CAPS = ("preprocessing", "causal")

# Capabilities a pending step needs in its slots before it can succeed.
STEP_DEPENDENCIES = {"causal": ("preprocessing",), "rca": ("causal", "anomaly")}


@dataclass(frozen=True)
class PlanTemplate:
    id: str
    steps: tuple[str, ...]
    cacheable_steps: frozenset[str]
    keyword_groups: tuple[tuple[str, ...], ...]
    needs_file: bool = False


TEMPLATES: tuple[PlanTemplate, ...] = (
    PlanTemplate("W1", ("preprocessing", "recommend"), frozenset(), (("clean", "summarize"),)),
    PlanTemplate(
        "W2",
        ("preprocessing", "background_info", "recommend"),
        frozenset(),
        (("describe", "what is"),),
        needs_file=True,
    ),
    PlanTemplate("W3", ("background_info", "recommend"), frozenset(), (("describe", "what is"),)),
    PlanTemplate(
        "W4",
        ("preprocessing", "anomaly", "recommend"),
        frozenset({"preprocessing"}),
        (("anomal", "detect"),),
    ),
    PlanTemplate(
        "W5",
        ("preprocessing", "background_info", "causal", "recommend"),
        frozenset({"preprocessing"}),
        (("causal graph", "discover"),),
    ),
    PlanTemplate(
        "W6",
        ("preprocessing", "anomaly", "causal", "rca", "recommend"),
        frozenset({"preprocessing", "causal"}),
        (("root cause", "why"),),
    ),
    PlanTemplate(
        "W7",
        ("preprocessing", "anomaly", "causal", "recommend"),
        frozenset({"preprocessing"}),
        (("anomal", "detect"), ("causal graph", "discover")),
    ),
    PlanTemplate(
        "W8",
        ("preprocessing", "anomaly", "background_info", "causal", "rca", "recommend"),
        frozenset(),
        (("diagnos",),),
    ),
    # W9 mirrors W6's path with warm caches; it has no keywords of its own and
    # is reached through the same root-cause intent.
    PlanTemplate(
        "W9",
        ("preprocessing", "anomaly", "causal", "rca", "recommend"),
        frozenset({"preprocessing", "causal"}),
        (),
    ),
)


def _request_digest(capability: str, payload: dict) -> dict:
    """Compact record of a dispatched request for traceability checks."""
    digest = {"capability": capability, "payload": {}}
    for k, v in payload.items():
        if k == "graph" and isinstance(v, dict):
            digest["payload"]["graph_hash"] = CausalGraph.from_dict(v).content_hash()
        elif isinstance(v, (str, int, float, bool)) or v is None:
            digest["payload"][k] = v
        elif isinstance(v, list) and all(isinstance(x, str) for x in v):
            digest["payload"][k] = list(v)
    return digest


def select_template(query: str, has_file: bool) -> tuple[PlanTemplate, dict]:
    """Most-specific keyword match; diagnostics explain every template's verdict."""
    q = query.lower()
    diagnostics = {}
    best = None
    best_key = None
    for t in TEMPLATES:
        if not t.keyword_groups:
            diagnostics[t.id] = "no keywords (selected via an equivalent template)"
            continue
        hits = [any(k in q for k in group) for group in t.keyword_groups]
        ok = all(hits) and (has_file or not t.needs_file)
        diagnostics[t.id] = f"groups hit: {sum(hits)}/{len(hits)}" + ("" if ok else " (not selected)")
        if not ok:
            continue
        specificity = len(t.keyword_groups) + (1 if t.needs_file else 0)
        key = (specificity, len(t.steps), -int(t.id[1:]))
        if best_key is None or key > best_key:
            best, best_key = t, key
    if best is None:
        raise UnplannableQuery(f"no workflow template matches query {query!r}", diagnostics)
    return best, diagnostics


@dataclass
class WorkflowRecord:
    workflow_id: str
    state: WorkflowState
    status: str = "running"  # running | done | failed
    template_id: str | None = None
    initial_plan: list[str] = field(default_factory=list)
    pruned: list[dict] = field(default_factory=list)
    requests: list[dict] = field(default_factory=list)  # dispatched request digests
    graph_original: dict | None = None
    rejected_edges: list[list[str]] = field(default_factory=list)
    accepted_edges: list[list[str]] = field(default_factory=list)

    def current_graph(self) -> dict | None:
        base = self.graph_original
        if base is None:
            return None
        removed = {tuple(e) for e in self.rejected_edges}
        g = CausalGraph.from_dict(base)
        return g.without_edges(removed).to_dict()


class Engine:
    """Owns workflow runs, the step cache, and the workflow store."""

    def __init__(
        self,
        registry: Registry,
        events: EventStore,
        cpa: CPA,
        catalog: VariableCatalog,
        rules: RuleSet,
        seed: int = 0,
        planner_url: str | None = None,
        out_dir: str | Path | None = None,
    ):
        self.registry = registry
        self.events = events
        self.cpa = cpa
        self.catalog = catalog
        self.rules = rules
        self.seed = seed
        self.planner_url = planner_url
        self.out_dir = Path(out_dir) if out_dir else None
        self.workflows: dict[str, WorkflowRecord] = {}
        self._cache: dict[tuple, dict] = {}
        self._cache_lock = threading.Lock()
        self._file_hashes: dict[str, tuple[float, int, str]] = {}
        self._wf_counter = 0
        self._lock = threading.Lock()

    # ------------------------------------------------------------------ plan

    def plan(self, query: str, state: WorkflowState) -> list[StepSpec]:
        if not query.strip():
            raise UnplannableQuery("empty query", {})
        steps = self._external_plan(query, state)
        template_id = None
        if steps is None:
            template, _ = select_template(query, has_file=bool(state.data_ref))
            template_id = template.id
            steps = [
                StepSpec(cap, params={}, cacheable=cap in template.cacheable_steps)
                for cap in template.steps
            ]
        # Drop steps that are cacheable and whose slot is already filled.
        steps = [
            s
            for s in steps
            if not (s.cacheable and state.slot_filled(slot_for(s.capability) or ""))
        ]
        state.plan.extend(steps)
        state.plan_template = template_id  # type: ignore[attr-defined]
        return steps

    def _external_plan(self, query: str, state: WorkflowState) -> list[StepSpec] | None:
        if not self.planner_url:
            return None
        try:
            import httpx

            resp = httpx.post(
                self.planner_url,
                json={"query": query, "state_summary": state.summary()},
                timeout=10.0,
            )
            resp.raise_for_status()
            caps = resp.json().get("capabilities", [])
            if not caps or not all(c in KNOWN_CAPABILITIES for c in caps):
                raise ValueError(f"invalid capabilities from external planner: {caps}")
            return [StepSpec(c, cacheable=c in CACHEABLE_CAPS) for c in caps]
        except Exception as e:
            log.warning("external planner failed (%s); falling back to keyword table", e)
            return None

    # --------------------------------------------------------------- execute

    def _file_hash(self, path: str) -> str:
        try:
            st = os.stat(path)
        except OSError:
            return "missing:" + path
        memo = self._file_hashes.get(path)
        if memo and memo[0] == st.st_mtime and memo[1] == st.st_size:
            return memo[2]
        h = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        self._file_hashes[path] = (st.st_mtime, st.st_size, h)
        return h

    def _cache_key(self, capability: str, payload: dict) -> tuple:
        data_ref = payload.get("data_ref") or ""
        params = {k: v for k, v in payload.items() if k not in ("data_ref",) and not isinstance(v, dict)}
        return (capability, self._file_hash(data_ref) if data_ref else "", json.dumps(params, sort_keys=True))

    def current_data_ref(self, state: WorkflowState) -> str | None:
        pre = state.slots.get("preprocessing")
        if isinstance(pre, dict) and pre.get("data_ref"):
            return pre["data_ref"]
        return state.data_ref

    def _build_payload(self, step: StepSpec, state: WorkflowState) -> dict:
        cap = step.capability
        payload: dict = dict(step.params)
        if cap == "preprocessing":
            payload.setdefault("data_ref", state.data_ref)
        elif cap in ("anomaly", "causal"):
            payload.setdefault("data_ref", self.current_data_ref(state))
        elif cap == "background_info":
            payload.setdefault("names", self.catalog.names())
        elif cap == "rca":
            anomaly = state.slots.get("anomaly") or {}
            rca_payload = anomaly.get("rca_payload") or {}
            payload.setdefault("event_ref", rca_payload.get("event_ref"))
            payload.setdefault("targets", rca_payload.get("targets"))
            payload.setdefault("data_ref", rca_payload.get("data_ref") or self.current_data_ref(state))
            causal = state.slots.get("causal") or {}
            if "graph" not in payload and causal.get("graph"):
                payload["graph"] = causal["graph"]
        elif cap == "recommend":
            last = None
            for t in reversed(state.trace):
                if t.status == STATUS_SUCCESS and t.capability != "recommend":
                    last = t
                    break
            last_output = state.slots.get(slot_for(last.capability) or "", {}) if last else {}
            payload.setdefault("last_capability", last.capability if last else "")
            payload.setdefault("last_output", last_output or {})
            payload.setdefault("state_summary", state.summary())
        return payload

    def execute_step(self, step: StepSpec, state: WorkflowState, workflow_id: str | None = None) -> WorkflowState:
        """Dispatch one step through the CPA (or serve it from the cache)."""
        slot = slot_for(step.capability)
        payload = self._build_payload(step, state)
        started = self.cpa.clock()

        if step.cacheable:
            key = self._cache_key(step.capability, payload)
            with self._cache_lock:
                hit = self._cache.get(key)
            if hit is not None:
                state.slots[slot] = copy.deepcopy(hit["result"])
                state.trace.append(
                    ExecutedStep(
                        seq=state.next_seq(),
                        capability=step.capability,
                        agent=hit["agent"],
                        status=STATUS_SUCCESS,
                        started_ms=started,
                        ended_ms=self.cpa.clock(),
                        cache_hit=True,
                        slot=slot,
                    )
                )
                self._wf_event(workflow_id, "step", {"capability": step.capability, "cache_hit": True})
                return state

        req = InvokeRequest(
            task_id=self.cpa.new_task_id(),
            capability=step.capability,
            payload=payload,
            context={"data_ref": self.current_data_ref(state), "prior_slots": state.summary()["slots_filled"]},
        )
        record = self.workflows.get(workflow_id or "")
        if record is not None:
            record.requests.append(_request_digest(step.capability, payload))
        try:
            out = self.cpa.dispatch(req)
        except Exception as e:
            state.trace.append(
                ExecutedStep(
                    seq=state.next_seq(),
                    capability=step.capability,
                    agent="",
                    status=STATUS_FAILED,
                    started_ms=started,
                    ended_ms=self.cpa.clock(),
                    slot=None,
                    error=f"{type(e).__name__}: {e}",
                )
            )
            self._wf_event(
                workflow_id, "step_failed", {"capability": step.capability, "error": type(e).__name__}
            )
            return state

        result = out["result"]
        state.slots[slot] = result
        state.trace.append(
            ExecutedStep(
                seq=state.next_seq(),
                capability=step.capability,
                agent=out["agent"],
                status=STATUS_SUCCESS,
                started_ms=started,
                ended_ms=self.cpa.clock(),
                cache_hit=False,
                slot=slot,
            )
        )
        if step.capability in CACHEABLE_CAPS:
            key = self._cache_key(step.capability, payload)
            with self._cache_lock:
                self._cache[key] = {"result": copy.deepcopy(result), "agent": out["agent"]}
        self._wf_event(workflow_id, "step", {"capability": step.capability, "cache_hit": False})
        return state

    # ---------------------------------------------------------------- replan

    def replan(self, state: WorkflowState, workflow_id: str | None = None) -> list[StepSpec]:
        """Prune the pending plan after each execution.

        (a) anomaly slot says Normal: drop pending causal and rca;
        (b) drop pending steps whose slot is already filled;
        (c) drop steps whose dependencies can no longer be satisfied.
        Completed steps are never re-added.
        """
        pending = list(state.plan)
        pruned: list[dict] = []

        anomaly = state.slots.get("anomaly")
        if isinstance(anomaly, dict) and anomaly.get("status") == NORMAL:
            kept = []
            for s in pending:
                if s.capability in ("causal", "rca"):
                    pruned.append({"capability": s.capability, "reason": "anomaly status Normal"})
                else:
                    kept.append(s)
            pending = kept

        kept = []
        for s in pending:
            slot = slot_for(s.capability)
            if slot and state.slot_filled(slot):
                pruned.append({"capability": s.capability, "reason": f"slot {slot} already filled"})
            else:
                kept.append(s)
        pending = kept

        pending_caps = {s.capability for s in pending}
        kept = []
        for s in pending:
            deps = STEP_DEPENDENCIES.get(s.capability, ())
            stuck = [
                d for d in deps if not state.slot_filled(slot_for(d) or "") and d not in pending_caps
            ]
            if stuck:
                pruned.append({"capability": s.capability, "reason": f"unsatisfiable dependencies {stuck}"})
                pending_caps.discard(s.capability)
            else:
                kept.append(s)
        pending = kept

        state.plan = pending
        if pruned:
            self._wf_event(workflow_id, "replan", {"pruned": pruned})
            record = self.workflows.get(workflow_id or "")
            if record:
                record.pruned.extend(pruned)
        return pending

    # ------------------------------------------------------------------- run

    def _wf_event(self, workflow_id: str | None, phase: str, body: dict) -> None:
        if workflow_id:
            self.events.publish(workflow_id, EVENT_PROGRESS, {"phase": phase, **body})

    def submit(self, query: str, data_ref: str | None) -> str:
        with self._lock:
            self._wf_counter += 1
            workflow_id = f"wf-{self._wf_counter}"
        state = WorkflowState(query=query, data_ref=os.path.abspath(data_ref) if data_ref else None)
        self.workflows[workflow_id] = WorkflowRecord(workflow_id, state)
        return workflow_id

    def run(self, query: str, data_ref: str | None = None, workflow_id: str | None = None) -> WorkflowState:
        """Full loop: plan, execute/replan until no steps remain, then postprocess."""
        if workflow_id is None:
            workflow_id = self.submit(query, data_ref)
        record = self.workflows[workflow_id]
        state = record.state
        self.events.publish(workflow_id, EVENT_STARTED, {"query": query})
        try:
            steps = self.plan(query, state)
            record.template_id = getattr(state, "plan_template", None)
            record.initial_plan = [s.capability for s in steps]
            self._wf_event(workflow_id, "plan", {"steps": [s.capability for s in steps]})
            guard = 0
            while state.plan:
                guard += 1
                if guard > 32:
                    raise ValidationError("workflow loop exceeded its progress bound")
                step = state.plan.pop(0)
                self.execute_step(step, state, workflow_id)
                self.replan(state, workflow_id)
            self._postprocess_pass(state, workflow_id)
            self._capture_graph(record)
            record.status = "done"
            violations = validate_state(state)
            if violations:
                raise ValidationError(f"final state violations: {violations}")
            self.events.publish(
                workflow_id,
                EVENT_RESULT,
                {"trace": [t.capability for t in state.trace], "status": "done"},
            )
        except Exception:
            record.status = "failed"
            if not self.events.is_terminal(workflow_id):
                self.events.publish(workflow_id, EVENT_ERROR, {"status": "failed"})
            raise
        return state

    def _capture_graph(self, record: WorkflowRecord) -> None:
        causal = record.state.slots.get("causal")
        if isinstance(causal, dict) and causal.get("graph"):
            record.graph_original = copy.deepcopy(causal["graph"])

    # ------------------------------------------------------ postprocess chain

    def _postprocess_pass(self, state: WorkflowState, workflow_id: str | None) -> None:
        """Stage-3 chaining: card rules plus auto-chain recommendations.

        A chained capability only fires while its slot is still empty, which
        both deduplicates against planned steps and bounds the loop.
        """
        attempted: set[str] = set()
        for _ in range(len(KNOWN_CAPABILITIES)):
            fired = self._chain_once(state, workflow_id, attempted)
            if not fired:
                return

    def _chain_once(self, state: WorkflowState, workflow_id: str | None, attempted: set[str]) -> bool:
        context = {"data_ref": self.current_data_ref(state)}
        for t in list(state.trace):
            if t.status != STATUS_SUCCESS:
                continue
            entry = self.registry.entry(t.agent)
            if entry is None:
                continue
            output = state.slots.get(slot_for(t.capability) or "")
            if not isinstance(output, dict):
                continue
            for req in self.cpa.build_chain_requests(entry.card, output, context):
                slot = slot_for(req.capability)
                if slot is None or state.slot_filled(slot) or req.capability in attempted:
                    continue
                attempted.add(req.capability)
                self._execute_chained(req.capability, req.payload, state, workflow_id)
                return True
        recs = state.slots.get("recommendations")
        if isinstance(recs, dict):
            for rec in recs.get("recommendations", []):
                cap = rec.get("suggested_capability")
                slot = slot_for(cap or "")
                if rec.get("auto_chain") and slot and not state.slot_filled(slot) and cap not in attempted:
                    attempted.add(cap)
                    self._execute_chained(cap, dict(rec.get("params", {})), state, workflow_id)
                    return True
        return False

    def _execute_chained(self, capability: str, payload: dict, state: WorkflowState, workflow_id: str | None) -> None:
        step = StepSpec(capability, params=payload, cacheable=False)
        self._wf_event(workflow_id, "chain", {"capability": capability})
        self.execute_step(step, state, workflow_id)

    # ------------------------------------------------- operator interactions

    def get_workflow(self, workflow_id: str) -> WorkflowRecord:
        record = self.workflows.get(workflow_id)
        if record is None:
            raise KeyError(workflow_id)
        return record

    def edit_graph(self, workflow_id: str, rejected: list[list[str]], accepted: list[list[str]]) -> dict:
        """Apply operator edge verdicts and re-run RCA against the edited graph."""
        record = self.get_workflow(workflow_id)
        if record.graph_original is None:
            raise GraphUnavailable("workflow has no causal graph to edit")
        changed = sorted(map(tuple, rejected)) != sorted(map(tuple, record.rejected_edges))
        record.rejected_edges = [list(e) for e in rejected]
        record.accepted_edges = [list(e) for e in accepted]
        graph = record.current_graph()
        state = record.state
        rerun = False
        anomaly = state.slots.get("anomaly") or {}
        if changed and isinstance(anomaly, dict) and anomaly.get("rca_payload"):
            payload = dict(anomaly["rca_payload"])
            payload = {
                "event_ref": payload.get("event_ref"),
                "targets": payload.get("targets"),
                "data_ref": payload.get("data_ref") or self.current_data_ref(state),
                "graph": graph,
            }
            state.slots["rca"] = None
            self._execute_chained("rca", payload, state, workflow_id)
            rerun = True
        return {"graph": graph, "rejected": record.rejected_edges, "accepted": record.accepted_edges,
                "rca": state.slots.get("rca"), "rca_rerun": rerun}

    def confirm_recommendation(self, workflow_id: str, index: int, trace_len: int) -> dict:
        """Execute a pending recommendation; refuse when the state has advanced."""
        record = self.get_workflow(workflow_id)
        state = record.state
        if trace_len != len(state.trace):
            raise ValidationError("stale recommendation: workflow state has advanced; refresh and retry")
        recs = (state.slots.get("recommendations") or {}).get("recommendations", [])
        if not (0 <= index < len(recs)):
            raise ValidationError(f"no recommendation at index {index}")
        rec = recs[index]
        cap = rec.get("suggested_capability")
        slot = slot_for(cap or "")
        if slot is None:
            return {"executed": False, "reason": f"capability {cap!r} is advisory only"}
        if cap == "rca":
            state.slots["rca"] = None
        self._execute_chained(cap, dict(rec.get("params", {})), state, workflow_id)
        return {"executed": True, "trace_len": len(state.trace)}
