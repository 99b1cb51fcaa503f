"""Central registry, ordered task-event store, and the client process agent.

The registry keeps the live directory of agent cards. Every task invocation
flows through the CPA, which normalizes payloads, routes by capability tag to
the first matching agent, publishes an ordered event stream per task, and
evaluates postprocess chaining rules declared on agent cards.
"""

from __future__ import annotations

import copy
import itertools
import os
import threading
import time
from dataclasses import dataclass, field

from . import errors as err
from .cards import AgentCard, _lookup
from .errors import (
    AgentTimeout,
    ChainMappingError,
    ConflictError,
    InvalidCard,
    NoAgentForCapability,
    UnknownTask,
    ValidationError,
)

EVENT_STARTED = "Started"
EVENT_PROGRESS = "Progress"
EVENT_RESULT = "Result"
EVENT_ERROR = "Error"
TERMINAL_KINDS = (EVENT_RESULT, EVENT_ERROR)

DEFAULT_TIMEOUT_S = 120.0


def monotonic_ms() -> int:
    return int(time.monotonic() * 1000)


@dataclass(frozen=True)
class TaskEvent:
    task_id: str
    seq: int
    kind: str
    body: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"task_id": self.task_id, "seq": self.seq, "kind": self.kind, "body": self.body}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskEvent":
        return cls(d["task_id"], int(d["seq"]), d["kind"], d.get("body", {}))


@dataclass
class InvokeRequest:
    task_id: str
    capability: str
    payload: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "capability": self.capability,
            "payload": self.payload,
            "context": self.context,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InvokeRequest":
        return cls(d["task_id"], d["capability"], d.get("payload", {}), d.get("context", {}))


class EventStore:
    """Per-task append-only event log with replay-then-live subscriptions."""

    def __init__(self):
        self._events: dict[str, list[TaskEvent]] = {}
        self._terminal: set[str] = set()
        self._cond = threading.Condition()

    def publish(self, task_id: str, kind: str, body: dict | None = None) -> TaskEvent:
        with self._cond:
            if task_id in self._terminal:
                raise ValidationError(f"task {task_id!r} already has a terminal event")
            log = self._events.setdefault(task_id, [])
            event = TaskEvent(task_id, len(log) + 1, kind, body or {})
            log.append(event)
            if kind in TERMINAL_KINDS:
                self._terminal.add(task_id)
            self._cond.notify_all()
            return event

    def known(self, task_id: str) -> bool:
        with self._cond:
            return task_id in self._events

    def is_terminal(self, task_id: str) -> bool:
        with self._cond:
            return task_id in self._terminal

    def snapshot(self, task_id: str) -> list[TaskEvent]:
        with self._cond:
            if task_id not in self._events:
                raise UnknownTask(f"no events for task {task_id!r}")
            return list(self._events[task_id])

    def after(self, task_id: str, seq: int) -> tuple[list[TaskEvent], bool]:
        """Events with seq greater than the given one, plus the terminal flag."""
        with self._cond:
            if task_id not in self._events:
                raise UnknownTask(f"no events for task {task_id!r}")
            return list(self._events[task_id][seq:]), task_id in self._terminal

    def stream(self, task_id: str, poll_timeout_s: float = 0.5, max_wait_s: float | None = None):
        """Replay all prior events in seq order, then yield live ones until terminal."""
        if not self.known(task_id):
            raise UnknownTask(f"no events for task {task_id!r}")
        seq = 0
        deadline = None if max_wait_s is None else time.monotonic() + max_wait_s
        while True:
            with self._cond:
                pending = self._events[task_id][seq:]
                done = task_id in self._terminal
                if not pending and not done:
                    self._cond.wait(timeout=poll_timeout_s)
                    pending = self._events[task_id][seq:]
                    done = task_id in self._terminal
            for ev in pending:
                seq = ev.seq
                yield ev
            if done and seq >= len(self._events[task_id]):
                return
            if deadline is not None and time.monotonic() > deadline:
                return


@dataclass
class RegistryEntry:
    card: AgentCard
    handler: object | None  # in-process callable run(payload, context) -> dict
    index: int
    agent_id: str


class Registry:
    """Thread-safe directory of registered agent cards."""

    def __init__(self):
        self._entries: dict[str, RegistryEntry] = {}
        self._lock = threading.RLock()
        self._counter = itertools.count(1)

    def register(self, card: AgentCard, handler=None) -> str:
        card.validate()
        with self._lock:
            existing = self._entries.get(card.name)
            if existing is not None:
                same_schema = (
                    existing.card.input_schema == card.input_schema
                    and existing.card.output_schema == card.output_schema
                )
                if not same_schema:
                    raise ConflictError(f"card {card.name!r} is already registered with a different schema")
                entry = RegistryEntry(card, handler, existing.index, existing.agent_id)
            else:
                entry = RegistryEntry(card, handler, next(self._counter), card.name)
            self._entries[card.name] = entry
            return entry.agent_id

    def list_agents(self) -> list[AgentCard]:
        with self._lock:
            return [e.card for e in sorted(self._entries.values(), key=lambda e: e.index)]

    def find_by_capability(self, tag: str) -> list[AgentCard]:
        with self._lock:
            entries = [e for e in self._entries.values() if tag in e.card.capabilities]
            return [e.card for e in sorted(entries, key=lambda e: e.index)]

    def entry_for_capability(self, tag: str) -> RegistryEntry | None:
        with self._lock:
            entries = [e for e in self._entries.values() if tag in e.card.capabilities]
            if not entries:
                return None
            return min(entries, key=lambda e: e.index)

    def entry(self, name: str) -> RegistryEntry | None:
        with self._lock:
            return self._entries.get(name)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def _error_from_wire(payload: dict) -> Exception:
    cls = getattr(err, payload.get("type", ""), err.LinediagError)
    if not (isinstance(cls, type) and issubclass(cls, Exception)):
        cls = err.LinediagError
    return cls(payload.get("message", "agent error"))


class CPA:
    """Client process agent: normalization, routing, events, postprocess chaining."""

    def __init__(
        self,
        registry: Registry,
        events: EventStore,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        clock=monotonic_ms,
    ):
        self.registry = registry
        self.events = events
        self.timeout_s = timeout_s
        self.clock = clock
        self._task_counter = itertools.count(1)
        self._lock = threading.Lock()

    def new_task_id(self, prefix: str = "task") -> str:
        with self._lock:
            return f"{prefix}-{next(self._task_counter)}"

    # -- payload normalization ------------------------------------------------

    @staticmethod
    def normalize(payload: dict, context: dict) -> dict:
        """Deep-copied payload with data_ref made absolute and context fills applied."""
        out = copy.deepcopy(payload or {})
        context = context or {}
        if not out.get("data_ref") and context.get("data_ref"):
            out["data_ref"] = context["data_ref"]
        if out.get("data_ref"):
            out["data_ref"] = os.path.abspath(str(out["data_ref"]))
        for key, value in context.items():
            if key not in ("data_ref", "prior_slots") and key not in out:
                out[key] = copy.deepcopy(value)
        return out

    # -- dispatch ---------------------------------------------------------------

    def dispatch(self, req: InvokeRequest) -> dict:
        """Route to the first registered agent for the capability.

        Returns {"result", "agent", "duration_ms"}; the caller's payload object
        is never mutated. Raises NoAgentForCapability, AgentTimeout, or the
        error the downstream agent reported.
        """
        entry = self.registry.entry_for_capability(req.capability)
        if entry is None:
            raise NoAgentForCapability(f"no agent registered for capability {req.capability!r}")
        if self.events.known(req.task_id):
            raise ValidationError(f"task id {req.task_id!r} was already used")
        payload = self.normalize(req.payload, req.context)
        self.events.publish(
            req.task_id, EVENT_STARTED, {"capability": req.capability, "agent": entry.card.name}
        )
        t0 = self.clock()
        try:
            result = self._call(entry, payload, req.context)
        except Exception as e:
            self.events.publish(
                req.task_id, EVENT_ERROR, {"type": type(e).__name__, "message": str(e)}
            )
            raise
        duration = self.clock() - t0
        self.events.publish(
            req.task_id,
            EVENT_RESULT,
            {"agent": entry.card.name, "duration_ms": duration, "summary": _summarize(result)},
        )
        return {"result": result, "agent": entry.card.name, "duration_ms": duration}

    def _call(self, entry: RegistryEntry, payload: dict, context: dict) -> dict:
        if entry.handler is not None:
            return entry.handler.run(payload, context)
        import httpx

        url = entry.card.endpoint.rstrip("/") + "/run"
        try:
            resp = httpx.post(url, json={"payload": payload, "context": context}, timeout=self.timeout_s)
        except httpx.TimeoutException as e:
            raise AgentTimeout(f"agent {entry.card.name!r} timed out: {e}") from e
        body = resp.json()
        if resp.status_code != 200 or "error" in body:
            raise _error_from_wire(body.get("error", {"message": f"HTTP {resp.status_code}"}))
        return body.get("result", {})

    # -- postprocess chaining -----------------------------------------------------

    def build_chain_requests(self, card: AgentCard, output: dict, context: dict) -> list[InvokeRequest]:
        """Requests for every auto-chain rule whose trigger matches the output.

        Rules whose input mapping references a missing output field are
        skipped with an Error event, and chaining continues.
        """
        requests = []
        for rule in card.postprocess_rules:
            if not rule.auto_chain or not rule.trigger.matches(output):
                continue
            payload = {}
            try:
                for out_field, in_field in rule.input_mapping.items():
                    payload[in_field] = copy.deepcopy(_lookup(output, out_field))
            except KeyError as e:
                task_id = self.new_task_id("chain")
                self.events.publish(
                    task_id,
                    EVENT_ERROR,
                    {
                        "type": ChainMappingError.__name__,
                        "message": f"rule for {rule.next_capability!r} references missing output field {e}",
                    },
                )
                continue
            requests.append(
                InvokeRequest(
                    task_id=self.new_task_id("chain"),
                    capability=rule.next_capability,
                    payload=payload,
                    context=dict(context),
                )
            )
        return requests


def _summarize(result: dict) -> dict:
    """Small event-safe digest of an agent result."""
    if not isinstance(result, dict):
        return {"type": type(result).__name__}
    digest = {}
    for k, v in result.items():
        if isinstance(v, (str, int, float, bool)) or v is None:
            digest[k] = v
        elif isinstance(v, (list, dict)):
            digest[k] = f"<{type(v).__name__}:{len(v)}>"
    return digest
