"""HTTP surface: central server (registry + engine API + SSE) and agent apps.

In-process mode registers agents with direct handlers; multi-service mode
hosts each agent app on its own port and the CPA talks to them over HTTP.
Either way the wire contract is identical.
"""

from __future__ import annotations

import asyncio
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import HTMLResponse, JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from . import errors as err
from .agents import build_agents
from .cards import AgentCard
from .catalog import VariableCatalog, load_catalog
from .engine import Engine
from .errors import ConflictError, InvalidCard, NoAgentForCapability, UnknownTask, ValidationError
from .protocol import CPA, EventStore, InvokeRequest, Registry
from .rules import RuleSet, default_ruleset, load_rules


@dataclass
class EngineConfig:
    port: int = 8000
    host: str = "127.0.0.1"
    data_dir: str = "."
    catalog_path: str | None = None
    rules_path: str | None = None
    planner_url: str | None = None
    seed: int = 0
    timeout_s: float = 120.0
    out_dir: str | None = None
    in_process: bool = True
    dashboard_dir: str | None = None

    def validate(self) -> None:
        if not 1024 <= self.port <= 65535:
            raise ValidationError(f"port must be in [1024, 65535], got {self.port}")
        if self.catalog_path and not Path(self.catalog_path).exists():
            raise ValidationError(f"catalog file not found: {self.catalog_path}")
        if self.rules_path and not Path(self.rules_path).exists():
            raise ValidationError(f"rules file not found: {self.rules_path}")


@dataclass
class Runtime:
    config: EngineConfig
    catalog: VariableCatalog
    rules: RuleSet
    registry: Registry
    events: EventStore
    cpa: CPA
    engine: Engine
    agents: list = field(default_factory=list)
    agent_servers: list = field(default_factory=list)

    def shutdown(self) -> None:
        for server in self.agent_servers:
            server.should_exit = True


def build_runtime(config: EngineConfig, clock=None) -> Runtime:
    """Registry + CPA + engine with all six agents registered (Stage 1)."""
    config.validate()
    if not config.catalog_path:
        raise ValidationError("a catalog path is required")
    catalog = load_catalog(config.catalog_path)
    rules = load_rules(config.rules_path) if config.rules_path else default_ruleset()
    registry = Registry()
    events = EventStore()
    kwargs = {"timeout_s": config.timeout_s}
    if clock is not None:
        kwargs["clock"] = clock
    cpa = CPA(registry, events, **kwargs)
    engine = Engine(
        registry,
        events,
        cpa,
        catalog,
        rules,
        seed=config.seed,
        planner_url=config.planner_url,
        out_dir=config.out_dir,
    )
    agents = build_agents(catalog, rules, seed=config.seed)
    runtime = Runtime(config, catalog, rules, registry, events, cpa, engine, agents)
    if config.in_process:
        for agent in agents:
            registry.register(agent.card(), handler=agent)
    else:
        _start_agent_services(runtime)
    return runtime


# ---------------------------------------------------------------------------
# Agent microservice app
# ---------------------------------------------------------------------------


def make_agent_app(agent, card: AgentCard) -> FastAPI:
    app = FastAPI(title=card.name)

    @app.get("/card")
    def get_card():
        return card.to_dict()

    @app.post("/run")
    async def run(request: Request):
        body = await request.json()
        try:
            result = agent.run(body.get("payload", {}), body.get("context", {}))
            return {"result": result}
        except Exception as e:  # agent errors travel as typed payloads
            return JSONResponse(
                status_code=500, content={"error": {"type": type(e).__name__, "message": str(e)}}
            )

    return app


def start_uvicorn_thread(app: FastAPI, host: str, port: int):
    """Run a uvicorn server on a daemon thread; returns the server handle."""
    import uvicorn

    server = uvicorn.Server(uvicorn.Config(app, host=host, port=port, log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    import time

    deadline = time.monotonic() + 15
    while not server.started and time.monotonic() < deadline:
        time.sleep(0.02)
    if not server.started:
        raise RuntimeError(f"server on port {port} failed to start")
    return server


def _start_agent_services(runtime: Runtime) -> None:
    host = runtime.config.host
    port = runtime.config.port
    for offset, agent in enumerate(runtime.agents, start=1):
        agent_port = port + offset
        endpoint = f"http://{host}:{agent_port}"
        card = agent.card(endpoint=endpoint)
        app = make_agent_app(agent, card)
        server = start_uvicorn_thread(app, host, agent_port)
        runtime.agent_servers.append(server)
        runtime.registry.register(card, handler=None)


# ---------------------------------------------------------------------------
# Central server app
# ---------------------------------------------------------------------------


def _http_error(e: Exception) -> HTTPException:
    status = 500
    if isinstance(e, (InvalidCard, ValidationError)):
        status = 400
    elif isinstance(e, ConflictError):
        status = 409
    elif isinstance(e, (UnknownTask, KeyError, NoAgentForCapability)):
        status = 404
    return HTTPException(status_code=status, detail={"type": type(e).__name__, "message": str(e)})


def make_server_app(runtime: Runtime) -> FastAPI:
    app = FastAPI(title="linediag")
    engine = runtime.engine
    events = runtime.events
    registry = runtime.registry

    @app.get("/health")
    def health():
        return {"status": "ok", "agents": len(registry)}

    @app.post("/register")
    async def register(request: Request):
        body = await request.json()
        try:
            card = AgentCard.from_dict(body)
            agent_id = registry.register(card)
        except Exception as e:
            raise _http_error(e)
        return {"agent_id": agent_id}

    @app.get("/agents")
    def agents():
        return {"agents": [c.to_dict() for c in registry.list_agents()]}

    @app.post("/invoke")
    async def invoke(request: Request):
        body = await request.json()
        task_id = body.get("task_id") or runtime.cpa.new_task_id()
        req = InvokeRequest(
            task_id=task_id,
            capability=body.get("capability", ""),
            payload=body.get("payload", {}),
            context=body.get("context", {}),
        )
        try:
            out = await asyncio.to_thread(runtime.cpa.dispatch, req)
        except Exception as e:
            if isinstance(e, NoAgentForCapability):
                raise _http_error(e)
            return {"task_id": task_id, "status": "Error", "error": {"type": type(e).__name__, "message": str(e)}}
        return {"task_id": task_id, "status": "Success", "result": out["result"],
                "agent": out["agent"], "duration_ms": out["duration_ms"]}

    @app.get("/events")
    async def sse(task_id: str):
        if not events.known(task_id):
            raise _http_error(UnknownTask(f"no events for task {task_id!r}"))

        async def generator():
            seq = 0
            while True:
                try:
                    fresh, done = events.after(task_id, seq)
                except UnknownTask:
                    return
                for ev in fresh:
                    seq = ev.seq
                    yield f"data: {json.dumps(ev.to_dict())}\n\n"
                if done and not fresh:
                    return
                if not fresh:
                    await asyncio.sleep(0.05)

        return StreamingResponse(generator(), media_type="text/event-stream")

    @app.post("/workflows")
    async def submit_workflow(request: Request):
        body = await request.json()
        query = body.get("query", "")
        if not query.strip():
            raise _http_error(ValidationError("query must be non-empty"))
        data_ref = body.get("data_ref")
        workflow_id = engine.submit(query, data_ref)

        def runner():
            try:
                engine.run(query, data_ref, workflow_id=workflow_id)
            except Exception:
                pass  # recorded on the workflow record and event stream

        threading.Thread(target=runner, daemon=True).start()
        return {"workflow_id": workflow_id}

    @app.get("/workflows/{workflow_id}")
    def get_workflow(workflow_id: str):
        try:
            record = engine.get_workflow(workflow_id)
        except KeyError as e:
            raise _http_error(e)
        return {
            "workflow_id": workflow_id,
            "status": record.status,
            "template": record.template_id,
            "plan": record.initial_plan,
            "pruned": record.pruned,
            "state": record.state.to_dict(),
            "graph": record.current_graph(),
            "rejected": record.rejected_edges,
            "accepted": record.accepted_edges,
        }

    @app.get("/graphs/{workflow_id}")
    def get_graph(workflow_id: str):
        try:
            record = engine.get_workflow(workflow_id)
        except KeyError as e:
            raise _http_error(e)
        return {
            "graph": record.current_graph(),
            "rejected": record.rejected_edges,
            "accepted": record.accepted_edges,
        }

    @app.post("/graphs/{workflow_id}/edits")
    async def edit_graph(workflow_id: str, request: Request):
        body = await request.json()
        try:
            out = await asyncio.to_thread(
                engine.edit_graph, workflow_id, body.get("rejected", []), body.get("accepted", [])
            )
        except Exception as e:
            raise _http_error(e)
        return out

    @app.post("/recommendations/{workflow_id}/confirm")
    async def confirm(workflow_id: str, request: Request):
        body = await request.json()
        try:
            out = await asyncio.to_thread(
                engine.confirm_recommendation,
                workflow_id,
                int(body.get("index", 0)),
                int(body.get("trace_len", -1)),
            )
        except ValidationError as e:
            raise HTTPException(status_code=409, detail={"type": "Stale", "message": str(e)})
        except Exception as e:
            raise _http_error(e)
        return out

    dashboard = runtime.config.dashboard_dir
    if dashboard and Path(dashboard).is_dir():
        app.mount("/ui", StaticFiles(directory=dashboard, html=True), name="dashboard")

        @app.get("/", response_class=HTMLResponse)
        def index():
            return (Path(dashboard) / "index.html").read_text()

    return app


def serve(config: EngineConfig):
    """Blocking entry point for the serve command."""
    import uvicorn

    runtime = build_runtime(config)
    app = make_server_app(runtime)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    finally:
        runtime.shutdown()
