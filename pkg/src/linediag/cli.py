"""Command-line surface: serve, run, synth, eval.

Exit codes: 0 success, 1 I/O error, 2 planning error, 3 agent failure.
ENGINE_SEED overrides the configured seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import AgentTimeout, NoAgentForCapability, UnplannableQuery, ValidationError

EXIT_OK = 0
EXIT_IO = 1
EXIT_PLANNING = 2
EXIT_AGENT = 3


def _seed(args) -> int:
    env = os.environ.get("ENGINE_SEED")
    return int(env) if env is not None else args.seed


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="linediag", description="multi-agent causal diagnostics engine")
    sub = p.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="start registry, agents, and engine API")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--catalog", required=True)
    serve.add_argument("--rules", default=None)
    serve.add_argument("--planner-url", default=None)
    serve.add_argument("--in-process", action="store_true", default=False,
                       help="host all agents in this process instead of per-agent HTTP services")
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--dashboard-dir", default=None)
    serve.add_argument("--out", default=None, help="directory for persisted workflow states")

    run = sub.add_parser("run", help="run one diagnostic query")
    run.add_argument("--query", required=True)
    run.add_argument("--data", default=None)
    run.add_argument("--out", default=None, help="path for the final workflow state document")
    run.add_argument("--standalone", action="store_true", default=False,
                     help="run without a server (in-process agents)")
    run.add_argument("--server", default=None, help="engine URL when not standalone")
    run.add_argument("--catalog", default=None)
    run.add_argument("--rules", default=None)
    run.add_argument("--seed", type=int, default=0)

    synth = sub.add_parser("synth", help="generate a synthetic grinding-line dataset")
    synth.add_argument("--stages", type=int, default=4)
    synth.add_argument("--rows", type=int, default=1000)
    synth.add_argument("--variables", type=int, default=None)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--intervene", default=None,
                       help="node:shift:first_row:last_row, e.g. SetAngle_3:4:900:999")

    ev = sub.add_parser("eval", help="run a scripted workflow suite")
    ev.add_argument("--suite", default=None, help="suite JSON (defaults to the shipped 9-workflow suite)")
    ev.add_argument("--out", default=None, help="path for the JSON report")
    ev.add_argument("--workdir", default=None, help="directory for generated fixtures")
    ev.add_argument("--seed", type=int, default=42)
    return p


def cmd_serve(args) -> int:
    from .server import EngineConfig, serve

    config = EngineConfig(
        port=args.port,
        host=args.host,
        catalog_path=args.catalog,
        rules_path=args.rules,
        planner_url=args.planner_url,
        seed=_seed(args),
        in_process=args.in_process,
        dashboard_dir=args.dashboard_dir,
        out_dir=args.out,
    )
    try:
        config.validate()
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    serve(config)
    return EXIT_OK


def _print_trace(state_dict: dict) -> None:
    print(f"{'seq':>3}  {'capability':<16} {'status':<8} {'cache':<5} agent")
    for t in state_dict.get("trace", []):
        cache = "hit" if t.get("cache_hit") else "-"
        print(f"{t['seq']:>3}  {t['capability']:<16} {t['status']:<8} {cache:<5} {t.get('agent', '')}")


def cmd_run(args) -> int:
    if args.data and not Path(args.data).exists():
        print(f"error: data file not found: {args.data}", file=sys.stderr)
        return EXIT_IO

    if args.server and not args.standalone:
        return _run_remote(args)

    if not args.catalog:
        print("error: --catalog is required for standalone runs", file=sys.stderr)
        return EXIT_IO
    from .server import EngineConfig, build_runtime

    try:
        runtime = build_runtime(
            EngineConfig(catalog_path=args.catalog, rules_path=args.rules, seed=_seed(args))
        )
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        state = runtime.engine.run(args.query, args.data)
    except UnplannableQuery as e:
        print(f"planning error: {e}\n{json.dumps(e.diagnostics, indent=2)}", file=sys.stderr)
        return EXIT_PLANNING
    except (NoAgentForCapability, AgentTimeout) as e:
        print(f"agent error: {e}", file=sys.stderr)
        return EXIT_AGENT
    doc = state.to_dict()
    _print_trace(doc)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2, default=str))
        print(f"state written to {args.out}")
    return EXIT_OK


def _run_remote(args) -> int:
    import time

    import httpx

    base = args.server.rstrip("/")
    try:
        resp = httpx.post(base + "/workflows", json={"query": args.query, "data_ref": args.data}, timeout=30)
        resp.raise_for_status()
    except Exception as e:
        print(f"error: engine unreachable: {e}", file=sys.stderr)
        return EXIT_IO
    workflow_id = resp.json()["workflow_id"]
    while True:
        doc = httpx.get(f"{base}/workflows/{workflow_id}", timeout=30).json()
        if doc["status"] != "running":
            break
        time.sleep(0.2)
    _print_trace(doc["state"])
    if doc["status"] == "failed":
        print("workflow failed", file=sys.stderr)
        return EXIT_AGENT
    if args.out:
        Path(args.out).write_text(json.dumps(doc["state"], indent=2, default=str))
    return EXIT_OK


def cmd_synth(args) -> int:
    from .rules import default_ruleset
    from .synth import Intervention, SyntheticSpec, generate

    interventions = []
    if args.intervene:
        try:
            node, shift, first, last = args.intervene.split(":")
            interventions.append(Intervention.make(node, float(shift), range(int(first), int(last) + 1)))
        except ValueError:
            print("error: --intervene expects node:shift:first_row:last_row", file=sys.stderr)
            return EXIT_IO
    spec = SyntheticSpec(stages=args.stages, n_variables=args.variables, interventions=interventions)
    try:
        gd = generate(spec, args.rows, seed=_seed(args))
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gd.table.to_csv(out / "data.csv")
    (out / "catalog.json").write_text(json.dumps(gd.catalog.to_dict(), indent=2))
    (out / "rules.json").write_text(json.dumps(default_ruleset().to_dict(), indent=2))
    (out / "graph.json").write_text(json.dumps(gd.graph.to_dict(), indent=2))
    (out / "labels.json").write_text(json.dumps(gd.labels, indent=2))
    print(f"wrote data.csv, catalog.json, rules.json, graph.json, labels.json to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    import tempfile

    from .engine import Engine  # noqa: F401  (import check before heavy work)
    from .harness import default_suite_path, load_suite, run_suite, write_fixture_pair
    from .server import EngineConfig, build_runtime

    suite_path = args.suite or default_suite_path()
    try:
        rows = load_suite(suite_path)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"error: cannot read suite: {e}", file=sys.stderr)
        return EXIT_IO

    workdir = args.workdir or tempfile.mkdtemp(prefix="linediag-eval-")
    fixtures = write_fixture_pair(workdir, seed=_seed(args))
    runtime = build_runtime(EngineConfig(catalog_path=fixtures["catalog"], rules_path=fixtures["rules"]))
    result = run_suite(runtime.engine, rows, data_map={k: v for k, v in fixtures.items() if k.startswith("$")})
    print(result.to_text())
    if args.out:
        Path(args.out).write_text(json.dumps(result.to_dict(), indent=2))
        print(f"report written to {args.out}")
    all_ok = all(c["success_pct"] == 100.0 for c in result.criteria.values())
    return EXIT_OK if all_ok else EXIT_AGENT


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"serve": cmd_serve, "run": cmd_run, "synth": cmd_synth, "eval": cmd_eval}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
