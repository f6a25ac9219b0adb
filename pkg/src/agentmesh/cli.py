"""Command line front door.

Every subcommand embeds the runtime directly: no server needs to be
running, and state (traces, bank ledger, prompt versions) lives under
--data-dir, so separate invocations see each other's work. `--json`
prints exactly the payload the HTTP API would return for the same
operation.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

from .config import build_runtime
from .errors import AgentMeshError, ConfigError
from .runtime import Runtime
from .tracer import export_dot, normalize_graph, structure_checksum

DEFAULT_DATA_DIR = "agentmesh_data"


def _print_json(data: Any) -> None:
    print(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False))


def _runtime(args: argparse.Namespace, *, need_config: bool) -> Runtime:
    data_dir = args.data_dir or DEFAULT_DATA_DIR
    if args.config:
        return build_runtime(args.config, data_dir=args.data_dir)
    if need_config:
        raise ConfigError("this command needs --config")
    return Runtime(data_dir)


def _parse_value(raw: str) -> Any:
    """JSON when it parses, raw string otherwise, so --set x=3 is a number
    and --set q=hello is text."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _parse_kv(pairs: list[str] | None, flag: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"{flag} expects key=value, got {pair!r}")
        out[key] = _parse_value(value)
    return out


# -- command bodies -------------------------------------------------------------


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    runtime = _runtime(args, need_config=True)
    host, _, port_text = args.bind.partition(":")
    port = int(port_text) if port_text else args.port
    print(f"serving on http://{host}:{port}", file=sys.stderr)
    serve(runtime, host=host, port=port, frontend_dir=args.frontend)
    return 0


def cmd_chat(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=True)
    result = runtime.chat(args.query, agent=args.agent, group_id=args.group)
    if args.json:
        _print_json(result.as_dict())
    else:
        answer = result.answer
        if isinstance(answer, (dict, list)):
            answer = json.dumps(answer, ensure_ascii=False)
        print(answer)
        print(
            f"trace: {result.trace_id} {result.version_id} [{result.status}]",
            file=sys.stderr,
        )
    return 0 if result.status == "ok" else 1


def _print_tree(node: dict[str, Any], depth: int = 0) -> None:
    dur = f"{node['duration_ms']}ms" if node["duration_ms"] is not None else "-"
    print(
        f"{'  ' * depth}{node['name']} [{node['kind']}] {node['status']} {dur}"
        f"  ({node['call_id']})"
    )
    for child in node["children"]:
        _print_tree(child, depth + 1)


def cmd_trace_list(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=False)
    traces = runtime.store.list_traces()
    if args.json:
        _print_json({"traces": traces})
    else:
        for t in traces:
            print(f"{t['trace_id']}  versions={','.join(t['versions'])}")
    return 0


def cmd_trace_show(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=False)
    store = runtime.store
    vid = args.version or store.latest_version(args.trace_id)

    if args.dot:
        graph = store.graph(args.trace_id, vid)
        if args.json:
            _print_json({"version_id": graph.version_id, "dot": export_dot(graph)})
        else:
            print(export_dot(graph))
        return 0

    if args.timing:
        payload = {
            "trace_id": args.trace_id,
            "version_id": vid,
            "calls": store.timing(args.trace_id, vid),
        }
        if args.json:
            _print_json(payload)
        else:
            for row in payload["calls"]:
                print(
                    f"{row['name']:<24} total={row['total_ms']:>6}ms "
                    f"self={row['self_ms']:>6}ms llm={row['llm_ms']:>6}ms "
                    f"tool={row['tool_ms']:>6}ms agent={row['agent_ms']:>6}ms"
                )
        return 0

    if args.events:
        payload = {
            "trace_id": args.trace_id,
            "version_id": vid,
            "sealed": store.is_sealed(args.trace_id, vid),
            "events": store.events(args.trace_id, vid),
        }
        if args.json:
            _print_json(payload)
        else:
            for ev in payload["events"]:
                print(
                    f"{ev['seq']:>4} {ev['node']:<20} "
                    f"{ev['stage']}/{ev['phase']} {ev['status']}"
                )
        return 0

    graph = store.graph(args.trace_id, vid)
    if args.json:
        _print_json(
            {
                "trace_id": graph.trace_id,
                "version_id": graph.version_id,
                "sealed": store.is_sealed(args.trace_id, graph.version_id),
                "roots": [r.as_dict() for r in graph.roots],
                "normalized": normalize_graph(graph),
                "checksum": structure_checksum(graph),
            }
        )
    else:
        print(f"trace {graph.trace_id} version {graph.version_id}")
        for root in graph.roots:
            _print_tree(root.as_dict())
    return 0


def cmd_trace_versions(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=False)
    tree = runtime.store.version_tree(args.trace_id)
    if args.json:
        _print_json(tree)
    else:
        for vid in sorted(tree["versions"], key=lambda v: int(v[1:])):
            meta = tree["versions"][vid]
            parent = meta["parent"] or "-"
            sealed = "sealed" if meta["sealed"] else "running"
            origin = meta.get("meta", {}).get("origin", "root")
            print(f"{vid:<4} parent={parent:<4} {sealed:<8} {origin}")
    return 0


def cmd_trace_regenerate(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=True)
    pairs = _parse_kv(args.set, "--set")
    overrides: dict[str, Any] = {}
    for key, value in pairs.items():
        if key in ("system_prompt", "model_binding"):
            overrides[key] = value
        else:
            overrides.setdefault("arguments", {})[key] = value
    result = runtime.regenerate(
        args.trace_id,
        args.call_id,
        version_id=args.version,
        overrides=overrides or None,
    )
    if args.json:
        data = result.as_dict()
        data["new_version_id"] = result.version_id
        _print_json(data)
    else:
        print(f"new version: {result.version_id} [{result.status}]")
        answer = result.answer
        if isinstance(answer, (dict, list)):
            answer = json.dumps(answer, ensure_ascii=False)
        print(answer)
    return 0 if result.status == "ok" else 1


def cmd_bank_deposit(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=False)
    record = runtime.bank.deposit_trace(
        args.trace_id, args.version, call_id=args.call, template=args.template
    )
    if args.json:
        _print_json(record)
    else:
        print(
            f"{record['record_id']} {record['priority']} {record['state']} "
            f"x{record['occurrence_count']}"
        )
    return 0


def cmd_bank_list(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=False)
    records = runtime.bank.list_records(state=args.state, priority=args.priority)
    if args.json:
        _print_json({"records": records})
    else:
        for r in records:
            print(
                f"{r['record_id']}  {r['priority']}  {r['state']:<10} "
                f"x{r['occurrence_count']}  {r['trace_id']}"
            )
    return 0


def cmd_bank_show(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=False)
    _print_json(runtime.bank.get(args.record_id))
    return 0


def cmd_bank_annotate(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=False)
    payload = _parse_kv(args.field, "--field")
    if not payload:
        raise ConfigError("annotate needs at least one --field key=value")
    record = runtime.bank.annotate(
        args.record_id, payload, template_id=args.template, note=args.note
    )
    if args.json:
        _print_json(record)
    else:
        print(f"{record['record_id']} -> {record['state']}")
    return 0


def cmd_bank_audit(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=False)
    verdict = "approve" if args.approve else "reject"
    record = runtime.bank.audit(args.record_id, verdict, note=args.note)
    if args.json:
        _print_json(record)
    else:
        print(f"{record['record_id']} -> {record['state']}")
    return 0


def cmd_bank_reopen(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=False)
    record = runtime.bank.reopen(args.record_id, args.note)
    if args.json:
        _print_json(record)
    else:
        print(f"{record['record_id']} -> {record['state']}")
    return 0


def cmd_bank_export(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=False)
    export = runtime.bank.export_knowledge(
        priority=args.priority, template=args.template, since_ms=args.since
    )
    if args.out:
        # knowledge export file: one sample per line
        lines = [
            json.dumps(s, sort_keys=True, ensure_ascii=False) for s in export["samples"]
        ]
        Path(args.out).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        print(f"wrote {export['count']} samples to {args.out}", file=sys.stderr)
        if args.json:
            _print_json(export)
        return 0
    if args.json:
        _print_json(export)
    else:
        for sample in export["samples"]:
            print(f"{sample['sample_id']}  {sample['priority']}  {sample['payload']}")
    return 0


def cmd_prompt_show(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=True)
    chain = runtime.bank.prompt_chain(args.agent)
    if args.json:
        _print_json(chain)
    else:
        print(f"agent {chain['agent']} active={chain['active']}")
        for v in chain["versions"]:
            mark = "*" if v["applied"] else " "
            print(f"{mark} {v['version']}  {v['source'].get('kind', '?')}")
    return 0


def cmd_prompt_optimize(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=True)
    version = runtime.bank.optimize_prompt(args.agent, runtime.hub, args.binding)
    if args.json:
        _print_json(version)
    else:
        print(f"drafted {version['version']} for {args.agent}")
        print(version["text"])
    return 0


def cmd_prompt_apply(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=True)
    result = runtime.bank.apply_prompt(args.agent, args.version)
    if args.json:
        _print_json(result)
    else:
        print(f"{args.agent} now uses {result['active']}")
    return 0


def cmd_topology(args: argparse.Namespace) -> int:
    runtime = _runtime(args, need_config=True)
    report = runtime.topology_report()
    errors = [i for i in report["issues"] if i["severity"] == "error"]
    if args.json:
        _print_json(report)
        return 1 if errors else 0
    print(f"entrypoint: {report['entrypoint'] or '-'}")
    for node in report["nodes"]:
        callees = ",".join(node["permitted_callees"]) or "-"
        print(f"{node['name']:<20} {node['kind']:<6} -> {callees}")
    for issue in report["issues"]:
        print(f"[{issue['severity']}] {issue['kind']}: {issue['subject']} ({issue['detail']})")
    return 1 if errors else 0


# -- parser ------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="mesh config file (json or yaml)")
    parser.add_argument("--data-dir", help=f"state directory (default {DEFAULT_DATA_DIR})")
    parser.add_argument("--json", action="store_true", help="print the API payload as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agentmesh", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    _add_common(p)
    p.add_argument("--bind", default="127.0.0.1", help="host or host:port (loopback by default)")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--frontend", help="directory with built UI assets")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("chat", help="send one query through the mesh")
    _add_common(p)
    p.add_argument("--query", required=True)
    p.add_argument("--agent", help="entry agent (default: configured entrypoint)")
    p.add_argument("--group", help="session group id")
    p.set_defaults(fn=cmd_chat)

    trace = sub.add_parser("trace", help="inspect and regenerate traces")
    trace_sub = trace.add_subparsers(dest="trace_command", required=True)

    p = trace_sub.add_parser("list", help="list stored traces")
    _add_common(p)
    p.set_defaults(fn=cmd_trace_list)

    p = trace_sub.add_parser("show", help="show one trace")
    _add_common(p)
    p.add_argument("trace_id")
    p.add_argument("--version")
    view = p.add_mutually_exclusive_group()
    view.add_argument("--dot", action="store_true", help="DOT call graph")
    view.add_argument("--timing", action="store_true", help="timing decomposition")
    view.add_argument("--events", action="store_true", help="raw event log")
    p.set_defaults(fn=cmd_trace_show)

    p = trace_sub.add_parser("versions", help="show the version tree")
    _add_common(p)
    p.add_argument("trace_id")
    p.set_defaults(fn=cmd_trace_versions)

    p = trace_sub.add_parser("regenerate", help="re-run a trace from one call")
    _add_common(p)
    p.add_argument("trace_id")
    p.add_argument("call_id", help="call to re-execute")
    p.add_argument("--version", help="base version (default: latest)")
    p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override: system_prompt / model_binding keys apply directly, "
        "anything else becomes an argument override (repeatable)",
    )
    p.set_defaults(fn=cmd_trace_regenerate)

    bank = sub.add_parser("bank", help="review trajectories, export knowledge")
    bank_sub = bank.add_subparsers(dest="bank_command", required=True)

    p = bank_sub.add_parser("deposit", help="deposit a trace into the bank")
    _add_common(p)
    p.add_argument("trace_id")
    p.add_argument("--version")
    p.add_argument("--call", help="deposit only the subtree rooted at this call")
    p.add_argument("--template", default="qa")
    p.set_defaults(fn=cmd_bank_deposit)

    p = bank_sub.add_parser("list", help="list bank records")
    _add_common(p)
    p.add_argument("--state", choices=["pending", "annotated", "approved", "rejected"])
    p.add_argument("--priority", choices=["P0", "P1", "P2"])
    p.set_defaults(fn=cmd_bank_list)

    p = bank_sub.add_parser("show", help="dump one record")
    _add_common(p)
    p.add_argument("record_id")
    p.set_defaults(fn=cmd_bank_show)

    p = bank_sub.add_parser("annotate", help="attach a template annotation")
    _add_common(p)
    p.add_argument("record_id")
    p.add_argument("--template", help="template id (default: the record's)")
    p.add_argument(
        "--field",
        action="append",
        metavar="KEY=VALUE",
        help="annotation field (repeatable); values parse as JSON when possible",
    )
    p.add_argument("--note")
    p.set_defaults(fn=cmd_bank_annotate)

    p = bank_sub.add_parser("audit", help="approve or reject a record")
    _add_common(p)
    p.add_argument("record_id")
    verdict = p.add_mutually_exclusive_group(required=True)
    verdict.add_argument("--approve", action="store_true")
    verdict.add_argument("--reject", action="store_true")
    p.add_argument("--note")
    p.set_defaults(fn=cmd_bank_audit)

    p = bank_sub.add_parser("reopen", help="send a rejected record back to pending")
    _add_common(p)
    p.add_argument("record_id")
    p.add_argument("--note")
    p.set_defaults(fn=cmd_bank_reopen)

    p = bank_sub.add_parser("export", help="export approved knowledge")
    _add_common(p)
    p.add_argument("--priority", choices=["P0", "P1", "P2"])
    p.add_argument("--template")
    p.add_argument("--since", type=int, help="minimum deposit timestamp (ms)")
    p.add_argument("-o", "--out", help="write JSONL samples to a file")
    p.set_defaults(fn=cmd_bank_export)

    prompt = sub.add_parser("prompt", help="inspect and tune agent prompts")
    prompt_sub = prompt.add_subparsers(dest="prompt_command", required=True)

    p = prompt_sub.add_parser("show", help="show an agent's prompt versions")
    _add_common(p)
    p.add_argument("agent")
    p.set_defaults(fn=cmd_prompt_show)

    p = prompt_sub.add_parser("optimize", help="draft a new prompt from approved knowledge")
    _add_common(p)
    p.add_argument("agent")
    p.add_argument("--binding", help="model binding (default: the agent's own)")
    p.set_defaults(fn=cmd_prompt_optimize)

    p = prompt_sub.add_parser("apply", help="activate a drafted prompt version")
    _add_common(p)
    p.add_argument("agent")
    p.add_argument("--version", required=True)
    p.set_defaults(fn=cmd_prompt_apply)

    p = sub.add_parser("topology", help="validate and print the mesh wiring")
    _add_common(p)
    p.set_defaults(fn=cmd_topology)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except AgentMeshError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
