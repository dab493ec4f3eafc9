"""Command-line surface: the human lever plus operations and simulation tools.

Exit codes: 0 success, 1 operation failure, 2 usage error.
All output is line-oriented and stable for machine parsing.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from buildherd import codec
from buildherd.errors import BuildherdError
from buildherd.history import HistoryStore, MetricsReport
from buildherd.model import classify, validate_policy
from buildherd.sim import brute_force_replay, report_to_json, simulate, trace_from_records


def _parse_policy(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise codec.CodecError(f"policy is not valid JSON: {exc}") from exc
    return codec.policy_from_json(doc)


def _print_metrics(metrics: MetricsReport) -> None:
    print(f"n_builds={metrics.n_builds}")
    print(f"n_changes={metrics.n_changes}")
    if metrics.changes_per_build is None:
        print("changes_per_build=none")
    else:
        print(f"changes_per_build={metrics.changes_per_build:.3f}")
    if metrics.mean_latency_ms is None:
        print("mean_latency_ms=none")
        print("max_latency_ms=none")
    else:
        print(f"mean_latency_ms={metrics.mean_latency_ms}")
        print(f"max_latency_ms={metrics.max_latency_ms}")
    print(f"max_queue_depth={metrics.max_queue_depth}")


def _cmd_classify(args: argparse.Namespace) -> int:
    policy = _parse_policy(args.policy)
    violations = validate_policy(policy)
    if violations:
        for violation in violations:
            print(f"invalid policy: {violation}", file=sys.stderr)
        return 1
    label = classify(policy)
    maturity = label.maturity.value if label.maturity else "none"
    kind = label.trigger_kind.value if label.trigger_kind else "none"
    print(f"mode={label.mode.value} maturity={maturity} trigger={kind}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    trace = trace_from_records(codec.load_trace(args.trace))
    policy = _parse_policy(args.policy)
    runner = brute_force_replay if args.oracle else simulate
    report = runner(trace, policy, args.duration, horizon_ms=args.horizon)
    _print_metrics(report.metrics)
    if args.out:
        Path(args.out).write_text(
            json.dumps(report_to_json(report), indent=2) + "\n", encoding="utf-8"
        )
        print(f"report written to {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from buildherd.service import load_config, serve_forever

    config = load_config(args.config)
    print(f"listening on {config.listen_host}:{config.listen_port}")
    serve_forever(config)
    return 0


def _cmd_build(args: argparse.Namespace) -> int:
    if args.config:
        from buildherd.service import BuildherdServer, load_config

        server = BuildherdServer(load_config(args.config))
        receipt = server.command_build(args.project, args.actor)
        print(f"accepted project={receipt['project']} cause=commanded actor={receipt['actor']}")
        runs = server.runs(args.project)
        if runs:
            last = runs[-1]
            print(f"run_id={last['run_id']} outcome={last['outcome']['result']}")
        return 0

    import requests

    response = requests.post(
        f"http://{args.server}/projects/{args.project}/build",
        json={"actor": args.actor},
        timeout=10,
    )
    if response.status_code != 202:
        print(f"build request failed: {response.status_code} {response.text}", file=sys.stderr)
        return 1
    receipt = response.json()
    print(f"accepted project={receipt['project']} cause=commanded actor={receipt['actor']}")
    return 0


def _cmd_status(args: argparse.Namespace) -> int:
    import requests

    response = requests.get(f"http://{args.server}/projects/{args.project}/status", timeout=10)
    if response.status_code != 200:
        print(f"status failed: {response.status_code} {response.text}", file=sys.stderr)
        return 1
    doc = response.json()
    label = doc["classification"]
    print(
        f"project={doc['project']} mode={label['mode']} "
        f"maturity={label['maturity'] or 'none'} trigger={label['trigger_kind'] or 'none'}"
    )
    print(f"queue_depth={doc['queue_depth']} running={str(doc['running']).lower()}")
    return 0


def _cmd_history(args: argparse.Namespace) -> int:
    if args.file:
        store = HistoryStore(args.file)
        runs = [codec.run_to_json(r) for r in store.query(project=args.project, outcome=args.outcome)]
    else:
        import requests

        url = f"http://{args.server}/projects/{args.project}/runs"
        params = {"outcome": args.outcome} if args.outcome else None
        response = requests.get(url, params=params, timeout=10)
        if response.status_code != 200:
            print(f"history failed: {response.status_code} {response.text}", file=sys.stderr)
            return 1
        runs = response.json()["runs"]
    for run in runs:
        print(
            f"run_id={run['run_id']} cause={run['cause']['kind']} "
            f"outcome={run['outcome']['result']} started_at={run['started_at']} "
            f"ended_at={run['ended_at']} changes={len(run['changes'])}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="buildherd")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the CI server")
    serve.add_argument("--config", required=True)
    serve.set_defaults(func=_cmd_serve)

    build = sub.add_parser("build", help="command an integration (the lever)")
    build.add_argument("project")
    build.add_argument("--server", default="127.0.0.1:8642")
    build.add_argument("--config", help="run in-process against this config instead")
    build.add_argument("--actor", default="cli")
    build.set_defaults(func=_cmd_build)

    classify_cmd = sub.add_parser("classify", help="print the taxonomy label of a policy")
    classify_cmd.add_argument("--policy", required=True, help="policy JSON")
    classify_cmd.set_defaults(func=_cmd_classify)

    status = sub.add_parser("status", help="project status from a running server")
    status.add_argument("project")
    status.add_argument("--server", default="127.0.0.1:8642")
    status.set_defaults(func=_cmd_status)

    history = sub.add_parser("history", help="list recorded runs")
    history.add_argument("project")
    history.add_argument("--server", default="127.0.0.1:8642")
    history.add_argument("--file", help="read this history file instead of a server")
    history.add_argument("--outcome", choices=["success", "failed", "errored"])
    history.set_defaults(func=_cmd_history)

    simulate_cmd = sub.add_parser("simulate", help="simulate a policy over a commit trace")
    simulate_cmd.add_argument("--trace", required=True)
    simulate_cmd.add_argument("--policy", required=True, help="policy JSON")
    simulate_cmd.add_argument("--duration", type=int, required=True, help="build duration in ms")
    simulate_cmd.add_argument("--horizon", type=int, help="simulation horizon in ms")
    simulate_cmd.add_argument("--oracle", action="store_true", help="use the per-tick replay")
    simulate_cmd.add_argument("--out", help="write the full report JSON here")
    simulate_cmd.set_defaults(func=_cmd_simulate)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (BuildherdError, codec.CodecError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
