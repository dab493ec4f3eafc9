"""JSON encoding/decoding for policies, pipelines, runs, and traces.

Policy JSON mirrors the policy variants one-to-one with durations in integer
milliseconds, so config files, the CLI, and the wire format round-trip
without ambiguity.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Any

from buildherd.model import (
    BuildCause,
    BuildRequest,
    BuildRun,
    Change,
    Commanded,
    Errored,
    Failed,
    HookNotified,
    Hooked,
    Levered,
    Outcome,
    PollDetected,
    Polled,
    Revision,
    Schedule,
    ScheduleFire,
    Scheduled,
    Success,
    Triggered,
    TriggerPolicy,
)
from buildherd.pipeline import (
    CONTINUE,
    CONTINUE_ANYWAY,
    HALT,
    STOP_SUCCESS,
    BuildDefinition,
    BuildStep,
    ExecCommand,
    Goto,
    OnFailure,
    OnSuccess,
    StepResult,
    StepStatus,
    StubCommand,
)


class CodecError(ValueError):
    """Raised for malformed JSON documents."""


# ---------------------------------------------------------------- policies

def _minutes_to_hhmm(minute: int) -> str:
    return f"{minute // 60:02d}:{minute % 60:02d}"


def _hhmm_to_minutes(text: str) -> int:
    try:
        hours, minutes = text.split(":")
        value = int(hours) * 60 + int(minutes)
    except ValueError as exc:
        raise CodecError(f"bad time of day {text!r}, expected HH:MM") from exc
    if not 0 <= value < 24 * 60:
        raise CodecError(f"time of day {text!r} out of range")
    return value


def schedule_to_json(schedule: Schedule) -> dict[str, Any]:
    doc: dict[str, Any] = {}
    if schedule.daily_minutes:
        doc["daily_times"] = [_minutes_to_hhmm(m) for m in schedule.daily_minutes]
    if schedule.every_ms is not None:
        doc["every_ms"] = schedule.every_ms
    return doc


def schedule_from_json(doc: dict[str, Any]) -> Schedule:
    daily = tuple(_hhmm_to_minutes(t) for t in doc.get("daily_times", []))
    return Schedule(daily_minutes=daily, every_ms=doc.get("every_ms"))


def policy_to_json(policy: TriggerPolicy) -> dict[str, Any]:
    if isinstance(policy, Levered):
        return {"levered": {}}
    if isinstance(policy, Scheduled):
        return {"scheduled": schedule_to_json(policy.schedule)}
    if isinstance(policy, Triggered):
        if isinstance(policy.detection, Polled):
            detection: dict[str, Any] = {"polled": {"interval_ms": policy.detection.interval_ms}}
        else:
            detection = {"hooked": {}}
        return {"triggered": {**detection, "quiet_ms": policy.quiet_ms}}
    raise CodecError(f"not a policy: {policy!r}")


def policy_from_json(doc: dict[str, Any]) -> TriggerPolicy:
    if not isinstance(doc, dict) or len(doc) != 1:
        raise CodecError("policy document must have exactly one variant key")
    if "levered" in doc:
        return Levered()
    if "scheduled" in doc:
        return Scheduled(schedule=schedule_from_json(doc["scheduled"]))
    if "triggered" in doc:
        body = doc["triggered"]
        quiet = body.get("quiet_ms", 0)
        if "polled" in body:
            return Triggered(Polled(interval_ms=body["polled"]["interval_ms"]), quiet_ms=quiet)
        if "hooked" in body:
            return Triggered(Hooked(), quiet_ms=quiet)
        raise CodecError("triggered policy needs 'polled' or 'hooked'")
    raise CodecError(f"unknown policy variant: {sorted(doc)}")


# ---------------------------------------------------------------- pipelines

def _edge_to_json(edge: OnSuccess | OnFailure) -> Any:
    if isinstance(edge, Goto):
        return {"goto": edge.target}
    return edge


def _success_edge_from_json(value: Any) -> OnSuccess:
    if isinstance(value, dict) and "goto" in value:
        return Goto(value["goto"])
    if value in (CONTINUE, STOP_SUCCESS):
        return value
    raise CodecError(f"bad on_success edge: {value!r}")


def _failure_edge_from_json(value: Any) -> OnFailure:
    if isinstance(value, dict) and "goto" in value:
        return Goto(value["goto"])
    if value in (HALT, CONTINUE_ANYWAY):
        return value
    raise CodecError(f"bad on_failure edge: {value!r}")


def step_to_json(step: BuildStep) -> dict[str, Any]:
    doc: dict[str, Any] = {"name": step.name}
    if isinstance(step.command, StubCommand):
        doc["stub"] = {
            "result": step.command.result,
            "exit_code": step.command.exit_code,
            "duration_ms": step.command.duration_ms,
        }
    else:
        doc["run"] = list(step.command.argv)
    doc["on_success"] = _edge_to_json(step.on_success)
    doc["on_failure"] = _edge_to_json(step.on_failure)
    return doc


def step_from_json(doc: dict[str, Any]) -> BuildStep:
    if "name" not in doc:
        raise CodecError("step needs a name")
    if "stub" in doc:
        stub = doc["stub"]
        command: StubCommand | ExecCommand = StubCommand(
            result=stub.get("result", "succeed"),
            exit_code=stub.get("exit_code", 1),
            duration_ms=stub.get("duration_ms", 0),
        )
    elif "run" in doc:
        command = ExecCommand(argv=tuple(doc["run"]))
    else:
        raise CodecError(f"step {doc['name']} needs 'run' or 'stub'")
    return BuildStep(
        name=doc["name"],
        command=command,
        on_success=_success_edge_from_json(doc.get("on_success", CONTINUE)),
        on_failure=_failure_edge_from_json(doc.get("on_failure", HALT)),
    )


def definition_to_json(definition: BuildDefinition) -> dict[str, Any]:
    return {"steps": [step_to_json(s) for s in definition.steps]}


def definition_from_json(project_id: str, doc: dict[str, Any]) -> BuildDefinition:
    steps = tuple(step_from_json(s) for s in doc.get("steps", []))
    return BuildDefinition(project_id=project_id, steps=steps)


# ---------------------------------------------------------------- runs

def revision_to_json(revision: Revision) -> dict[str, Any]:
    return {"id": revision.id, "seq": revision.seq}


def revision_from_json(doc: dict[str, Any]) -> Revision:
    return Revision(id=doc["id"], seq=doc["seq"])


def change_to_json(change: Change) -> dict[str, Any]:
    return {
        "seq": change.revision.seq,
        "id": change.revision.id,
        "timestamp": change.timestamp,
        "author": change.author,
        "paths": list(change.changed_paths),
    }


def change_from_json(doc: dict[str, Any]) -> Change:
    return Change(
        revision=Revision(id=doc["id"], seq=doc["seq"]),
        author=doc["author"],
        timestamp=doc["timestamp"],
        changed_paths=tuple(doc["paths"]),
    )


def cause_to_json(cause: BuildCause) -> dict[str, Any]:
    if isinstance(cause, Commanded):
        return {"kind": "commanded", "actor": cause.actor}
    if isinstance(cause, ScheduleFire):
        return {"kind": "schedule", "fire_time": cause.fire_time}
    if isinstance(cause, PollDetected):
        return {"kind": "poll", "poll_time": cause.poll_time}
    return {"kind": "hook", "received_time": cause.received_time}


def cause_from_json(doc: dict[str, Any]) -> BuildCause:
    kind = doc.get("kind")
    if kind == "commanded":
        return Commanded(actor=doc["actor"])
    if kind == "schedule":
        return ScheduleFire(fire_time=doc["fire_time"])
    if kind == "poll":
        return PollDetected(poll_time=doc["poll_time"])
    if kind == "hook":
        return HookNotified(received_time=doc["received_time"])
    raise CodecError(f"unknown cause kind: {kind!r}")


def outcome_kind(outcome: Outcome) -> str:
    if isinstance(outcome, Success):
        return "success"
    if isinstance(outcome, Failed):
        return "failed"
    return "errored"


def outcome_to_json(outcome: Outcome) -> dict[str, Any]:
    if isinstance(outcome, Success):
        return {"result": "success"}
    if isinstance(outcome, Failed):
        return {"result": "failed", "step": outcome.step_name}
    return {"result": "errored", "reason": outcome.reason}


def outcome_from_json(doc: dict[str, Any]) -> Outcome:
    result = doc.get("result")
    if result == "success":
        return Success()
    if result == "failed":
        return Failed(step_name=doc["step"])
    if result == "errored":
        return Errored(reason=doc["reason"])
    raise CodecError(f"unknown outcome: {result!r}")


def step_result_to_json(result: StepResult) -> dict[str, Any]:
    return {
        "name": result.step_name,
        "status": result.status.value,
        "exit_code": result.exit_code,
        "output_b64": base64.b64encode(result.captured_output).decode("ascii"),
        "duration_ms": result.duration_ms,
        "truncated": result.truncated,
    }


def step_result_from_json(doc: dict[str, Any]) -> StepResult:
    return StepResult(
        step_name=doc["name"],
        status=StepStatus(doc["status"]),
        exit_code=doc["exit_code"],
        captured_output=base64.b64decode(doc["output_b64"]),
        duration_ms=doc["duration_ms"],
        truncated=doc.get("truncated", False),
    )


def run_to_json(run: BuildRun) -> dict[str, Any]:
    return {
        "run_id": run.run_id,
        "project": run.project_id,
        "cause": cause_to_json(run.request.cause),
        "changes": [change_to_json(c) for c in run.request.changes],
        "target": revision_to_json(run.request.target_revision),
        "created_at": run.request.created_at,
        "started_at": run.started_at,
        "ended_at": run.ended_at,
        "outcome": outcome_to_json(run.outcome),
        "steps": [step_result_to_json(s) for s in run.step_results],
    }


def run_from_json(doc: dict[str, Any]) -> BuildRun:
    request = BuildRequest(
        cause=cause_from_json(doc["cause"]),
        changes=tuple(change_from_json(c) for c in doc["changes"]),
        target_revision=revision_from_json(doc["target"]),
        created_at=doc["created_at"],
    )
    return BuildRun(
        run_id=doc["run_id"],
        project_id=doc["project"],
        request=request,
        started_at=doc["started_at"],
        ended_at=doc["ended_at"],
        step_results=tuple(step_result_from_json(s) for s in doc["steps"]),
        outcome=outcome_from_json(doc["outcome"]),
    )


# ---------------------------------------------------------------- traces

def load_trace(path: Path | str) -> list[dict[str, Any]]:
    """Read a JSON-lines commit trace: {"t_ms": int, "author": str, "paths": [str]}."""
    records = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CodecError(f"{path}:{line_no}: bad JSON: {exc}") from exc
        if "t_ms" not in doc or "author" not in doc or "paths" not in doc:
            raise CodecError(f"{path}:{line_no}: trace record needs t_ms, author, paths")
        records.append(doc)
    return records


def dump_trace(path: Path | str, records: list[dict[str, Any]]) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
