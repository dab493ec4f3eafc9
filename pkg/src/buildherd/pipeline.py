"""Build definitions and their executor.

A definition is an ordered list of named steps; each step says where
execution continues on success and on failure. Gotos are forward-only, so
every run visits each step at most once and always terminates.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from buildherd.clock import Clock
from buildherd.model import BuildRequest, BuildRun, Errored, Failed, Success

CONTINUE = "continue"
STOP_SUCCESS = "stop-success"
HALT = "halt"
CONTINUE_ANYWAY = "continue-anyway"

DEFAULT_OUTPUT_CAP = 1024 * 1024


@dataclass(frozen=True)
class Goto:
    target: str


OnSuccess = Union[str, Goto]  # CONTINUE | STOP_SUCCESS | Goto
OnFailure = Union[str, Goto]  # HALT | CONTINUE_ANYWAY | Goto


@dataclass(frozen=True)
class StubCommand:
    """Built-in test double: succeed or fail after a fixed simulated duration."""

    result: str = "succeed"  # "succeed" | "fail"
    exit_code: int = 1
    duration_ms: int = 0
    output: bytes = b""


@dataclass(frozen=True)
class ExecCommand:
    """An opaque external program with arguments."""

    argv: tuple[str, ...]


Command = Union[StubCommand, ExecCommand]


@dataclass(frozen=True)
class BuildStep:
    name: str
    command: Command
    on_success: OnSuccess = CONTINUE
    on_failure: OnFailure = HALT


@dataclass(frozen=True)
class BuildDefinition:
    project_id: str
    steps: tuple[BuildStep, ...]


class StepStatus(str, Enum):
    SUCCEEDED = "succeeded"
    FAILED = "failed"


@dataclass(frozen=True)
class StepResult:
    step_name: str
    status: StepStatus
    exit_code: Optional[int]
    captured_output: bytes
    duration_ms: int
    truncated: bool = False


@dataclass(frozen=True)
class NextStep:
    index: int


@dataclass(frozen=True)
class Stop:
    success: bool


def validate_definition(definition: BuildDefinition) -> list[str]:
    """Return all structural violations; empty list means the definition is runnable."""
    violations: list[str] = []
    steps = definition.steps
    if not steps:
        violations.append("definition has no steps")
        return violations

    names = [s.name for s in steps]
    seen: set[str] = set()
    for name in names:
        if name in seen:
            violations.append(f"duplicate step name: {name}")
        seen.add(name)

    index_of = {name: i for i, name in enumerate(names)}
    for i, step in enumerate(steps):
        for edge_name, edge in (("on_success", step.on_success), ("on_failure", step.on_failure)):
            if isinstance(edge, Goto):
                target = index_of.get(edge.target)
                if target is None:
                    violations.append(f"step {step.name}: {edge_name} goto to unknown step {edge.target}")
                elif target <= i:
                    violations.append(f"step {step.name}: backward goto to {edge.target}")
            elif edge_name == "on_success" and edge not in (CONTINUE, STOP_SUCCESS):
                violations.append(f"step {step.name}: bad on_success {edge!r}")
            elif edge_name == "on_failure" and edge not in (HALT, CONTINUE_ANYWAY):
                violations.append(f"step {step.name}: bad on_failure {edge!r}")
    return violations


def plan_next(definition: BuildDefinition, current_index: int, status: StepStatus) -> Union[NextStep, Stop]:
    """Decide where execution continues after the step at current_index finished.

    The Stop.success flag reflects only the local termination edge; the
    executor still reports an overall failure if any executed step failed.
    """
    steps = definition.steps
    if not 0 <= current_index < len(steps):
        raise IndexError(f"step index {current_index} out of range")
    step = steps[current_index]
    index_of = {s.name: i for i, s in enumerate(steps)}

    if status is StepStatus.SUCCEEDED:
        edge = step.on_success
        if isinstance(edge, Goto):
            return NextStep(index_of[edge.target])
        if edge == STOP_SUCCESS:
            return Stop(success=True)
        # CONTINUE
        if current_index + 1 < len(steps):
            return NextStep(current_index + 1)
        return Stop(success=True)

    edge = step.on_failure
    if isinstance(edge, Goto):
        return NextStep(index_of[edge.target])
    if edge == CONTINUE_ANYWAY:
        if current_index + 1 < len(steps):
            return NextStep(current_index + 1)
        return Stop(success=False)
    # HALT
    return Stop(success=False)


def run_pipeline(
    definition: BuildDefinition,
    request: BuildRequest,
    run_id: int,
    clock: Clock,
    workspace: Optional[str] = None,
    output_cap: int = DEFAULT_OUTPUT_CAP,
) -> BuildRun:
    """Execute a definition from the first step, following plan_next.

    Stub commands consume simulated time via the clock; exec commands run as
    real subprocesses in the workspace. A command that cannot be spawned at
    all produces an Errored outcome, distinct from a step that runs and fails.
    """
    started_at = clock.now_ms()
    results: list[StepResult] = []
    first_failure: Optional[str] = None
    errored_reason: Optional[str] = None

    index = 0
    while True:
        step = definition.steps[index]
        step_start = clock.now_ms()

        if isinstance(step.command, StubCommand):
            if step.command.duration_ms:
                clock.sleep_ms(step.command.duration_ms)
            if step.command.result == "succeed":
                status, exit_code = StepStatus.SUCCEEDED, 0
            else:
                status, exit_code = StepStatus.FAILED, step.command.exit_code
            output = step.command.output
        else:
            try:
                proc = subprocess.run(
                    step.command.argv,
                    cwd=workspace,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.STDOUT,
                )
            except OSError as exc:
                errored_reason = f"cannot spawn {step.command.argv[0]}: {exc}"
                break
            output = proc.stdout or b""
            if proc.returncode == 0:
                status, exit_code = StepStatus.SUCCEEDED, 0
            else:
                status, exit_code = StepStatus.FAILED, proc.returncode

        truncated = len(output) > output_cap
        results.append(
            StepResult(
                step_name=step.name,
                status=status,
                exit_code=exit_code,
                captured_output=output[:output_cap],
                duration_ms=clock.now_ms() - step_start,
                truncated=truncated,
            )
        )
        if status is StepStatus.FAILED and first_failure is None:
            first_failure = step.name

        nxt = plan_next(definition, index, status)
        if isinstance(nxt, Stop):
            break
        index = nxt.index

    ended_at = clock.now_ms()
    if errored_reason is not None:
        outcome = Errored(errored_reason)
    elif first_failure is not None:
        outcome = Failed(first_failure)
    else:
        outcome = Success()
    return BuildRun(
        run_id=run_id,
        project_id=definition.project_id,
        request=request,
        started_at=started_at,
        ended_at=ended_at,
        step_results=tuple(results),
        outcome=outcome,
    )
