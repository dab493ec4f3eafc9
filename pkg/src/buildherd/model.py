"""Core domain types and the canonical trigger-policy classification.

Instants are integer milliseconds on an abstract monotone axis; whether that
axis is wall-clock or simulated is decided by the caller. All types here are
immutable values and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from buildherd.errors import ChangeNotInRunError

DAY_MS = 24 * 60 * 60 * 1000

# Sentinel for the empty/initial repository state (seq 0).
EMPTY_REVISION_ID = "<empty>"


@dataclass(frozen=True)
class Revision:
    """Opaque content identifier plus a per-repository monotone sequence number."""

    id: str
    seq: int

    def __post_init__(self) -> None:
        if self.seq < 0:
            raise ValueError("revision seq must be non-negative")


EMPTY_REVISION = Revision(id=EMPTY_REVISION_ID, seq=0)


@dataclass(frozen=True)
class Change:
    """One repository change: the unit that triggers continual integration."""

    revision: Revision
    author: str
    timestamp: int
    changed_paths: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.changed_paths:
            raise ValueError("a change must touch at least one path")


@dataclass(frozen=True)
class Schedule:
    """Timetable for scheduled builds: fixed times of day and/or a fixed interval.

    daily_minutes are minutes since local midnight, sorted and unique.
    """

    daily_minutes: tuple[int, ...] = ()
    every_ms: Optional[int] = None


@dataclass(frozen=True)
class Polled:
    """Change detection by periodically asking the repository."""

    interval_ms: int


@dataclass(frozen=True)
class Hooked:
    """Change detection by notifications pushed from the repository."""


Detection = Union[Polled, Hooked]


@dataclass(frozen=True)
class Levered:
    """On-demand builds only: someone must pull the lever."""


@dataclass(frozen=True)
class Scheduled:
    """Continual builds fired by a timetable (the night build is the classic case)."""

    schedule: Schedule


@dataclass(frozen=True)
class Triggered:
    """Continual builds fired by repository changes, optionally softened by a quiet period.

    quiet_ms == 0 means every change integrates immediately (strict CI).
    """

    detection: Detection
    quiet_ms: int = 0


TriggerPolicy = Union[Levered, Scheduled, Triggered]


class Mode(str, Enum):
    ON_DEMAND = "on-demand"
    CONTINUAL = "continual"


class Maturity(str, Enum):
    TRANSITIONAL = "transitional"
    STRICT = "strict"


class TriggerKind(str, Enum):
    SCHEDULED = "scheduled"
    POLLED = "polled"
    HOOKED = "hooked"


@dataclass(frozen=True)
class ClassificationLabel:
    """Where a policy sits in the build-automation taxonomy."""

    mode: Mode
    maturity: Optional[Maturity]
    trigger_kind: Optional[TriggerKind]


@dataclass(frozen=True)
class Commanded:
    actor: str


@dataclass(frozen=True)
class ScheduleFire:
    fire_time: int


@dataclass(frozen=True)
class PollDetected:
    poll_time: int


@dataclass(frozen=True)
class HookNotified:
    received_time: int


BuildCause = Union[Commanded, ScheduleFire, PollDetected, HookNotified]


@dataclass(frozen=True)
class BuildRequest:
    """A demanded integration: why, which changes, and which revision to build."""

    cause: BuildCause
    changes: tuple[Change, ...]
    target_revision: Revision
    created_at: int

    def __post_init__(self) -> None:
        seqs = [c.revision.seq for c in self.changes]
        if seqs != sorted(seqs):
            raise ValueError("request changes must be sorted by revision seq")
        if seqs and self.target_revision.seq != seqs[-1]:
            raise ValueError("target revision must be the newest requested change")


@dataclass(frozen=True)
class Success:
    pass


@dataclass(frozen=True)
class Failed:
    step_name: str


@dataclass(frozen=True)
class Errored:
    reason: str


Outcome = Union[Success, Failed, Errored]


@dataclass(frozen=True)
class BuildRun:
    """The executed record of one build request."""

    run_id: int
    project_id: str
    request: BuildRequest
    started_at: int
    ended_at: int
    step_results: tuple["StepResultLike", ...]
    outcome: Outcome

    def __post_init__(self) -> None:
        if self.run_id <= 0:
            raise ValueError("run id must be positive")
        if self.ended_at < self.started_at:
            raise ValueError("run cannot end before it starts")


# run step results live in buildherd.pipeline; kept loose here to avoid a cycle
StepResultLike = object


def classify(policy: TriggerPolicy) -> ClassificationLabel:
    """Map a trigger policy onto its taxonomy leaf.

    Total and deterministic: on-demand for levered, transitional for scheduled
    builds and for triggered builds with a quiet period, strict only for
    triggered builds that integrate after every change.
    """
    if isinstance(policy, Levered):
        return ClassificationLabel(Mode.ON_DEMAND, None, None)
    if isinstance(policy, Scheduled):
        return ClassificationLabel(Mode.CONTINUAL, Maturity.TRANSITIONAL, TriggerKind.SCHEDULED)
    if isinstance(policy, Triggered):
        kind = TriggerKind.POLLED if isinstance(policy.detection, Polled) else TriggerKind.HOOKED
        maturity = Maturity.STRICT if policy.quiet_ms == 0 else Maturity.TRANSITIONAL
        return ClassificationLabel(Mode.CONTINUAL, maturity, kind)
    raise TypeError(f"not a trigger policy: {policy!r}")


def validate_policy(policy: TriggerPolicy) -> list[str]:
    """Return all invariant violations; an empty list means the policy is valid."""
    violations: list[str] = []
    if isinstance(policy, Scheduled):
        sched = policy.schedule
        if not sched.daily_minutes and sched.every_ms is None:
            violations.append("empty schedule: set daily times or an interval")
        if sched.every_ms is not None and sched.every_ms <= 0:
            violations.append("schedule interval must be positive")
        minutes = sched.daily_minutes
        if any(m < 0 or m >= 24 * 60 for m in minutes):
            violations.append("daily times must fall within one day")
        if list(minutes) != sorted(set(minutes)):
            violations.append("daily times must be sorted and unique")
    elif isinstance(policy, Triggered):
        if isinstance(policy.detection, Polled) and policy.detection.interval_ms <= 0:
            violations.append("interval must be positive")
        if policy.quiet_ms < 0:
            violations.append("quiet period must be non-negative")
    elif not isinstance(policy, Levered):
        violations.append(f"unknown policy variant: {type(policy).__name__}")
    return violations


def feedback_latency(run: BuildRun, change: Change) -> int:
    """Milliseconds from a change's commit instant to the end of the run integrating it."""
    if change not in run.request.changes:
        raise ChangeNotInRunError(
            f"change seq {change.revision.seq} was not integrated by run {run.run_id}"
        )
    return run.ended_at - change.timestamp
