"""The CI server core: a deterministic event loop over per-project state.

step() is a pure transition (state, event) -> (state, actions). Side effects
— running pipelines, appending history — are expressed as actions and carried
out by whoever drives the loop (the service, the test harness, the simulator).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace
from typing import Optional, Union

from buildherd.clock import ManualClock
from buildherd.errors import RepositoryUnreachableError, UnknownProjectError
from buildherd.model import (
    BuildRequest,
    BuildRun,
    Commanded,
    Errored,
    Revision,
    ScheduleFire,
    Scheduled,
    Triggered,
    TriggerPolicy,
    Hooked,
    Polled,
)
from buildherd.pipeline import BuildDefinition, run_pipeline
from buildherd.triggers import (
    CoalescerState,
    HookNotification,
    absorb_changes,
    coalesce,
    earliest_emit,
    ingest_notification,
    new_coalescer,
    next_fire,
    poll_once,
)
from buildherd.vcs import Repository


@dataclass(frozen=True)
class ProjectState:
    project_id: str
    policy: TriggerPolicy
    definition: BuildDefinition
    repo: Repository
    last_integrated: Revision
    coalescer: Optional[CoalescerState]
    queue: tuple[BuildRequest, ...] = ()
    running: Optional[BuildRequest] = None
    next_poll_at: Optional[int] = None
    next_schedule_at: Optional[int] = None


@dataclass(frozen=True)
class ClockAdvanced:
    now: int


@dataclass(frozen=True)
class HookReceived:
    notification: HookNotification


@dataclass(frozen=True)
class CommandReceived:
    actor: str
    project_id: str
    now: int


@dataclass(frozen=True)
class BuildFinished:
    run: BuildRun


Event = Union[ClockAdvanced, HookReceived, CommandReceived, BuildFinished]


@dataclass(frozen=True)
class StartBuild:
    request: BuildRequest
    at: int


@dataclass(frozen=True)
class RecordRun:
    run: BuildRun


@dataclass(frozen=True)
class Degraded:
    reason: str


@dataclass(frozen=True)
class Rejected:
    reason: str


Action = Union[StartBuild, RecordRun, Degraded, Rejected]


def event_time(event: Event) -> int:
    if isinstance(event, ClockAdvanced):
        return event.now
    if isinstance(event, HookReceived):
        return event.notification.received_at
    if isinstance(event, CommandReceived):
        return event.now
    return event.run.ended_at


def initial_state(
    project_id: str,
    policy: TriggerPolicy,
    definition: BuildDefinition,
    repo: Repository,
    start_ms: int = 0,
) -> ProjectState:
    coalescer = None
    next_poll = None
    next_schedule = None
    if isinstance(policy, Triggered):
        coalescer = new_coalescer(policy.quiet_ms, policy.detection)
        if isinstance(policy.detection, Polled):
            # the interval anchors at startup; the first poll is one interval later
            next_poll = start_ms + policy.detection.interval_ms
    elif isinstance(policy, Scheduled):
        next_schedule = next_fire(policy.schedule, start_ms)
    return ProjectState(
        project_id=project_id,
        policy=policy,
        definition=definition,
        repo=repo,
        last_integrated=repo.head() if _reachable_head(repo) else _empty_head(),
        coalescer=coalescer,
        next_poll_at=next_poll,
        next_schedule_at=next_schedule,
    )


def _reachable_head(repo: Repository) -> bool:
    try:
        repo.head()
        return True
    except RepositoryUnreachableError:
        return False


def _empty_head() -> Revision:
    from buildherd.model import EMPTY_REVISION

    return EMPTY_REVISION


def submit_command(state: ProjectState, actor: str, now: int) -> tuple[ProjectState, BuildRequest]:
    """Enqueue a commanded integration of the current head; a lever always exists."""
    head = state.repo.head()
    changes = tuple(state.repo.changes_since(state.last_integrated))
    request = BuildRequest(
        cause=Commanded(actor=actor),
        changes=changes,
        target_revision=head,
        created_at=now,
    )
    return replace(state, queue=state.queue + (request,)), request


def _coalesce_and_start(state: ProjectState, now: int) -> tuple[ProjectState, list[Action]]:
    actions: list[Action] = []
    if state.coalescer is not None:
        emitted = coalesce(state.coalescer, now, build_running=state.running is not None)
        if emitted is not None:
            request, coalescer = emitted
            state = replace(state, coalescer=coalescer, queue=state.queue + (request,))
    if state.running is None and state.queue:
        front, rest = state.queue[0], state.queue[1:]
        state = replace(state, running=front, queue=rest)
        actions.append(StartBuild(request=front, at=now))
    return state, actions


def step(state: ProjectState, event: Event) -> tuple[ProjectState, list[Action]]:
    """Apply one event and return the follow-up actions for the driver."""
    actions: list[Action] = []

    if isinstance(event, ClockAdvanced):
        now = event.now
        if state.next_poll_at is not None and isinstance(state.policy, Triggered):
            interval = state.policy.detection.interval_ms  # type: ignore[union-attr]
            next_poll = state.next_poll_at
            coalescer = state.coalescer
            assert coalescer is not None
            while next_poll <= now:
                floor = max(state.last_integrated.seq, coalescer.last_captured_seq)
                try:
                    found = state.repo.changes_since_seq(floor)
                except RepositoryUnreachableError as exc:
                    actions.append(Degraded(f"poll failed: {exc}"))
                else:
                    if found:
                        coalescer = absorb_changes(coalescer, found, next_poll)
                next_poll += interval
            state = replace(state, coalescer=coalescer, next_poll_at=next_poll)
        if state.next_schedule_at is not None and isinstance(state.policy, Scheduled):
            next_schedule = state.next_schedule_at
            queue = state.queue
            while next_schedule <= now:
                try:
                    head = state.repo.head()
                except RepositoryUnreachableError as exc:
                    actions.append(Degraded(f"schedule fire skipped: {exc}"))
                else:
                    queue = queue + (
                        BuildRequest(
                            cause=ScheduleFire(fire_time=next_schedule),
                            changes=(),
                            target_revision=head,
                            created_at=next_schedule,
                        ),
                    )
                next_schedule = next_fire(state.policy.schedule, next_schedule)
            state = replace(state, queue=queue, next_schedule_at=next_schedule)
        state, more = _coalesce_and_start(state, now)
        return state, actions + more

    if isinstance(event, HookReceived):
        notification = event.notification
        if not isinstance(state.policy, Triggered) or not isinstance(state.policy.detection, Hooked):
            return state, actions  # pings are meaningless under this policy
        assert state.coalescer is not None
        try:
            coalescer = ingest_notification(
                state.coalescer, notification, state.repo, state.last_integrated
            )
        except RepositoryUnreachableError as exc:
            actions.append(Degraded(f"hook ingest failed: {exc}"))
        else:
            state = replace(state, coalescer=coalescer)
        state, more = _coalesce_and_start(state, notification.received_at)
        return state, actions + more

    if isinstance(event, CommandReceived):
        if event.project_id != state.project_id:
            raise UnknownProjectError(f"unknown project {event.project_id}")
        try:
            state, _ = submit_command(state, event.actor, event.now)
        except RepositoryUnreachableError as exc:
            return state, [Rejected(f"command rejected: {exc}")]
        state, more = _coalesce_and_start(state, event.now)
        return state, actions + more

    if isinstance(event, BuildFinished):
        run = event.run
        actions.append(RecordRun(run))
        now = run.ended_at
        last_integrated = state.last_integrated
        coalescer = state.coalescer
        if not isinstance(run.outcome, Errored):
            if run.request.target_revision.seq > last_integrated.seq:
                last_integrated = run.request.target_revision
        if coalescer is not None:
            pending = tuple(
                p for p in coalescer.pending if p.change.revision.seq > last_integrated.seq
            )
            captured = coalescer.last_captured_seq
            if isinstance(run.outcome, Errored):
                # leave the changes re-detectable so the integration is re-attempted
                captured = last_integrated.seq
            coalescer = replace(
                coalescer, pending=pending, last_build_end=now, last_captured_seq=captured
            )
        state = replace(
            state, running=None, last_integrated=last_integrated, coalescer=coalescer
        )
        state, more = _coalesce_and_start(state, now)
        return state, actions + more

    raise TypeError(f"unknown event: {event!r}")


@dataclass(frozen=True)
class ScriptedCommit:
    """Harness directive: apply a commit to the project's repository at an instant."""

    at: int
    author: str
    paths: tuple[str, ...]


ScriptItem = Union[Event, ScriptedCommit]


def _script_time(item: ScriptItem) -> int:
    if isinstance(item, ScriptedCommit):
        return item.at
    return event_time(item)


def run_until_idle(
    state: ProjectState,
    script: list[ScriptItem],
    run_id_start: int = 1,
) -> tuple[ProjectState, list[BuildRun]]:
    """Drive step() over a scripted event sequence with stub pipelines.

    Builds execute on a manually advanced clock, so their finish events slot
    back into the time-ordered queue. Returns the recorded runs once the
    queue is drained and nothing is running.
    """
    heap: list[tuple[int, int, int, ScriptItem]] = []
    counter = 0
    for item in script:
        # build-finish events sort ahead of same-instant script items
        heapq.heappush(heap, (_script_time(item), 1, counter, item))
        counter += 1

    runs: list[BuildRun] = []
    next_run_id = run_id_start
    while True:
        if not heap:
            # wake up for changes still waiting out a quiet window
            if state.coalescer is not None and state.running is None:
                due = earliest_emit(state.coalescer)
                if due is not None:
                    counter += 1
                    heapq.heappush(heap, (due, 2, counter, ClockAdvanced(due)))
                    continue
            break
        _, _, _, item = heapq.heappop(heap)
        if isinstance(item, ScriptedCommit):
            state.repo.commit(item.author, list(item.paths), item.at)  # type: ignore[attr-defined]
            continue
        state, actions = step(state, item)
        for action in actions:
            if isinstance(action, StartBuild):
                run = run_pipeline(
                    state.definition,
                    action.request,
                    next_run_id,
                    clock=ManualClock(action.at),
                )
                next_run_id += 1
                counter += 1
                heapq.heappush(heap, (run.ended_at, 0, counter, BuildFinished(run)))
            elif isinstance(action, RecordRun):
                runs.append(action.run)
    return state, runs
