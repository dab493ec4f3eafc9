"""Trigger mechanics: schedule evaluation, polling, hook intake, quiet-period coalescing.

The coalescer owns the pending-change buffer for triggered policies. Its
transitions are pure functions over an immutable state, which is what makes
the orchestrator replayable and the simulator exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

from buildherd.model import (
    DAY_MS,
    BuildRequest,
    Change,
    Detection,
    HookNotified,
    Hooked,
    PollDetected,
    Revision,
    Schedule,
)
from buildherd.vcs import Repository


@dataclass(frozen=True)
class HookNotification:
    """An untrusted ping from the repository; truth is always pulled afterwards."""

    repo_id: str
    received_at: int
    claimed_revision: Optional[Revision] = None
    nonce: str = ""


@dataclass(frozen=True)
class PendingChange:
    change: Change
    arrived_at: int


@dataclass(frozen=True)
class CoalescerState:
    pending: tuple[PendingChange, ...]
    quiet_ms: int
    detection: Detection
    last_build_end: Optional[int] = None
    # highest seq ever pulled into pending; guards against re-ingesting
    # changes that were emitted but whose build has not finished yet
    last_captured_seq: int = 0
    seen_nonces: frozenset[str] = frozenset()


def new_coalescer(quiet_ms: int, detection: Detection) -> CoalescerState:
    return CoalescerState(pending=(), quiet_ms=quiet_ms, detection=detection)


def next_fire(schedule: Schedule, now: int) -> int:
    """Earliest instant strictly after now at which the schedule fires.

    The fixed interval anchors at the previous fire; callers pass that fire
    time as now, so the first anchor is simply the time scheduling starts.
    """
    candidates: list[int] = []
    if schedule.every_ms is not None:
        candidates.append(now + schedule.every_ms)
    day_start = (now // DAY_MS) * DAY_MS
    time_of_day = now - day_start
    for minute in schedule.daily_minutes:
        offset = minute * 60_000
        if offset > time_of_day:
            candidates.append(day_start + offset)
        else:
            candidates.append(day_start + DAY_MS + offset)
    if not candidates:
        raise ValueError("schedule has no daily times and no interval")
    return min(candidates)


def poll_once(repo: Repository, last_integrated: Revision, now: int) -> Optional[BuildRequest]:
    """One poll cycle: ask the repository whether anything changed since last integration."""
    head = repo.head()
    if head.seq == last_integrated.seq:
        return None
    changes = repo.changes_since(last_integrated)
    return BuildRequest(
        cause=PollDetected(poll_time=now),
        changes=tuple(changes),
        target_revision=head,
        created_at=now,
    )


def absorb_changes(state: CoalescerState, changes: list[Change], now: int) -> CoalescerState:
    """Append novel changes to pending, preserving seq order."""
    floor = state.last_captured_seq
    novel = [c for c in changes if c.revision.seq > floor]
    if not novel:
        return state
    pending = state.pending + tuple(PendingChange(c, arrived_at=now) for c in novel)
    return replace(
        state,
        pending=pending,
        last_captured_seq=max(floor, novel[-1].revision.seq),
    )


def ingest_notification(
    state: CoalescerState,
    notification: HookNotification,
    repo: Repository,
    last_integrated: Revision,
) -> CoalescerState:
    """Pull authoritative changes in response to a hook ping.

    Idempotent under nonce replay; never starts a build itself. A repository
    read failure propagates and the caller records a degraded event.
    """
    if notification.nonce in state.seen_nonces:
        return state
    floor = max(last_integrated.seq, state.last_captured_seq)
    changes = repo.changes_since_seq(floor)
    state = absorb_changes(state, changes, notification.received_at)
    return replace(state, seen_nonces=state.seen_nonces | {notification.nonce})


def earliest_emit(state: CoalescerState) -> Optional[int]:
    """The first instant at which coalesce could emit, or None with nothing pending."""
    if not state.pending:
        return None
    first_arrival = state.pending[0].arrived_at
    if state.last_build_end is None:
        return first_arrival
    return max(state.last_build_end + state.quiet_ms, first_arrival)


def coalesce(
    state: CoalescerState, now: int, build_running: bool
) -> Optional[tuple[BuildRequest, CoalescerState]]:
    """Emit at most one build request from the pending buffer.

    The quiet window anchors at the end of the previous build. With no quiet
    period and hooked detection every change gets its own integration (strict
    CI); otherwise all gathered changes go out as one batch.
    """
    if build_running or not state.pending:
        return None
    due = earliest_emit(state)
    assert due is not None
    if now < due:
        return None

    if state.quiet_ms == 0 and isinstance(state.detection, Hooked):
        taken = state.pending[:1]
    else:
        taken = state.pending
    changes = tuple(p.change for p in taken)
    if isinstance(state.detection, Hooked):
        cause: Union[HookNotified, PollDetected] = HookNotified(received_time=now)
    else:
        cause = PollDetected(poll_time=now)
    request = BuildRequest(
        cause=cause,
        changes=changes,
        target_revision=changes[-1].revision,
        created_at=now,
    )
    return request, replace(state, pending=state.pending[len(taken):])
