"""Deterministic discrete-event simulation of trigger policies under a commit trace.

simulate() drives the production orchestrator step function over an event
heap; brute_force_replay() is an independent oracle that advances an integer
millisecond clock one tick at a time and applies the trigger rules as literal
per-tick checks. Both must produce bit-identical reports.

Canonical ordering inside one instant, shared by both implementations:
build finish first, then commits (each hooked commit ingests and may emit),
then a due poll, then a due schedule fire, then a final emit/start check.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Any, Optional

from buildherd.clock import ManualClock
from buildherd.errors import InvalidPolicyError
from buildherd.history import MetricsReport, metrics
from buildherd.model import (
    DAY_MS,
    BuildRun,
    Hooked,
    Levered,
    Polled,
    Scheduled,
    Triggered,
    TriggerPolicy,
)
from buildherd.orchestrator import (
    BuildFinished,
    ClockAdvanced,
    HookReceived,
    RecordRun,
    StartBuild,
    initial_state,
    step,
)
from buildherd.pipeline import BuildDefinition, BuildStep, StubCommand, run_pipeline
from buildherd.triggers import HookNotification, earliest_emit
from buildherd.vcs import InMemoryRepository

_PRIO_FINISH = 0
_PRIO_COMMIT = 1
_PRIO_WAKE = 2


@dataclass(frozen=True)
class TraceCommit:
    t_ms: int
    author: str
    paths: tuple[str, ...]


@dataclass(frozen=True)
class BuildRecord:
    run_id: int
    cause_kind: str
    created_at: int
    started_at: int
    ended_at: int
    change_seqs: tuple[int, ...]


@dataclass(frozen=True)
class SimReport:
    metrics: MetricsReport
    builds: tuple[BuildRecord, ...]
    queue_depth_series: tuple[tuple[int, int], ...]
    latencies_ms: tuple[int, ...]


def trace_from_records(records: list[dict[str, Any]]) -> tuple[TraceCommit, ...]:
    return tuple(
        TraceCommit(t_ms=r["t_ms"], author=r["author"], paths=tuple(r["paths"]))
        for r in records
    )


def report_to_json(report: SimReport) -> dict[str, Any]:
    m = report.metrics
    return {
        "metrics": {
            "n_builds": m.n_builds,
            "n_changes": m.n_changes,
            "changes_per_build": m.changes_per_build,
            "mean_latency_ms": m.mean_latency_ms,
            "max_latency_ms": m.max_latency_ms,
            "max_queue_depth": m.max_queue_depth,
        },
        "builds": [
            {
                "run_id": b.run_id,
                "cause": b.cause_kind,
                "created_at": b.created_at,
                "started_at": b.started_at,
                "ended_at": b.ended_at,
                "change_seqs": list(b.change_seqs),
            }
            for b in report.builds
        ],
        "queue_depth_series": [[t, d] for t, d in report.queue_depth_series],
        "latencies_ms": list(report.latencies_ms),
    }


def _validate(trace: tuple[TraceCommit, ...], policy: TriggerPolicy, build_duration_ms: int,
              horizon_ms: Optional[int]) -> None:
    if isinstance(policy, Levered):
        raise InvalidPolicyError("a levered policy has no autonomous behaviour to simulate")
    if not isinstance(policy, (Scheduled, Triggered)):
        raise InvalidPolicyError(f"not a simulatable policy: {policy!r}")
    if isinstance(policy, Scheduled) and horizon_ms is None:
        raise InvalidPolicyError("scheduled simulations need an explicit horizon")
    if build_duration_ms <= 0:
        raise ValueError("build duration must be at least one millisecond")
    last = None
    for commit in trace:
        if commit.t_ms < 0 or (last is not None and commit.t_ms < last):
            raise ValueError("trace timestamps must be non-negative and non-decreasing")
        last = commit.t_ms


class _DepthSeries:
    """Queue-depth samples with final-value-at-instant semantics."""

    def __init__(self) -> None:
        self.samples: list[tuple[int, int]] = []

    def record(self, t: int, depth: int) -> None:
        if self.samples and self.samples[-1][0] == t:
            self.samples.pop()
        previous = self.samples[-1][1] if self.samples else 0
        if depth != previous:
            self.samples.append((t, depth))


def _cause_kind(cause: Any) -> str:
    from buildherd.codec import cause_to_json

    return cause_to_json(cause)["kind"]


def _latencies(builds: list[BuildRecord], commit_time_by_seq: dict[int, int]) -> tuple[int, ...]:
    by_seq: dict[int, int] = {}
    for record in builds:
        for seq in record.change_seqs:
            by_seq[seq] = record.ended_at - commit_time_by_seq[seq]
    return tuple(by_seq[seq] for seq in sorted(by_seq))


def simulate(
    trace: tuple[TraceCommit, ...],
    policy: TriggerPolicy,
    build_duration_ms: int,
    horizon_ms: Optional[int] = None,
) -> SimReport:
    """Event-driven simulation reusing the production orchestrator."""
    _validate(trace, policy, build_duration_ms, horizon_ms)

    repo = InMemoryRepository("sim")
    definition = BuildDefinition(
        project_id="sim",
        steps=(BuildStep("build", StubCommand("succeed", duration_ms=build_duration_ms)),),
    )
    state = initial_state("sim", policy, definition, repo, start_ms=0)

    heap: list[tuple[int, int, int, str, Any]] = []
    counter = 0

    def push(t: int, prio: int, kind: str, payload: Any) -> None:
        nonlocal counter
        heapq.heappush(heap, (t, prio, counter, kind, payload))
        counter += 1

    for i, commit in enumerate(trace):
        push(commit.t_ms, _PRIO_COMMIT, "commit", (i, commit))

    hooked = isinstance(policy, Triggered) and isinstance(policy.detection, Hooked)
    polled = isinstance(policy, Triggered) and isinstance(policy.detection, Polled)
    scheduled = isinstance(policy, Scheduled)
    n_commits = len(trace)

    scheduled_wakes: set[int] = set()

    def push_wake(t: int) -> None:
        if t not in scheduled_wakes:
            scheduled_wakes.add(t)
            push(t, _PRIO_WAKE, "wake", None)

    if polled and n_commits:
        push_wake(state.next_poll_at or 0)
    if scheduled and state.next_schedule_at is not None and state.next_schedule_at <= (horizon_ms or 0):
        push_wake(state.next_schedule_at)

    runs: list[BuildRun] = []
    builds: list[BuildRecord] = []
    series = _DepthSeries()
    next_run_id = 1

    def handle_actions(actions: list[Any]) -> None:
        nonlocal next_run_id
        for action in actions:
            if isinstance(action, StartBuild):
                run = run_pipeline(
                    definition, action.request, next_run_id, clock=ManualClock(action.at)
                )
                next_run_id += 1
                push(run.ended_at, _PRIO_FINISH, "finish", run)
            elif isinstance(action, RecordRun):
                runs.append(action.run)
                builds.append(
                    BuildRecord(
                        run_id=action.run.run_id,
                        cause_kind=_cause_kind(action.run.request.cause),
                        created_at=action.run.request.created_at,
                        started_at=action.run.started_at,
                        ended_at=action.run.ended_at,
                        change_seqs=tuple(
                            c.revision.seq for c in action.run.request.changes
                        ),
                    )
                )

    while heap:
        t, _, _, kind, payload = heapq.heappop(heap)
        if kind == "commit":
            i, commit = payload
            revision = repo.commit(commit.author, list(commit.paths), commit.t_ms)
            if hooked:
                state, actions = step(
                    state,
                    HookReceived(
                        HookNotification(
                            repo_id="sim",
                            received_at=commit.t_ms,
                            claimed_revision=revision,
                            nonce=f"sim-{i}",
                        )
                    ),
                )
                handle_actions(actions)
        elif kind == "wake":
            state, actions = step(state, ClockAdvanced(t))
            handle_actions(actions)
        else:  # finish
            state, actions = step(state, BuildFinished(payload))
            handle_actions(actions)

        depth = len(state.queue) + (len(state.coalescer.pending) if state.coalescer else 0)
        series.record(t, depth)

        # schedule the next instants at which something can happen
        if polled and state.coalescer is not None and state.coalescer.last_captured_seq < n_commits:
            assert state.next_poll_at is not None
            push_wake(state.next_poll_at)
        if scheduled and state.next_schedule_at is not None and state.next_schedule_at <= (horizon_ms or 0):
            push_wake(state.next_schedule_at)
        if state.coalescer is not None and state.running is None:
            due = earliest_emit(state.coalescer)
            if due is not None:
                push_wake(max(due, t))

    commit_times = {i + 1: c.t_ms for i, c in enumerate(trace)}
    return SimReport(
        metrics=metrics(runs, series.samples),
        builds=tuple(builds),
        queue_depth_series=tuple(series.samples),
        latencies_ms=_latencies(builds, commit_times),
    )


def brute_force_replay(
    trace: tuple[TraceCommit, ...],
    policy: TriggerPolicy,
    build_duration_ms: int,
    horizon_ms: Optional[int] = None,
) -> SimReport:
    """Millisecond-by-millisecond naive replay; independent of the event loop."""
    _validate(trace, policy, build_duration_ms, horizon_ms)

    hooked = isinstance(policy, Triggered) and isinstance(policy.detection, Hooked)
    polled = isinstance(policy, Triggered) and isinstance(policy.detection, Polled)
    quiet = policy.quiet_ms if isinstance(policy, Triggered) else 0
    interval = policy.detection.interval_ms if polled else 0  # type: ignore[union-attr]

    commits = [(i + 1, c.t_ms) for i, c in enumerate(trace)]
    n = len(commits)

    daily_offsets: set[int] = set()
    next_every: Optional[int] = None
    if isinstance(policy, Scheduled):
        daily_offsets = {m * 60_000 for m in policy.schedule.daily_minutes}
        if policy.schedule.every_ms is not None:
            next_every = policy.schedule.every_ms

    pending: list[tuple[int, int]] = []  # (seq, arrival)
    queue: list[tuple[str, int, tuple[int, ...]]] = []  # (cause_kind, created_at, seqs)
    builds: list[BuildRecord] = []
    series = _DepthSeries()
    integrated = 0
    captured = 0
    last_build_end: Optional[int] = None
    running: Optional[tuple[int, str, int, int, tuple[int, ...], int]] = None
    # (run_id, cause_kind, created_at, started_at, seqs, end)
    delivered = 0
    next_run_id = 1

    last_commit_t = commits[-1][1] if commits else 0
    if isinstance(policy, Scheduled):
        hard_cap = (horizon_ms or 0) + (n + 2) * build_duration_ms + DAY_MS
    else:
        hard_cap = (
            last_commit_t
            + (n + 1) * (build_duration_ms + quiet + interval + 1)
            + 10 * build_duration_ms
            + 1000
        )

    def emit_and_start(t: int) -> None:
        nonlocal pending, queue, running, next_run_id
        if running is None and pending:
            first_arrival = pending[0][1]
            due = first_arrival if last_build_end is None else max(
                last_build_end + quiet, first_arrival
            )
            if t >= due:
                if quiet == 0 and hooked:
                    taken = pending[:1]
                else:
                    taken = pending[:]
                del pending[: len(taken)]
                queue.append(("hook" if hooked else "poll", t, tuple(s for s, _ in taken)))
        if running is None and queue:
            cause_kind, created_at, seqs = queue.pop(0)
            running = (next_run_id, cause_kind, created_at, t, seqs, t + build_duration_ms)
            next_run_id += 1

    t = 0
    while True:
        # 1. a build finishing now
        if running is not None and running[5] == t:
            run_id, cause_kind, created_at, started_at, seqs, end = running
            builds.append(
                BuildRecord(
                    run_id=run_id,
                    cause_kind=cause_kind,
                    created_at=created_at,
                    started_at=started_at,
                    ended_at=end,
                    change_seqs=seqs,
                )
            )
            if seqs:
                integrated = max(integrated, seqs[-1])
            last_build_end = t
            running = None
            emit_and_start(t)

        # 2. commits landing now
        while delivered < n and commits[delivered][1] == t:
            seq, _ = commits[delivered]
            delivered += 1
            if hooked:
                pending.append((seq, t))
                captured = seq
                emit_and_start(t)

        # 3. a due poll
        if polled and t > 0 and t % interval == 0:
            floor = max(integrated, captured)
            new = [(s, ct) for s, ct in commits[:delivered] if s > floor]
            for s, _ in new:
                pending.append((s, t))
            if new:
                captured = new[-1][0]

        # 4. a due schedule fire
        if daily_offsets or next_every is not None:
            fires = t > 0 and (
                (t % DAY_MS) in daily_offsets or (next_every is not None and t == next_every)
            )
            if fires and t <= (horizon_ms or 0):
                queue.append(("schedule", t, ()))
                if next_every is not None:
                    next_every = t + policy.schedule.every_ms  # type: ignore[union-attr]
            elif fires and next_every is not None and t == next_every:
                # beyond the horizon: stop the interval chain
                next_every = None

        # 5. the literal per-tick emit/start check
        emit_and_start(t)
        series.record(t, len(pending) + len(queue))

        sched_done = True
        if isinstance(policy, Scheduled):
            sched_done = t >= (horizon_ms or 0)
        done = (
            delivered == n
            and not pending
            and not queue
            and running is None
            and (not polled or captured == n)
            and sched_done
        )
        if done or t > hard_cap:
            break
        t += 1

    commit_times = {s: ct for s, ct in commits}
    latencies = _latencies(builds, commit_times)
    n_builds = len(builds)
    n_changes = len(latencies)
    report_metrics = MetricsReport(
        n_builds=n_builds,
        n_changes=n_changes,
        changes_per_build=(n_changes / n_builds) if n_builds else None,
        mean_latency_ms=(sum(latencies) // n_changes) if n_changes else None,
        max_latency_ms=max(latencies) if n_changes else None,
        max_queue_depth=max((d for _, d in series.samples), default=0),
    )
    return SimReport(
        metrics=report_metrics,
        builds=tuple(builds),
        queue_depth_series=tuple(series.samples),
        latencies_ms=latencies,
    )
