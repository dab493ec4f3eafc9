"""Schedule evaluation, polling, hook intake, and quiet-period coalescing."""

from __future__ import annotations

import random

import pytest

from buildherd.model import (
    DAY_MS,
    Hooked,
    HookNotified,
    PollDetected,
    Polled,
    Revision,
    Schedule,
)
from buildherd.triggers import (
    HookNotification,
    absorb_changes,
    coalesce,
    earliest_emit,
    ingest_notification,
    new_coalescer,
    next_fire,
    poll_once,
)
from buildherd.vcs import InMemoryRepository


def _repo_with(n: int, step_ms: int = 10) -> InMemoryRepository:
    repo = InMemoryRepository("r1")
    for i in range(n):
        repo.commit("dev", [f"f{i}"], at=i * step_ms)
    return repo


class TestNextFire:
    def test_daily_time_later_today(self):
        schedule = Schedule(daily_minutes=(120,))  # 02:00
        now = 3 * DAY_MS + 60 * 60_000  # day 3, 01:00
        assert next_fire(schedule, now) == 3 * DAY_MS + 120 * 60_000

    def test_daily_time_already_past_rolls_to_tomorrow(self):
        schedule = Schedule(daily_minutes=(120,))
        now = 3 * DAY_MS + 14 * 60 * 60_000  # day 3, 14:00
        assert next_fire(schedule, now) == 4 * DAY_MS + 120 * 60_000

    def test_fixed_interval_anchors_at_previous_fire(self):
        schedule = Schedule(every_ms=3_600_000)
        assert next_fire(schedule, 5_000_000) == 5_000_000 + 3_600_000

    def test_always_strictly_after_now(self):
        schedule = Schedule(daily_minutes=(0, 720), every_ms=90_000)
        rng = random.Random(3)
        for _ in range(200):
            now = rng.randint(0, 10 * DAY_MS)
            assert next_fire(schedule, now) > now

    def test_interval_iteration_is_an_arithmetic_progression(self):
        schedule = Schedule(every_ms=250)
        fires = []
        now = 1000
        for _ in range(5):
            now = next_fire(schedule, now)
            fires.append(now)
        assert fires == [1250, 1500, 1750, 2000, 2250]


class TestPollOnce:
    def test_no_change_means_no_request(self):
        repo = _repo_with(2)
        assert poll_once(repo, repo.head(), now=100) is None

    def test_new_commits_become_one_request(self):
        repo = _repo_with(3)
        since = Revision("r1", 1)
        request = poll_once(repo, since, now=100)
        assert request is not None
        assert request.cause == PollDetected(100)
        assert [c.revision.seq for c in request.changes] == [2, 3]
        assert request.target_revision == repo.head()

    def test_unreachable_repo_propagates(self):
        class Broken:
            repo_id = "r1"

            def head(self):
                from buildherd.errors import RepositoryUnreachableError

                raise RepositoryUnreachableError("down")

        from buildherd.errors import RepositoryUnreachableError

        with pytest.raises(RepositoryUnreachableError):
            poll_once(Broken(), Revision("x", 0), now=0)


class TestIngestNotification:
    def test_novel_commit_grows_pending(self):
        repo = _repo_with(1)
        state = new_coalescer(0, Hooked())
        state = ingest_notification(
            state, HookNotification("r1", 5, nonce="n1"), repo, Revision("e", 0)
        )
        assert [p.change.revision.seq for p in state.pending] == [1]
        assert state.pending[0].arrived_at == 5

    def test_duplicate_nonce_is_a_no_op(self):
        repo = _repo_with(1)
        state = new_coalescer(0, Hooked())
        note = HookNotification("r1", 5, nonce="n1")
        state = ingest_notification(state, note, repo, Revision("e", 0))
        replayed = ingest_notification(state, note, repo, Revision("e", 0))
        assert replayed == state

    def test_already_integrated_ping_changes_nothing(self):
        repo = _repo_with(2)
        state = new_coalescer(0, Hooked())
        state = ingest_notification(
            state, HookNotification("r1", 5, nonce="n1"), repo, repo.head()
        )
        assert state.pending == ()

    def test_emitted_but_unintegrated_changes_are_not_re_pulled(self):
        repo = _repo_with(2)
        state = new_coalescer(0, Hooked())
        state = ingest_notification(
            state, HookNotification("r1", 5, nonce="n1"), repo, Revision("e", 0)
        )
        emitted = coalesce(state, 5, build_running=False)
        assert emitted is not None
        _, state = emitted
        # a fresh nonce while the first build runs must not duplicate seq 1
        state = ingest_notification(
            state, HookNotification("r1", 6, nonce="n2"), repo, Revision("e", 0)
        )
        assert [p.change.revision.seq for p in state.pending] == [2]


class TestCoalesce:
    def _pending_state(self, quiet_ms, detection, arrivals, last_build_end=None):
        repo = _repo_with(len(arrivals), step_ms=1)
        state = new_coalescer(quiet_ms, detection)
        for i, arrival in enumerate(arrivals):
            state = absorb_changes(state, repo.changes_since_seq(i)[:1], arrival)
        if last_build_end is not None:
            from dataclasses import replace

            state = replace(state, last_build_end=last_build_end)
        return state

    def test_strict_hooked_emits_one_change_per_request(self):
        state = self._pending_state(0, Hooked(), [1, 2])
        emitted = coalesce(state, now=5, build_running=False)
        assert emitted is not None
        request, state = emitted
        assert [c.revision.seq for c in request.changes] == [1]
        assert [p.change.revision.seq for p in state.pending] == [2]
        assert request.cause == HookNotified(5)

    def test_quiet_window_not_yet_elapsed(self):
        state = self._pending_state(3, Hooked(), [1, 2], last_build_end=5)
        assert coalesce(state, now=7, build_running=False) is None

    def test_quiet_window_elapsed_emits_the_whole_batch(self):
        state = self._pending_state(3, Hooked(), [1, 2], last_build_end=5)
        emitted = coalesce(state, now=8, build_running=False)
        assert emitted is not None
        request, state = emitted
        assert [c.revision.seq for c in request.changes] == [1, 2]
        assert state.pending == ()

    def test_running_build_blocks_emission(self):
        state = self._pending_state(0, Hooked(), [1])
        assert coalesce(state, now=10, build_running=True) is None

    def test_polled_with_zero_quiet_batches_everything(self):
        state = self._pending_state(0, Polled(100), [1, 2, 3])
        emitted = coalesce(state, now=3, build_running=False)
        assert emitted is not None
        request, state = emitted
        assert [c.revision.seq for c in request.changes] == [1, 2, 3]
        assert state.pending == ()

    def test_earliest_emit_matches_the_window_rule(self):
        assert earliest_emit(self._pending_state(3, Hooked(), [1], last_build_end=5)) == 8
        assert earliest_emit(self._pending_state(3, Hooked(), [9], last_build_end=5)) == 9
        assert earliest_emit(self._pending_state(3, Hooked(), [2])) == 2
        assert earliest_emit(new_coalescer(3, Hooked())) is None


class TestCoalescerProperties:
    def test_conservation_and_spacing_over_random_sequences(self):
        rng = random.Random(41)
        for _ in range(50):
            quiet = rng.choice([0, rng.randint(1, 20)])
            detection = rng.choice([Hooked(), Polled(10)])
            repo = InMemoryRepository("r1")
            state = new_coalescer(quiet, detection)
            emitted_seqs: list[int] = []
            emissions: list[tuple[int, int]] = []  # (emit time, last_build_end before)
            now = 0
            running_until = None
            for _ in range(rng.randint(1, 60)):
                now += rng.randint(0, 6)
                if running_until is not None and now >= running_until:
                    from dataclasses import replace

                    state = replace(state, last_build_end=running_until)
                    running_until = None
                if rng.random() < 0.5:
                    revision = repo.commit("dev", ["f"], at=now)
                    state = absorb_changes(state, repo.changes_since_seq(revision.seq - 1), now)
                result = coalesce(state, now, build_running=running_until is not None)
                if result is not None:
                    request, state = result
                    emitted_seqs.extend(c.revision.seq for c in request.changes)
                    emissions.append((now, state.last_build_end or -1))
                    running_until = now + rng.randint(1, 10)
            # drain what is left
            if running_until is not None:
                from dataclasses import replace

                state = replace(state, last_build_end=running_until)
                now = running_until
            while state.pending:
                now = max(now, earliest_emit(state))
                request, state = coalesce(state, now, build_running=False)
                emitted_seqs.extend(c.revision.seq for c in request.changes)
                emissions.append((now, state.last_build_end or -1))
                from dataclasses import replace

                state = replace(state, last_build_end=now + 1)
                now += 1
            # every committed change emitted exactly once, in order
            assert emitted_seqs == list(range(1, repo.head().seq + 1))
            # every emission respects the quiet window after the previous build end
            for emit_time, last_end in emissions:
                if last_end >= 0:
                    assert emit_time >= last_end + quiet

    def test_strict_hooked_yields_one_request_per_change(self):
        rng = random.Random(42)
        repo = InMemoryRepository("r1")
        state = new_coalescer(0, Hooked())
        emitted = 0
        now = 0
        for i in range(40):
            now += rng.randint(1, 5)
            revision = repo.commit("dev", ["f"], at=now)
            state = absorb_changes(state, repo.changes_since_seq(revision.seq - 1), now)
        while state.pending:
            request, state = coalesce(state, now, build_running=False)
            assert len(request.changes) == 1
            emitted += 1
        assert emitted == 40
