"""Classification, feedback latency, and policy validation."""

from __future__ import annotations

import itertools

import pytest

from buildherd.errors import ChangeNotInRunError
from buildherd.model import (
    BuildRequest,
    BuildRun,
    Change,
    ClassificationLabel,
    Commanded,
    HookNotified,
    Hooked,
    Levered,
    Maturity,
    Mode,
    Polled,
    Revision,
    Schedule,
    Scheduled,
    Success,
    Triggered,
    TriggerKind,
    classify,
    feedback_latency,
    validate_policy,
)


def _change(seq: int, ts: int) -> Change:
    return Change(Revision(f"r{seq}", seq), "dev", ts, ("a.c",))


def _run(changes: tuple[Change, ...], ended_at: int, started_at: int = 0) -> BuildRun:
    target = changes[-1].revision if changes else Revision("head", 9)
    request = BuildRequest(HookNotified(started_at), changes, target, started_at)
    return BuildRun(1, "p1", request, started_at, ended_at, (), Success())


class TestClassify:
    def test_levered_is_on_demand(self):
        assert classify(Levered()) == ClassificationLabel(Mode.ON_DEMAND, None, None)

    def test_scheduled_is_transitional(self):
        label = classify(Scheduled(Schedule(daily_minutes=(120,))))
        assert label == ClassificationLabel(
            Mode.CONTINUAL, Maturity.TRANSITIONAL, TriggerKind.SCHEDULED
        )

    def test_hooked_with_quiet_period_is_transitional(self):
        label = classify(Triggered(Hooked(), quiet_ms=120_000))
        assert label == ClassificationLabel(
            Mode.CONTINUAL, Maturity.TRANSITIONAL, TriggerKind.HOOKED
        )

    def test_polled_without_quiet_period_is_strict(self):
        label = classify(Triggered(Polled(60_000), quiet_ms=0))
        assert label == ClassificationLabel(Mode.CONTINUAL, Maturity.STRICT, TriggerKind.POLLED)

    def test_exhaustive_enumeration_hits_exactly_the_taxonomy_leaves(self):
        shapes = [Levered(), Scheduled(Schedule(daily_minutes=(120,)))]
        for detection, quiet in itertools.product([Polled(60_000), Hooked()], [0, 5000]):
            shapes.append(Triggered(detection, quiet))
        labels = {classify(p) for p in shapes}
        expected = {
            ClassificationLabel(Mode.ON_DEMAND, None, None),
            ClassificationLabel(Mode.CONTINUAL, Maturity.TRANSITIONAL, TriggerKind.SCHEDULED),
            ClassificationLabel(Mode.CONTINUAL, Maturity.STRICT, TriggerKind.POLLED),
            ClassificationLabel(Mode.CONTINUAL, Maturity.STRICT, TriggerKind.HOOKED),
            ClassificationLabel(Mode.CONTINUAL, Maturity.TRANSITIONAL, TriggerKind.POLLED),
            ClassificationLabel(Mode.CONTINUAL, Maturity.TRANSITIONAL, TriggerKind.HOOKED),
        }
        assert labels == expected

    def test_strict_iff_triggered_with_zero_quiet(self):
        policies = [
            Levered(),
            Scheduled(Schedule(every_ms=3_600_000)),
            Triggered(Hooked(), 0),
            Triggered(Hooked(), 1),
            Triggered(Polled(1000), 0),
            Triggered(Polled(1000), 999),
        ]
        for policy in policies:
            strict = classify(policy).maturity is Maturity.STRICT
            assert strict == (isinstance(policy, Triggered) and policy.quiet_ms == 0)


class TestFeedbackLatency:
    def test_simple_difference(self):
        change = _change(1, 0)
        assert feedback_latency(_run((change,), ended_at=5), change) == 5

    def test_other_offsets(self):
        change = _change(1, 1)
        assert feedback_latency(_run((change,), ended_at=13), change) == 12

    def test_change_not_in_run_raises(self):
        run = _run((_change(1, 0),), ended_at=5)
        with pytest.raises(ChangeNotInRunError):
            feedback_latency(run, _change(2, 0))

    def test_never_negative_for_contained_changes(self):
        changes = tuple(_change(i, i * 10) for i in range(1, 6))
        run = _run(changes, ended_at=100)
        assert all(feedback_latency(run, c) >= 0 for c in changes)


class TestValidatePolicy:
    def test_valid_polled(self):
        assert validate_policy(Triggered(Polled(60_000), 0)) == []

    def test_zero_interval_is_a_violation(self):
        assert validate_policy(Triggered(Polled(0), 0)) == ["interval must be positive"]

    def test_empty_schedule_is_a_violation(self):
        violations = validate_policy(Scheduled(Schedule()))
        assert any("empty schedule" in v for v in violations)

    def test_negative_quiet_period(self):
        assert validate_policy(Triggered(Hooked(), -1)) == ["quiet period must be non-negative"]

    def test_unsorted_daily_times(self):
        violations = validate_policy(Scheduled(Schedule(daily_minutes=(120, 60))))
        assert any("sorted" in v for v in violations)


class TestRequestInvariants:
    def test_changes_must_be_sorted(self):
        c1, c2 = _change(1, 0), _change(2, 1)
        with pytest.raises(ValueError):
            BuildRequest(Commanded("x"), (c2, c1), c2.revision, 0)

    def test_target_must_be_newest_change(self):
        c1, c2 = _change(1, 0), _change(2, 1)
        with pytest.raises(ValueError):
            BuildRequest(Commanded("x"), (c1, c2), c1.revision, 0)

    def test_empty_changes_allow_any_target(self):
        request = BuildRequest(Commanded("x"), (), Revision("head", 7), 0)
        assert request.target_revision.seq == 7
