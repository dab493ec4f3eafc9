"""Append-only history store and feedback metrics."""

from __future__ import annotations

import json
import random

import pytest

from buildherd.errors import DuplicateRunIdError
from buildherd.history import HISTORY_FORMAT, HistoryStore, metrics
from buildherd.model import (
    BuildRequest,
    BuildRun,
    Change,
    Commanded,
    Failed,
    HookNotified,
    Revision,
    Success,
)
from buildherd.pipeline import StepResult, StepStatus


def _change(seq: int, ts: int) -> Change:
    return Change(Revision(f"r{seq}", seq), "dev", ts, (f"f{seq}.c",))


def _run(run_id: int, ended_at: int = 100, changes=(), outcome=Success(), project="p1") -> BuildRun:
    target = changes[-1].revision if changes else Revision("head", 0)
    request = BuildRequest(HookNotified(0), tuple(changes), target, 0)
    steps = (
        StepResult("build", StepStatus.SUCCEEDED, 0, b"ok\n", ended_at),
    )
    return BuildRun(run_id, project, request, 0, ended_at, steps, outcome)


def _random_run(rng: random.Random, run_id: int) -> BuildRun:
    n = rng.randint(0, 4)
    base = rng.randint(0, 1000)
    changes = tuple(_change(i + 1, base + i) for i in range(n))
    outcome = rng.choice([Success(), Failed("build")])
    started = base + n
    ended = started + rng.randint(0, 500)
    target = changes[-1].revision if changes else Revision("head", n)
    request = BuildRequest(Commanded(f"dev{run_id % 3}"), changes, target, started)
    steps = tuple(
        StepResult(
            f"s{i}",
            rng.choice([StepStatus.SUCCEEDED, StepStatus.FAILED]),
            rng.choice([0, 1, 2]),
            bytes([rng.randrange(256) for _ in range(rng.randint(0, 20))]),
            rng.randint(0, 100),
            truncated=rng.random() < 0.1,
        )
        for i in range(rng.randint(0, 3))
    )
    return BuildRun(run_id, f"p{run_id % 2}", request, started, ended, steps, outcome)


class TestAppendQuery:
    def test_append_then_read(self, tmp_path):
        store = HistoryStore(tmp_path / "h.jsonl")
        run = _run(1)
        store.append(run)
        assert store.query() == [run]

    def test_duplicate_run_id_rejected(self, tmp_path):
        store = HistoryStore(tmp_path / "h.jsonl")
        store.append(_run(1))
        with pytest.raises(DuplicateRunIdError):
            store.append(_run(1))

    def test_appends_survive_restart(self, tmp_path):
        path = tmp_path / "h.jsonl"
        store = HistoryStore(path)
        runs = [_run(1), _run(2, ended_at=200)]
        for run in runs:
            store.append(run)
        reopened = HistoryStore(path)
        assert reopened.query() == runs
        # and the reopened store still enforces id monotonicity
        with pytest.raises(DuplicateRunIdError):
            reopened.append(_run(2))

    def test_outcome_filter(self, tmp_path):
        store = HistoryStore(tmp_path / "h.jsonl")
        store.append(_run(1, outcome=Success()))
        store.append(_run(2, outcome=Failed("build")))
        store.append(_run(3, outcome=Success()))
        failed = store.query(outcome="failed")
        assert [r.run_id for r in failed] == [2]

    def test_time_range_excluding_all(self, tmp_path):
        store = HistoryStore(tmp_path / "h.jsonl")
        store.append(_run(1, ended_at=100))
        assert store.query(start_ms=500) == []

    def test_empty_store(self, tmp_path):
        store = HistoryStore(tmp_path / "h.jsonl")
        assert store.query() == []

    def test_header_line(self, tmp_path):
        path = tmp_path / "h.jsonl"
        HistoryStore(path)
        header = json.loads(path.read_text().splitlines()[0])
        assert header == {"format": HISTORY_FORMAT, "version": 1}

    def test_random_round_trip(self, tmp_path):
        rng = random.Random(8)
        path = tmp_path / "h.jsonl"
        store = HistoryStore(path)
        runs = [_random_run(rng, i + 1) for i in range(30)]
        for run in runs:
            store.append(run)
        assert HistoryStore(path).query() == runs

    def test_file_is_append_only(self, tmp_path):
        path = tmp_path / "h.jsonl"
        store = HistoryStore(path)
        store.append(_run(1))
        before = path.read_bytes()
        store.append(_run(2, ended_at=300))
        after = path.read_bytes()
        assert after.startswith(before)


class TestMetrics:
    def test_single_run_single_change(self):
        run = _run(1, ended_at=5, changes=(_change(1, 0),))
        report = metrics([run])
        assert report.n_builds == 1 and report.n_changes == 1
        assert report.mean_latency_ms == 5 and report.max_latency_ms == 5
        assert report.changes_per_build == 1.0

    def test_known_latency_set(self):
        # latencies 5, 9, 13 recomputed by hand: ends 10/10/14 minus stamps 5/1/1
        runs = [
            _run(1, ended_at=10, changes=(_change(1, 5),)),
            _run(2, ended_at=10, changes=(_change(1, 1),)),
            _run(3, ended_at=14, changes=(_change(1, 1),)),
        ]
        report = metrics(runs)
        assert report.mean_latency_ms == 9
        assert report.max_latency_ms == 13

    def test_zero_runs_reports_absent_latencies(self):
        report = metrics([])
        assert report.n_builds == 0
        assert report.mean_latency_ms is None and report.max_latency_ms is None
        assert report.changes_per_build is None

    def test_mean_never_exceeds_max(self):
        rng = random.Random(12)
        for _ in range(30):
            runs = []
            for i in range(rng.randint(1, 6)):
                n = rng.randint(0, 3)
                changes = tuple(_change(j + 1, rng.randint(0, 50)) for j in range(n))
                runs.append(_run(i + 1, ended_at=100 + rng.randint(0, 50), changes=changes))
            report = metrics(runs)
            if report.mean_latency_ms is not None:
                assert 0 <= report.mean_latency_ms <= report.max_latency_ms

    def test_queue_depth_samples(self):
        report = metrics([], [(0, 1), (5, 4), (9, 2)])
        assert report.max_queue_depth == 4
