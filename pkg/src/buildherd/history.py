"""Append-only build history and the feedback metrics derived from it.

The store is a line-delimited JSON file: a header object first, then one
complete run per line, flushed and fsynced so readers never see a torn
record and restarts lose nothing.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from buildherd import codec
from buildherd.errors import DuplicateRunIdError, StorageError
from buildherd.model import BuildRun, Outcome, feedback_latency

HISTORY_FORMAT = "buildherd-history"
HISTORY_VERSION = 1


@dataclass(frozen=True)
class MetricsReport:
    n_builds: int
    n_changes: int
    changes_per_build: Optional[float]
    mean_latency_ms: Optional[int]
    max_latency_ms: Optional[int]
    max_queue_depth: int


class HistoryStore:
    """Single-writer append-only run log."""

    def __init__(self, path: Path | str) -> None:
        self.path = Path(path)
        self._max_run_id = 0
        if self.path.exists():
            for run in self._read_all():
                self._max_run_id = max(self._max_run_id, run.run_id)
        else:
            self._write_header()

    def _write_header(self) -> None:
        try:
            with self.path.open("w", encoding="utf-8") as handle:
                handle.write(json.dumps({"format": HISTORY_FORMAT, "version": HISTORY_VERSION}) + "\n")
                handle.flush()
                os.fsync(handle.fileno())
        except OSError as exc:
            raise StorageError(f"cannot create history file {self.path}: {exc}") from exc

    def append(self, run: BuildRun) -> None:
        if run.run_id <= self._max_run_id:
            raise DuplicateRunIdError(
                f"run id {run.run_id} not greater than last stored {self._max_run_id}"
            )
        line = json.dumps(codec.run_to_json(run), sort_keys=True)
        try:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()
                os.fsync(handle.fileno())
        except OSError as exc:
            raise StorageError(f"cannot append to history file {self.path}: {exc}") from exc
        self._max_run_id = run.run_id

    def _read_all(self) -> list[BuildRun]:
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise StorageError(f"cannot read history file {self.path}: {exc}") from exc
        if not lines:
            raise StorageError(f"history file {self.path} is empty")
        header = json.loads(lines[0])
        if header.get("format") != HISTORY_FORMAT or header.get("version") != HISTORY_VERSION:
            raise StorageError(f"history file {self.path} has an unknown header: {header}")
        return [codec.run_from_json(json.loads(line)) for line in lines[1:] if line.strip()]

    def query(
        self,
        project: Optional[str] = None,
        start_ms: Optional[int] = None,
        end_ms: Optional[int] = None,
        outcome: Optional[str] = None,
    ) -> list[BuildRun]:
        """Matching runs ascending by run id. outcome is 'success'|'failed'|'errored'."""
        runs = []
        for run in self._read_all():
            if project is not None and run.project_id != project:
                continue
            if start_ms is not None and run.ended_at < start_ms:
                continue
            if end_ms is not None and run.started_at > end_ms:
                continue
            if outcome is not None and codec.outcome_kind(run.outcome) != outcome:
                continue
            runs.append(run)
        runs.sort(key=lambda r: r.run_id)
        return runs


def metrics(
    runs: list[BuildRun],
    queue_depth_samples: list[tuple[int, int]] | tuple[tuple[int, int], ...] = (),
) -> MetricsReport:
    """Feedback metrics over a set of runs plus sampled queue depths.

    Latencies cover every (run, change) pair; with no integrated changes they
    are reported as absent rather than zero.
    """
    latencies = [
        feedback_latency(run, change) for run in runs for change in run.request.changes
    ]
    n_builds = len(runs)
    n_changes = len(latencies)
    return MetricsReport(
        n_builds=n_builds,
        n_changes=n_changes,
        changes_per_build=(n_changes / n_builds) if n_builds else None,
        mean_latency_ms=(sum(latencies) // n_changes) if n_changes else None,
        max_latency_ms=max(latencies) if n_changes else None,
        max_queue_depth=max((depth for _, depth in queue_depth_samples), default=0),
    )


def outcome_kind(outcome: Outcome) -> str:
    return codec.outcome_kind(outcome)
