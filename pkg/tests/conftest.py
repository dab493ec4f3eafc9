"""Shared test helpers: stub definitions and random trace generation."""

from __future__ import annotations

import random

from buildherd.model import Hooked, Polled, Scheduled, Schedule, Triggered, TriggerPolicy
from buildherd.pipeline import BuildDefinition, BuildStep, StubCommand
from buildherd.sim import TraceCommit


def stub_definition(project_id: str = "p1", duration_ms: int = 0, fail: bool = False) -> BuildDefinition:
    command = StubCommand("fail" if fail else "succeed", duration_ms=duration_ms)
    return BuildDefinition(project_id=project_id, steps=(BuildStep("build", command),))


def random_trace(rng: random.Random, max_commits: int = 25, span_ms: int = 25_000) -> tuple[TraceCommit, ...]:
    n = rng.randint(0, max_commits)
    times = sorted(rng.randint(0, span_ms) for _ in range(n))
    return tuple(
        TraceCommit(t_ms=t, author=f"dev{i % 4}", paths=(f"src/f{i}.c",))
        for i, t in enumerate(times)
    )


def random_triggered_policy(rng: random.Random, quiet: str = "any") -> TriggerPolicy:
    detection = rng.choice(
        [Hooked(), Polled(interval_ms=rng.randint(1, 3000))]
    )
    if quiet == "zero":
        quiet_ms = 0
    elif quiet == "positive":
        quiet_ms = rng.randint(1, 6000)
    else:
        quiet_ms = rng.choice([0, rng.randint(1, 6000)])
    return Triggered(detection=detection, quiet_ms=quiet_ms)


def random_sim_policy(rng: random.Random) -> tuple[TriggerPolicy, int | None]:
    """A (policy, horizon) pair usable by both simulators."""
    roll = rng.random()
    if roll < 0.8:
        return random_triggered_policy(rng), None
    if roll < 0.9:
        return Scheduled(Schedule(every_ms=rng.randint(500, 5000))), 25_000
    return Scheduled(Schedule(daily_minutes=(0, 1), every_ms=rng.randint(2000, 8000))), 30_000
