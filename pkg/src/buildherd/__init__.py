"""buildherd: a miniature CI orchestrator with selectable trigger policies."""

from buildherd.model import (
    ClassificationLabel,
    Hooked,
    Levered,
    Polled,
    Schedule,
    Scheduled,
    Triggered,
    TriggerPolicy,
    classify,
    feedback_latency,
    validate_policy,
)

__version__ = "0.1.0"

__all__ = [
    "ClassificationLabel",
    "Hooked",
    "Levered",
    "Polled",
    "Schedule",
    "Scheduled",
    "Triggered",
    "TriggerPolicy",
    "classify",
    "feedback_latency",
    "validate_policy",
    "__version__",
]
