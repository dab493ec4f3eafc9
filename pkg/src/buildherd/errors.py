"""Exception hierarchy shared across the package."""

from __future__ import annotations


class BuildherdError(Exception):
    """Base class for all buildherd errors."""


class RepositoryUnreachableError(BuildherdError):
    """The repository backing store cannot be read."""


class UnknownRevisionError(BuildherdError):
    """A revision was referenced that the repository does not know about."""


class EmptyPathsError(BuildherdError):
    """A commit was attempted with no changed paths."""


class ChangeNotInRunError(BuildherdError):
    """Feedback latency was requested for a change the run did not integrate."""


class DuplicateRunIdError(BuildherdError):
    """A run id was appended twice to the history store."""


class StorageError(BuildherdError):
    """The history file is missing, corrupt, or unwritable."""


class UnknownProjectError(BuildherdError):
    """An event referenced a project the orchestrator does not manage."""


class InvalidPolicyError(BuildherdError):
    """A trigger policy is structurally invalid for the requested operation."""
