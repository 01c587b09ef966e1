"""Exception hierarchy shared across the runtime.

``exit_code`` drives the CLI: 1 for validation problems the operator can
fix in a config or command line, 2 for runtime faults.
"""

from __future__ import annotations


class EccError(Exception):
    """Base class for all runtime errors."""

    exit_code = 2


class ConfigError(EccError):
    """Unreadable, unparseable, or invalid configuration."""

    exit_code = 1


class ConfigValidationError(ConfigError):
    def __init__(self, violations) -> None:
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid configuration: {lines}")


class CorpusError(EccError):
    """Unreadable corpus file or unknown format tag."""


class PromptError(EccError):
    """Prompt construction failed (bad sample size, empty query)."""

    exit_code = 1


class PromptBudgetError(PromptError):
    """The preamble alone exceeds the rendering budget."""


class BackendError(EccError):
    """Model backend failure (network, protocol, exhausted retries)."""


class ReplayMissError(BackendError):
    """Replay backend has no fixture entry for the query."""


class ScoringError(EccError):
    """Score input outside [0, 1] or unknown scorer name."""

    exit_code = 1


class IllegalTransitionError(EccError):
    """Attempted an edge the record state machine does not allow."""


class UnknownRecordError(EccError):
    """Record id not present in the store."""


class EventLogError(EccError):
    """Corrupt event log line or a gap in the sequence numbers."""
