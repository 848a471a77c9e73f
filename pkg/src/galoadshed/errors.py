"""Exception hierarchy shared by all galoadshed modules."""

from __future__ import annotations


class GaloadshedError(Exception):
    """Base class for every error raised by this package."""


class OverConstrainedError(GaloadshedError):
    """Equality constraints meet or exceed the number of decision variables."""


class DimensionMismatchError(GaloadshedError):
    """A vector's length does not match what its problem requires."""


class NonFiniteObjectiveError(GaloadshedError):
    """An objective function returned NaN or infinity."""


class UnknownProblemError(GaloadshedError):
    """Requested name is not in the built-in problem registry."""


class InvalidConfigError(GaloadshedError):
    """A configuration value violates its documented constraints."""


class UnevaluatedPopulationError(GaloadshedError):
    """An operation that needs fitness values met an unevaluated individual."""


class NoApplicableRuleError(GaloadshedError):
    """No rule in the active rule set matches the trigger."""


class DuplicateRuleIdError(GaloadshedError):
    """A rule with this id already exists in the rule set."""


class UnknownRuleIdError(GaloadshedError):
    """No rule with this id exists in the rule set."""


class MalformedDecisionError(GaloadshedError):
    """A decision is missing or carries unusable parameters."""


class StorageError(GaloadshedError):
    """Underlying store could not be read or written."""


class SchemaError(StorageError):
    """A record is missing required fields or has malformed values."""


class DuplicateJobIdError(GaloadshedError):
    """A job with this id is already tracked by the job table."""


class EvaluationError(GaloadshedError):
    """A worker failed while evaluating a batch of genomes."""


class NoResultsError(GaloadshedError):
    """Best-solution selection was asked before any result was accepted."""


class AllWorkersSuspendedError(GaloadshedError):
    """Jobs remain queued but every worker has been suspended."""


class LivelockError(GaloadshedError):
    """The event loop exceeded its processing cap without quiescing."""


class ProtocolError(GaloadshedError):
    """A wire message had an unknown type or was not valid JSON."""
