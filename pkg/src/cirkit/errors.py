"""Exception types shared across the toolkit.

DataError subclasses signal bad inputs (CLI exit code 2); UsageError signals
bad invocations (exit 1); JudgeError covers judge transport failures (exit 3).
"""


class CirkitError(Exception):
    """Base class for all toolkit errors."""


class UsageError(CirkitError):
    """Bad command line or configuration (unknown keys, missing args)."""


class DataError(CirkitError):
    """Invalid data: malformed files, violated preconditions."""


class ZeroVector(DataError):
    """Vector norm too small to normalize."""


class DimMismatch(DataError):
    """Operands have different dimensionality."""


class AntipodalVectors(DataError):
    """Interpolation endpoints are (nearly) opposite; the arc is undefined."""


class BatchTooSmall(DataError):
    """Operation needs at least two batch elements."""


class UnknownTemplate(DataError):
    """Modification-text template id outside the known set."""


class EmptyQuery(DataError):
    """Neither an image nor a text component was supplied."""


class EmptyDataset(DataError):
    """Training requires a non-empty dataset."""


class EmptyQuerySet(DataError):
    """Evaluation requires at least one query."""


class MissingSubset(DataError):
    """Subset metric requested for a query without subset ids."""


class MissingId(DataError):
    """An id referenced by a record is absent from the index."""


class IndexTooSmall(DataError):
    """Index has too few entries for the requested operation."""


class MalformedResponse(DataError):
    """Generation response did not parse into the expected schema."""


class MalformedGeneration(DataError):
    """Judge returned a wrong number of regenerated texts."""


class JudgeError(CirkitError):
    """Judge transport failed after retries."""
