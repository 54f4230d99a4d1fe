"""Exception types shared across the package."""


class AeskError(Exception):
    """Base class for all package errors."""


class NotFound(AeskError):
    """Study id is unknown to the registry."""


class NoResults(AeskError):
    """Study exists but has no adverse-event results section."""


class UpstreamError(AeskError):
    """Registry request failed for a reason other than a missing study."""


class SchemaError(AeskError):
    """A record does not have the expected shape.

    ``field_path`` names the first offending field, dotted from the
    record root (e.g. ``resultsSection.adverseEventsModule.eventGroups[0].id``).
    """

    def __init__(self, field_path: str, detail: str = "missing or invalid field"):
        self.field_path = field_path
        super().__init__(f"{detail}: {field_path}")


class ParseError(AeskError):
    """A text input (CSV, embedding file, config file) failed to parse."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateRow(AeskError):
    """Same (preferred term, arm) reported twice in one CSV file."""


class InconsistentAtRisk(AeskError):
    """Same arm reported with two different at-risk denominators."""


class DimensionMismatch(AeskError):
    """Vectors of different dimensions were combined."""


class ZeroVector(AeskError):
    """An operation that needs a nonzero vector received a zero one."""


class UnknownTerm(AeskError):
    """Term absent from the embedding store and fallback encoding disabled."""


class DegenerateInput(AeskError):
    """Input carries no variance (e.g. all embeddings identical)."""


class LabelerFailure(AeskError):
    """An external cluster labeler was configured but did not produce a label."""


class UnknownPt(AeskError):
    """Preferred term not present in the incidence table."""


class InvalidLevel(AeskError):
    """Posterior quantile level outside the open interval (0, 1)."""


class EmptyCluster(AeskError):
    """Cluster-level aggregation received a cluster with no members."""


class KeyMismatch(AeskError):
    """Artifact assembly inputs are not keyed to the same preferred-term set."""


class EmptyDataset(AeskError):
    """Nothing to render for the requested plot kind."""


class SchemaVersionError(AeskError):
    """Artifacts file was produced by an incompatible schema version."""


class ConfigError(AeskError):
    """Invalid or unknown configuration key or value."""
