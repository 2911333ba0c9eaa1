"""Exception hierarchy shared across the package."""


class RpmkitError(Exception):
    """Base class for all rpmkit errors."""


class ContractViolation(RpmkitError):
    """An argument broke a documented precondition."""


class GenerationError(RpmkitError):
    """The generator could not satisfy its constraints (e.g. attribute
    space too small to build a candidate set)."""


class PerceptionError(RpmkitError):
    """A raster could not be interpreted under the requested layout."""


class UnrecognizedEntityError(PerceptionError):
    """Template matching fell below the acceptance threshold for a blob."""


class CorpusError(RpmkitError):
    """A corpus, pool or report file is malformed, truncated or has an
    unsupported format version."""


class EmptyPoolError(RpmkitError):
    """Solving was attempted against an empty rule pool."""


class TrainingDataError(RpmkitError):
    """Training was attempted on a corpus without ground-truth indices."""
