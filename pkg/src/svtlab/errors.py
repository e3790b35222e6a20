"""Exception types shared across svtlab."""


class SvtlabError(Exception):
    """Base class for all svtlab errors."""


class EmptyCandidateError(SvtlabError, ValueError):
    """Every candidate was excluded from an exponential-mechanism draw."""


class InvalidCutoffError(SvtlabError, ValueError):
    """The cutoff ``c`` exceeds the number of available queries."""


class UnsupportedCombinationError(SvtlabError, ValueError):
    """A configuration combines options the mechanism does not support."""


class UnsupportedVariantError(SvtlabError, ValueError):
    """The requested computation is not available for this SVT variant."""


class InvalidPatternError(SvtlabError, ValueError):
    """An output pattern cannot be produced by the variant (e.g. ignores abort)."""


class SessionClosedError(SvtlabError, RuntimeError):
    """A query was fed to a session that has already aborted."""


class UndefinedMetricError(SvtlabError, ValueError):
    """A utility metric is undefined for the given selection (e.g. empty SER)."""


class DataError(SvtlabError, ValueError):
    """Input data could not be read or is empty."""
