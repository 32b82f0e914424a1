"""Exception hierarchy shared by all modules.

The CLI maps :class:`ConfigError` (and subclasses) to exit status 2 and every
other :class:`DrmcError` to exit status 1.
"""


class DrmcError(Exception):
    """Base class for library errors."""


class ConfigError(DrmcError, ValueError):
    """Invalid parameters, options or usage."""


class SizingError(ConfigError):
    """The joint matrix would exceed the configured memory budget."""


class GridError(ConfigError):
    """An evaluation grid does not fit the ranking."""


class NumericError(DrmcError, ArithmeticError):
    """Non-finite values or a failed decomposition."""


class DataError(DrmcError):
    """Base class for ingestion and serialization failures."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BoundsError(ParseError):
    """An index lies outside the range declared in the header."""


class IntegrityError(DataError):
    """Internally inconsistent data (duplicate ids, bad payload sizes)."""


class VersionError(DataError):
    """Unreadable, truncated or digest-mismatched result file."""


class EmptyFeatureError(DataError):
    """Feature filtering removed every column."""


class RankUnreachableError(DrmcError):
    def __init__(self, target, observed):
        self.target = target
        self.observed = tuple(observed)
        lo = min(self.observed) if self.observed else None
        hi = max(self.observed) if self.observed else None
        super().__init__(
            f"no iterate within 50% of target rank {target}; "
            f"observed ranks span [{lo}, {hi}]"
        )


class ObserverError(DrmcError):
    """An observer callback raised; the original exception is chained."""


class FoldError(DrmcError):
    def __init__(self, fold, message):
        self.fold = fold
        super().__init__(f"fold {fold}: {message}")
