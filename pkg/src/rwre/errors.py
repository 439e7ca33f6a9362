"""Exception types shared across the package."""


class PreconditionError(ValueError):
    """An operation's stated precondition does not hold (CLI exit status 2)."""


class GraphFormatError(ValueError):
    """Malformed graph or environment text file."""
