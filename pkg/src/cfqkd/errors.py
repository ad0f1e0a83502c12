"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A parameter lies outside its admissible domain."""


class DegenerateInputError(ValueError):
    """An operation received a state it cannot act on (e.g. the vacuum)."""


class EmptyKeyError(ValueError):
    """A key statistic was requested for an empty key."""
