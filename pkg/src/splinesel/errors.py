"""Error classes shared across the package.

Domain errors (bad arguments) raise plain ValueError; the classes here cover
the two failure modes that need to be distinguishable from bad input.
"""


class NumericError(RuntimeError):
    """A numerical procedure failed: non-convergent series, degenerate
    denominator, eigensolver breakdown, and the like."""


class ConfigError(ValueError):
    """A configuration document or identifier could not be interpreted."""
