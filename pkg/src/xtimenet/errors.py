"""Exception types shared across the package.

Shape/contract violations raise plain ValueError with a diagnostic
message; these two classes exist so the CLI can map failures to its
stable exit codes (data error -> 2, numerical failure -> 3).
"""


class DataError(Exception):
    """Malformed input files or inconsistent datasets."""


class NumericsError(Exception):
    """Numerical failure (NaN loss, NaN gradient) during optimization."""
