"""Exception hierarchy shared by all modules.

Every error raised on purpose by this package derives from LobflowError so
callers can catch one base class at CLI boundaries.
"""

from __future__ import annotations


class LobflowError(Exception):
    pass


class ConfigError(LobflowError):
    """Bad user-supplied configuration (CLI flags, config files, ranges)."""


# --- book / series construction ---------------------------------------------

class EmptySide(LobflowError):
    """An operation needed a best bid/ask on a side that has no levels."""


class NonPositiveSpread(LobflowError):
    """Book is crossed or locked: best bid >= best ask."""


class TooShort(LobflowError):
    """Series shorter than the operation's minimum sample requirement."""


# --- ingest -------------------------------------------------------------------

class ParseError(LobflowError):
    """A CSV row failed validation. Carries the 1-based file row number."""

    def __init__(self, row: int, reason: str):
        self.row = row
        self.reason = reason
        super().__init__(f"row {row}: {reason}")


class EmptyFile(LobflowError):
    """Input file holds no data rows."""


# --- flow extraction / replay -------------------------------------------------

class InconsistentUpdate(LobflowError):
    """Applying the events classified for a snapshot pair does not reproduce
    the second snapshot. Carries the index of the later snapshot."""

    def __init__(self, snapshot_idx: int, detail: str = ""):
        self.snapshot_idx = snapshot_idx
        msg = f"snapshot {snapshot_idx}: classified events do not reproduce it"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class BadCancel(LobflowError):
    """Cancel at an absent price, or for more size than is resting."""


class BadMarket(LobflowError):
    """Market event not at the prevailing best of its side, or oversized."""


# --- distribution fitting -----------------------------------------------------

class DegenerateSample(LobflowError):
    """Sample unusable for the requested fit (too small, nonpositive values,
    or zero variance where variance is required)."""


class NoConvergence(LobflowError):
    """Iterative fit failed to converge within the iteration budget."""


class ZeroVariance(LobflowError):
    """Autocorrelation of a constant series is undefined."""


class EmptyFlow(LobflowError):
    """Flow statistic undefined on an empty event stream."""
