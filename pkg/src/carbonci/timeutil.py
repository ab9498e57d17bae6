"""UTC instants are carried as POSIX seconds (float) inside the library.

ISO-8601 strings only appear at file and wire boundaries.
"""

from __future__ import annotations

from datetime import datetime, timezone

HOUR = 3600.0
DAY = 86400.0


def parse_instant(text: str) -> float:
    """Parse an ISO-8601 timestamp into POSIX seconds.

    Naive timestamps are taken as UTC; a trailing ``Z`` is accepted.
    """
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_instant(t: float) -> str:
    dt = datetime.fromtimestamp(t, tz=timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def time_of_day(t: float) -> float:
    """Seconds since UTC midnight."""
    return t % DAY


def parse_clock(text: str | float | int) -> float:
    """``"08:00"`` / ``"8"`` / ``8.5`` -> seconds after midnight."""
    if isinstance(text, (int, float)):
        return float(text) * HOUR
    text = str(text).strip()
    if ":" in text:
        hh, mm = text.split(":", 1)
        return int(hh) * HOUR + int(mm) * 60.0
    return float(text) * HOUR
