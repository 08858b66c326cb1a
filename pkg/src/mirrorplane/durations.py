"""Logical-time helpers.

The whole simulation runs on a logical clock where one tick equals one
minute.  Durations in configs, CLI arguments and scenario scripts are written
as ``"15m"``, ``"36h"`` or ``"7d"`` (a bare integer is taken as minutes).
"""

from __future__ import annotations

import re

from .errors import ParseError

MINUTE = 1
HOUR = 60 * MINUTE
DAY = 24 * HOUR

_UNITS = {"m": MINUTE, "h": HOUR, "d": DAY}
_DURATION_RE = re.compile(r"^(\d+)([mhd]?)$")


def parse_duration(text: str) -> int:
    """Parse ``"15m"`` / ``"2h"`` / ``"7d"`` / ``"90"`` into logical minutes."""
    match = _DURATION_RE.match(str(text).strip())
    if not match:
        raise ParseError(f"bad duration {text!r}: expected <int>[m|h|d]")
    value, unit = match.groups()
    return int(value) * _UNITS.get(unit or "m", MINUTE)


def format_duration(minutes: int) -> str:
    """Render minutes back in the largest exact unit, for readable reports."""
    if minutes % DAY == 0 and minutes:
        return f"{minutes // DAY}d"
    if minutes % HOUR == 0 and minutes:
        return f"{minutes // HOUR}h"
    return f"{minutes}m"
