"""Typed data values.

Rows are plain dicts.  Scalars map to native Python types wherever one
exists (``None``, ``int``, ``float``, ``bool``, ``str``, ``bytes``,
``datetime.date``); timestamps and enum names get small wrapper types so
they stay distinguishable from strings.  Nested records are dicts and
repeated values are lists.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from typing import Any, Union

from . import zones


@dataclass(frozen=True, order=True)
class Timestamp:
    """An instant in epoch seconds, optionally labelled with a zone."""

    seconds: int | float
    zone: str | None = None

    def local(self, zone: str | None = None) -> datetime:
        return zones.to_local(self.seconds, zone if zone is not None else self.zone)

    def __str__(self) -> str:
        return format_timestamp(self)


@dataclass(frozen=True)
class EnumVal:
    name: str

    def __str__(self) -> str:
        return self.name


Value = Union[None, bool, int, float, str, bytes, date, Timestamp, EnumVal, list, dict]
Row = dict

_DATE_RE = re.compile(r"^(\d{4})-(\d{1,2})-(\d{1,2})$")
_TS_RE = re.compile(
    r"^(\d{4})-(\d{1,2})-(\d{1,2})"
    r"(?:[T ](\d{1,2}):(\d{2})(?::(\d{2})(?:\.(\d{1,9}))?)?)?"
    r"\s*(Z|UTC|[+-]\d{2}(?::?\d{2})?)?"
    r"\s*(?:\[([A-Za-z_/+\-0-9]+)\]|\s([A-Za-z_]+/[A-Za-z_]+))?$"
)

EPOCH = datetime(1970, 1, 1)


def parse_date(text: str) -> date:
    m = _DATE_RE.match(text.strip())
    if not m:
        raise ValueError(f"not a date: {text!r}")
    return date(int(m.group(1)), int(m.group(2)), int(m.group(3)))


def looks_like_date(text: str) -> bool:
    try:
        parse_date(text)
    except ValueError:
        return False
    return True


def parse_timestamp(text: str, default_zone: str | None = None) -> Timestamp:
    """Parse an ISO-8601/GoogleSQL style timestamp literal.

    An explicit offset wins over the zone label; a bare wall-clock time is
    interpreted in ``default_zone`` (UTC when omitted).
    """
    m = _TS_RE.match(text.strip())
    if not m:
        raise ValueError(f"not a timestamp: {text!r}")
    year, month, day, hour, minute, second, frac, offset, zone_a, zone_b = m.groups()
    label = zone_a or zone_b
    wall = datetime(int(year), int(month), int(day), int(hour or 0), int(minute or 0), int(second or 0))
    fraction = float("0." + frac) if frac else 0.0
    if offset and offset not in ("Z", "UTC"):
        sign = -1 if offset[0] == "-" else 1
        digits = offset[1:].replace(":", "")
        off = sign * (int(digits[:2]) * 3600 + int(digits[2:4] or 0) * 60)
        seconds = int((wall - EPOCH).total_seconds()) - off
    elif offset:
        seconds = int((wall - EPOCH).total_seconds())
    else:
        seconds = zones.local_to_epoch(wall, label or default_zone)
    total: int | float = seconds + fraction if fraction else seconds
    return Timestamp(total, label)


def _iso(wall: datetime) -> str:
    # strftime does not zero-pad years below 1000 on every platform
    return f"{wall.year:04d}-{wall.month:02d}-{wall.day:02d}T{wall.hour:02d}:{wall.minute:02d}:{wall.second:02d}"


def format_timestamp(ts: Timestamp) -> str:
    """Canonical text form; round-trips through :func:`parse_timestamp`.

    Raises OverflowError for instants outside years 1..9999.
    """
    whole = int(ts.seconds // 1) if isinstance(ts.seconds, float) else ts.seconds
    frac = ts.seconds - whole if isinstance(ts.seconds, float) else 0
    suffix = f"{frac:.6f}"[1:].rstrip("0") if frac else ""
    if suffix == ".":
        suffix = ""
    if ts.zone is None or ts.zone == "UTC":
        wall = EPOCH + timedelta(seconds=whole)
        text = _iso(wall) + suffix + "Z"
        return text if ts.zone is None else text + "[UTC]"
    offset = zones.utc_offset(ts.zone, whole)
    wall = EPOCH + timedelta(seconds=whole + offset)
    sign = "-" if offset < 0 else "+"
    hh, mm = divmod(abs(offset) // 60, 60)
    return f"{_iso(wall)}{suffix}{sign}{hh:02d}:{mm:02d}[{ts.zone}]"


def date_to_ordinal(d: date) -> int:
    return d.toordinal()


def kind_name(value: Any) -> str:
    """Short type label used in validation messages."""
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return "BOOL"
    if isinstance(value, int):
        return "INT64"
    if isinstance(value, float):
        return "FLOAT64"
    if isinstance(value, str):
        return "STRING"
    if isinstance(value, bytes):
        return "BYTES"
    if isinstance(value, datetime):
        return "DATETIME"
    if isinstance(value, date):
        return "DATE"
    if isinstance(value, Timestamp):
        return "TIMESTAMP"
    if isinstance(value, EnumVal):
        return "ENUM"
    if isinstance(value, list):
        return "ARRAY"
    if isinstance(value, dict):
        return "RECORD"
    return type(value).__name__


def display(value: Any) -> str:
    """SQL-literal-ish rendering for messages and prompts."""
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return "'" + value.replace("\\", "\\\\").replace("'", "\\'") + "'"
    if isinstance(value, date):
        return f"'{value.isoformat()}'"
    if isinstance(value, Timestamp):
        return f"'{format_timestamp(value)}'"
    if isinstance(value, EnumVal):
        return f"'{value.name}'"
    if isinstance(value, bytes):
        return "b" + repr(value)[1:]
    return repr(value)
