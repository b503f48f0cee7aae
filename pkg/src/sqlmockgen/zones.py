"""Time zone conversions on top of the standard ``zoneinfo`` database.

Unknown zone names, or a host without a tz database, fall back to UTC and
log a warning.
"""

from __future__ import annotations

import logging
from datetime import datetime, timedelta, timezone, tzinfo
from functools import lru_cache
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

log = logging.getLogger(__name__)

_UTC_NAMES = {"UTC", "Etc/UTC", "GMT", "Etc/GMT", "Z", "Zulu"}
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


@lru_cache(maxsize=None)
def _lookup(name: str) -> tzinfo | None:
    if name in _UTC_NAMES:
        return timezone.utc
    try:
        return ZoneInfo(name)
    except (ZoneInfoNotFoundError, ValueError):
        return None


@lru_cache(maxsize=None)
def _zone(name: str | None) -> tzinfo:
    if name is None:
        return timezone.utc
    tz = _lookup(name)
    if tz is None:
        log.warning("unknown time zone %r, falling back to UTC", name)
        return timezone.utc
    return tz


def canonical_zone(name: str | None) -> str:
    """Zone name used internally: the IANA key, or "UTC"."""
    tz = _zone(name)
    return "UTC" if tz is timezone.utc else name


def is_known_zone(name: str) -> bool:
    return _lookup(name) is not None


def utc_offset(zone: str | None, epoch_seconds: int | float) -> int:
    """Offset in whole seconds east of UTC for the instant ``epoch_seconds``."""
    aware = (_EPOCH + timedelta(seconds=epoch_seconds)).astimezone(_zone(zone))
    return int(aware.utcoffset() // timedelta(seconds=1))


def to_local(epoch_seconds: int | float, zone: str | None) -> datetime:
    """Naive local wall-clock datetime for an instant."""
    return (_EPOCH + timedelta(seconds=epoch_seconds)).astimezone(_zone(zone)).replace(tzinfo=None)


def local_to_epoch(local: datetime, zone: str | None) -> int:
    """Epoch seconds for a naive local wall-clock time.

    Ambiguous times resolve to the earlier instant; times inside a spring-forward
    gap use the offset in force before the transition.
    """
    aware = local.replace(tzinfo=_zone(zone), fold=0)
    return (aware - _EPOCH) // timedelta(seconds=1)
