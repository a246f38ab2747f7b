"""Timestamp helpers shared by the analyzers and the timeline.

Everything leaves this module as an aware UTC ``datetime``. Sources that
carry no zone information are localised with ``config.LOCAL_TZ`` (via pytz)
when set, otherwise read as UTC; callers are told either way so the event
can be flagged.
"""

from __future__ import annotations

import logging
from datetime import UTC, datetime, timedelta

import pytz

from llm_triage import config

log = logging.getLogger(__name__)

EPOCH = datetime(1970, 1, 1, tzinfo=UTC)
_ONE_MS = timedelta(milliseconds=1)


def parse_timestamp(ts: str | None) -> datetime | None:
    """Parse an ISO 8601 / RFC 3339 string; ``None`` when unparseable.

    Naive results are returned naive; pair with :func:`assume_zone`.
    """
    if not ts:
        return None
    try:
        # fromisoformat rejects a trailing Z before 3.11 and lowercase z always
        value = ts.strip()
        if value[-1:] in ("Z", "z"):
            value = value[:-1] + "+00:00"
        return datetime.fromisoformat(value)
    except (ValueError, TypeError):
        return None


def assume_zone(dt: datetime) -> tuple[datetime, bool]:
    """Return ``(utc_datetime, tz_assumed)``.

    Aware datetimes are converted; naive ones are localised with
    ``config.LOCAL_TZ`` or read as UTC, and ``tz_assumed`` is True.
    """
    if dt.tzinfo is not None and dt.utcoffset() is not None:
        return dt.astimezone(UTC), False
    zone_name = config.LOCAL_TZ
    if zone_name:
        try:
            zone = pytz.timezone(zone_name)
        except pytz.UnknownTimeZoneError:
            log.warning("unknown LLMTRIAGE_LOCAL_TZ=%r, reading naive times as UTC", zone_name)
        else:
            return zone.localize(dt).astimezone(UTC), True
    return dt.replace(tzinfo=UTC), True


def from_epoch_ms(ms: int) -> datetime | None:
    """Epoch milliseconds to UTC; ``None`` outside the representable range."""
    try:
        return EPOCH + timedelta(milliseconds=ms)
    except OverflowError:
        return None


def to_epoch_ms(dt: datetime) -> int:
    return (dt.astimezone(UTC) - EPOCH) // _ONE_MS


def from_epoch_seconds(seconds: float) -> datetime | None:
    try:
        return datetime.fromtimestamp(seconds, tz=UTC)
    except (OverflowError, OSError, ValueError):
        return None


def truncate_ms(dt: datetime) -> datetime:
    """Drop sub-millisecond precision."""
    return dt.replace(microsecond=dt.microsecond - dt.microsecond % 1000)


def rfc3339_ms(dt: datetime) -> str:
    """``YYYY-MM-DDTHH:MM:SS.mmmZ`` in UTC."""
    u = dt.astimezone(UTC)
    return (
        f"{u.year:04d}-{u.month:02d}-{u.day:02d}T"
        f"{u.hour:02d}:{u.minute:02d}:{u.second:02d}.{u.microsecond // 1000:03d}Z"
    )


def month_start(year: int, month: int) -> datetime:
    return datetime(year, month, 1, tzinfo=UTC)


def parse_month(name: str) -> datetime | None:
    """``YYYY-MM`` to the first instant of that month; ``None`` if invalid."""
    if len(name) != 7 or name[4] != "-":
        return None
    year, month = name[:4], name[5:]
    if not (year.isascii() and year.isdigit() and month.isascii() and month.isdigit()):
        return None
    try:
        return month_start(int(year), int(month))
    except ValueError:
        return None
