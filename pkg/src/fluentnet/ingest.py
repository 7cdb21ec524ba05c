"""Reading interleaved-ADL sensor logs into timed events and ground truth.

Lines are whitespace separated: ``DATE TIME SENSOR VALUE [ACTIVITY TAG]``.
Date and time fuse into epoch milliseconds; sensor values normalise to a
Boolean per sensor family (ON/OPEN/PRESENT are true, OFF/CLOSE/ABSENT are
false -- the map is extensible because raw vocabularies vary by release).
Sensor names drop leading zeros (``M016`` becomes ``M16``) and may be
renamed through a scenario map so that a different physical labelling can
be fixed without code changes.

A trailing token pair is read as an activity annotation ``(activity,
begin|end)``; the activity token may be a bare index, ``a3``-style, or a
name resolved through a supplied mapping.
"""

from __future__ import annotations

import re
import time as _time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Optional, TextIO, Union

from .network import VirtualClock

DEFAULT_VALUE_MAP: dict[str, bool] = {
    "ON": True,
    "OFF": False,
    "OPEN": True,
    "CLOSE": False,
    "CLOSED": False,
    "PRESENT": True,
    "ABSENT": False,
    "START": True,
    "STOP": False,
    "TRUE": True,
    "FALSE": False,
}

_EPOCH = datetime(1970, 1, 1)
_SENSOR_RE = re.compile(r"^([A-Za-z]+)0*(\d+)(.*)$")
_BEGIN_TAGS = {"begin", "start"}
_END_TAGS = {"end", "stop"}


class TraceParseError(ValueError):
    """A line did not match the trace grammar; the raw text is preserved."""

    def __init__(self, message: str, line: str) -> None:
        super().__init__(f"{message}: {line!r}")
        self.line = line


@dataclass(frozen=True)
class TraceEvent:
    time_ms: int
    sensor: str
    value: bool
    activity: Optional[int] = None
    marker: Optional[str] = None  # "begin" | "end"


@dataclass(frozen=True)
class Interval:
    activity: int
    start_ms: int
    end_ms: int


@dataclass
class GroundTruth:
    """Annotated activity intervals per participant; overlaps are allowed."""

    sessions: dict[str, list[Interval]] = field(default_factory=dict)

    def add(self, participant: str, interval: Interval) -> None:
        self.sessions.setdefault(participant, []).append(interval)

    def intervals(self, participant: str) -> list[Interval]:
        return self.sessions.get(participant, [])

    def totals(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for intervals in self.sessions.values():
            for interval in intervals:
                counts[interval.activity] = counts.get(interval.activity, 0) + 1
        return counts


def timestamp_ms(date_token: str, time_token: str) -> int:
    """Fuse a date and a time-of-day into epoch milliseconds.

    Fractional seconds of any length are accepted (logs carry anything from
    two to six digits) and truncated to milliseconds.
    """
    try:
        year, month, day = (int(part) for part in date_token.split("-"))
        clock, _, fraction = time_token.partition(".")
        hour, minute, second = (int(part) for part in clock.split(":"))
        ms = int((fraction + "000")[:3]) if fraction else 0
        stamp = datetime(year, month, day, hour, minute, second)
    except ValueError as exc:
        raise TraceParseError(f"bad timestamp ({exc})", f"{date_token} {time_token}") from exc
    delta = stamp - _EPOCH
    return delta.days * 86_400_000 + delta.seconds * 1000 + ms


def normalize_sensor(token: str, rename: Optional[Mapping[str, str]] = None) -> str:
    """Strip leading zeros from the numeric part and apply renames."""
    if rename and token in rename:
        return rename[token]
    match = _SENSOR_RE.match(token)
    if match and not match.group(3):
        normalized = f"{match.group(1)}{int(match.group(2))}"
    else:
        normalized = token
    if rename and normalized in rename:
        return rename[normalized]
    return normalized


def _parse_activity_token(token: str, names: Optional[Mapping[str, int]]) -> Optional[int]:
    if names and token in names:
        return names[token]
    lowered = token.lower()
    match = re.fullmatch(r"(?:a|alpha|activity)?(\d+)", lowered)
    if match:
        return int(match.group(1))
    return None


def parse_line(
    text: str,
    value_map: Optional[Mapping[str, bool]] = None,
    rename: Optional[Mapping[str, str]] = None,
    activity_names: Optional[Mapping[str, int]] = None,
) -> TraceEvent:
    """Parse one trace line; malformed input raises :class:`TraceParseError`."""
    tokens = text.split()
    if len(tokens) < 4:
        raise TraceParseError("expected DATE TIME SENSOR VALUE", text.rstrip("\n"))
    time_ms = timestamp_ms(tokens[0], tokens[1])
    sensor = normalize_sensor(tokens[2], rename)
    values = dict(DEFAULT_VALUE_MAP)
    if value_map:
        values.update({k.upper(): v for k, v in value_map.items()})
    raw_value = tokens[3].upper()
    if raw_value not in values:
        raise TraceParseError(f"unknown sensor value {tokens[3]!r}", text.rstrip("\n"))
    activity: Optional[int] = None
    marker: Optional[str] = None
    if len(tokens) >= 6:
        tag = tokens[-1].lower()
        parsed = _parse_activity_token(tokens[-2], activity_names)
        if tag in _BEGIN_TAGS | _END_TAGS and parsed is not None:
            activity = parsed
            marker = "begin" if tag in _BEGIN_TAGS else "end"
    return TraceEvent(
        time_ms=time_ms, sensor=sensor, value=values[raw_value], activity=activity, marker=marker
    )


def format_line(event: TraceEvent) -> str:
    """Inverse of :func:`parse_line` over the documented grammar."""
    seconds, ms = divmod(event.time_ms, 1000)
    days, rem = divmod(seconds, 86_400)
    day = datetime.fromordinal(_EPOCH.toordinal() + days).date()
    hours, rem = divmod(rem, 3600)
    minutes, secs = divmod(rem, 60)
    text = (
        f"{day.isoformat()} {hours:02d}:{minutes:02d}:{secs:02d}.{ms:03d} "
        f"{event.sensor} {'ON' if event.value else 'OFF'}"
    )
    if event.activity is not None and event.marker:
        text += f" a{event.activity} {event.marker}"
    return text


@dataclass
class TraceLoad:
    events: list[TraceEvent]
    intervals: list[Interval]
    warnings: list[str]
    skipped: int = 0


def load_trace(
    source: Union[str, Path, TextIO],
    value_map: Optional[Mapping[str, bool]] = None,
    rename: Optional[Mapping[str, str]] = None,
    activity_names: Optional[Mapping[str, int]] = None,
    skip_bad_lines: bool = True,
) -> TraceLoad:
    """Read one participant's log: ordered events plus annotation intervals.

    Out-of-order timestamps are reordered with a warning; a begin without an
    end is clamped to the last event time with a warning.
    """
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()

    events: list[TraceEvent] = []
    warnings: list[str] = []
    skipped = 0
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            events.append(parse_line(raw, value_map, rename, activity_names))
        except TraceParseError as exc:
            if not skip_bad_lines:
                raise
            skipped += 1
            warnings.append(f"line {lineno}: {exc}")

    if any(events[i].time_ms > events[i + 1].time_ms for i in range(len(events) - 1)):
        warnings.append("events were not time-ordered; reordered by timestamp")
        events.sort(key=lambda e: (e.time_ms, e.sensor))

    intervals: list[Interval] = []
    open_marks: dict[int, int] = {}
    for event in events:
        if event.activity is None:
            continue
        if event.marker == "begin":
            if event.activity in open_marks:
                warnings.append(f"activity {event.activity}: begin while already open")
            open_marks.setdefault(event.activity, event.time_ms)
        elif event.marker == "end":
            start = open_marks.pop(event.activity, None)
            if start is None:
                warnings.append(f"activity {event.activity}: end without begin")
                continue
            intervals.append(Interval(activity=event.activity, start_ms=start, end_ms=event.time_ms))
    if open_marks and events:
        last = events[-1].time_ms
        for activity, start in sorted(open_marks.items()):
            warnings.append(f"activity {activity}: begin without end; clamped to last event")
            intervals.append(Interval(activity=activity, start_ms=start, end_ms=last))

    intervals.sort(key=lambda i: (i.start_ms, i.activity))
    return TraceLoad(events=events, intervals=intervals, warnings=warnings, skipped=skipped)


def load_dataset(
    directory: Union[str, Path],
    pattern: str = "*",
    **kwargs,
) -> tuple[dict[str, list[TraceEvent]], GroundTruth, list[str]]:
    """Load a directory of per-participant logs, sorted by file name."""
    directory = Path(directory)
    participants: dict[str, list[TraceEvent]] = {}
    truth = GroundTruth()
    warnings: list[str] = []
    for path in sorted(directory.glob(pattern)):
        if not path.is_file():
            continue
        load = load_trace(path, **kwargs)
        if not load.events:
            continue
        name = path.stem
        participants[name] = load.events
        for interval in load.intervals:
            truth.add(name, interval)
        warnings.extend(f"{name}: {w}" for w in load.warnings)
    return participants, truth, warnings


def drive(
    clock: VirtualClock,
    events: Iterable[TraceEvent],
    speed: float = 1.0,
    pure_virtual: bool = True,
    sleeper: Callable[[float], None] = _time.sleep,
) -> Iterator[TraceEvent]:
    """Yield events in order as virtual time passes.

    In pure-virtual mode events are handed over as fast as the consumer can
    process them, timestamps untouched.  In wall-clock mode the original
    inter-event gaps are slept through, divided by ``speed``.
    """
    if speed <= 0:
        raise ValueError("speed factor must be positive")
    previous: Optional[int] = None
    for event in events:
        if not pure_virtual and previous is not None and event.time_ms > previous:
            sleeper((event.time_ms - previous) / 1000.0 / speed)
        previous = event.time_ms
        clock.advance_to(event.time_ms)
        yield event
