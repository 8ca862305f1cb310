"""Reading, writing and normalizing cell traces.

Undefended files hold one cell per line as ``<time>\\t<1|-1>``; defended
files append a third column, ``p`` for padding or ``n`` otherwise. Times are
seconds, direction is from the client's point of view.
"""
from __future__ import annotations

import os
from enum import IntEnum
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, Union

CELL_SIZE = 512

PathLike = Union[str, "os.PathLike[str]"]


class TraceFormatError(ValueError):
    def __init__(self, message: str, lineno: int = 0):
        super().__init__(f"line {lineno}: {message}" if lineno else message)
        self.lineno = lineno


class Direction(IntEnum):
    OUT = 1
    IN = -1


class TraceEvent(NamedTuple):
    time: float
    direction: Direction
    is_padding: bool = False
    size: int = CELL_SIZE


class Trace:
    """An ordered sequence of cells plus a dataset-relative identifier."""

    __slots__ = ("events", "id")

    def __init__(self, events: Iterable[TraceEvent], id: str = ""):
        self.events: list[TraceEvent] = list(events)
        self.id = id

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __getitem__(self, i):
        return self.events[i]

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return self.events == other.events

    def __repr__(self):
        return f"Trace(id={self.id!r}, n={len(self.events)})"

    @property
    def duration(self) -> float:
        return self.events[-1].time - self.events[0].time if self.events else 0.0

    def count(self, direction=None, padding=None) -> int:
        return sum(1 for e in self.events
                   if (direction is None or e.direction == direction)
                   and (padding is None or e.is_padding == padding))

    def last_real_time(self) -> float:
        for e in reversed(self.events):
            if not e.is_padding:
                return e.time
        raise ValueError(f"trace {self.id!r} has no non-padding cells")


def sort_events(events: Iterable[TraceEvent]) -> list[TraceEvent]:
    # stable: ties keep input order
    return sorted(events, key=lambda e: e.time)


def normalize(trace: Trace) -> Trace:
    """Sort and shift so the first cell is at time zero."""
    events = sort_events(trace.events)
    if not events:
        raise TraceFormatError(f"trace {trace.id!r} is empty")
    t0 = events[0].time
    if t0 != 0.0:
        events = [e._replace(time=e.time - t0) for e in events]
    return Trace(events, trace.id)


def parse_trace(text: str, id: str = "") -> Trace:
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) not in (2, 3):
            raise TraceFormatError(f"expected 2 or 3 columns, got {len(fields)}", lineno)
        try:
            time = float(fields[0])
            direction = Direction(int(fields[1]))
        except ValueError:
            raise TraceFormatError(f"cannot parse {line.strip()!r}", lineno) from None
        if time != time or time < 0 or time == float("inf"):
            raise TraceFormatError(f"invalid time {fields[0]!r}", lineno)
        padding = False
        if len(fields) == 3:
            if fields[2] not in ("p", "n"):
                raise TraceFormatError(f"padding flag must be p or n, got {fields[2]!r}", lineno)
            padding = fields[2] == "p"
        events.append(TraceEvent(time, direction, padding))
    if not events:
        raise TraceFormatError("no cells in trace")
    return normalize(Trace(events, id))


def load_trace(path: PathLike) -> Trace:
    path = Path(path)
    try:
        return parse_trace(path.read_text(encoding="utf-8"), id=path.stem)
    except TraceFormatError as exc:
        raise TraceFormatError(f"{path}: {exc}", exc.lineno) from None


def format_trace(trace: Trace, *, defended: bool = True) -> str:
    if defended:
        rows = (f"{e.time!r}\t{int(e.direction)}\t{'p' if e.is_padding else 'n'}"
                for e in trace.events)
    else:
        rows = (f"{e.time!r}\t{int(e.direction)}" for e in trace.events)
    return "\n".join(rows) + "\n"


def save_trace(trace: Trace, path: PathLike, *, defended: bool = True) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_trace(trace, defended=defended))


def strip_trailing_padding(trace: Trace) -> Trace:
    """Drop every cell after the last non-padding cell, in both directions."""
    events = trace.events
    for i in range(len(events) - 1, -1, -1):
        if not events[i].is_padding:
            return Trace(events[: i + 1], trace.id)
    raise ValueError(f"trace {trace.id!r} has no non-padding cells to anchor on")


def list_dataset(directory: PathLike) -> list[Path]:
    """Trace files of a dataset directory, sorted by name."""
    directory = Path(directory)
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and not p.name.startswith("."))


def from_pairs(pairs: Sequence[tuple[float, int]], id: str = "") -> Trace:
    """Convenience constructor from ``(time, direction)`` pairs."""
    return normalize(Trace((TraceEvent(float(t), Direction(d)) for t, d in pairs), id))
