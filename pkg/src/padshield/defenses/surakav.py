"""Surakav: shaping a download after a supplied reference burst sequence.

``surakav_reference`` is the regulator with burst adjustment and random
response. ``gen_surakav_machines`` builds the exact-replay machine pair,
which sends precisely the reference burst sizes with no adjustment.
"""
from __future__ import annotations

import logging
import math
import random
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

from ..distributions import Distribution
from ..machine import (STATE_END, Event, Machine, State, infinite_block_state,
                       simple_padding_state)
from ..trace_io import Direction, Trace, TraceEvent, sort_events

logger = logging.getLogger(__name__)

MAX_BURSTS = 8000
SEND_TIMEOUT = 5


class ReferenceExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class BurstSequence:
    """Alternating (outgoing, incoming) burst sizes in cells."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple((int(o), int(i)) for o, i in self.pairs)
        for k, (o, i) in enumerate(pairs):
            if o < 1 or i < 1:
                raise ValueError(f"burst pair {k} has a size below 1: {(o, i)}")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self):
        return len(self.pairs)

    @property
    def bursts(self) -> int:
        return 2 * len(self.pairs)

    def scaled(self, factor: int) -> "BurstSequence":
        """Repeat the sequence ``factor`` times (reference-length scaling)."""
        return BurstSequence(self.pairs * factor)


def load_bursts(path) -> BurstSequence:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 2:
            raise ValueError(f"{path}: line {lineno}: expected 'out<TAB>in'")
        try:
            pairs.append((int(fields[0]), int(fields[1])))
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: non-integer burst size") from None
    if not pairs:
        raise ValueError(f"{path}: no bursts")
    return BurstSequence(tuple(pairs))


def save_bursts(seq: BurstSequence, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{o}\t{i}\n" for o, i in seq.pairs)


def burst_runs(events: Iterable[TraceEvent]) -> list[tuple[Direction, int]]:
    """Maximal same-direction runs of a trace, in order."""
    runs: list[list] = []
    for e in events:
        if runs and runs[-1][0] == e.direction:
            runs[-1][1] += 1
        else:
            runs.append([e.direction, 1])
    return [(d, n) for d, n in runs]


def burst_sequence(trace: Trace) -> BurstSequence:
    """Pairs of a trace that starts outgoing and alternates strictly."""
    runs = burst_runs(trace.events)
    if not runs or runs[0][0] != Direction.OUT:
        raise ValueError("trace does not start with an outgoing burst")
    if len(runs) % 2:
        raise ValueError("trace ends with an unanswered outgoing burst")
    return BurstSequence(tuple((runs[k][1], runs[k + 1][1]) for k in range(0, len(runs), 2)))


# -- regulator ---------------------------------------------------------------

def _exact(delta: float) -> Fraction:
    # decimal reading of the tolerance keeps floor() exact at integer edges
    return Fraction(repr(float(delta)))


def burst_thresholds(b: int, delta: float) -> tuple[int, int]:
    """Lower and upper real-burst sizes for a reference burst of ``b`` cells."""
    d = _exact(delta)
    return math.floor((1 - d) * b), math.floor((1 + d) * b)


def adjust_burst(queued: int, b: int, delta: float) -> tuple[int, int]:
    """``(real, padding)`` cells for one burst given ``queued`` real cells."""
    low, high = burst_thresholds(b, delta)
    if queued < low:
        return queued, low - queued
    return min(queued, high), 0


@dataclass(frozen=True)
class SurakavParams:
    delta: float = 0.6
    q: Optional[float] = None           # None: sampled per download from (0, 1)
    rho: float = 0.1                    # max gap between outgoing bursts (s)
    cell_gap: float = 5e-6              # spacing of cells inside a burst (s)
    one_way_delay: float = 0.01
    max_bursts: int = MAX_BURSTS

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.q is not None and not 0 <= self.q <= 1:
            raise ValueError(f"q must be in [0, 1], got {self.q}")


def surakav_reference(base: Trace, ref: BurstSequence, p: SurakavParams,
                      rng: random.Random) -> Trace:
    """Shape ``base`` round by round after ``ref``.

    Each round the client sends a burst sized by :func:`adjust_burst` from its
    queue and the outgoing reference burst; after a round trip the relay
    answers the same way with the incoming burst, except that with an empty
    queue it skips the answer with probability ``q``. The next round starts
    when the answer has arrived, or ``rho`` after the outgoing burst if there
    was none.
    """
    if not len(ref):
        raise ValueError("empty reference")
    q = p.q if p.q is not None else rng.uniform(0.0, 1.0)
    ups = [e.time for e in base if e.direction == Direction.OUT]
    downs = [e.time for e in base if e.direction == Direction.IN]
    sent_up = sent_down = 0
    rtt = 2 * p.one_way_delay
    events: list[TraceEvent] = []

    def burst(start: float, direction: Direction, real: int, pad: int) -> float:
        t = start
        for k in range(real + pad):
            t = start + k * p.cell_gap
            events.append(TraceEvent(t, direction, k >= real))
        return t

    now = 0.0
    for out_ref, in_ref in ref.pairs:
        if sent_up == len(ups) and sent_down == len(downs):
            break
        queued = bisect_right(ups, now) - sent_up
        real, pad = adjust_burst(queued, out_ref, p.delta)
        sent_up += real
        out_end = burst(now, Direction.OUT, real, pad)

        answer = out_end + rtt
        queued = bisect_right(downs, answer) - sent_down
        if queued == 0 and rng.random() < q:
            now = out_end + p.rho
            continue
        real, pad = adjust_burst(queued, in_ref, p.delta)
        sent_down += real
        in_end = burst(answer, Direction.IN, real, pad)
        now = min(in_end, out_end + p.rho) + p.cell_gap
    else:
        if sent_up < len(ups) or sent_down < len(downs):
            raise ReferenceExhausted(
                f"reference of {len(ref)} rounds ran out with {len(ups) - sent_up} upload and "
                f"{len(downs) - sent_down} download cells left; use a longer (scaled) reference")
    return Trace(sort_events(events), base.id)


# -- machines ----------------------------------------------------------------

def truncate_reference(ref: BurstSequence, max_bursts: int = MAX_BURSTS
                       ) -> tuple[BurstSequence, bool]:
    keep = max_bursts // 2
    if len(ref) <= keep:
        return ref, False
    return BurstSequence(ref.pairs[:keep]), True


def _chain(sizes: Sequence[tuple[str, int]], first: int, timeout: Distribution) -> list[State]:
    states = []
    for k, (role, size) in enumerate(sizes):
        me = first + k
        nxt = me + 1 if k + 1 < len(sizes) else STATE_END
        limit = Distribution.point(size)
        if role == "send":
            states.append(simple_padding_state(timeout, limit, {
                Event.PADDING_SENT: [(me, 1.0)],
                Event.LIMIT_REACHED: [(nxt, 1.0)],
            }, bypass=True, replace=True))
        else:
            states.append(infinite_block_state(limit, {
                Event.PADDING_RECV: [(me, 1.0)],
                Event.NON_PADDING_RECV: [(me, 1.0)],
                Event.LIMIT_REACHED: [(nxt, 1.0)],
            }))
    return states


def gen_surakav_machines(ref: BurstSequence, max_bursts: int = MAX_BURSTS, *,
                         send_timeout: float = SEND_TIMEOUT) -> tuple[Machine, Machine]:
    """Client and relay machines replaying ``ref`` exactly.

    The client alternates SEND/RECV states, the relay RECV/SEND, each with a
    point-mass limit equal to the reference burst. The first outgoing cell
    of a download escapes before blocking starts and triggers both
    machines, so the first outgoing burst is one state-limit shorter (and
    dropped when the reference burst is a single cell). ``send_timeout`` is
    the per-cell timeout in microseconds.
    """
    ref, truncated = truncate_reference(ref, max_bursts)
    if truncated:
        logger.warning("reference truncated to %d bursts", ref.bursts)
    timeout = Distribution.point(send_timeout)
    client_plan: list[tuple[str, int]] = []
    relay_plan: list[tuple[str, int]] = []
    for k, (out_size, in_size) in enumerate(ref.pairs):
        if k == 0:
            out_size -= 1
        if out_size:
            client_plan.append(("send", out_size))
            relay_plan.append(("recv", out_size))
        client_plan.append(("recv", in_size))
        relay_plan.append(("send", in_size))

    def build(plan):
        start = State(transitions={Event.NON_PADDING_SENT: [(1, 1.0)],
                                   Event.NON_PADDING_RECV: [(1, 1.0)]})
        block = infinite_block_state(None, {Event.BLOCKING_BEGIN: [(2, 1.0)]})
        return Machine((start, block, *_chain(plan, 2, timeout)))

    return build(client_plan), build(relay_plan)
