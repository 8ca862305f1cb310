"""RegulaTor: decaying-rate download shaping with ratio-based upload.

``regulator_reference`` applies the original algorithm directly to a trace.
``gen_regulator_relay``/``gen_regulator_client`` build the machine
approximation: the relay boots at 10 cells/s for the first ten real cells,
then walks a ladder of constant-rate SEND states that discretizes the decay
curve; the client pads once for every ``U`` cells it receives.
"""
from __future__ import annotations

import math
import random
from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional

from ..distributions import Distribution
from ..machine import (STATE_END, Event, Machine, MachineError, State,
                       infinite_block_state, simple_padding_state)
from ..trace_io import Direction, Trace, TraceEvent, sort_events

BOOT_STATES = 9
BOOT_TIMEOUT_US = 100_000
SURGE_MIN_QUEUE = 10


@dataclass(frozen=True)
class RegulatorParams:
    rate: float                 # R, initial rate (cells/s)
    decay: float                # D
    threshold: float            # T
    upload_ratio: float         # U
    budget: Optional[int] = None        # N, reference only
    max_wait: Optional[float] = None    # C (s), reference only
    cells_per_state: int = 20           # omega, machine only

    def __post_init__(self):
        if not self.rate > 0:
            raise MachineError(f"R must be > 0, got {self.rate}")
        if not 0 < self.decay <= 1:
            raise MachineError(f"D must be in (0, 1], got {self.decay}")
        if not self.threshold > 0:
            raise MachineError(f"T must be > 0, got {self.threshold}")
        if not self.upload_ratio >= 1:
            raise MachineError(f"U must be >= 1, got {self.upload_ratio}")
        if self.cells_per_state < 1:
            raise MachineError(f"omega must be >= 1, got {self.cells_per_state}")


def target_rate(p: RegulatorParams, elapsed: float) -> float:
    """Sending rate ``elapsed`` seconds after the surge start."""
    return p.rate * p.decay ** elapsed


# -- reference ---------------------------------------------------------------

def _relay_schedule(arrivals: list[float], p: RegulatorParams, rng: random.Random,
                    min_rate: float) -> list[tuple[float, bool]]:
    budget = rng.randint(0, p.budget) if p.budget else 0
    if not arrivals:
        return []
    now = arrivals[min(SURGE_MIN_QUEUE, len(arrivals)) - 1]
    surge = now
    sent = 0
    out = []
    while sent < len(arrivals):
        rate = max(target_rate(p, now - surge), min_rate)
        queued = bisect_right(arrivals, now) - sent
        if queued > p.threshold * rate:
            surge = now
            rate = p.rate
        if queued > 0:
            out.append((now, False))
            sent += 1
        elif budget > 0:
            out.append((now, True))
            budget -= 1
        now += 1.0 / rate
    return out


def _client_schedule(uploads: list[float], received: list[float], p: RegulatorParams
                     ) -> list[tuple[float, bool]]:
    max_wait = math.inf if p.max_wait is None else p.max_wait
    out = []
    nxt = 0
    k = 1
    while True:
        idx = math.ceil(k * p.upload_ratio - 1e-9) - 1
        if idx >= len(received):
            break
        tick = received[idx]
        while nxt < len(uploads) and uploads[nxt] + max_wait < tick:
            out.append((uploads[nxt] + max_wait, False))
            nxt += 1
        if nxt < len(uploads) and uploads[nxt] <= tick:
            out.append((tick, False))
            nxt += 1
        else:
            out.append((tick, True))
        k += 1
    last_tick = received[-1] if received else 0.0
    for t in uploads[nxt:]:
        out.append((t + max_wait if max_wait < math.inf else max(t, last_tick), False))
    return out


def regulator_reference(base: Trace, p: RegulatorParams, rng: random.Random,
                        *, min_rate: float = 1.0) -> Trace:
    """Apply RegulaTor to ``base``; both directions keep the base time axis.

    The relay releases queued download cells every ``1/rate`` seconds,
    padding while its sampled budget lasts; the client sends one cell per
    ``U`` received, real if one is waiting, and flushes any upload cell that
    has waited ``C`` seconds. ``min_rate`` floors the decayed rate.
    """
    downloads = [e.time for e in base if e.direction == Direction.IN]
    uploads = [e.time for e in base if e.direction == Direction.OUT]
    relay = _relay_schedule(downloads, p, rng, min_rate)
    client = _client_schedule(uploads, [t for t, _ in relay], p)
    events = [TraceEvent(t, Direction.IN, pad) for t, pad in relay]
    events += [TraceEvent(t, Direction.OUT, pad) for t, pad in client]
    return Trace(sort_events(events), base.id)


# -- machines ----------------------------------------------------------------

def send_rates(p: RegulatorParams, max_states: Optional[int] = None,
               floor: float = 1.0) -> list[float]:
    """Per-SEND-state rates following the decay curve at omega cells/state.

    State ``i`` runs at ``R * D**t_i`` where ``t_i`` is the expected time
    spent in the states before it. The ladder stops before the rate drops
    under ``floor`` cells/s, or at ``max_states`` (100 when ``D = 1``).
    """
    if max_states is None and p.decay == 1.0:
        max_states = 100
    rates = []
    elapsed = 0.0
    while max_states is None or len(rates) < max_states:
        rate = target_rate(p, elapsed)
        if rate < floor:
            break
        rates.append(rate)
        elapsed += p.cells_per_state / rate
    return rates


def gen_regulator_relay(p: RegulatorParams, max_states: Optional[int] = None) -> Machine:
    rates = send_rates(p, max_states)
    if not rates:
        raise MachineError("rate schedule is empty; R below 1 cell/s?")
    boot_first = 2
    send_first = boot_first + BOOT_STATES
    states = [
        State(transitions={Event.NON_PADDING_SENT: [(1, 1.0)]}),
        infinite_block_state(None, {Event.BLOCKING_BEGIN: [(boot_first, 1.0)]}),
    ]
    boot_timeout = Distribution.point(BOOT_TIMEOUT_US)
    for j in range(BOOT_STATES):
        me = boot_first + j
        states.append(simple_padding_state(boot_timeout, None, {
            Event.PADDING_SENT: [(me, 1.0)],
            Event.NON_PADDING_SENT: [(me + 1, 1.0)],
        }, bypass=True, replace=True))
    limit = Distribution.point(p.cells_per_state)
    for i, rate in enumerate(rates):
        me = send_first + i
        nxt = me + 1 if i + 1 < len(rates) else STATE_END
        transitions = {
            Event.PADDING_SENT: [(me, 1.0)],
            Event.LIMIT_REACHED: [(nxt, 1.0)],
        }
        if i > 0:
            transitions[Event.NON_PADDING_SENT] = [(send_first, min(1.0, 2.0 / (p.threshold * rate)))]
        states.append(simple_padding_state(Distribution.point(1e6 / rate), limit, transitions,
                                           bypass=True, replace=True))
    return Machine(tuple(states))


def gen_regulator_client(p: RegulatorParams) -> Machine:
    whole = math.floor(p.upload_ratio)
    frac = p.upload_ratio - whole
    send = whole
    recv = (Event.PADDING_RECV, Event.NON_PADDING_RECV)
    states = []
    for j in range(whole):
        last = j == whole - 1
        if not last:
            states.append(infinite_block_state(None, {e: [(j + 1, 1.0)] for e in recv}))
        elif frac == 0:
            states.append(infinite_block_state(None, {e: [(send, 1.0)] for e in recv}))
        else:
            vector = [(send, 1.0 - frac), (j, frac)]
            transitions = {e: vector for e in recv}
            transitions[Event.LIMIT_REACHED] = [(send, 1.0)]
            states.append(infinite_block_state(Distribution.point(2), transitions))
    states.append(simple_padding_state(Distribution.point(0), None,
                                       {Event.PADDING_SENT: [(0, 1.0)]},
                                       bypass=True, replace=True))
    return Machine(tuple(states))
