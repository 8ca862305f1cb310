"""Two-endpoint discrete-event simulation of machines over a base trace.

The client and the relay each run their own machines. Base outgoing cells
originate at the client, base incoming cells at the relay; the two are
``one_way_delay`` microseconds apart. The output is the defended trace seen
from the client.

Internally time is integer microseconds on a clock shifted by one delay so
that relay send times are never negative: a client cell at trace time ``t``
is sent at ``t + d``, a relay cell at trace time ``t`` is sent at ``t`` and
reaches the client at ``t + d``.

Queue ordering is total: (time, client before relay, cell arrival, base
traffic, action timer, block expiry, insertion order).
"""
from __future__ import annotations

import heapq
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .machine import ActionType, DefenseAction, Event, Machine, MachineRuntime, CELL_SIZE
from .trace_io import Direction, Trace, TraceEvent

logger = logging.getLogger(__name__)

CLIENT, RELAY = 0, 1

# arrivals first so a machine sees a cell that lands at the instant a base
# cell is due before deciding about it
_ARRIVE, _BASE, _TIMER, _UNBLOCK = 0, 1, 2, 3


class SimulationBudgetExceeded(RuntimeError):
    pass


@dataclass
class SimConfig:
    client_machines: Sequence[Machine] = ()
    relay_machines: Sequence[Machine] = ()
    one_way_delay: int = 10_000
    seed: int = 0
    max_events: int = 20_000_000
    # stop once every base cell is out and this many µs have passed since
    # the last one; None runs until no event is left
    tail: Optional[int] = None

    def __post_init__(self):
        if self.one_way_delay < 0:
            raise ValueError("one_way_delay must be >= 0")


@dataclass
class SimStats:
    events: int = 0
    padding_sent: list = field(default_factory=lambda: [0, 0])
    replaced: list = field(default_factory=lambda: [0, 0])
    dropped_padding: list = field(default_factory=lambda: [0, 0])
    stalled: int = 0
    end_time: int = 0


def runtime_rngs(seed: int, n_client: int, n_relay: int) -> tuple[list, list]:
    """Independent, reproducible generators for every machine runtime."""
    children = np.random.SeedSequence(seed).spawn(n_client + n_relay)
    rngs = [random.Random(int(c.generate_state(2, np.uint64)[0])) for c in children]
    return rngs[:n_client], rngs[n_client:]


class _Cell:
    __slots__ = ("at", "time")

    def __init__(self, at: int, time: float):
        self.at = at
        self.time = time


class _Endpoint:
    __slots__ = ("side", "runtimes", "tokens", "blocked_until", "bypassable",
                 "block_owner", "block_token", "queue", "inbox", "draining")

    def __init__(self, side: int, runtimes: list[MachineRuntime]):
        self.side = side
        self.runtimes = runtimes
        self.tokens = [0] * len(runtimes)
        self.blocked_until: Optional[float] = None
        self.bypassable = False
        self.block_owner: Optional[int] = None
        self.block_token = 0
        self.queue: deque[_Cell] = deque()
        self.inbox: deque[Event] = deque()
        self.draining = False


class _Simulation:
    def __init__(self, base: Trace, cfg: SimConfig, event_log: Optional[list]):
        self.cfg = cfg
        self.d = int(cfg.one_way_delay)
        c_rngs, r_rngs = runtime_rngs(cfg.seed, len(cfg.client_machines), len(cfg.relay_machines))
        self.eps = (
            _Endpoint(CLIENT, [MachineRuntime(m, r) for m, r in zip(cfg.client_machines, c_rngs)]),
            _Endpoint(RELAY, [MachineRuntime(m, r) for m, r in zip(cfg.relay_machines, r_rngs)]),
        )
        self.heap: list = []
        self.seq = 0
        self.now = 0
        self.out: list[tuple[float, int, int, bool]] = []
        self.stats = SimStats()
        self.event_log = event_log
        self.base_left = 0
        self.last_base_emit = 0
        self.timer_actions: dict[int, tuple[int, int, DefenseAction]] = {}
        self.next_token = 1

        for ev in base.events:
            if ev.is_padding:
                raise ValueError("simulate() expects an undefended base trace")
            t_us = int(round(ev.time * 1_000_000))
            side = CLIENT if ev.direction == Direction.OUT else RELAY
            at = t_us + self.d if side == CLIENT else t_us
            self._push(at, side, _BASE, _Cell(at, ev.time))
            self.base_left += 1

    # -- queue helpers ----------------------------------------------------
    def _push(self, at, side, kind, data):
        self.seq += 1
        heapq.heappush(self.heap, (at, side, kind, self.seq, data))

    def _tick(self):
        self.stats.events += 1
        if self.stats.events > self.cfg.max_events:
            raise SimulationBudgetExceeded(
                f"more than {self.cfg.max_events} events; machines may never terminate")

    # -- framework plumbing -----------------------------------------------
    def _notify(self, ep: _Endpoint, event: Event):
        if not ep.runtimes:
            return
        ep.inbox.append(event)
        if ep.draining:
            return
        ep.draining = True
        try:
            stats, budget = self.stats, self.cfg.max_events
            while ep.inbox:
                ev = ep.inbox.popleft()
                stats.events += 1
                if stats.events > budget:
                    self._tick()
                if self.event_log is not None:
                    self.event_log.append((self.now, ep.side, ev))
                i = 0
                for rt in ep.runtimes:
                    action = rt.transition(ev)
                    if action is not None:
                        self._apply(ep, i, action)
                    i += 1
        finally:
            ep.draining = False

    def _apply(self, ep: _Endpoint, i: int, action: DefenseAction):
        if action.kind is ActionType.CANCEL:
            ep.tokens[i] = 0
            if ep.block_owner == i and self._blocked(ep):
                ep.blocked_until = None
                ep.block_owner = None
                self._flush(ep)
            return
        if action.timeout == 0:
            ep.tokens[i] = 0
            self._fire(ep, i, action)
            return
        token = self.next_token
        self.next_token = token + 1
        ep.tokens[i] = token
        self.seq += 1
        heapq.heappush(self.heap, (self.now + action.timeout, ep.side, _TIMER, self.seq,
                                   (i, token, action)))

    def _blocked(self, ep: _Endpoint) -> bool:
        return ep.blocked_until is not None and self.now < ep.blocked_until

    def _fire(self, ep: _Endpoint, i: int, action: DefenseAction):
        if action.kind is ActionType.SCHEDULE_PADDING:
            for _ in range(int(action.payload) // CELL_SIZE):
                if self._blocked(ep) and not (ep.bypassable and action.bypass):
                    self.stats.dropped_padding[ep.side] += 1
                    continue
                if action.replace and ep.queue:
                    self.stats.replaced[ep.side] += 1
                    self._emit(ep, ep.queue.popleft(), replaced=True)
                else:
                    self._emit(ep, None)
            return
        until = self.now + action.payload
        if self._blocked(ep) and not action.replace:
            until = max(until, ep.blocked_until)
        ep.blocked_until = until
        ep.bypassable = action.bypass
        ep.block_owner = i
        ep.block_token += 1
        if not math.isinf(until):
            self._push(int(math.ceil(until)), ep.side, _UNBLOCK, ep.block_token)
        self._notify(ep, Event.BLOCKING_BEGIN)

    def _emit(self, ep: _Endpoint, cell: Optional[_Cell], replaced: bool = False):
        now, side = self.now, ep.side
        padding = cell is None
        if padding:
            t = (now - self.d if side == CLIENT else now) / 1_000_000
            self.stats.padding_sent[side] += 1
        else:
            t = cell.time if cell.at == now else (
                (now - self.d if side == CLIENT else now) / 1_000_000)
            self.base_left -= 1
            self.last_base_emit = now
        self.out.append((t, len(self.out), Direction.OUT if side == CLIENT else Direction.IN,
                         padding))
        peer = self.eps[1 - side]
        if peer.runtimes:
            self._push(now + self.d, peer.side, _ARRIVE, padding)
        if padding:
            self._notify(ep, Event.PADDING_SENT)
        else:
            if replaced:
                self._notify(ep, Event.PADDING_SENT)
            self._notify(ep, Event.NON_PADDING_SENT)

    def _flush(self, ep: _Endpoint):
        while ep.queue and not self._blocked(ep):
            self._emit(ep, ep.queue.popleft())

    # -- main loop --------------------------------------------------------
    def run(self) -> Trace:
        heap, eps = self.heap, self.eps
        tail = self.cfg.tail
        while heap:
            at, side, kind, _, data = heapq.heappop(heap)
            if tail is not None and self.base_left == 0 and at > self.last_base_emit + tail:
                break
            self.now = at
            self.stats.events += 1
            if self.stats.events > self.cfg.max_events:
                self._tick()
            ep = eps[side]
            if kind == _BASE:
                if ep.queue or self._blocked(ep):
                    ep.queue.append(data)
                else:
                    self._emit(ep, data)
            elif kind == _ARRIVE:
                self._notify(ep, Event.PADDING_RECV if data else Event.NON_PADDING_RECV)
            elif kind == _TIMER:
                i, token, action = data
                if ep.tokens[i] == token:
                    ep.tokens[i] = 0
                    self._fire(ep, i, action)
            else:
                if data == ep.block_token and ep.blocked_until is not None \
                        and at >= ep.blocked_until:
                    ep.blocked_until = None
                    ep.block_owner = None
                    self._flush(ep)
        self.stats.end_time = self.now
        for ep in eps:
            if ep.queue:
                # blocked forever (e.g. a machine that never ends); release
                # at the end of the run so no base cell is lost
                self.stats.stalled += len(ep.queue)
                logger.debug("releasing %d stalled cells at side %d", len(ep.queue), ep.side)
                ep.blocked_until = None
                ep.runtimes = []
                self._flush(ep)
        self.out.sort()
        return [TraceEvent(t, direction, padding) for t, _, direction, padding in self.out]


def simulate(base: Trace, cfg: SimConfig, *, event_log: Optional[list] = None,
             stats: Optional[SimStats] = None) -> Trace:
    """Defend ``base`` with the configured machine pair.

    ``event_log``, when given, receives ``(time_us, side, Event)`` for every
    framework event delivered to a machine. ``stats`` is filled in place.
    """
    sim = _Simulation(base, cfg, event_log)
    events = sim.run()
    if stats is not None:
        stats.__dict__.update(sim.stats.__dict__)
    return Trace(events, base.id)
