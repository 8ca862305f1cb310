"""FRONT: front-loaded Rayleigh padding.

The reference transform samples, per endpoint, a padding count
``n ~ U{1..N}`` and a window ``w ~ U[W_min, W_max]``, then sends one padding
cell at each of ``n`` Rayleigh(w) times, dropping any that fall after the
last real cell.

The machine generators approximate that schedule with a chain of PADDING
states, each covering an equal slice of ``[0, W_max]``.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional

from ..distributions import Distribution
from ..machine import Event, Machine, MachineError, State, simple_padding_state, STATE_END
from ..trace_io import Direction, Trace, TraceEvent, sort_events

_START_EDGES = (Event.NON_PADDING_SENT, Event.NON_PADDING_RECV)


@dataclass(frozen=True)
class FrontParams:
    """Budget ``n_max`` (cells), window bounds in seconds, and state count."""

    n_max: int
    w_min: float = 1.0
    w_max: float = 14.0
    states: int = 1

    def __post_init__(self):
        if self.states < 1:
            raise MachineError(f"psi (ψ) must be >= 1, got {self.states}")
        if self.n_max < self.states:
            raise MachineError(f"N={self.n_max} must be >= psi (ψ)={self.states}")
        if not 0 < self.w_min <= self.w_max:
            raise MachineError(f"need 0 < W_min <= W_max, got {self.w_min}, {self.w_max}")


def rayleigh_schedule(n: int, scale: float, rng: random.Random) -> list[float]:
    """``n`` sorted padding times (seconds) drawn from Rayleigh(scale)."""
    dist = Distribution.rayleigh(scale)
    return sorted(dist.sample(rng) for _ in range(n))


def front_reference(base: Trace, client: FrontParams, relay: FrontParams,
                    rng: random.Random) -> Trace:
    end = base.last_real_time()
    padding = []
    for params, direction in ((client, Direction.OUT), (relay, Direction.IN)):
        n = rng.randint(1, params.n_max)
        w = rng.uniform(params.w_min, params.w_max)
        for t in rayleigh_schedule(n, w, rng):
            if t > end:
                break
            padding.append(TraceEvent(t, direction, True))
    return Trace(sort_events(list(base.events) + padding), base.id)


def timeout_params(n_max: int, states: int, w_max: float, t1: float, t2: float
                   ) -> tuple[float, float]:
    """Mean and deviation (milliseconds) of the timeout for slice [t1, t2].

    ``t1``, ``t2`` and ``w_max`` are in seconds. The mean is the gap that
    sends ``n_max / states`` cells across the slice; the deviation shrinks
    with the slice midpoint and grows with ``w_max``. The deviation formula
    is evaluated on second-valued inputs and read in milliseconds.
    """
    cells = n_max / states
    mean = (t2 - t1) / cells * 1000.0
    std = (w_max ** 2 / math.sqrt(math.pi)) / (cells * (t1 + t2) / 2.0)
    return mean, std


def _padding_chain(n_max: int, states: int, w_max: float, first: int) -> list[State]:
    if n_max / states < 1:
        raise MachineError(f"N/psi = {n_max}/{states} < 1")
    per_state = n_max // states
    limit = Distribution.discrete(1, per_state)
    slice_len = w_max / states
    chain = []
    for j in range(states):
        mean_ms, std_ms = timeout_params(n_max, states, w_max, j * slice_len, (j + 1) * slice_len)
        mean_us = mean_ms * 1000.0
        timeout = Distribution.normal(mean_us, std_ms * 1000.0, clamp_min=0.0, clamp_max=2 * mean_us)
        me = first + j
        nxt = me + 1 if j + 1 < states else STATE_END
        chain.append(simple_padding_state(timeout, limit, {
            Event.PADDING_SENT: [(me, 1.0)],
            Event.LIMIT_REACHED: [(nxt, 1.0)],
        }))
    return chain


def gen_maybenot_front(p: FrontParams) -> Machine:
    """START plus ``p.states`` PADDING states chained by LimitReached."""
    start = State(transitions={e: [(1, 1.0)] for e in _START_EDGES})
    return Machine((start, *_padding_chain(p.n_max, p.states, p.w_max, first=1)))


def pipeline_budgets(n_max: int, pipelines: int) -> list[int]:
    """Evenly spaced budgets over [n_max / pipelines, n_max]."""
    low = n_max / pipelines
    step = (n_max - low) / (pipelines - 1)
    return [int(round(low + k * step)) for k in range(pipelines)]


def gen_pipelined_front(p: FrontParams, pipelines: int, per_pipeline_states: int,
                        budgets: Optional[list[int]] = None) -> Machine:
    """START fanning out uniformly to ``pipelines`` independent chains."""
    if pipelines < 2:
        raise MachineError(f"pipelined FRONT needs >= 2 pipelines, got {pipelines}")
    if per_pipeline_states < 1:
        raise MachineError("per_pipeline_states must be >= 1")
    budgets = budgets or pipeline_budgets(p.n_max, pipelines)
    states: list[State] = []
    heads = []
    for budget in budgets:
        first = 1 + len(states)
        heads.append(first)
        states.extend(_padding_chain(budget, per_pipeline_states, p.w_max, first))
    shares = [1.0 / pipelines] * pipelines
    shares[-1] = 1.0 - sum(float(f"{x:.12g}") for x in shares[:-1])
    start = State(transitions={e: list(zip(heads, shares)) for e in _START_EDGES})
    return Machine((start, *states))
