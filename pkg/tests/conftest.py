import random

import pytest

from padshield.trace_io import Direction, Trace, TraceEvent, sort_events


def web_trace(rng: random.Random, cells: int = 300, down_share: float = 15 / 16,
              trace_id: str = "t") -> Trace:
    """Synthetic page load: one request at 0, then mostly download traffic.

    Incoming cells start after one round trip (20 ms) so the trace is
    causal for a 10 ms one-way delay.
    """
    events = [TraceEvent(0.0, Direction.OUT)]
    t = 0.02
    for _ in range(cells - 1):
        t += rng.expovariate(150.0)
        d = Direction.IN if rng.random() < down_share else Direction.OUT
        events.append(TraceEvent(round(t, 6), d))
    return Trace(sort_events(events), trace_id)


@pytest.fixture
def make_trace():
    return web_trace


def random_machine(rng: random.Random, max_states: int = 6):
    """Arbitrary valid machine with sub-stochastic rows and StateEnd edges."""
    from padshield.distributions import Distribution
    from padshield.machine import STATE_END, ActionKind, Event, Machine, State

    n = rng.randint(1, max_states)
    states = []
    for _ in range(n):
        transitions = {}
        for event in Event:
            if rng.random() < 0.4:
                continue
            k = rng.randint(1, 3)
            weights = [rng.random() for _ in range(k)]
            scale = rng.uniform(0.3, 1.0) / sum(weights)
            targets = [rng.choice([*range(n), STATE_END]) for _ in range(k)]
            transitions[event] = [(t, w * scale) for t, w in zip(targets, weights)]
        action = rng.choice(list(ActionKind))
        limit = None if rng.random() < 0.3 else Distribution.discrete(1, rng.randint(1, 5))
        adist = None
        if action is ActionKind.SEND_PADDING:
            adist = Distribution.uniform(512, 512)
        elif action is ActionKind.BLOCK_OUTGOING:
            adist = Distribution.uniform(0, 50_000)
        states.append(State(action, adist, Distribution.uniform(0, 10_000), limit,
                            rng.random() < 0.5, rng.random() < 0.5, transitions))
    return Machine(tuple(states), rng.randrange(n))


@pytest.fixture
def make_machine():
    return random_machine


_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion."""
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"AC-{number:02d} {'PASS' if passed else 'FAIL'}: {detail}"
        _VERDICTS[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
