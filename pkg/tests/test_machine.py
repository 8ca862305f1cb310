import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from padshield.distributions import Distribution
from padshield.defenses.front import FrontParams, gen_maybenot_front
from padshield.machine import (CELL_SIZE, STATE_END, ActionKind, ActionType, Event,
                               FrameworkEvent, Machine, MachineError, MachineRuntime, State,
                               check_machine, simple_padding_state)

from conftest import random_machine


def limit_machine(limit: int) -> Machine:
    start = State(transitions={Event.NON_PADDING_SENT: [(1, 1.0)]})
    pad = simple_padding_state(Distribution.point(1000), Distribution.point(limit),
                               {Event.PADDING_SENT: [(1, 1.0)], Event.LIMIT_REACHED: [(2, 1.0)]})
    tail = State(transitions={Event.PADDING_SENT: [(STATE_END, 1.0)]})
    return Machine((start, pad, tail))


def test_front_start_enters_padding_on_first_sent_cell():
    rt = MachineRuntime(gen_maybenot_front(FrontParams(1500, states=30)), random.Random(0))
    action = rt.transition(Event.NON_PADDING_SENT)
    assert rt.current == 1
    assert action.kind is ActionType.SCHEDULE_PADDING
    assert action.payload == CELL_SIZE


def test_limit_reached_on_third_self_transition():
    rt = MachineRuntime(limit_machine(3), random.Random(0))
    actions = [rt.transition(Event.NON_PADDING_SENT)]
    actions += [rt.transition(Event.PADDING_SENT) for _ in range(2)]
    assert rt.current == 1 and rt.count == 2
    assert all(a.kind is ActionType.SCHEDULE_PADDING for a in actions)
    assert rt.transition(Event.PADDING_SENT) is None
    assert rt.current == 2


def test_state_end_is_absorbing():
    rt = MachineRuntime(limit_machine(1), random.Random(0))
    rt.transition(Event.NON_PADDING_SENT)
    rt.transition(Event.PADDING_SENT)
    assert rt.current == 2
    assert rt.transition(Event.PADDING_SENT).kind is ActionType.CANCEL
    assert rt.terminated
    for event in Event:
        assert rt.transition(event) is None


def test_residual_mass_ignores_event():
    m = Machine((State(transitions={Event.PADDING_RECV: [(STATE_END, 0.0)]}),))
    rt = MachineRuntime(m, random.Random(0))
    assert all(rt.transition(Event.PADDING_RECV) is None for _ in range(100))
    assert not rt.terminated


def test_framework_event_and_string_inputs_accepted():
    rt = MachineRuntime(limit_machine(2), random.Random(0))
    assert rt.transition(FrameworkEvent(Event.NON_PADDING_SENT, 0)) is not None
    assert rt.transition("PaddingSent") is not None


def test_infinite_block_action():
    m = Machine((State(ActionKind.BLOCK_OUTGOING, Distribution.point(math.inf),
                       Distribution.point(0), None, True, True,
                       {Event.NON_PADDING_RECV: [(0, 1.0)]}),))
    action = MachineRuntime(m, random.Random(0)).transition(Event.NON_PADDING_RECV)
    assert action.kind is ActionType.SCHEDULE_BLOCKING
    assert math.isinf(action.payload) and action.bypass and action.replace


@pytest.mark.parametrize("transitions, message", [
    ({Event.PADDING_SENT: [(0, 0.7), (0, 0.4)]}, "sum"),
    ({Event.PADDING_SENT: [(0, 1.5)]}, "outside"),
])
def test_invalid_probabilities(transitions, message):
    with pytest.raises(MachineError, match=message):
        State(transitions=transitions)


def test_dangling_target_rejected():
    with pytest.raises(MachineError, match="dangling"):
        Machine((State(transitions={Event.PADDING_SENT: [(3, 1.0)]}),))


def test_pad_state_needs_action_distribution():
    with pytest.raises(MachineError):
        State(ActionKind.SEND_PADDING)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_random_machines_are_deterministic(machine_seed, run_seed):
    machine = random_machine(random.Random(machine_seed))
    check_machine(machine)
    script = random.Random(machine_seed ^ run_seed).choices(list(Event), k=60)

    def run():
        rt = MachineRuntime(machine, random.Random(run_seed), record=True)
        return [rt.transition(e) for e in script], rt.log

    assert run() == run()


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 50), st.integers(0, 2**32 - 1))
def test_limit_emits_exactly_limit_actions(limit, seed):
    rt = MachineRuntime(limit_machine(limit), random.Random(seed))
    emitted = 1 if rt.transition(Event.NON_PADDING_SENT) else 0
    while rt.current == 1:
        if rt.transition(Event.PADDING_SENT) is not None:
            emitted += 1
    assert emitted == limit
