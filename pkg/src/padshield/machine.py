"""Event-driven padding machines and their per-connection runtime.

A :class:`Machine` is an immutable automaton: every state carries an action
(pad, block, or nothing), three distributions (action value, timeout, limit),
bypass/replace flags and, per framework event, a vector of
``(target state, probability)`` pairs. A :class:`MachineRuntime` walks a
machine for one endpoint of one connection and turns framework events into
:class:`DefenseAction` objects for the host to enact.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, NamedTuple, Optional, Sequence

from .distributions import Distribution, Family

CELL_SIZE = 512
STATE_END = -1
PROB_EPS = 1e-12


class MachineError(ValueError):
    pass


class Event(str, Enum):
    NON_PADDING_SENT = "NonPaddingSent"
    NON_PADDING_RECV = "NonPaddingRecv"
    PADDING_SENT = "PaddingSent"
    PADDING_RECV = "PaddingRecv"
    LIMIT_REACHED = "LimitReached"
    BLOCKING_BEGIN = "BlockingBegin"


EVENT_ORDER = {e: i for i, e in enumerate(Event)}


@dataclass(frozen=True)
class FrameworkEvent:
    kind: Event
    timestamp: int = 0
    byte_count: int = CELL_SIZE


class ActionKind(str, Enum):
    SEND_PADDING = "pad"
    BLOCK_OUTGOING = "block"
    NO_OP = "noop"


class ActionType(str, Enum):
    SCHEDULE_PADDING = "SchedulePadding"
    SCHEDULE_BLOCKING = "ScheduleBlocking"
    CANCEL = "Cancel"


class DefenseAction(NamedTuple):
    """What the host should do for one machine.

    ``timeout`` is in microseconds. ``payload`` is padding bytes (a multiple
    of the cell size) or blocking duration in microseconds, possibly infinite.
    """

    kind: ActionType
    timeout: int = 0
    payload: float = 0.0
    bypass: bool = False
    replace: bool = False


_CANCEL = DefenseAction(ActionType.CANCEL)


def _quantize(p: float) -> float:
    # probabilities are persisted with 12 significant digits; storing them
    # that way keeps serialization round trips exact
    return float(f"{float(p):.12g}")


@dataclass(frozen=True, eq=True)
class State:
    action: ActionKind = ActionKind.NO_OP
    action_dist: Optional[Distribution] = None
    timeout_dist: Optional[Distribution] = None
    limit_dist: Optional[Distribution] = None
    bypass: bool = False
    replace: bool = False
    transitions: Mapping[Event, tuple[tuple[int, float], ...]] = field(default_factory=dict)

    def __post_init__(self):
        action = ActionKind(self.action)
        object.__setattr__(self, "action", action)
        if action is not ActionKind.NO_OP and self.action_dist is None:
            raise MachineError(f"{action.value} state needs an action distribution")
        normalized = {}
        for event in sorted((Event(e) for e in self.transitions), key=EVENT_ORDER.get):
            vector = tuple((int(t), _quantize(p)) for t, p in self.transitions[event])
            total = 0.0
            for target, p in vector:
                if not 0.0 <= p <= 1.0:
                    raise MachineError(f"probability {p} on {event.value} outside [0, 1]")
                total += p
            if total > 1.0 + PROB_EPS:
                raise MachineError(f"probabilities on {event.value} sum to {total} > 1")
            if vector:
                normalized[event] = vector
        object.__setattr__(self, "transitions", normalized)

    def targets(self):
        for vector in self.transitions.values():
            for target, _ in vector:
                yield target


@dataclass(frozen=True)
class Machine:
    states: tuple[State, ...]
    start: int = 0

    def __post_init__(self):
        states = tuple(self.states)
        object.__setattr__(self, "states", states)
        if not states:
            raise MachineError("machine has no states")
        if not 0 <= self.start < len(states):
            raise MachineError(f"start state {self.start} out of range")
        for i, state in enumerate(states):
            for target in state.targets():
                if target != STATE_END and not 0 <= target < len(states):
                    raise MachineError(f"state {i}: dangling transition target {target}")

    def __len__(self):
        return len(self.states)

    @property
    def plan(self) -> tuple:
        """Per-state data precomputed for :class:`MachineRuntime`."""
        plan = self.__dict__.get("_plan")
        if plan is None:
            plan = tuple(_plan_state(s) for s in self.states)
            object.__setattr__(self, "_plan", plan)
        return plan


def _constant(dist: Optional[Distribution]) -> Optional[float]:
    if dist is None:
        return 0.0
    if dist.family is Family.POINT_MASS or (
            dist.family in (Family.UNIFORM_CONTINUOUS, Family.UNIFORM_DISCRETE)
            and dist.params[0] == dist.params[1]):
        x = dist.params[0]
        if dist.clamp_min is not None:
            x = max(x, dist.clamp_min)
        if dist.clamp_max is not None:
            x = min(x, dist.clamp_max)
        return x
    return None


def _make_action(state: State, timeout: float, value: float) -> DefenseAction:
    timeout = max(0, int(round(timeout)))
    if state.action is ActionKind.SEND_PADDING:
        cells = max(1, int(round(value / CELL_SIZE)))
        return DefenseAction(ActionType.SCHEDULE_PADDING, timeout, float(cells * CELL_SIZE),
                             state.bypass, state.replace)
    return DefenseAction(ActionType.SCHEDULE_BLOCKING, timeout, max(0.0, value),
                         state.bypass, state.replace)


def _plan_state(state: State) -> tuple:
    # (transitions, state, fixed action, constant timeout, template action
    # carrying a constant payload or None)
    fixed = t = template = None
    if state.action is not ActionKind.NO_OP:
        t, v = _constant(state.timeout_dist), _constant(state.action_dist)
        if v is not None:
            template = _make_action(state, 0, v)
            if t is not None:
                fixed = _make_action(state, t, v)
    return state.transitions, state, fixed, t, template


class MachineRuntime:
    """Per-connection execution of a :class:`Machine`.

    Semantics:

    * a transition vector with residual mass (sum < 1) means the event is
      ignored with that probability: no transition, no new action;
    * entering a different state resets the self-transition counter and
      samples a fresh limit; self-transitions resample the action only;
    * the self-transition that brings the counter up to the sampled limit
      emits no action and raises LimitReached, which is processed before
      :meth:`transition` returns; an exhausted state ignores further
      self-transitions;
    * reaching ``STATE_END`` returns a single Cancel and the runtime is
      inert from then on.
    """

    __slots__ = ("machine", "plan", "rng", "current", "count", "limit", "terminated", "log")

    def __init__(self, machine: Machine, rng: random.Random, *, record: bool = False):
        self.machine = machine
        self.plan = machine.plan
        self.rng = rng
        self.current = machine.start
        self.count = 0
        self.limit = self._sample_limit(machine.states[machine.start])
        self.terminated = False
        self.log: Optional[list] = [] if record else None

    def _sample_limit(self, state: State) -> Optional[int]:
        if state.limit_dist is None:
            return None
        x = state.limit_dist.sample(self.rng)
        if math.isinf(x):
            return None
        return max(1, int(round(x)))

    def _action(self, index: int) -> Optional[DefenseAction]:
        _, state, fixed, timeout, template = self.plan[index]
        if fixed is not None:
            return fixed
        if state.action is ActionKind.NO_OP:
            return None
        if timeout is None:
            timeout = state.timeout_dist.sample(self.rng)
        if template is None:
            return _make_action(state, timeout, state.action_dist.sample(self.rng))
        timeout = int(round(timeout))
        return DefenseAction(template.kind, timeout if timeout > 0 else 0, template.payload,
                             template.bypass, template.replace)

    def transition(self, event) -> Optional[DefenseAction]:
        if self.terminated:
            return None
        if type(event) is Event:
            kind = event
        elif isinstance(event, FrameworkEvent):
            kind = event.kind
        else:
            kind = Event(event)
        vector = self.plan[self.current][0].get(kind)
        if not vector:
            return None
        u = self.rng.random()
        target = None
        acc = 0.0
        for candidate, p in vector:
            acc += p
            if u < acc:
                target = candidate
                break
        if target is None:
            return None
        if self.log is not None:
            self.log.append((kind, self.current, target))
        if target == STATE_END:
            self.terminated = True
            return _CANCEL
        if target == self.current:
            if self.limit is not None and self.count >= self.limit:
                return None
            self.count += 1
            if self.limit is not None and self.count >= self.limit:
                return self.transition(Event.LIMIT_REACHED)
            return self._action(target)
        self.current = target
        self.count = 0
        self.limit = self._sample_limit(self.plan[target][1])
        return self._action(target)


def check_machine(machine: Machine) -> None:
    """Re-validate probability conservation; raises :class:`MachineError`."""
    for i, state in enumerate(machine.states):
        for event, vector in state.transitions.items():
            total = sum(p for _, p in vector)
            if total > 1.0 + PROB_EPS:
                raise MachineError(f"state {i} {event.value}: sum {total}")


def simple_padding_state(timeout: Distribution, limit: Optional[Distribution],
                         transitions: Mapping[Event, Sequence[tuple[int, float]]],
                         *, bypass: bool = False, replace: bool = False) -> State:
    """A state that sends one cell per action."""
    return State(ActionKind.SEND_PADDING, Distribution.uniform(CELL_SIZE, CELL_SIZE),
                 timeout, limit, bypass, replace, dict(transitions))


def infinite_block_state(limit: Optional[Distribution],
                         transitions: Mapping[Event, Sequence[tuple[int, float]]]) -> State:
    """Bypassable, replacing infinite blocking with no timeout."""
    return State(ActionKind.BLOCK_OUTGOING, Distribution.point(math.inf),
                 Distribution.point(0), limit, True, True, dict(transitions))
