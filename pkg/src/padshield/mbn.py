"""MBN1: versioned, line-oriented text encoding of machines.

::

    MBN1
    states <count> start <index>
    state <i> action=<kind> adist=<d> tdist=<d> ldist=<d> bypass=<0|1> replace=<0|1>
    ...
    on <event> <from> -> <to|END> p=<prob>
    ...

A distribution ``<d>`` is ``none`` or ``<family>:<p1,p2,...>:<lo>,<hi>`` where
unset clamp bounds are written as ``none``. Parameters use the shortest
round-tripping float representation; probabilities use 12 significant digits.
"""
from __future__ import annotations

from typing import Optional

from .distributions import Distribution, DistributionError, Family
from .machine import STATE_END, ActionKind, Event, Machine, MachineError, State

MAGIC = "MBN1"


class MachineParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_bound(x: Optional[float]) -> str:
    return "none" if x is None else _fmt_float(x)


def _fmt_dist(d: Optional[Distribution]) -> str:
    if d is None:
        return "none"
    params = ",".join(_fmt_float(p) for p in d.params)
    return f"{d.family.value}:{params}:{_fmt_bound(d.clamp_min)},{_fmt_bound(d.clamp_max)}"


def serialize(machine: Machine) -> str:
    lines = [MAGIC, f"states {len(machine.states)} start {machine.start}"]
    for i, s in enumerate(machine.states):
        lines.append(
            f"state {i} action={s.action.value} adist={_fmt_dist(s.action_dist)} "
            f"tdist={_fmt_dist(s.timeout_dist)} ldist={_fmt_dist(s.limit_dist)} "
            f"bypass={int(s.bypass)} replace={int(s.replace)}")
    for i, s in enumerate(machine.states):
        for event, vector in s.transitions.items():
            for target, p in vector:
                to = "END" if target == STATE_END else str(target)
                lines.append(f"on {event.value} {i} -> {to} p={p:.12g}")
    return "\n".join(lines) + "\n"


def _parse_dist(text: str, lineno: int) -> Optional[Distribution]:
    if text == "none":
        return None
    parts = text.split(":")
    if len(parts) != 3:
        raise MachineParseError(lineno, f"bad distribution {text!r}")
    family, params, clamp = parts
    bounds = clamp.split(",")
    if len(bounds) != 2:
        raise MachineParseError(lineno, f"bad clamp {clamp!r}")
    try:
        values = tuple(float(p) for p in params.split(",")) if params else ()
        lo, hi = (None if b == "none" else float(b) for b in bounds)
        return Distribution(Family(family), values, lo, hi)
    except (ValueError, DistributionError) as exc:
        raise MachineParseError(lineno, str(exc)) from None


def _parse_flag(value: str, lineno: int) -> bool:
    if value not in ("0", "1"):
        raise MachineParseError(lineno, f"flag must be 0 or 1, got {value!r}")
    return value == "1"


def _fields(tokens: list[str], lineno: int) -> dict[str, str]:
    out = {}
    for token in tokens:
        key, sep, value = token.partition("=")
        if not sep:
            raise MachineParseError(lineno, f"expected key=value, got {token!r}")
        out[key] = value
    return out


def deserialize(text: str) -> Machine:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != MAGIC:
        found = lines[0].strip() if lines else ""
        if found.startswith("MBN"):
            raise MachineParseError(1, f"unsupported version {found!r}")
        raise MachineParseError(1, f"missing {MAGIC} header")
    if len(lines) < 2:
        raise MachineParseError(2, "missing state count line")
    head = lines[1].split()
    if len(head) != 4 or head[0] != "states" or head[2] != "start":
        raise MachineParseError(2, "expected 'states <n> start <i>'")
    try:
        count, start = int(head[1]), int(head[3])
    except ValueError:
        raise MachineParseError(2, "state count and start must be integers") from None

    raw_states: list[dict] = []
    transitions: list[dict[Event, list[tuple[int, float]]]] = [dict() for _ in range(max(count, 0))]
    for offset, line in enumerate(lines[2:]):
        lineno = offset + 3
        tokens = line.split()
        if not tokens:
            raise MachineParseError(lineno, "blank line")
        if tokens[0] == "state":
            if len(tokens) != 8:
                raise MachineParseError(lineno, "state line needs 8 fields")
            if int_or_none(tokens[1]) != len(raw_states):
                raise MachineParseError(lineno, f"expected state {len(raw_states)}")
            if len(raw_states) >= count:
                raise MachineParseError(lineno, "more states than declared")
            f = _fields(tokens[2:], lineno)
            try:
                action = ActionKind(f["action"])
            except (KeyError, ValueError):
                raise MachineParseError(lineno, f"bad action {f.get('action')!r}") from None
            raw_states.append(dict(
                action=action,
                action_dist=_parse_dist(f.get("adist", ""), lineno),
                timeout_dist=_parse_dist(f.get("tdist", ""), lineno),
                limit_dist=_parse_dist(f.get("ldist", ""), lineno),
                bypass=_parse_flag(f.get("bypass", ""), lineno),
                replace=_parse_flag(f.get("replace", ""), lineno),
                lineno=lineno,
            ))
        elif tokens[0] == "on":
            if len(tokens) != 6 or tokens[3] != "->" or not tokens[5].startswith("p="):
                raise MachineParseError(lineno, "expected 'on <event> <from> -> <to> p=<prob>'")
            try:
                event = Event(tokens[1])
            except ValueError:
                raise MachineParseError(lineno, f"unknown event {tokens[1]!r}") from None
            src = int_or_none(tokens[2])
            dst = STATE_END if tokens[4] == "END" else int_or_none(tokens[4])
            if src is None or not 0 <= src < count:
                raise MachineParseError(lineno, f"dangling source state {tokens[2]!r}")
            if dst is None or (dst != STATE_END and not 0 <= dst < count):
                raise MachineParseError(lineno, f"dangling target state {tokens[4]!r}")
            try:
                p = float(tokens[5][2:])
            except ValueError:
                raise MachineParseError(lineno, f"bad probability {tokens[5]!r}") from None
            transitions[src].setdefault(event, []).append((dst, p))
        else:
            raise MachineParseError(lineno, f"unexpected record {tokens[0]!r}")
    if len(raw_states) != count:
        raise MachineParseError(len(lines), f"declared {count} states, found {len(raw_states)}")

    states = []
    for raw, trans in zip(raw_states, transitions):
        lineno = raw.pop("lineno")
        try:
            states.append(State(transitions=trans, **raw))
        except MachineError as exc:
            raise MachineParseError(lineno, str(exc)) from None
    try:
        return Machine(tuple(states), start)
    except MachineError as exc:
        raise MachineParseError(2, str(exc)) from None


def int_or_none(text: str) -> Optional[int]:
    try:
        return int(text)
    except ValueError:
        return None
