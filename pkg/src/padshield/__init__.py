"""Padding-machine framework, trace simulator and website-fingerprinting
defense toolkit (FRONT, RegulaTor, Surakav)."""
from .distributions import Distribution, DistributionError, Family, sample
from .machine import (CELL_SIZE, STATE_END, ActionKind, ActionType, DefenseAction, Event,
                      FrameworkEvent, Machine, MachineError, MachineRuntime, State)
from .mbn import MachineParseError, deserialize, serialize
from .simulator import SimConfig, SimulationBudgetExceeded, simulate
from .trace_io import (Direction, Trace, TraceEvent, TraceFormatError, load_trace, save_trace,
                       strip_trailing_padding)

__version__ = "0.1.0"
